#include <algorithm>
#include <numeric>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "cage/baselines.hpp"
#include "cage/generator.hpp"

using cage::ContextKey;
using cage::FrequencyTable;
using cage::GraspLabel;

TEST(Chance, ProducesASeededPermutation) {
  const auto a = cage::ca_rank(10, 42);
  const auto b = cage::ca_rank(10, 42);
  const auto c = cage::ca_rank(10, 43);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);

  std::vector<std::size_t> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> want(10);
  std::iota(want.begin(), want.end(), 0);
  EXPECT_EQ(sorted, want);

  EXPECT_EQ(cage::ca_rank(1, 7), std::vector<std::size_t>{0});
  EXPECT_THROW(cage::ca_rank(0, 7), cage::Error);
}

TEST(Chance, ShufflesFairlyAcrossSeeds) {
  // every index should land in every slot with frequency near 1/n
  const std::size_t n = 5, trials = 20000;
  std::vector<std::vector<std::size_t>> hits(n, std::vector<std::size_t>(n, 0));
  for (std::size_t s = 0; s < trials; ++s) {
    const auto order = cage::ca_rank(n, cage::mix_seed(99, s));
    for (std::size_t pos = 0; pos < n; ++pos) hits[pos][order[pos]]++;
  }
  for (const auto& row : hits)
    for (std::size_t count : row) {
      EXPECT_GT(count, trials / n * 0.9);
      EXPECT_LT(count, trials / n * 1.1);
    }
}

TEST(Frequency, SmoothedScoresMatchHandArithmetic) {
  FrequencyTable t;
  const ContextKey key{"pour", "empty", "cup"};
  // unseen affordance: (0 + 0 + 1) / (0 + 3)
  EXPECT_DOUBLE_EQ(t.score(key, "grasp"), 1.0 / 3.0);

  t.add(key, "grasp", GraspLabel::kSuitable);
  t.add(key, "grasp", GraspLabel::kSuitable);
  t.add(key, "grasp", GraspLabel::kNeutral);
  t.add(key, "grasp", GraspLabel::kNotSuitable);
  // (2 + 0.5 + 1) / (4 + 3)
  EXPECT_DOUBLE_EQ(t.score(key, "grasp"), 3.5 / 7.0);

  // same level, different affordance: still the unseen prior
  EXPECT_DOUBLE_EQ(t.score(key, "wrap_grasp"), 1.0 / 3.0);
}

TEST(Frequency, BacksOffThroughEveryLevel) {
  FrequencyTable t;
  t.add({"pour", "empty", "cup"}, "grasp", GraspLabel::kSuitable);

  // exact key
  EXPECT_DOUBLE_EQ(t.score({"pour", "empty", "cup"}, "grasp"), 2.0 / 4.0);
  // unseen state backs off to (task, class)
  EXPECT_DOUBLE_EQ(t.score({"pour", "hot", "cup"}, "grasp"), 2.0 / 4.0);
  // unseen class backs off to task
  EXPECT_DOUBLE_EQ(t.score({"pour", "hot", "bowl"}, "grasp"), 2.0 / 4.0);
  // unseen task backs off to the global pool
  EXPECT_DOUBLE_EQ(t.score({"lift", "hot", "bowl"}, "grasp"), 2.0 / 4.0);

  // the backoff level is chosen by key presence, not by affordance presence:
  // a key seen with some other affordance pins the level, and the queried
  // affordance then scores as unseen *at that level*
  t.add({"scoop", "empty", "cup"}, "wrap_grasp", GraspLabel::kNotSuitable);
  EXPECT_DOUBLE_EQ(t.score({"scoop", "empty", "cup"}, "grasp"), 1.0 / 3.0);
}

TEST(Frequency, LevelsDisambiguateJoinedKeys) {
  // keys are joined with a separator, so ("ab","c") must not collide with ("a","bc")
  FrequencyTable t;
  t.add({"ab", "c", "x"}, "grasp", GraspLabel::kSuitable);
  t.add({"a", "bc", "x"}, "grasp", GraspLabel::kNotSuitable);
  EXPECT_DOUBLE_EQ(t.score({"ab", "c", "x"}, "grasp"), 2.0 / 4.0);
  EXPECT_DOUBLE_EQ(t.score({"a", "bc", "x"}, "grasp"), 1.0 / 4.0);
}

TEST(Frequency, CountsAreAdditive) {
  const ContextKey k1{"pour", "empty", "cup"};
  const ContextKey k2{"lift", "hot", "pan"};
  FrequencyTable combined;
  const std::vector<std::pair<ContextKey, GraspLabel>> stream = {
      {k1, GraspLabel::kSuitable},    {k1, GraspLabel::kNeutral}, {k2, GraspLabel::kNotSuitable},
      {k1, GraspLabel::kNotSuitable}, {k2, GraspLabel::kSuitable}};
  for (const auto& [key, label] : stream) combined.add(key, "grasp", label);

  // the order the labels arrive in never matters
  FrequencyTable reversed;
  for (auto it = stream.rbegin(); it != stream.rend(); ++it)
    reversed.add(it->first, "grasp", it->second);
  EXPECT_DOUBLE_EQ(reversed.score(k1, "grasp"), combined.score(k1, "grasp"));
  EXPECT_DOUBLE_EQ(reversed.score(k2, "grasp"), combined.score(k2, "grasp"));

  // hand check on k1: one suitable, one neutral, one not suitable
  EXPECT_DOUBLE_EQ(combined.score(k1, "grasp"), (1.0 + 0.5 + 1.0) / (3.0 + 3.0));
  // counts() exposes the finest level keyed by (task, state, class)
  EXPECT_EQ(combined.counts().size(), 2u);
}

TEST(Frequency, RankIsStableOnTies) {
  FrequencyTable t;
  const ContextKey key{"pour", "empty", "cup"};
  t.add(key, "grasp", GraspLabel::kSuitable);
  t.add(key, "contain", GraspLabel::kNotSuitable);

  const std::vector<std::string> affs = {"contain", "support", "grasp", "none", "grasp"};
  const auto order = cage::ft_rank(t, key, affs);
  ASSERT_EQ(order.size(), affs.size());
  // both "grasp" entries score 2/4, everything unseen scores 1/3, "contain" 1/4
  EXPECT_EQ(order[0], 2u);
  EXPECT_EQ(order[1], 4u);
  // ties between the unseen affordances keep input order
  EXPECT_EQ(order[2], 1u);
  EXPECT_EQ(order[3], 3u);
  EXPECT_EQ(order[4], 0u);

  EXPECT_THROW(cage::ft_rank(t, key, {}), cage::Error);
}

TEST(Frequency, TrainsFromADatasetAndPrefersSuitableAffordances) {
  cage::GeneratorConfig gen = cage::GeneratorConfig::defaults();
  gen.objects_per_class = 2;
  gen.grasps_per_context = 12;
  gen.points_per_part = 25;
  const cage::Dataset ds = cage::generate_synthetic(gen, 31);
  const cage::FeatureExtractor fx(ds);

  std::vector<std::size_t> ids(ds.contexts.size());
  std::iota(ids.begin(), ids.end(), 0);
  const FrequencyTable table = ft_train(fx, ids);
  EXPECT_FALSE(table.empty());
  EXPECT_THROW(ft_train(fx, {}), cage::Error);

  // ranking a context it was trained on should put a suitable grasp first
  // whenever the context has one
  std::size_t checked = 0;
  for (std::size_t ci = 0; ci < ds.contexts.size() && checked < 20; ++ci) {
    const auto& grasps = ds.grasps[ci];
    const bool any_suitable = std::any_of(grasps.begin(), grasps.end(), [](const auto& g) {
      return g.label == GraspLabel::kSuitable;
    });
    const bool any_ns = std::any_of(grasps.begin(), grasps.end(), [](const auto& g) {
      return g.label == GraspLabel::kNotSuitable;
    });
    if (!any_suitable || !any_ns) continue;
    std::vector<std::string> affs;
    for (const auto& g : grasps) {
      const std::size_t part = fx.assign_part(ds.contexts[ci], g);
      affs.push_back(ds.objects[ds.contexts[ci].object_index].parts[part].affordance);
    }
    const auto order = cage::ft_rank(table, context_key(ds, ds.contexts[ci]), affs);
    // a grasp labeled not-suitable must not outrank every suitable grasp
    std::size_t first_suitable = grasps.size(), first_ns = grasps.size();
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
      const auto label = grasps[order[pos]].label;
      if (label == GraspLabel::kSuitable && first_suitable == grasps.size()) first_suitable = pos;
      if (label == GraspLabel::kNotSuitable && first_ns == grasps.size()) first_ns = pos;
    }
    EXPECT_LT(first_suitable, first_ns) << "context " << ds.contexts[ci].id;
    ++checked;
  }
  EXPECT_GE(checked, 5u);
}
