#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "cage/features.hpp"
#include "cage/generator.hpp"

using cage::Dataset;
using cage::GraspLabel;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  static const fs::path dir = [] {
    auto d = fs::temp_directory_path() / "cage_dataset_test";
    fs::create_directories(d);
    return d;
  }();
  return dir / name;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

Dataset tiny_dataset() {
  Dataset ds;
  ds.vocab = cage::Vocabularies::defaults();
  cage::PartLabeledObject obj;
  obj.id = "cup_00";
  obj.object_class = "cup";
  obj.points = {{0, 0, 0}, {0, 0, 0.1}, {0.08, 0, 0.05}};
  obj.parts = {{"wrap_grasp", "ceramic", {0, 1}}, {"grasp", "wood", {2}}};
  ds.objects.push_back(obj);
  ds.contexts.push_back({"ctx_0", "pour", "empty", "cup_00", SIZE_MAX});
  ds.grasps.push_back({{{0.001, 0, 0.001}, {1, 0, 0, 0}, GraspLabel::kSuitable},
                       {{0.08, 0, 0.049}, {0, 1, 0, 0}, GraspLabel::kNeutral}});
  ds.meta.emplace_back("note", "hand built");
  ds.rebuild_indexes();
  return ds;
}

}  // namespace

TEST(Vocab, IndexLookupAndDuplicateRejection) {
  cage::Vocab v({"a", "b", "c"});
  EXPECT_EQ(v.index_of("b"), 1u);
  EXPECT_TRUE(v.contains("c"));
  EXPECT_FALSE(v.contains("d"));
  EXPECT_THROW(v.index_of("d"), cage::Error);
  EXPECT_THROW(cage::Vocab({"a", "a"}), cage::Error);
  EXPECT_THROW(cage::Vocab({""}), cage::Error);
}

TEST(Validation, AcceptsTheTinyDatasetAndCatchesCorruption) {
  Dataset ds = tiny_dataset();
  EXPECT_NO_THROW(cage::validate(ds));

  {
    Dataset bad = ds;
    bad.objects[0].parts[0].points = {0, 1, 2};  // overlaps part 1
    EXPECT_THROW(cage::validate(bad), cage::Error);
  }
  {
    Dataset bad = ds;
    bad.objects[0].parts[1].points.clear();
    EXPECT_THROW(cage::validate(bad), cage::Error);
  }
  {
    Dataset bad = ds;
    bad.grasps[0][0].orientation = {1.0, 0.1, 0, 0};  // not unit
    EXPECT_THROW(cage::validate(bad), cage::Error);
  }
  {
    Dataset bad = ds;
    bad.grasps[0].clear();
    EXPECT_THROW(cage::validate(bad), cage::Error);
  }
  {
    Dataset bad = ds;
    bad.contexts[0].task = "fly";
    EXPECT_THROW(cage::validate(bad), cage::Error);
  }
  {
    Dataset bad = ds;
    bad.objects[0].points[1].z = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(cage::validate(bad), cage::Error);
  }
}

TEST(DatasetIo, SaveLoadPreservesEverything) {
  const Dataset ds = tiny_dataset();
  const auto path = temp_file("tiny.jsonl");
  cage::save_dataset(ds, path.string());
  const Dataset back = cage::load_dataset(path.string());

  EXPECT_EQ(back.vocab.tasks.labels(), ds.vocab.tasks.labels());
  ASSERT_EQ(back.objects.size(), 1u);
  EXPECT_EQ(back.objects[0].id, "cup_00");
  EXPECT_EQ(back.objects[0].parts[1].material, "wood");
  ASSERT_EQ(back.contexts.size(), 1u);
  EXPECT_EQ(back.contexts[0].object_index, 0u);
  ASSERT_EQ(back.grasps[0].size(), 2u);
  EXPECT_EQ(back.grasps[0][1].label, GraspLabel::kNeutral);
  EXPECT_DOUBLE_EQ(back.grasps[0][1].position.x, 0.08);
  EXPECT_EQ(back.meta, ds.meta);
}

TEST(DatasetIo, SaveIsByteStableUnderRoundTrip) {
  const Dataset ds = tiny_dataset();
  const auto p1 = temp_file("rt1.jsonl"), p2 = temp_file("rt2.jsonl");
  cage::save_dataset(ds, p1.string());
  cage::save_dataset(cage::load_dataset(p1.string()), p2.string());
  EXPECT_EQ(read_bytes(p1), read_bytes(p2));
}

TEST(DatasetIo, MalformedInputsFailWithLineNumbers) {
  const auto path = temp_file("bad.jsonl");

  auto write = [&](const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    os << text;
  };
  auto load_error = [&]() -> std::string {
    try {
      cage::load_dataset(path.string());
    } catch (const cage::Error& e) {
      return e.what();
    }
    return "";
  };

  write("");
  EXPECT_NE(load_error().find("empty"), std::string::npos);

  write("{\"format\":\"nope\"}\n");
  EXPECT_NE(load_error().find("format"), std::string::npos);

  // truncated mid-record
  const Dataset ds = tiny_dataset();
  const auto good = temp_file("good.jsonl");
  cage::save_dataset(ds, good.string());
  std::string bytes = read_bytes(good);
  write(bytes.substr(0, bytes.size() - 30));
  EXPECT_NE(load_error().find(":"), std::string::npos);

  // grasp pointing at a missing context
  std::string with_dangling = bytes;
  with_dangling.replace(with_dangling.find("\"context_id\":\"ctx_0\""),
                        std::string("\"context_id\":\"ctx_0\"").size(),
                        "\"context_id\":\"ctx_9\"");
  write(with_dangling);
  EXPECT_NE(load_error().find("ctx_9"), std::string::npos);

  // record order violation: a context after a grasp line
  std::ostringstream oo;
  oo << bytes;  // ends with grasp lines
  oo << "{\"type\":\"context\",\"id\":\"ctx_1\",\"task\":\"pour\",\"state\":\"empty\","
        "\"object\":\"cup_00\"}\n";
  write(oo.str());
  const std::string err = load_error();
  EXPECT_NE(err.find("after"), std::string::npos) << err;
}

TEST(RuleTable, PatternsAndFirstMatchWins) {
  using cage::RuleTable;
  EXPECT_TRUE(RuleTable::matches("*", "anything"));
  EXPECT_TRUE(RuleTable::matches("a|b|c", "b"));
  EXPECT_FALSE(RuleTable::matches("a|b|c", "d"));
  EXPECT_FALSE(RuleTable::matches("ab", "a"));
  EXPECT_FALSE(RuleTable::matches("a", "ab"));

  cage::RuleTable t({{"pour", "*", "contain", "*", GraspLabel::kNotSuitable},
                     {"pour", "*", "*", "*", GraspLabel::kSuitable}},
                    GraspLabel::kNeutral);
  EXPECT_EQ(t.label_for("pour", "hot", "contain", "metal"), GraspLabel::kNotSuitable);
  EXPECT_EQ(t.label_for("pour", "hot", "grasp", "metal"), GraspLabel::kSuitable);
  EXPECT_EQ(t.label_for("lift", "hot", "grasp", "metal"), GraspLabel::kNeutral);
}

TEST(RuleTable, DefaultTablePinsKeyBehaviors) {
  const cage::RuleTable t = cage::default_rule_table();
  // pouring while holding the opening blocks the flow
  for (const char* state : {"hot", "cold", "empty", "filled"})
    EXPECT_EQ(t.label_for("pour", state, "contain", "ceramic"), GraspLabel::kNotSuitable);
  // handing over a filled-hot object by its opening burns the receiver
  EXPECT_EQ(t.label_for("handover", "filled_hot", "contain", "ceramic"),
            GraspLabel::kNotSuitable);
  // handing over an empty one that way is merely awkward
  EXPECT_EQ(t.label_for("handover", "empty", "contain", "ceramic"), GraspLabel::kNeutral);
  // hot metal must not be touched anywhere
  EXPECT_EQ(t.label_for("lift", "hot", "grasp", "metal"), GraspLabel::kNotSuitable);
  EXPECT_EQ(t.label_for("lift", "hot", "grasp", "wood"), GraspLabel::kSuitable);
}

TEST(Generator, DeterministicAndByteIdenticalAcrossRuns) {
  cage::GeneratorConfig cfg = cage::GeneratorConfig::defaults();
  cfg.objects_per_class = 2;
  cfg.grasps_per_context = 5;
  cfg.points_per_part = 20;

  const Dataset a = cage::generate_synthetic(cfg, 11);
  const Dataset b = cage::generate_synthetic(cfg, 11);
  const Dataset c = cage::generate_synthetic(cfg, 12);

  const auto pa = temp_file("gen_a.jsonl"), pb = temp_file("gen_b.jsonl"),
             pc = temp_file("gen_c.jsonl");
  cage::save_dataset(a, pa.string());
  cage::save_dataset(b, pb.string());
  cage::save_dataset(c, pc.string());
  EXPECT_EQ(read_bytes(pa), read_bytes(pb));
  EXPECT_NE(read_bytes(pa), read_bytes(pc));

  EXPECT_EQ(a.objects.size(), 10u);
  EXPECT_EQ(a.contexts.size(), 10u * 7u);
  for (const auto& g : a.grasps) EXPECT_EQ(g.size(), 5u);
}

TEST(Generator, LabelsAgreeWithTheExtractorAssignment) {
  // the invariant that makes learning possible: the label of every grasp is
  // the rule table applied to the part the extractor assigns it to
  cage::GeneratorConfig cfg = cage::GeneratorConfig::defaults();
  cfg.objects_per_class = 2;
  cfg.grasps_per_context = 8;
  const auto synth = cage::generate_synthetic_with_truth(cfg, 21);
  const Dataset& ds = synth.dataset;
  const cage::FeatureExtractor fx(ds);

  for (std::size_t ci = 0; ci < ds.contexts.size(); ++ci) {
    const auto& ctx = ds.contexts[ci];
    for (std::size_t gi = 0; gi < ds.grasps[ci].size(); ++gi) {
      const auto& g = ds.grasps[ci][gi];
      const std::size_t part = fx.assign_part(ctx, g);
      ASSERT_EQ(part, synth.truth.grasp_part[ci][gi])
          << "tree and scan assignments diverged";
      const auto& p = ds.objects[ctx.object_index].parts[part];
      ASSERT_EQ(g.label, cfg.rules.label_for(ctx.task, ctx.state, p.affordance, p.material));
    }
  }
}

TEST(Generator, CoversLabelsStatesAndMaterials) {
  const Dataset ds = cage::generate_synthetic(cage::GeneratorConfig::defaults(), 7);
  std::size_t n_suit = 0, n_neut = 0, n_not = 0;
  for (const auto& grasps : ds.grasps)
    for (const auto& g : grasps) {
      if (g.label == GraspLabel::kSuitable) ++n_suit;
      if (g.label == GraspLabel::kNeutral) ++n_neut;
      if (g.label == GraspLabel::kNotSuitable) ++n_not;
    }
  // all three classes must appear in force for training to mean anything
  const std::size_t total = n_suit + n_neut + n_not;
  EXPECT_EQ(total, ds.contexts.size() * 20u);
  EXPECT_GT(n_suit, total / 10);
  EXPECT_GT(n_neut, total / 20);
  EXPECT_GT(n_not, total / 10);

  std::set<std::string> states;
  for (const auto& ctx : ds.contexts) states.insert(ctx.state);
  EXPECT_EQ(states.size(), 7u);
}

TEST(Generator, RejectsBadConfigs) {
  cage::GeneratorConfig cfg = cage::GeneratorConfig::defaults();
  cfg.objects_per_class = 0;
  EXPECT_THROW(cage::generate_synthetic(cfg, 1), cage::Error);

  cfg = cage::GeneratorConfig::defaults();
  cfg.rules = cage::RuleTable({}, GraspLabel::kNeutral);
  EXPECT_THROW(cage::generate_synthetic(cfg, 1), cage::Error);

  cfg = cage::GeneratorConfig::defaults();
  cfg.tasks.push_back("fly");
  EXPECT_THROW(cage::generate_synthetic(cfg, 1), cage::Error);
}
