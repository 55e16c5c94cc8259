#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "cage/features.hpp"

namespace cage {

// Chance baseline: a seeded uniform random permutation of the grasp indices.
inline std::vector<std::size_t> ca_rank(std::size_t n_grasps, std::uint64_t seed) {
  if (n_grasps == 0) throw Error("ca_rank: no grasps to rank");
  std::vector<std::size_t> order(n_grasps);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  rng.shuffle(order);
  return order;
}

struct LabelCounts {
  double suitable = 0.0, neutral = 0.0, not_suitable = 0.0;
  double total() const { return suitable + neutral + not_suitable; }

  void add(GraspLabel l) {
    switch (l) {
      case GraspLabel::kSuitable: suitable += 1.0; break;
      case GraspLabel::kNeutral: neutral += 1.0; break;
      case GraspLabel::kNotSuitable: not_suitable += 1.0; break;
    }
  }
  void merge(const LabelCounts& o) {
    suitable += o.suitable;
    neutral += o.neutral;
    not_suitable += o.not_suitable;
  }
};

struct ContextKey {
  std::string task, state, object_class;
};

// Frequency baseline: label counts per (task, state, object class, grasp
// affordance), with coarser aggregates for backoff when a key was never seen.
// The score of an affordance is its smoothed suitability rate, counting
// neutral labels at half weight:
//   (suitable + 0.5 * neutral + 1) / (total + 3)
class FrequencyTable {
 public:
  using AffordanceCounts = std::map<std::string, LabelCounts>;

  void add(const ContextKey& key, const std::string& grasp_affordance, GraspLabel label) {
    by_task_state_class_[joined(key.task, key.state, key.object_class)][grasp_affordance].add(
        label);
    by_task_class_[joined(key.task, key.object_class)][grasp_affordance].add(label);
    by_task_[key.task][grasp_affordance].add(label);
    global_[grasp_affordance].add(label);
  }

  double score(const ContextKey& key, const std::string& grasp_affordance) const {
    const AffordanceCounts* level = find(by_task_state_class_, joined(key.task, key.state, key.object_class));
    if (!level) level = find(by_task_class_, joined(key.task, key.object_class));
    if (!level) level = find(by_task_, key.task);
    if (!level) level = &global_;
    LabelCounts c;
    auto it = level->find(grasp_affordance);
    if (it != level->end()) c = it->second;
    return (c.suitable + 0.5 * c.neutral + 1.0) / (c.total() + 3.0);
  }

  const std::map<std::string, AffordanceCounts>& counts() const { return by_task_state_class_; }
  bool empty() const { return global_.empty(); }

 private:
  static std::string joined(const std::string& a, const std::string& b) {
    return a + '\x1f' + b;
  }
  static std::string joined(const std::string& a, const std::string& b, const std::string& c) {
    return a + '\x1f' + b + '\x1f' + c;
  }
  static const AffordanceCounts* find(const std::map<std::string, AffordanceCounts>& m,
                                      const std::string& key) {
    auto it = m.find(key);
    return it == m.end() ? nullptr : &it->second;
  }

  std::map<std::string, AffordanceCounts> by_task_state_class_;
  std::map<std::string, AffordanceCounts> by_task_class_;
  std::map<std::string, AffordanceCounts> by_task_;
  AffordanceCounts global_;
};

inline ContextKey context_key(const Dataset& ds, const Context& ctx) {
  return {ctx.task, ctx.state, ds.objects[ctx.object_index].object_class};
}

inline FrequencyTable ft_train(const FeatureExtractor& fx,
                               std::span<const std::size_t> context_ids) {
  if (context_ids.empty()) throw Error("ft_train: no training contexts");
  const Dataset& ds = fx.dataset();
  FrequencyTable table;
  for (std::size_t ci : context_ids) {
    if (ci >= ds.contexts.size()) throw Error("ft_train: context index out of range");
    const Context& ctx = ds.contexts[ci];
    const ContextKey key = context_key(ds, ctx);
    for (const LabeledGrasp& g : ds.grasps[ci]) {
      const std::size_t part = fx.assign_part(ctx, g);
      table.add(key, ds.objects[ctx.object_index].parts[part].affordance, g.label);
    }
  }
  return table;
}

// Stable descending sort by score, so equal scores keep grasp order.
inline std::vector<std::size_t> ft_rank(const FrequencyTable& table, const ContextKey& key,
                                        std::span<const std::string> grasp_affordances) {
  if (grasp_affordances.empty()) throw Error("ft_rank: no grasps to rank");
  std::vector<double> scores;
  scores.reserve(grasp_affordances.size());
  for (const auto& aff : grasp_affordances) scores.push_back(table.score(key, aff));
  std::vector<std::size_t> order(grasp_affordances.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  return order;
}

}  // namespace cage
