#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cage/dataset.hpp"
#include "cage/geometry.hpp"

namespace cage {

// Symbolic description of one (context, grasp) pair: what the task and object
// state are, which affordance/material the grasped part carries, and the
// affordance/material of every part the object has (in object part order).
struct SemanticFeatures {
  std::string task;
  std::string state;
  std::string grasp_affordance;
  std::string grasp_material;
  std::vector<std::pair<std::string, std::string>> parts;  // (affordance, material)

  std::size_t symbolic_dimension() const { return 4 + 2 * parts.size(); }
};

struct CrossConfig {
  bool enabled = false;  // adds task x grasp-affordance, state x grasp-affordance,
                         // task x grasp-material blocks to the sparse encoding
};

// Sparse one-hot / multi-hot encoding: the active indices into a fixed-length
// binary vector, sorted and de-duplicated.
struct WideEncoding {
  std::vector<std::uint32_t> active;
  std::uint32_t length = 0;
};

// Index form consumed by the embedding tables.
struct DeepEncoding {
  std::uint32_t task = 0;
  std::uint32_t state = 0;
  std::uint32_t grasp_affordance = 0;
  std::uint32_t grasp_material = 0;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> parts;  // (affordance, material)
  std::vector<double> dense;  // optional passthrough values, empty by default
};

inline std::uint32_t wide_length(const Vocabularies& vocab, const CrossConfig& crosses) {
  std::size_t n = vocab.tasks.size() + vocab.states.size() + 2 * vocab.affordances.size() +
                  2 * vocab.materials.size();
  if (crosses.enabled)
    n += vocab.tasks.size() * vocab.affordances.size() +
         vocab.states.size() * vocab.affordances.size() +
         vocab.tasks.size() * vocab.materials.size();
  return static_cast<std::uint32_t>(n);
}

// Block offsets within the sparse vector, in emission order.
struct WideLayout {
  std::uint32_t task = 0, state = 0, grasp_affordance = 0, grasp_material = 0;
  std::uint32_t part_affordance = 0, part_material = 0;
  std::uint32_t task_x_gaff = 0, state_x_gaff = 0, task_x_gmat = 0;
  std::uint32_t length = 0;
  bool crosses = false;

  static WideLayout for_vocab(const Vocabularies& vocab, const CrossConfig& cc) {
    WideLayout l;
    std::uint32_t off = 0;
    l.task = off;
    off += static_cast<std::uint32_t>(vocab.tasks.size());
    l.state = off;
    off += static_cast<std::uint32_t>(vocab.states.size());
    l.grasp_affordance = off;
    off += static_cast<std::uint32_t>(vocab.affordances.size());
    l.grasp_material = off;
    off += static_cast<std::uint32_t>(vocab.materials.size());
    l.part_affordance = off;
    off += static_cast<std::uint32_t>(vocab.affordances.size());
    l.part_material = off;
    off += static_cast<std::uint32_t>(vocab.materials.size());
    l.crosses = cc.enabled;
    if (cc.enabled) {
      l.task_x_gaff = off;
      off += static_cast<std::uint32_t>(vocab.tasks.size() * vocab.affordances.size());
      l.state_x_gaff = off;
      off += static_cast<std::uint32_t>(vocab.states.size() * vocab.affordances.size());
      l.task_x_gmat = off;
      off += static_cast<std::uint32_t>(vocab.tasks.size() * vocab.materials.size());
    }
    l.length = off;
    return l;
  }
};

inline WideEncoding encode_wide(const SemanticFeatures& x, const Vocabularies& vocab,
                                const CrossConfig& crosses = {}) {
  if (x.parts.empty()) throw Error("encode_wide: feature vector has no parts");
  const WideLayout l = WideLayout::for_vocab(vocab, crosses);
  const std::uint32_t t = vocab.tasks.index_of(x.task);
  const std::uint32_t s = vocab.states.index_of(x.state);
  const std::uint32_t ga = vocab.affordances.index_of(x.grasp_affordance);
  const std::uint32_t gm = vocab.materials.index_of(x.grasp_material);

  WideEncoding out;
  out.length = l.length;
  out.active.reserve(6 + 2 * x.parts.size());
  out.active.push_back(l.task + t);
  out.active.push_back(l.state + s);
  out.active.push_back(l.grasp_affordance + ga);
  out.active.push_back(l.grasp_material + gm);
  for (const auto& [pa, pm] : x.parts) {
    out.active.push_back(l.part_affordance + vocab.affordances.index_of(pa));
    out.active.push_back(l.part_material + vocab.materials.index_of(pm));
  }
  if (crosses.enabled) {
    const auto na = static_cast<std::uint32_t>(vocab.affordances.size());
    const auto nm = static_cast<std::uint32_t>(vocab.materials.size());
    out.active.push_back(l.task_x_gaff + t * na + ga);
    out.active.push_back(l.state_x_gaff + s * na + ga);
    out.active.push_back(l.task_x_gmat + t * nm + gm);
  }
  std::sort(out.active.begin(), out.active.end());
  out.active.erase(std::unique(out.active.begin(), out.active.end()), out.active.end());
  return out;
}

inline DeepEncoding encode_deep(const SemanticFeatures& x, const Vocabularies& vocab) {
  if (x.parts.empty()) throw Error("encode_deep: feature vector has no parts");
  DeepEncoding out;
  out.task = vocab.tasks.index_of(x.task);
  out.state = vocab.states.index_of(x.state);
  out.grasp_affordance = vocab.affordances.index_of(x.grasp_affordance);
  out.grasp_material = vocab.materials.index_of(x.grasp_material);
  out.parts.reserve(x.parts.size());
  for (const auto& [pa, pm] : x.parts)
    out.parts.emplace_back(vocab.affordances.index_of(pa), vocab.materials.index_of(pm));
  return out;
}

// Binds a dataset and holds one nearest-neighbour index per object, so grasp
// lookups across many contexts reuse the trees.
class FeatureExtractor {
 public:
  explicit FeatureExtractor(const Dataset& ds) : ds_(&ds) {
    trees_.reserve(ds.objects.size());
    part_of_point_.reserve(ds.objects.size());
    for (const auto& obj : ds.objects) {
      trees_.emplace_back(obj.points);
      part_of_point_.push_back(point_part_map(obj));
    }
  }

  const Dataset& dataset() const { return *ds_; }

  std::size_t assign_part(const Context& ctx, const LabeledGrasp& grasp) const {
    const std::size_t oi = ctx.object_index;
    if (oi >= trees_.size()) throw Error("FeatureExtractor: context has unresolved object");
    const auto hit = trees_[oi].nearest(grasp.position);
    return part_of_point_[oi][hit.index];
  }

  SemanticFeatures extract(const Context& ctx, const LabeledGrasp& grasp) const {
    const PartLabeledObject& obj = ds_->objects[ctx.object_index];
    const std::size_t part = assign_part(ctx, grasp);
    SemanticFeatures x;
    x.task = ctx.task;
    x.state = ctx.state;
    x.grasp_affordance = obj.parts[part].affordance;
    x.grasp_material = obj.parts[part].material;
    x.parts.reserve(obj.parts.size());
    for (const auto& p : obj.parts) x.parts.emplace_back(p.affordance, p.material);
    return x;
  }

 private:
  const Dataset* ds_;
  std::vector<KdTree> trees_;
  std::vector<std::vector<std::uint32_t>> part_of_point_;
};

}  // namespace cage
