#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include "cage/dataset.hpp"
#include "cage/version.hpp"

namespace cage {

// One labeling rule. Each field is "*" (match anything), an exact label, or
// an alternation "a|b|c". The first matching rule in the table decides.
struct Rule {
  std::string task = "*";
  std::string state = "*";
  std::string grasp_affordance = "*";
  std::string grasp_material = "*";
  GraspLabel label = GraspLabel::kNeutral;
};

class RuleTable {
 public:
  RuleTable() = default;
  RuleTable(std::vector<Rule> rules, GraspLabel fallback)
      : rules_(std::move(rules)), fallback_(fallback) {}

  bool empty() const { return rules_.empty(); }
  const std::vector<Rule>& rules() const { return rules_; }
  GraspLabel fallback() const { return fallback_; }

  GraspLabel label_for(const std::string& task, const std::string& state,
                       const std::string& grasp_affordance,
                       const std::string& grasp_material) const {
    for (const Rule& r : rules_) {
      if (matches(r.task, task) && matches(r.state, state) &&
          matches(r.grasp_affordance, grasp_affordance) &&
          matches(r.grasp_material, grasp_material))
        return r.label;
    }
    return fallback_;
  }

  static bool matches(const std::string& pattern, const std::string& value) {
    if (pattern == "*") return true;
    std::size_t start = 0;
    while (true) {
      const std::size_t bar = pattern.find('|', start);
      const std::size_t len = (bar == std::string::npos ? pattern.size() : bar) - start;
      if (pattern.compare(start, len, value) == 0) return true;
      if (bar == std::string::npos) return false;
      start = bar + 1;
    }
  }

 private:
  std::vector<Rule> rules_;
  GraspLabel fallback_ = GraspLabel::kNeutral;
};

// Household-manipulation labeling rules. Thermal hazards come first (metal
// and stone conduct heat), lids block pouring and scooping, then per-task
// preferences over the grasped part's affordance and material. Anything not
// covered is neutral.
inline RuleTable default_rule_table() {
  const auto S = GraspLabel::kSuitable;
  const auto N = GraspLabel::kNeutral;
  const auto X = GraspLabel::kNotSuitable;
  std::vector<Rule> r = {
      {"*", "hot|filled_hot", "*", "metal", X},
      {"*", "hot|filled_hot", "*", "stone", X},
      {"pour|scoop", "lid_on", "*", "*", X},

      {"pour", "*", "contain", "*", X},
      {"pour", "*", "grasp", "*", S},
      {"pour", "*", "wrap_grasp", "glass", N},
      {"pour", "*", "wrap_grasp", "*", S},

      {"scoop", "*", "contain", "*", X},
      {"scoop", "*", "support", "*", X},
      {"scoop", "*", "grasp", "*", S},
      {"scoop", "*", "wrap_grasp", "*", N},

      {"poke", "*", "grasp", "*", S},
      {"poke", "*", "wrap_grasp", "*", S},
      {"poke", "filled|filled_hot", "contain", "*", X},
      {"poke", "*", "contain", "*", N},

      {"cut", "*", "cut", "plastic", N},
      {"cut", "*", "cut", "*", X},
      {"cut", "*", "grasp", "*", S},
      {"cut", "*", "support", "*", X},
      {"cut", "*", "wrap_grasp", "*", S},

      {"lift", "empty", "contain", "*", S},
      {"lift", "filled|filled_hot", "contain", "*", X},
      {"lift", "*", "contain", "*", N},
      {"lift", "*", "grasp", "*", S},
      {"lift", "*", "wrap_grasp", "*", S},

      {"hammer", "*", "hit", "*", S},
      {"hammer", "*", "pound", "*", S},
      {"hammer", "*", "*", "*", X},

      {"handover", "filled_hot|filled", "contain", "*", X},
      {"handover", "empty", "contain", "*", N},
      {"handover", "*", "contain", "*", N},
      {"handover", "*", "grasp", "*", S},
      {"handover", "*", "wrap_grasp", "*", S},
  };
  return RuleTable(std::move(r), N);
}

// Class-agnostic rules: suitability is the parity of three binary groups.
// States split into settled (hot/cold/empty) vs in-transit (filled/lidded),
// parts into handles (grasp/wrap_grasp) vs vessels (contain/support), and
// materials into soft (plastic/wood/paper) vs hard (metal/stone/ceramic/
// glass). A grasp is suitable when an even number of those bits is set. The
// table is anti-symmetric by construction: every affordance is suitable for
// exactly half the states and half the materials, so affordance frequencies
// aggregated over contexts carry no signal. Pair with mirrored_parts (below)
// so that both hardness groups sit on every object and even a single
// context's affordance blocks have mixed labels.
inline RuleTable affordance_rule_table() {
  const auto S = GraspLabel::kSuitable;
  const auto X = GraspLabel::kNotSuitable;
  const std::string settled = "hot|cold|empty";
  const std::string transit = "filled|lid_on|lid_off";
  const std::string handles = "grasp|wrap_grasp";
  const std::string vessels = "contain|support";
  const std::string soft = "plastic|wood|paper";
  const std::string hard = "metal|stone|ceramic|glass";
  std::vector<Rule> r = {
      {"*", settled, handles, soft, S},
      {"*", transit, handles, hard, S},
      {"*", "*", handles, "*", X},
      {"*", settled, vessels, hard, S},
      {"*", transit, vessels, soft, S},
      {"*", "*", vessels, "*", X},
  };
  return RuleTable(std::move(r), GraspLabel::kNeutral);
}

struct GeneratorConfig {
  Vocabularies vocab;
  std::vector<std::string> classes;  // generated in this order
  std::vector<std::string> tasks;    // one context per object per task
  std::vector<std::string> states;   // sampled uniformly per context
  std::size_t objects_per_class = 8;
  std::size_t grasps_per_context = 20;
  std::size_t points_per_part = 80;
  // Emit every part twice: the copy sits 0.25 m to the side with a material
  // from the opposite hardness group. Every affordance then appears with both
  // material groups on every single object, which keeps affordance-frequency
  // statistics flat under the anti-symmetric rule table above.
  bool mirrored_parts = false;
  RuleTable rules = default_rule_table();

  static GeneratorConfig defaults() {
    GeneratorConfig cfg;
    cfg.vocab = Vocabularies::defaults();
    // the compound state keeps thermal and fill hazards jointly expressible
    auto states = cfg.vocab.states.labels();
    states.push_back("filled_hot");
    cfg.vocab.states = Vocab(states);
    cfg.classes = cfg.vocab.object_classes.labels();
    cfg.tasks = cfg.vocab.tasks.labels();
    cfg.states = cfg.vocab.states.labels();
    return cfg;
  }
};

struct SyntheticTruth {
  // nearest-scan part assignment per grasp, computed by exhaustive search
  std::vector<std::vector<std::uint32_t>> grasp_part;
};

struct SyntheticDataset {
  Dataset dataset;
  SyntheticTruth truth;
};

namespace detail {

struct PartSpec {
  std::string affordance;
  std::string material;
  int shape = 0;  // 0 box, 1 cylinder shell, 2 ring, 3 disk
  Vec3 center;
  Vec3 extent;  // box: half extents; cylinder: (r, z0, z1); ring: (r, z, tube);
                // disk: (r, z, unused)
};

inline Vec3 sample_part_point(const PartSpec& p, double scale, Rng& rng) {
  Vec3 out;
  const double tau = 6.283185307179586476925287;
  switch (p.shape) {
    case 0: {  // box
      out = {p.center.x + rng.uniform(-p.extent.x, p.extent.x),
             p.center.y + rng.uniform(-p.extent.y, p.extent.y),
             p.center.z + rng.uniform(-p.extent.z, p.extent.z)};
      break;
    }
    case 1: {  // cylinder shell
      const double a = rng.uniform(0.0, tau);
      const double z = rng.uniform(p.extent.y, p.extent.z);
      out = {p.center.x + p.extent.x * std::cos(a), p.center.y + p.extent.x * std::sin(a), z};
      break;
    }
    case 2: {  // ring with a thin tube
      const double a = rng.uniform(0.0, tau);
      const double r = p.extent.x + rng.uniform(-p.extent.z, p.extent.z);
      out = {p.center.x + r * std::cos(a), p.center.y + r * std::sin(a),
             p.extent.y + rng.uniform(-p.extent.z, p.extent.z)};
      break;
    }
    default: {  // disk
      const double a = rng.uniform(0.0, tau);
      const double r = p.extent.x * std::sqrt(rng.next_double());
      out = {p.center.x + r * std::cos(a), p.center.y + r * std::sin(a), p.extent.y};
      break;
    }
  }
  return {quantize_g9(out.x * scale), quantize_g9(out.y * scale), quantize_g9(out.z * scale)};
}

inline std::string pick(Rng& rng, const std::vector<std::string>& options) {
  return options[rng.index(options.size())];
}

// Fixed partner from the opposite hardness group (soft: plastic/wood/paper).
inline std::string opposite_material(const std::string& m) {
  if (m == "plastic") return "metal";
  if (m == "wood") return "stone";
  if (m == "paper") return "glass";
  if (m == "metal") return "plastic";
  if (m == "stone") return "wood";
  if (m == "glass") return "paper";
  return "wood";  // ceramic and anything unlisted pairs soft
}

// Part layouts per object class. Parts sit tens of millimetres apart so the
// nearest-point assignment of a grasp sampled on a part is unambiguous.
inline std::vector<PartSpec> class_parts(const std::string& cls, Rng& rng,
                                         const Vocabularies& vocab) {
  if (cls == "cup") {
    const std::string body = pick(rng, {"ceramic", "glass", "plastic", "metal"});
    const std::string handle = pick(rng, {"plastic", "wood", "metal"});
    return {
        {"contain", body, 2, {}, {0.035, 0.13, 0.004}},
        {"wrap_grasp", body, 1, {}, {0.04, 0.0, 0.10}},
        {"grasp", handle, 0, {0.085, 0.0, 0.05}, {0.012, 0.008, 0.03}},
    };
  }
  if (cls == "bowl") {
    const std::string mat = pick(rng, {"ceramic", "glass", "stone", "plastic", "wood"});
    return {
        {"contain", mat, 2, {}, {0.07, 0.09, 0.004}},
        {"wrap_grasp", mat, 1, {}, {0.07, 0.0, 0.05}},
    };
  }
  if (cls == "pan") {
    const std::string basin = pick(rng, {"metal", "ceramic", "stone"});
    const std::string handle = pick(rng, {"wood", "plastic", "metal"});
    return {
        {"contain", basin, 3, {}, {0.10, 0.0, 0.0}},
        {"grasp", handle, 0, {0.16, 0.0, 0.02}, {0.05, 0.012, 0.008}},
        {"support", basin, 3, {}, {0.08, -0.045, 0.0}},
    };
  }
  if (cls == "bottle") {
    const std::string mat = pick(rng, {"plastic", "glass"});
    return {
        {"contain", mat, 2, {}, {0.015, 0.22, 0.003}},
        {"wrap_grasp", mat, 1, {}, {0.03, 0.0, 0.17}},
        {"support", mat, 3, {}, {0.025, -0.04, 0.0}},
    };
  }
  if (cls == "spatula") {
    const std::string blade = pick(rng, {"metal", "plastic", "wood"});
    const std::string handle = pick(rng, {"wood", "plastic"});
    return {
        {"support", blade, 0, {0.0, 0.0, 0.0}, {0.04, 0.03, 0.003}},
        {"grasp", handle, 0, {0.10, 0.0, 0.0}, {0.05, 0.008, 0.005}},
    };
  }
  // unknown class: a generic two-part object
  return {
      {"wrap_grasp", pick(rng, vocab.materials.labels()), 1, {}, {0.04, 0.0, 0.10}},
      {"grasp", pick(rng, vocab.materials.labels()), 0, {0.09, 0.0, 0.05}, {0.012, 0.008, 0.03}},
  };
}

inline Quat random_unit_quat(Rng& rng) {
  while (true) {
    Quat q{rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    const double n = q.norm();
    if (n < 1e-3) continue;
    q = {quantize_g9(q.w / n), quantize_g9(q.x / n), quantize_g9(q.y / n), quantize_g9(q.z / n)};
    return q;
  }
}

inline std::uint32_t nearest_part_by_scan(const PartLabeledObject& obj,
                                          const std::vector<std::uint32_t>& part_of_point,
                                          const Vec3& pos) {
  std::size_t best = 0;
  double best_d2 = squared_distance(pos, obj.points[0]);
  for (std::size_t i = 1; i < obj.points.size(); ++i) {
    const double d2 = squared_distance(pos, obj.points[i]);
    if (d2 < best_d2) {
      best_d2 = d2;
      best = i;
    }
  }
  return part_of_point[best];
}

}  // namespace detail

// Builds a labeled synthetic dataset: part-labeled objects per class, one
// context per object and task with a sampled state, and grasps sampled near
// object parts. Each grasp's label applies the rule table to the part that is
// actually nearest to the grasp point, so labels and geometry always agree.
inline SyntheticDataset generate_synthetic_with_truth(const GeneratorConfig& cfg,
                                                      std::uint64_t seed) {
  if (cfg.rules.empty()) throw Error("generate_synthetic: empty rule table");
  if (cfg.objects_per_class == 0 || cfg.grasps_per_context == 0 || cfg.points_per_part == 0)
    throw Error("generate_synthetic: counts must be positive");
  if (cfg.classes.empty() || cfg.tasks.empty() || cfg.states.empty())
    throw Error("generate_synthetic: classes, tasks and states must be non-empty");
  for (const auto& c : cfg.classes)
    if (!cfg.vocab.object_classes.contains(c))
      throw Error("generate_synthetic: class '" + c + "' not in vocabulary");
  for (const auto& t : cfg.tasks)
    if (!cfg.vocab.tasks.contains(t))
      throw Error("generate_synthetic: task '" + t + "' not in vocabulary");
  for (const auto& s : cfg.states)
    if (!cfg.vocab.states.contains(s))
      throw Error("generate_synthetic: state '" + s + "' not in vocabulary");

  SyntheticDataset out;
  Dataset& ds = out.dataset;
  ds.vocab = cfg.vocab;
  ds.meta.emplace_back("generator_seed", std::to_string(seed));
  ds.meta.emplace_back("tool", kToolTag);

  Rng rng(mix_seed(seed, 0x6767656e));
  char buf[64];

  std::vector<std::vector<std::uint32_t>> part_of_point_all;
  for (const std::string& cls : cfg.classes) {
    for (std::size_t i = 0; i < cfg.objects_per_class; ++i) {
      PartLabeledObject obj;
      std::snprintf(buf, sizeof buf, "%s_%02zu", cls.c_str(), i);
      obj.id = buf;
      obj.object_class = cls;
      const double scale = rng.uniform(0.9, 1.1);
      auto specs = detail::class_parts(cls, rng, cfg.vocab);
      if (cfg.mirrored_parts) {
        std::vector<detail::PartSpec> paired;
        paired.reserve(specs.size() * 2);
        for (const auto& spec : specs) {
          paired.push_back(spec);
          detail::PartSpec twin = spec;
          twin.center.y += 0.25;
          twin.material = detail::opposite_material(spec.material);
          paired.push_back(twin);
        }
        specs = std::move(paired);
      }
      std::vector<std::uint32_t> part_of_point;
      for (std::size_t pi = 0; pi < specs.size(); ++pi) {
        Part part;
        part.affordance = specs[pi].affordance;
        part.material = specs[pi].material;
        for (std::size_t k = 0; k < cfg.points_per_part; ++k) {
          part.points.push_back(static_cast<std::uint32_t>(obj.points.size()));
          obj.points.push_back(detail::sample_part_point(specs[pi], scale, rng));
          part_of_point.push_back(static_cast<std::uint32_t>(pi));
        }
        obj.parts.push_back(std::move(part));
      }
      part_of_point_all.push_back(std::move(part_of_point));
      ds.objects.push_back(std::move(obj));
    }
  }

  std::size_t ctx_counter = 0;
  for (std::size_t oi = 0; oi < ds.objects.size(); ++oi) {
    for (const std::string& task : cfg.tasks) {
      Context ctx;
      std::snprintf(buf, sizeof buf, "ctx_%05zu", ctx_counter++);
      ctx.id = buf;
      ctx.task = task;
      ctx.state = cfg.states[rng.index(cfg.states.size())];
      ctx.object_id = ds.objects[oi].id;
      ds.contexts.push_back(std::move(ctx));
      ds.grasps.emplace_back();
      out.truth.grasp_part.emplace_back();

      const PartLabeledObject& obj = ds.objects[oi];
      auto& grasps = ds.grasps.back();
      auto& truth = out.truth.grasp_part.back();
      for (std::size_t gi = 0; gi < cfg.grasps_per_context; ++gi) {
        const Part& part = obj.parts[rng.index(obj.parts.size())];
        const Vec3& anchor = obj.points[part.points[rng.index(part.points.size())]];
        LabeledGrasp g;
        g.position = {quantize_g9(anchor.x + rng.uniform(-4e-4, 4e-4)),
                      quantize_g9(anchor.y + rng.uniform(-4e-4, 4e-4)),
                      quantize_g9(anchor.z + rng.uniform(-4e-4, 4e-4))};
        g.orientation = detail::random_unit_quat(rng);
        const std::uint32_t owner =
            detail::nearest_part_by_scan(obj, part_of_point_all[oi], g.position);
        const Part& owner_part = obj.parts[owner];
        g.label = cfg.rules.label_for(ds.contexts.back().task, ds.contexts.back().state,
                                      owner_part.affordance, owner_part.material);
        truth.push_back(owner);
        grasps.push_back(g);
      }
    }
  }

  ds.rebuild_indexes();
  validate(ds);
  return out;
}

inline Dataset generate_synthetic(const GeneratorConfig& cfg, std::uint64_t seed) {
  return generate_synthetic_with_truth(cfg, seed).dataset;
}

}  // namespace cage
