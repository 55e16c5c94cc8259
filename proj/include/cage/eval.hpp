#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "cage/baselines.hpp"
#include "cage/network.hpp"

namespace cage {

struct ApResult {
  double ap = 0.0;
  bool defined = false;        // false when the context has no relevant grasps at all
  bool used_fallback = false;  // true when neutral grasps served as the relevant set
};

// Non-interpolated average precision over a ranked label list. Suitable
// grasps are the relevant set; when a context has none, neutral grasps take
// that role; when it has neither, AP is undefined for the context.
inline ApResult average_precision(std::span<const GraspLabel> ranked) {
  if (ranked.empty()) throw Error("average_precision: empty ranking");
  GraspLabel relevant = GraspLabel::kSuitable;
  bool fallback = false;
  if (std::find(ranked.begin(), ranked.end(), GraspLabel::kSuitable) == ranked.end()) {
    relevant = GraspLabel::kNeutral;
    fallback = true;
    if (std::find(ranked.begin(), ranked.end(), GraspLabel::kNeutral) == ranked.end())
      return {0.0, false, false};
  }
  double hits = 0.0, sum = 0.0;
  for (std::size_t k = 0; k < ranked.size(); ++k) {
    if (ranked[k] == relevant) {
      hits += 1.0;
      sum += hits / static_cast<double>(k + 1);
    }
  }
  return {sum / hits, true, fallback};
}

// Mean over the defined per-context APs; undefined contexts are excluded.
inline double mean_ap(std::span<const ApResult> results) {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& r : results) {
    if (!r.defined) continue;
    sum += r.ap;
    ++n;
  }
  if (n == 0) throw Error("mean_ap: no context has a defined AP");
  return sum / static_cast<double>(n);
}

// Expected AP of a uniformly random ranking of n items of which r are
// relevant: H_n / n + (r - 1) (n - H_n) / (n (n - 1)).
inline double expected_random_ap(std::size_t n, std::size_t r) {
  if (n == 0 || r == 0 || r > n) throw Error("expected_random_ap: bad item counts");
  double hn = 0.0;
  for (std::size_t k = 1; k <= n; ++k) hn += 1.0 / static_cast<double>(k);
  const double dn = static_cast<double>(n);
  if (n == 1) return 1.0;
  return hn / dn + (static_cast<double>(r) - 1.0) * (dn - hn) / (dn * (dn - 1.0));
}

// --- Student's t machinery -------------------------------------------------

namespace detail {

// Regularized incomplete beta I_x(a, b) by the Lentz continued fraction.
inline double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 3e-16, kFpMin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kFpMin) d = kFpMin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kFpMin) d = kFpMin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kFpMin) c = kFpMin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) break;
  }
  return h;
}

inline double reg_inc_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
  return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

}  // namespace detail

// Two-sided p-value for a t statistic with the given degrees of freedom.
inline double t_two_sided_p(double t, double dof) {
  if (dof <= 0.0) throw Error("t_two_sided_p: degrees of freedom must be positive");
  if (!std::isfinite(t)) return 0.0;
  return detail::reg_inc_beta(dof / 2.0, 0.5, dof / (dof + t * t));
}

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  double mean_diff = 0.0;
  std::size_t n = 0;
  bool degenerate = false;  // all differences identical: no variance to test against
};

// Paired two-sided t-test over per-split score pairs (a - b).
inline TTestResult paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("paired_t_test: length mismatch");
  if (a.size() < 2) throw Error("paired_t_test: needs at least two pairs");
  const std::size_t n = a.size();
  TTestResult r;
  r.n = n;
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double x : d) ss += (x - mean) * (x - mean);
  r.mean_diff = mean;
  const double var = ss / static_cast<double>(n - 1);
  if (var == 0.0) {
    r.degenerate = true;
    r.t = mean == 0.0 ? 0.0 : std::numeric_limits<double>::infinity() * (mean > 0 ? 1 : -1);
    r.p = mean == 0.0 ? 1.0 : 0.0;  // reported as "< 1e-12" by the renderers
    return r;
  }
  r.t = mean / std::sqrt(var / static_cast<double>(n));
  r.p = t_two_sided_p(r.t, static_cast<double>(n - 1));
  return r;
}

// --- split protocols --------------------------------------------------------

enum class Protocol { kContextAware, kInstanceGeneralization, kClassGeneralization };

inline const char* to_string(Protocol p) {
  switch (p) {
    case Protocol::kContextAware: return "context_aware";
    case Protocol::kInstanceGeneralization: return "instance_generalization";
    case Protocol::kClassGeneralization: return "class_generalization";
  }
  throw Error("to_string: bad protocol");
}

inline Protocol protocol_from_string(const std::string& s) {
  if (s == "context_aware") return Protocol::kContextAware;
  if (s == "instance_generalization") return Protocol::kInstanceGeneralization;
  if (s == "class_generalization") return Protocol::kClassGeneralization;
  throw Error("unknown protocol '" + s + "'");
}

struct SplitSpec {
  Protocol protocol = Protocol::kContextAware;
  double train_fraction = 0.7;
  std::size_t repetitions = 10;
  std::uint64_t seed = 0;
  std::string held_out_class;  // class protocol only; empty rotates through classes
};

struct Split {
  std::vector<std::size_t> train, test;  // context indices, disjoint, covering all
  std::uint64_t seed = 0;
  std::string held_out_class;  // class protocol only
};

namespace detail {

inline std::size_t train_count(double fraction, std::size_t n) {
  auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (k < 1) k = 1;
  if (k > n - 1) k = n - 1;
  return k;
}

}  // namespace detail

inline std::vector<Split> make_splits(const Dataset& ds, const SplitSpec& spec) {
  if (spec.repetitions == 0) throw Error("make_splits: needs at least one repetition");
  if (spec.protocol != Protocol::kClassGeneralization &&
      !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0))
    throw Error("make_splits: train fraction must lie strictly between 0 and 1");
  const std::size_t n = ds.contexts.size();
  std::vector<Split> splits;
  splits.reserve(spec.repetitions);

  if (spec.protocol == Protocol::kContextAware) {
    if (n < 2) throw Error("make_splits: needs at least two contexts");
    for (std::size_t rep = 0; rep < spec.repetitions; ++rep) {
      Split sp;
      sp.seed = mix_seed(spec.seed, rep);
      std::vector<std::size_t> order(n);
      std::iota(order.begin(), order.end(), 0);
      Rng rng(sp.seed);
      rng.shuffle(order);
      const std::size_t k = detail::train_count(spec.train_fraction, n);
      sp.train.assign(order.begin(), order.begin() + k);
      sp.test.assign(order.begin() + k, order.end());
      std::sort(sp.train.begin(), sp.train.end());
      std::sort(sp.test.begin(), sp.test.end());
      splits.push_back(std::move(sp));
    }
    return splits;
  }

  if (spec.protocol == Protocol::kInstanceGeneralization) {
    // group contexts by (task, object class), split each group by object
    // instance so no test context's object was seen under that task in training
    struct Group {
      std::vector<std::size_t> instances;                  // object indices, ordered
      std::vector<std::vector<std::size_t>> ctx_of_inst;  // aligned with instances
    };
    std::map<std::pair<std::string, std::string>, Group> groups;
    for (std::size_t ci = 0; ci < n; ++ci) {
      const Context& ctx = ds.contexts[ci];
      const std::string& cls = ds.objects[ctx.object_index].object_class;
      Group& g = groups[{ctx.task, cls}];
      auto it = std::find(g.instances.begin(), g.instances.end(), ctx.object_index);
      std::size_t slot;
      if (it == g.instances.end()) {
        slot = g.instances.size();
        g.instances.push_back(ctx.object_index);
        g.ctx_of_inst.emplace_back();
      } else {
        slot = static_cast<std::size_t>(it - g.instances.begin());
      }
      g.ctx_of_inst[slot].push_back(ci);
    }
    for (const auto& [key, g] : groups)
      if (g.instances.size() < 2)
        throw Error("make_splits: task '" + key.first + "' on class '" + key.second +
                    "' covers fewer than two object instances");
    for (std::size_t rep = 0; rep < spec.repetitions; ++rep) {
      Split sp;
      sp.seed = mix_seed(spec.seed, rep);
      Rng rng(sp.seed);
      for (const auto& [key, g] : groups) {
        std::vector<std::size_t> order(g.instances.size());
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        const std::size_t k = detail::train_count(spec.train_fraction, order.size());
        for (std::size_t i = 0; i < order.size(); ++i) {
          auto& dst = i < k ? sp.train : sp.test;
          dst.insert(dst.end(), g.ctx_of_inst[order[i]].begin(), g.ctx_of_inst[order[i]].end());
        }
      }
      std::sort(sp.train.begin(), sp.train.end());
      std::sort(sp.test.begin(), sp.test.end());
      splits.push_back(std::move(sp));
    }
    return splits;
  }

  // class generalization: hold out every context of one class
  std::vector<std::string> classes_present;
  for (const auto& label : ds.vocab.object_classes.labels()) {
    for (std::size_t ci = 0; ci < n; ++ci)
      if (ds.objects[ds.contexts[ci].object_index].object_class == label) {
        classes_present.push_back(label);
        break;
      }
  }
  if (!spec.held_out_class.empty() &&
      std::find(classes_present.begin(), classes_present.end(), spec.held_out_class) ==
          classes_present.end())
    throw Error("make_splits: held-out class '" + spec.held_out_class + "' has no contexts");
  if (spec.held_out_class.empty() && classes_present.size() < 2)
    throw Error("make_splits: class protocol needs at least two classes with contexts");
  for (std::size_t rep = 0; rep < spec.repetitions; ++rep) {
    Split sp;
    sp.seed = mix_seed(spec.seed, rep);
    sp.held_out_class = spec.held_out_class.empty()
                            ? classes_present[rep % classes_present.size()]
                            : spec.held_out_class;
    for (std::size_t ci = 0; ci < n; ++ci) {
      const bool held =
          ds.objects[ds.contexts[ci].object_index].object_class == sp.held_out_class;
      (held ? sp.test : sp.train).push_back(ci);
    }
    if (sp.train.empty() || sp.test.empty())
      throw Error("make_splits: class split leaves train or test empty");
    splits.push_back(std::move(sp));
  }
  return splits;
}

// --- ranking with rejection -------------------------------------------------

struct RankedGrasp {
  std::size_t grasp_index = 0;
  double score = 0.0;
};

struct RankingResult {
  std::vector<RankedGrasp> ranked;  // best first; stable for equal scores
  bool rejected = false;            // no grasp reached the threshold
  double threshold = 0.0;
  double best_score = 0.0;

  std::vector<std::size_t> order() const {
    std::vector<std::size_t> out;
    out.reserve(ranked.size());
    for (const auto& r : ranked) out.push_back(r.grasp_index);
    return out;
  }
};

inline RankingResult rank_grasps(std::span<const double> scores, double threshold) {
  if (scores.empty()) throw Error("rank_grasps: no grasps to rank");
  RankingResult r;
  r.threshold = threshold;
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  r.ranked.reserve(order.size());
  for (std::size_t idx : order) r.ranked.push_back({idx, scores[idx]});
  r.best_score = r.ranked.front().score;
  r.rejected = r.best_score < threshold;
  return r;
}

inline RankingResult rank_and_filter(const CageModel& model, const FeatureExtractor& fx,
                                     const Context& ctx, std::span<const LabeledGrasp> grasps,
                                     double threshold = 0.01) {
  const auto scores = score_grasps(model, fx, ctx, grasps);
  return rank_grasps(scores, threshold);
}

}  // namespace cage
