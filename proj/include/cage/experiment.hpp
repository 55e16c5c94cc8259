#pragma once

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "cage/eval.hpp"
#include "cage/generator.hpp"

namespace cage {

enum class Method : int {
  kCage = 0,
  kWithoutDeep,
  kWithoutWide,
  kWithoutStates,
  kWithoutTasks,
  kFt,
  kCa,
};

inline const char* to_string(Method m) {
  switch (m) {
    case Method::kCage: return "cage";
    case Method::kWithoutDeep: return "without-deep";
    case Method::kWithoutWide: return "without-wide";
    case Method::kWithoutStates: return "without-states";
    case Method::kWithoutTasks: return "without-tasks";
    case Method::kFt: return "ft";
    case Method::kCa: return "ca";
  }
  throw Error("to_string: bad method");
}

inline Method method_from_string(const std::string& s) {
  for (int i = 0; i <= static_cast<int>(Method::kCa); ++i)
    if (s == to_string(static_cast<Method>(i))) return static_cast<Method>(i);
  throw Error("unknown method '" + s + "'");
}

inline const char* display_name(Method m) {
  switch (m) {
    case Method::kCage: return "Wide and Deep";
    case Method::kWithoutDeep: return "Without Deep";
    case Method::kWithoutWide: return "Without Wide";
    case Method::kWithoutStates: return "Without States";
    case Method::kWithoutTasks: return "Without Tasks";
    case Method::kFt: return "Frequency Table";
    case Method::kCa: return "Chance";
  }
  throw Error("display_name: bad method");
}

inline bool is_model_method(Method m) {
  return m == Method::kCage || m == Method::kWithoutDeep || m == Method::kWithoutWide ||
         m == Method::kWithoutStates || m == Method::kWithoutTasks;
}

// Applies an ablation to the base model configuration.
inline ModelConfig config_for_method(ModelConfig cfg, Method m) {
  switch (m) {
    case Method::kCage: break;
    case Method::kWithoutDeep: cfg.use_deep = false; break;
    case Method::kWithoutWide: cfg.use_wide = false; break;
    case Method::kWithoutStates: cfg.mask_states = true; break;
    case Method::kWithoutTasks: cfg.mask_tasks = true; break;
    default: throw Error("config_for_method: not a model method");
  }
  return cfg;
}

// Static round-robin style worker pool; every item index is handled exactly
// once and items write only their own result slots, so the outcome does not
// depend on the thread count.
inline void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  if (jobs <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::mutex error_mu;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      while (true) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

struct EvalReport {
  std::string tool = kToolTag;
  Protocol protocol = Protocol::kContextAware;
  std::uint64_t seed = 0;
  double train_fraction = 0.7;
  std::size_t repetitions = 0;
  std::size_t epochs = 0;
  std::size_t batch_size = 0;
  std::string held_out_class;
  std::size_t n_contexts = 0, n_objects = 0;

  std::vector<Method> methods;
  std::vector<std::vector<double>> per_split_map;  // [method][split]
  std::vector<std::size_t> excluded;               // per split: contexts without relevant grasps
  std::vector<std::string> held_out;               // per split, class protocol only
  double expected_random_map = 0.0;

  struct Summary {
    double mean = 0.0, stddev = 0.0;
  };
  std::vector<Summary> summaries;

  struct Comparison {
    std::size_t a = 0, b = 0;  // indices into methods
    TTestResult test;          // over maps[a] - maps[b]
  };
  std::vector<Comparison> comparisons;

  std::size_t method_slot(Method m) const {
    for (std::size_t i = 0; i < methods.size(); ++i)
      if (methods[i] == m) return i;
    throw Error(std::string("report does not include method '") + to_string(m) + "'");
  }
  const std::vector<double>& maps_for(Method m) const { return per_split_map[method_slot(m)]; }
  const Summary& summary_for(Method m) const { return summaries[method_slot(m)]; }

  // t-test oriented as (a - b), regardless of stored order
  TTestResult comparison_between(Method a, Method b) const {
    const std::size_t ia = method_slot(a), ib = method_slot(b);
    for (const auto& c : comparisons) {
      if (c.a == ia && c.b == ib) return c.test;
      if (c.a == ib && c.b == ia) {
        TTestResult t = c.test;
        t.t = -t.t;
        t.mean_diff = -t.mean_diff;
        return t;
      }
    }
    throw Error("comparison not present in report");
  }

  void finalize() {
    summaries.clear();
    comparisons.clear();
    for (const auto& maps : per_split_map) {
      Summary s;
      double sum = 0.0;
      for (double v : maps) sum += v;
      s.mean = maps.empty() ? 0.0 : sum / static_cast<double>(maps.size());
      if (maps.size() > 1) {
        double ss = 0.0;
        for (double v : maps) ss += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(ss / static_cast<double>(maps.size() - 1));
      }
      summaries.push_back(s);
    }
    if (repetitions > 1) {
      for (std::size_t i = 0; i < methods.size(); ++i)
        for (std::size_t j = i + 1; j < methods.size(); ++j) {
          Comparison c;
          c.a = i;
          c.b = j;
          c.test = paired_t_test(per_split_map[i], per_split_map[j]);
          comparisons.push_back(c);
        }
    }
  }
};

namespace detail {

// per-context cache of everything the methods need, so feature extraction
// and encoding run once per grasp regardless of split or method count
struct EncodedContext {
  std::vector<TrainingExample> examples;
  std::vector<GraspLabel> labels;
  std::vector<std::string> grasp_affordances;
  ContextKey key;
};

inline std::vector<EncodedContext> encode_contexts(const Dataset& ds, const CrossConfig& crosses) {
  const FeatureExtractor fx(ds);
  std::vector<EncodedContext> out(ds.contexts.size());
  for (std::size_t ci = 0; ci < ds.contexts.size(); ++ci) {
    const Context& ctx = ds.contexts[ci];
    EncodedContext& ec = out[ci];
    ec.key = context_key(ds, ctx);
    for (const LabeledGrasp& g : ds.grasps[ci]) {
      const SemanticFeatures x = fx.extract(ctx, g);
      TrainingExample ex;
      ex.wide = encode_wide(x, ds.vocab, crosses);
      ex.deep = encode_deep(x, ds.vocab);
      ex.label = g.label;
      ec.examples.push_back(std::move(ex));
      ec.labels.push_back(g.label);
      ec.grasp_affordances.push_back(x.grasp_affordance);
    }
  }
  return out;
}

inline std::vector<GraspLabel> apply_order(const std::vector<GraspLabel>& labels,
                                           const std::vector<std::size_t>& order) {
  std::vector<GraspLabel> out;
  out.reserve(order.size());
  for (std::size_t i : order) out.push_back(labels[i]);
  return out;
}

}  // namespace detail

// Runs every requested method over the split repetitions and aggregates MAPs
// and pairwise tests. Model trainings fan out over `jobs` threads; results are
// identical for any job count because each (split, method) writes its own slot.
inline EvalReport run_protocol(const Dataset& ds, const SplitSpec& spec,
                               const ModelConfig& base_cfg, std::vector<Method> methods,
                               int jobs = 1) {
  if (methods.empty()) throw Error("run_protocol: no methods requested");
  std::sort(methods.begin(), methods.end());
  methods.erase(std::unique(methods.begin(), methods.end()), methods.end());

  const auto splits = make_splits(ds, spec);
  const auto encoded = detail::encode_contexts(ds, base_cfg.crosses);

  EvalReport report;
  report.protocol = spec.protocol;
  report.seed = spec.seed;
  report.train_fraction = spec.train_fraction;
  report.repetitions = spec.repetitions;
  report.epochs = base_cfg.epochs;
  report.batch_size = base_cfg.batch_size;
  report.held_out_class = spec.held_out_class;
  report.n_contexts = ds.contexts.size();
  report.n_objects = ds.objects.size();
  report.methods = methods;
  report.per_split_map.assign(methods.size(), std::vector<double>(splits.size(), 0.0));
  report.excluded.assign(splits.size(), 0);
  for (const auto& sp : splits) report.held_out.push_back(sp.held_out_class);

  // expected MAP of a random ranking, plus the per-split exclusion counts
  double expected_sum = 0.0;
  for (std::size_t si = 0; si < splits.size(); ++si) {
    double ap_sum = 0.0;
    std::size_t defined = 0, excluded = 0;
    for (std::size_t ci : splits[si].test) {
      const auto& labels = encoded[ci].labels;
      std::size_t suitable = 0, neutral = 0;
      for (GraspLabel l : labels) {
        if (l == GraspLabel::kSuitable) ++suitable;
        if (l == GraspLabel::kNeutral) ++neutral;
      }
      const std::size_t relevant = suitable > 0 ? suitable : neutral;
      if (relevant == 0) {
        ++excluded;
        continue;
      }
      ap_sum += expected_random_ap(labels.size(), relevant);
      ++defined;
    }
    if (defined == 0) throw Error("run_protocol: a split has no context with a defined AP");
    expected_sum += ap_sum / static_cast<double>(defined);
    report.excluded[si] = excluded;
  }
  report.expected_random_map = expected_sum / static_cast<double>(splits.size());

  auto map_over_test = [&](const Split& sp,
                           const std::function<std::vector<std::size_t>(std::size_t)>& rank_of) {
    std::vector<ApResult> aps;
    aps.reserve(sp.test.size());
    for (std::size_t ci : sp.test) {
      const auto order = rank_of(ci);
      aps.push_back(average_precision(detail::apply_order(encoded[ci].labels, order)));
    }
    return mean_ap(aps);
  };

  // model methods: one training per (split, method), parallelized
  struct Task {
    std::size_t method_slot, split;
  };
  std::vector<Task> tasks;
  for (std::size_t mi = 0; mi < methods.size(); ++mi)
    if (is_model_method(methods[mi]))
      for (std::size_t si = 0; si < splits.size(); ++si) tasks.push_back({mi, si});

  parallel_for(tasks.size(), jobs, [&](std::size_t ti) {
    const Task& task = tasks[ti];
    const Split& sp = splits[task.split];
    ModelConfig cfg = config_for_method(base_cfg, methods[task.method_slot]);
    cfg.seed = mix_seed(sp.seed, 0x100 + static_cast<std::uint64_t>(methods[task.method_slot]));

    std::vector<TrainingExample> examples;
    for (std::size_t ci : sp.train)
      examples.insert(examples.end(), encoded[ci].examples.begin(), encoded[ci].examples.end());
    const TrainResult tr = train_on_examples(ds.vocab, examples, cfg);

    const double map = map_over_test(sp, [&](std::size_t ci) {
      std::vector<double> scores;
      scores.reserve(encoded[ci].examples.size());
      for (const auto& ex : encoded[ci].examples)
        scores.push_back(
            tr.model.predict(ex.wide, ex.deep)[static_cast<std::size_t>(GraspLabel::kSuitable)]);
      return rank_grasps(scores, 0.0).order();
    });
    report.per_split_map[task.method_slot][task.split] = map;
  });

  // baselines, cheap and serial
  for (std::size_t mi = 0; mi < methods.size(); ++mi) {
    if (methods[mi] == Method::kFt) {
      for (std::size_t si = 0; si < splits.size(); ++si) {
        const Split& sp = splits[si];
        FrequencyTable table;
        for (std::size_t ci : sp.train) {
          const auto& ec = encoded[ci];
          for (std::size_t gi = 0; gi < ec.labels.size(); ++gi)
            table.add(ec.key, ec.grasp_affordances[gi], ec.labels[gi]);
        }
        report.per_split_map[mi][si] = map_over_test(sp, [&](std::size_t ci) {
          return ft_rank(table, encoded[ci].key, encoded[ci].grasp_affordances);
        });
      }
    } else if (methods[mi] == Method::kCa) {
      for (std::size_t si = 0; si < splits.size(); ++si) {
        const Split& sp = splits[si];
        report.per_split_map[mi][si] = map_over_test(sp, [&](std::size_t ci) {
          return ca_rank(encoded[ci].labels.size(), mix_seed(sp.seed ^ 0xCAULL, ci));
        });
      }
    }
  }

  report.finalize();
  return report;
}

// --- report rendering --------------------------------------------------------

namespace detail {

inline std::string p_value_string(const TTestResult& t) {
  if (t.degenerate) return t.mean_diff == 0.0 ? "1" : "<1e-12";
  return format_sig(t.p, 6);
}

inline std::string significance_stars(const TTestResult& t) {
  const bool sig = t.degenerate ? t.mean_diff != 0.0 : true;
  const double p = t.degenerate ? (t.mean_diff == 0.0 ? 1.0 : 0.0) : t.p;
  if (!sig) return "ns";
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "ns";
}

}  // namespace detail

inline void render_report_csv(const EvalReport& r, std::ostream& os) {
  os << "key,tool," << r.tool << '\n';
  os << "key,protocol," << to_string(r.protocol) << '\n';
  os << "key,seed," << r.seed << '\n';
  os << "key,train_fraction," << format_g9(r.train_fraction) << '\n';
  os << "key,repetitions," << r.repetitions << '\n';
  os << "key,epochs," << r.epochs << '\n';
  os << "key,batch_size," << r.batch_size << '\n';
  os << "key,contexts," << r.n_contexts << '\n';
  os << "key,objects," << r.n_objects << '\n';
  if (!r.held_out_class.empty()) os << "key,held_out_class," << r.held_out_class << '\n';
  os << "key,expected_random_map," << format_g9(r.expected_random_map) << '\n';
  for (std::size_t si = 0; si < r.excluded.size(); ++si) {
    os << "excluded," << si << ',' << r.excluded[si];
    if (si < r.held_out.size() && !r.held_out[si].empty()) os << ',' << r.held_out[si];
    os << '\n';
  }
  for (std::size_t mi = 0; mi < r.methods.size(); ++mi)
    for (std::size_t si = 0; si < r.per_split_map[mi].size(); ++si)
      os << "split_map," << to_string(r.methods[mi]) << ',' << si << ','
         << format_g9(r.per_split_map[mi][si]) << '\n';
  for (std::size_t mi = 0; mi < r.methods.size(); ++mi)
    os << "summary," << to_string(r.methods[mi]) << ',' << format_g9(r.summaries[mi].mean) << ','
       << format_g9(r.summaries[mi].stddev) << '\n';
  for (const auto& c : r.comparisons)
    os << "ttest," << to_string(r.methods[c.a]) << ',' << to_string(r.methods[c.b]) << ','
       << format_g9(c.test.mean_diff) << ',' << format_g9(c.test.t) << ','
       << detail::p_value_string(c.test) << ',' << detail::significance_stars(c.test) << '\n';
}

inline void render_report_text(const EvalReport& r, std::ostream& os) {
  char buf[160];
  os << "Grasp ranking evaluation (" << r.tool << ")\n";
  std::snprintf(buf, sizeof buf, "Protocol: %s   repetitions: %zu   seed: %llu\n",
                to_string(r.protocol), r.repetitions,
                static_cast<unsigned long long>(r.seed));
  os << buf;
  if (r.protocol != Protocol::kClassGeneralization) {
    std::snprintf(buf, sizeof buf, "Train fraction: %.2f   epochs: %zu   batch size: %zu\n",
                  r.train_fraction, r.epochs, r.batch_size);
    os << buf;
  } else {
    std::snprintf(buf, sizeof buf, "Held-out classes rotate%s   epochs: %zu   batch size: %zu\n",
                  r.held_out_class.empty() ? "" : (" (fixed: " + r.held_out_class + ")").c_str(),
                  r.epochs, r.batch_size);
    os << buf;
  }
  double mean_excluded = 0.0;
  for (std::size_t e : r.excluded) mean_excluded += static_cast<double>(e);
  mean_excluded /= r.excluded.empty() ? 1.0 : static_cast<double>(r.excluded.size());
  std::snprintf(buf, sizeof buf,
                "Dataset: %zu contexts, %zu objects; %.1f test contexts per split lack relevant "
                "grasps and are excluded\n",
                r.n_contexts, r.n_objects, mean_excluded);
  os << buf;
  os << '\n';
  std::snprintf(buf, sizeof buf, "%-18s %8s %9s\n", "Method", "MAP", "stddev");
  os << buf;
  for (std::size_t mi = 0; mi < r.methods.size(); ++mi) {
    std::snprintf(buf, sizeof buf, "%-18s %8.4f %9.4f", display_name(r.methods[mi]),
                  r.summaries[mi].mean, r.summaries[mi].stddev);
    os << buf;
    if (r.methods[mi] == Method::kCa) {
      std::snprintf(buf, sizeof buf, "   (expected %.4f)", r.expected_random_map);
      os << buf;
    }
    os << '\n';
  }
  if (!r.comparisons.empty()) {
    os << "\nPaired t-tests (two-sided), MAP difference per split:\n";
    for (const auto& c : r.comparisons) {
      std::snprintf(buf, sizeof buf, "%-18s vs %-18s  diff %+8.4f  t %8.3f  p %-10s %s%s\n",
                    display_name(r.methods[c.a]), display_name(r.methods[c.b]),
                    c.test.mean_diff, c.test.t, detail::p_value_string(c.test).c_str(),
                    detail::significance_stars(c.test).c_str(),
                    c.test.degenerate ? "  [degenerate: zero variance]" : "");
      os << buf;
    }
  }
}

// Rebuilds a report from its CSV form; summary and ttest rows are ignored and
// recomputed so the text rendering never drifts from the split data.
inline EvalReport parse_report_csv(std::istream& is) {
  EvalReport r;
  std::string line;
  std::size_t line_no = 0;
  std::map<std::string, std::size_t> slot_of;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma == std::string::npos ? std::string::npos
                                                                    : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    auto fail = [&](const std::string& msg) {
      throw Error("report csv line " + std::to_string(line_no) + ": " + msg);
    };
    if (cells[0] == "key") {
      if (cells.size() < 3) fail("malformed key row");
      const std::string& k = cells[1];
      const std::string& v = cells[2];
      if (k == "tool") r.tool = v;
      else if (k == "protocol") r.protocol = protocol_from_string(v);
      else if (k == "seed") r.seed = std::strtoull(v.c_str(), nullptr, 10);
      else if (k == "train_fraction") r.train_fraction = std::strtod(v.c_str(), nullptr);
      else if (k == "repetitions") r.repetitions = std::strtoull(v.c_str(), nullptr, 10);
      else if (k == "epochs") r.epochs = std::strtoull(v.c_str(), nullptr, 10);
      else if (k == "batch_size") r.batch_size = std::strtoull(v.c_str(), nullptr, 10);
      else if (k == "contexts") r.n_contexts = std::strtoull(v.c_str(), nullptr, 10);
      else if (k == "objects") r.n_objects = std::strtoull(v.c_str(), nullptr, 10);
      else if (k == "held_out_class") r.held_out_class = v;
      else if (k == "expected_random_map") r.expected_random_map = std::strtod(v.c_str(), nullptr);
      // unknown keys pass through silently
    } else if (cells[0] == "excluded") {
      if (cells.size() < 3) fail("malformed excluded row");
      const std::size_t si = std::strtoull(cells[1].c_str(), nullptr, 10);
      if (r.excluded.size() <= si) {
        r.excluded.resize(si + 1, 0);
        r.held_out.resize(si + 1);
      }
      r.excluded[si] = std::strtoull(cells[2].c_str(), nullptr, 10);
      if (cells.size() > 3) r.held_out[si] = cells[3];
    } else if (cells[0] == "split_map") {
      if (cells.size() < 4) fail("malformed split_map row");
      const Method m = method_from_string(cells[1]);
      const std::size_t si = std::strtoull(cells[2].c_str(), nullptr, 10);
      auto it = slot_of.find(cells[1]);
      std::size_t mi;
      if (it == slot_of.end()) {
        mi = r.methods.size();
        slot_of.emplace(cells[1], mi);
        r.methods.push_back(m);
        r.per_split_map.emplace_back();
      } else {
        mi = it->second;
      }
      if (r.per_split_map[mi].size() != si) fail("split_map rows out of order");
      r.per_split_map[mi].push_back(std::strtod(cells[3].c_str(), nullptr));
    } else if (cells[0] == "summary" || cells[0] == "ttest") {
      // recomputed in finalize()
    } else {
      fail("unknown row kind '" + cells[0] + "'");
    }
  }
  if (r.methods.empty()) throw Error("report csv: no split_map rows");
  r.finalize();
  return r;
}

}  // namespace cage
