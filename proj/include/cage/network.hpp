#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cage/features.hpp"
#include "cage/numerics.hpp"
#include "cage/version.hpp"

namespace cage {

struct ModelConfig {
  std::size_t embedding_dim = 8;
  std::size_t propagation_dim = 16;
  std::vector<std::size_t> hidden = {64, 32};
  std::size_t dense_inputs = 0;  // optional numeric passthrough width
  bool use_wide = true;
  bool use_deep = true;
  bool mask_tasks = false;   // zero every task block at train and eval time
  bool mask_states = false;  // same for state blocks
  CrossConfig crosses;
  std::size_t epochs = 150;
  std::size_t batch_size = 32;  // 0 trains on the full set each step
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;

  void validate() const {
    if (!use_wide && !use_deep) throw Error("ModelConfig: at least one of wide/deep must be on");
    if (embedding_dim == 0 || propagation_dim == 0)
      throw Error("ModelConfig: embedding and propagation dims must be positive");
    if (hidden.empty()) throw Error("ModelConfig: needs at least one hidden layer");
    for (std::size_t h : hidden)
      if (h == 0) throw Error("ModelConfig: hidden layer of width zero");
    if (epochs == 0) throw Error("ModelConfig: epochs must be positive");
    if (!(learning_rate > 0.0)) throw Error("ModelConfig: learning rate must be positive");
  }
};

inline constexpr std::size_t kNumClasses = 3;  // suitable, neutral, not suitable

// Wide & deep scorer over the symbolic grasp features. The wide half is a
// linear map over the sparse encoding; the deep half embeds each symbol,
// propagates every object part through a shared layer, average-pools the part
// vectors into an object embedding, and runs the concatenated result through
// an MLP. Both halves feed one softmax with a shared bias.
class CageModel {
 public:
  CageModel() = default;

  CageModel(const Vocabularies& vocab, const ModelConfig& cfg) : vocab_(vocab), cfg_(cfg) {
    cfg_.validate();
    allocate();
    Rng rng(mix_seed(cfg_.seed, 0x696e6974));
    auto init = [&](nn::Tensor& t, std::size_t fan_in) {
      t.fill_uniform(rng, 1.0 / std::sqrt(static_cast<double>(fan_in)));
    };
    init(wide_w_, 1);  // one-hot inputs: unit fan-in per active feature
    // bias starts at zero
    init(emb_task_, cfg_.embedding_dim);
    init(emb_state_, cfg_.embedding_dim);
    init(emb_aff_, cfg_.embedding_dim);
    init(emb_mat_, cfg_.embedding_dim);
    init(prop_w_, prop_w_.rows);
    for (std::size_t l = 0; l < deep_w_.size(); ++l) init(deep_w_[l], deep_w_[l].rows);
    init(deep_out_, deep_out_.rows);
    adam_.hyper.lr = cfg_.learning_rate;
    adam_.init(parameters());
    initialized_ = true;
  }

  bool initialized() const { return initialized_; }
  const ModelConfig& config() const { return cfg_; }
  const Vocabularies& vocab() const { return vocab_; }
  const WideLayout& wide_layout() const { return layout_; }
  const nn::AdamState& adam() const { return adam_; }

  std::vector<nn::Tensor*> parameters() {
    std::vector<nn::Tensor*> ps = {&wide_w_,   &bias_,    &emb_task_, &emb_state_,
                                   &emb_aff_,  &emb_mat_, &prop_w_,   &prop_b_};
    for (std::size_t l = 0; l < deep_w_.size(); ++l) {
      ps.push_back(&deep_w_[l]);
      ps.push_back(&deep_b_[l]);
    }
    ps.push_back(&deep_out_);
    return ps;
  }

  std::vector<std::pair<std::string, nn::Tensor*>> named_parameters() {
    std::vector<std::pair<std::string, nn::Tensor*>> ps = {
        {"wide_w", &wide_w_},       {"bias", &bias_},         {"emb_task", &emb_task_},
        {"emb_state", &emb_state_}, {"emb_aff", &emb_aff_},   {"emb_mat", &emb_mat_},
        {"prop_w", &prop_w_},       {"prop_b", &prop_b_}};
    for (std::size_t l = 0; l < deep_w_.size(); ++l) {
      ps.emplace_back("deep_w" + std::to_string(l), &deep_w_[l]);
      ps.emplace_back("deep_b" + std::to_string(l), &deep_b_[l]);
    }
    ps.emplace_back("deep_out", &deep_out_);
    return ps;
  }

  struct Workspace {
    std::vector<std::pair<std::uint32_t, std::uint32_t>> parts;  // canonical order
    std::vector<double> part_in;
    std::vector<std::vector<double>> part_pre, part_act;
    std::vector<double> pooled;
    std::vector<double> deep_in;
    std::vector<std::vector<double>> h_pre, h_act;
    std::array<double, kNumClasses> logits{}, probs{};
  };

  // Class probabilities (suitable, neutral, not suitable).
  std::array<double, kNumClasses> predict(const WideEncoding& wide,
                                          const DeepEncoding& deep) const {
    Workspace ws;
    forward(wide, deep, ws);
    nn::softmax_cross_entropy(ws.logits, 0, ws.probs);  // label unused for inference
    return ws.probs;
  }

  double example_loss(const WideEncoding& wide, const DeepEncoding& deep, GraspLabel label,
                      Workspace& ws) const {
    forward(wide, deep, ws);
    return nn::softmax_cross_entropy(ws.logits, static_cast<std::size_t>(label), ws.probs);
  }

  // Forward pass up to the logits; kept public so the training loop and the
  // gradient checks can drive it directly.
  void forward(const WideEncoding& wide, const DeepEncoding& deep, Workspace& ws) const {
    if (!initialized_) throw Error("CageModel: not initialized");
    for (std::size_t c = 0; c < kNumClasses; ++c) ws.logits[c] = bias_.v[c];

    if (cfg_.use_wide) {
      if (wide.length != layout_.length)
        throw Error("CageModel: sparse input length mismatch (got " +
                    std::to_string(wide.length) + ", want " + std::to_string(layout_.length) +
                    ")");
      for (std::uint32_t idx : wide.active) {
        if (idx >= layout_.length) throw Error("CageModel: sparse index out of range");
        if (wide_index_masked(idx)) continue;
        const double* wr = wide_w_.row(idx);
        for (std::size_t c = 0; c < kNumClasses; ++c) ws.logits[c] += wr[c];
      }
    }

    if (cfg_.use_deep) {
      if (deep.parts.empty()) throw Error("CageModel: deep input has no parts");
      if (deep.dense.size() != cfg_.dense_inputs)
        throw Error("CageModel: dense passthrough width mismatch");
      const std::size_t d = cfg_.embedding_dim;
      const std::size_t P = cfg_.propagation_dim;

      // order parts canonically so pooling is invariant to input order
      ws.parts = deep.parts;
      std::sort(ws.parts.begin(), ws.parts.end());

      ws.part_in.resize(2 * d);
      ws.part_pre.resize(ws.parts.size());
      ws.part_act.resize(ws.parts.size());
      for (std::size_t p = 0; p < ws.parts.size(); ++p) {
        const auto aff = nn::embedding_lookup(emb_aff_, ws.parts[p].first);
        const auto mat = nn::embedding_lookup(emb_mat_, ws.parts[p].second);
        std::copy(aff.begin(), aff.end(), ws.part_in.begin());
        std::copy(mat.begin(), mat.end(), ws.part_in.begin() + d);
        ws.part_pre[p].resize(P);
        ws.part_act[p].resize(P);
        nn::dense_forward(prop_w_, prop_b_, ws.part_in, ws.part_pre[p]);
        nn::relu(ws.part_pre[p], ws.part_act[p]);
      }
      ws.pooled.resize(P);
      std::vector<std::span<const double>> acts;
      acts.reserve(ws.part_act.size());
      for (const auto& a : ws.part_act) acts.emplace_back(a);
      nn::mean_pool(acts, ws.pooled);

      ws.deep_in.assign(deep_input_dim(), 0.0);
      double* dst = ws.deep_in.data();
      if (!cfg_.mask_tasks) {
        const auto e = nn::embedding_lookup(emb_task_, deep.task);
        std::copy(e.begin(), e.end(), dst);
      } else if (deep.task >= vocab_.tasks.size()) {
        throw Error("embedding_lookup: index out of range");
      }
      dst += d;
      if (!cfg_.mask_states) {
        const auto e = nn::embedding_lookup(emb_state_, deep.state);
        std::copy(e.begin(), e.end(), dst);
      } else if (deep.state >= vocab_.states.size()) {
        throw Error("embedding_lookup: index out of range");
      }
      dst += d;
      {
        const auto e = nn::embedding_lookup(emb_aff_, deep.grasp_affordance);
        std::copy(e.begin(), e.end(), dst);
        dst += d;
      }
      {
        const auto e = nn::embedding_lookup(emb_mat_, deep.grasp_material);
        std::copy(e.begin(), e.end(), dst);
        dst += d;
      }
      std::copy(ws.pooled.begin(), ws.pooled.end(), dst);
      dst += P;
      std::copy(deep.dense.begin(), deep.dense.end(), dst);

      ws.h_pre.resize(cfg_.hidden.size());
      ws.h_act.resize(cfg_.hidden.size());
      const std::vector<double>* prev = &ws.deep_in;
      for (std::size_t l = 0; l < cfg_.hidden.size(); ++l) {
        ws.h_pre[l].resize(cfg_.hidden[l]);
        ws.h_act[l].resize(cfg_.hidden[l]);
        nn::dense_forward(deep_w_[l], deep_b_[l], *prev, ws.h_pre[l]);
        nn::relu(ws.h_pre[l], ws.h_act[l]);
        prev = &ws.h_act[l];
      }
      const std::vector<double>& top = *prev;
      for (std::size_t i = 0; i < top.size(); ++i) {
        const double* wr = deep_out_.row(i);
        for (std::size_t c = 0; c < kNumClasses; ++c) ws.logits[c] += wr[c] * top[i];
      }
    }
    nn::check_finite(ws.logits, "logits");
  }

  // Accumulates parameter gradients for one example given the logit gradient.
  void backward(const WideEncoding& wide, const DeepEncoding& deep, const Workspace& ws,
                std::span<const double> dlogits) {
    for (std::size_t c = 0; c < kNumClasses; ++c) bias_.g[c] += dlogits[c];

    if (cfg_.use_wide) {
      for (std::uint32_t idx : wide.active) {
        if (wide_index_masked(idx)) continue;
        double* gr = wide_w_.grad_row(idx);
        for (std::size_t c = 0; c < kNumClasses; ++c) gr[c] += dlogits[c];
      }
    }

    if (cfg_.use_deep) {
      const std::size_t d = cfg_.embedding_dim;
      const std::size_t P = cfg_.propagation_dim;
      const std::vector<double>& top =
          cfg_.hidden.empty() ? ws.deep_in : ws.h_act[cfg_.hidden.size() - 1];

      std::vector<double> dtop(top.size(), 0.0);
      for (std::size_t i = 0; i < top.size(); ++i) {
        double* gr = deep_out_.grad_row(i);
        double acc = 0.0;
        for (std::size_t c = 0; c < kNumClasses; ++c) {
          gr[c] += top[i] * dlogits[c];
          acc += deep_out_.v[i * kNumClasses + c] * dlogits[c];
        }
        dtop[i] = acc;
      }

      std::vector<double> dcur = std::move(dtop);
      for (std::size_t l = cfg_.hidden.size(); l-- > 0;) {
        std::vector<double> dpre(ws.h_pre[l].size());
        nn::relu_backward(ws.h_pre[l], dcur, dpre);
        const std::vector<double>& input = l == 0 ? ws.deep_in : ws.h_act[l - 1];
        std::vector<double> dinput(input.size());
        nn::dense_backward(deep_w_[l], deep_b_[l], input, dpre, dinput);
        dcur = std::move(dinput);
      }

      const double* src = dcur.data();
      if (!cfg_.mask_tasks) nn::embedding_backward(emb_task_, deep.task, {src, d});
      src += d;
      if (!cfg_.mask_states) nn::embedding_backward(emb_state_, deep.state, {src, d});
      src += d;
      nn::embedding_backward(emb_aff_, deep.grasp_affordance, {src, d});
      src += d;
      nn::embedding_backward(emb_mat_, deep.grasp_material, {src, d});
      src += d;

      std::vector<double> dact(P);
      nn::mean_pool_backward(ws.parts.size(), {src, P}, dact);
      std::vector<double> dpre(P), dpart_in(2 * d), part_in(2 * d);
      for (std::size_t p = 0; p < ws.parts.size(); ++p) {
        nn::relu_backward(ws.part_pre[p], dact, dpre);
        const auto aff = nn::embedding_lookup(emb_aff_, ws.parts[p].first);
        const auto mat = nn::embedding_lookup(emb_mat_, ws.parts[p].second);
        std::copy(aff.begin(), aff.end(), part_in.begin());
        std::copy(mat.begin(), mat.end(), part_in.begin() + d);
        nn::dense_backward(prop_w_, prop_b_, part_in, dpre, dpart_in);
        nn::embedding_backward(emb_aff_, ws.parts[p].first, {dpart_in.data(), d});
        nn::embedding_backward(emb_mat_, ws.parts[p].second, {dpart_in.data() + d, d});
      }
      // gradients for dense passthrough values are dropped: they are inputs
    }
  }

  nn::AdamState& adam_state() { return adam_; }

  void save(const std::string& path) const {
    if (!initialized_) throw Error("CageModel: cannot save an uninitialized model");
    std::ofstream os(path, std::ios::binary);
    if (!os) throw Error("cannot open '" + path + "' for writing");
    os << "{\"format\":\"cage-ckpt-1\",\"tool\":\"" << kToolTag << "\",\"config\":{";
    os << "\"embedding_dim\":" << cfg_.embedding_dim;
    os << ",\"propagation_dim\":" << cfg_.propagation_dim;
    os << ",\"hidden\":[";
    for (std::size_t i = 0; i < cfg_.hidden.size(); ++i)
      os << (i ? "," : "") << cfg_.hidden[i];
    os << "],\"dense_inputs\":" << cfg_.dense_inputs;
    os << ",\"use_wide\":" << (cfg_.use_wide ? "true" : "false");
    os << ",\"use_deep\":" << (cfg_.use_deep ? "true" : "false");
    os << ",\"mask_tasks\":" << (cfg_.mask_tasks ? "true" : "false");
    os << ",\"mask_states\":" << (cfg_.mask_states ? "true" : "false");
    os << ",\"crosses\":" << (cfg_.crosses.enabled ? "true" : "false");
    os << ",\"epochs\":" << cfg_.epochs;
    os << ",\"batch_size\":" << cfg_.batch_size;
    os << ",\"learning_rate\":" << format_g17(cfg_.learning_rate);
    os << ",\"seed\":" << cfg_.seed;
    os << "},\"vocab\":{\"object_classes\":";
    detail::emit_string_array(os, vocab_.object_classes.labels());
    os << ",\"materials\":";
    detail::emit_string_array(os, vocab_.materials.labels());
    os << ",\"tasks\":";
    detail::emit_string_array(os, vocab_.tasks.labels());
    os << ",\"states\":";
    detail::emit_string_array(os, vocab_.states.labels());
    os << ",\"affordances\":";
    detail::emit_string_array(os, vocab_.affordances.labels());
    os << "},\"adam_t\":" << adam_.t << "}\n";

    auto write_values = [&](const std::vector<double>& xs) {
      for (std::size_t i = 0; i < xs.size(); ++i) os << (i ? " " : "") << format_g17(xs[i]);
      os << '\n';
    };
    auto named = const_cast<CageModel*>(this)->named_parameters();
    for (std::size_t pi = 0; pi < named.size(); ++pi) {
      const nn::Tensor& t = *named[pi].second;
      os << "param " << named[pi].first << ' ' << t.rows << ' ' << t.cols << '\n';
      write_values(t.v);
      write_values(adam_.m[pi]);
      write_values(adam_.v[pi]);
    }
    os << "end\n";
    os.flush();
    if (!os) throw Error("failed while writing '" + path + "'");
  }

  static CageModel load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw Error("cannot open '" + path + "'");
    std::string line;
    if (!std::getline(is, line)) throw Error(path + ": empty checkpoint");
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw Error(path + ": malformed checkpoint header");
    if (!j.contains("format") || j["format"] != "cage-ckpt-1")
      throw Error(path + ": missing or unsupported format tag (expected \"cage-ckpt-1\")");

    const auto& jc = j.at("config");
    ModelConfig cfg;
    cfg.embedding_dim = jc.at("embedding_dim").get<std::size_t>();
    cfg.propagation_dim = jc.at("propagation_dim").get<std::size_t>();
    cfg.hidden = jc.at("hidden").get<std::vector<std::size_t>>();
    cfg.dense_inputs = jc.at("dense_inputs").get<std::size_t>();
    cfg.use_wide = jc.at("use_wide").get<bool>();
    cfg.use_deep = jc.at("use_deep").get<bool>();
    cfg.mask_tasks = jc.at("mask_tasks").get<bool>();
    cfg.mask_states = jc.at("mask_states").get<bool>();
    cfg.crosses.enabled = jc.at("crosses").get<bool>();
    cfg.epochs = jc.at("epochs").get<std::size_t>();
    cfg.batch_size = jc.at("batch_size").get<std::size_t>();
    cfg.learning_rate = jc.at("learning_rate").get<double>();
    cfg.seed = jc.at("seed").get<std::uint64_t>();

    const auto& jv = j.at("vocab");
    Vocabularies vocab;
    vocab.object_classes = Vocab(jv.at("object_classes").get<std::vector<std::string>>());
    vocab.materials = Vocab(jv.at("materials").get<std::vector<std::string>>());
    vocab.tasks = Vocab(jv.at("tasks").get<std::vector<std::string>>());
    vocab.states = Vocab(jv.at("states").get<std::vector<std::string>>());
    vocab.affordances = Vocab(jv.at("affordances").get<std::vector<std::string>>());

    CageModel m;
    m.vocab_ = vocab;
    m.cfg_ = cfg;
    m.cfg_.validate();
    m.allocate();
    m.adam_.hyper.lr = cfg.learning_rate;
    m.adam_.init(m.parameters());
    m.adam_.t = j.at("adam_t").get<std::uint64_t>();

    auto named = m.named_parameters();
    auto read_values = [&](std::vector<double>& xs, const std::string& what) {
      if (!std::getline(is, line)) throw Error(path + ": truncated checkpoint at " + what);
      std::istringstream ss(line);
      for (std::size_t i = 0; i < xs.size(); ++i)
        if (!(ss >> xs[i])) throw Error(path + ": short value row for " + what);
      double extra;
      if (ss >> extra) throw Error(path + ": long value row for " + what);
    };
    for (std::size_t pi = 0; pi < named.size(); ++pi) {
      if (!std::getline(is, line)) throw Error(path + ": truncated checkpoint");
      std::istringstream ss(line);
      std::string tag, name;
      std::size_t rows = 0, cols = 0;
      if (!(ss >> tag >> name >> rows >> cols) || tag != "param")
        throw Error(path + ": malformed parameter header '" + line + "'");
      nn::Tensor& t = *named[pi].second;
      if (name != named[pi].first || rows != t.rows || cols != t.cols)
        throw Error(path + ": parameter '" + name + "' does not match expected '" +
                    named[pi].first + "' " + std::to_string(t.rows) + "x" +
                    std::to_string(t.cols));
      read_values(t.v, name);
      read_values(m.adam_.m[pi], name + " adam m");
      read_values(m.adam_.v[pi], name + " adam v");
    }
    if (!std::getline(is, line) || line != "end") throw Error(path + ": missing end marker");
    m.initialized_ = true;
    return m;
  }

 private:
  void allocate() {
    layout_ = WideLayout::for_vocab(vocab_, cfg_.crosses);
    wide_w_ = nn::Tensor(layout_.length, kNumClasses);
    bias_ = nn::Tensor(kNumClasses, 1);
    emb_task_ = nn::Tensor(vocab_.tasks.size(), cfg_.embedding_dim);
    emb_state_ = nn::Tensor(vocab_.states.size(), cfg_.embedding_dim);
    emb_aff_ = nn::Tensor(vocab_.affordances.size(), cfg_.embedding_dim);
    emb_mat_ = nn::Tensor(vocab_.materials.size(), cfg_.embedding_dim);
    prop_w_ = nn::Tensor(2 * cfg_.embedding_dim, cfg_.propagation_dim);
    prop_b_ = nn::Tensor(cfg_.propagation_dim, 1);
    deep_w_.clear();
    deep_b_.clear();
    std::size_t in = deep_input_dim();
    for (std::size_t h : cfg_.hidden) {
      deep_w_.emplace_back(in, h);
      deep_b_.emplace_back(h, 1);
      in = h;
    }
    deep_out_ = nn::Tensor(in, kNumClasses);
  }

  std::size_t deep_input_dim() const {
    return 4 * cfg_.embedding_dim + cfg_.propagation_dim + cfg_.dense_inputs;
  }

  bool wide_index_masked(std::uint32_t idx) const {
    if (cfg_.mask_tasks) {
      if (idx >= layout_.task && idx < layout_.task + vocab_.tasks.size()) return true;
      if (layout_.crosses) {
        if (idx >= layout_.task_x_gaff &&
            idx < layout_.task_x_gaff + vocab_.tasks.size() * vocab_.affordances.size())
          return true;
        if (idx >= layout_.task_x_gmat &&
            idx < layout_.task_x_gmat + vocab_.tasks.size() * vocab_.materials.size())
          return true;
      }
    }
    if (cfg_.mask_states) {
      if (idx >= layout_.state && idx < layout_.state + vocab_.states.size()) return true;
      if (layout_.crosses && idx >= layout_.state_x_gaff &&
          idx < layout_.state_x_gaff + vocab_.states.size() * vocab_.affordances.size())
        return true;
    }
    return false;
  }

  Vocabularies vocab_;
  ModelConfig cfg_;
  WideLayout layout_;
  bool initialized_ = false;

  nn::Tensor wide_w_, bias_;
  nn::Tensor emb_task_, emb_state_, emb_aff_, emb_mat_;
  nn::Tensor prop_w_, prop_b_;
  std::vector<nn::Tensor> deep_w_, deep_b_;
  nn::Tensor deep_out_;
  nn::AdamState adam_;
};

struct TrainingExample {
  WideEncoding wide;
  DeepEncoding deep;
  GraspLabel label = GraspLabel::kNeutral;
};

inline std::vector<TrainingExample> build_training_set(const FeatureExtractor& fx,
                                                       std::span<const std::size_t> context_ids,
                                                       const CrossConfig& crosses = {}) {
  const Dataset& ds = fx.dataset();
  std::vector<TrainingExample> out;
  for (std::size_t ci : context_ids) {
    if (ci >= ds.contexts.size()) throw Error("build_training_set: context index out of range");
    const Context& ctx = ds.contexts[ci];
    for (const LabeledGrasp& g : ds.grasps[ci]) {
      const SemanticFeatures x = fx.extract(ctx, g);
      TrainingExample ex;
      ex.wide = encode_wide(x, ds.vocab, crosses);
      ex.deep = encode_deep(x, ds.vocab);
      ex.label = g.label;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

struct TrainResult {
  CageModel model;
  std::vector<double> epoch_loss;  // mean per-example loss, one entry per epoch
};

inline TrainResult train_on_examples(const Vocabularies& vocab,
                                     std::span<const TrainingExample> examples,
                                     const ModelConfig& cfg) {
  cfg.validate();
  if (examples.empty()) throw Error("train_on_examples: no training grasps");

  TrainResult result;
  result.model = CageModel(vocab, cfg);
  CageModel& model = result.model;
  auto params = model.parameters();

  Rng shuffle_rng(mix_seed(cfg.seed, 0x73687566));
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);

  const std::size_t batch =
      cfg.batch_size == 0 ? examples.size() : std::min(cfg.batch_size, examples.size());
  CageModel::Workspace ws;
  std::array<double, kNumClasses> dlogits;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t stop = std::min(order.size(), start + batch);
      const double inv = 1.0 / static_cast<double>(stop - start);
      for (std::size_t k = start; k < stop; ++k) {
        const TrainingExample& ex = examples[order[k]];
        loss_sum += model.example_loss(ex.wide, ex.deep, ex.label, ws);
        for (std::size_t c = 0; c < kNumClasses; ++c) {
          const double onehot = c == static_cast<std::size_t>(ex.label) ? 1.0 : 0.0;
          dlogits[c] = (ws.probs[c] - onehot) * inv;
        }
        model.backward(ex.wide, ex.deep, ws, dlogits);
      }
      nn::adam_step(params, model.adam_state());
    }
    const double mean_loss = loss_sum / static_cast<double>(examples.size());
    if (!std::isfinite(mean_loss))
      throw Error("train_model: loss diverged at epoch " + std::to_string(epoch));
    result.epoch_loss.push_back(mean_loss);
  }
  return result;
}

inline TrainResult train_model(const FeatureExtractor& fx,
                               std::span<const std::size_t> context_ids,
                               const ModelConfig& cfg) {
  if (context_ids.empty()) throw Error("train_model: no training contexts");
  const auto examples = build_training_set(fx, context_ids, cfg.crosses);
  return train_on_examples(fx.dataset().vocab, examples, cfg);
}

inline TrainResult train_model(const Dataset& ds, std::span<const std::size_t> context_ids,
                               const ModelConfig& cfg) {
  const FeatureExtractor fx(ds);
  return train_model(fx, context_ids, cfg);
}

// p(suitable) for one grasp in its context
inline double score_grasp(const CageModel& model, const FeatureExtractor& fx, const Context& ctx,
                          const LabeledGrasp& grasp) {
  const SemanticFeatures x = fx.extract(ctx, grasp);
  const auto probs = model.predict(encode_wide(x, fx.dataset().vocab, model.config().crosses),
                                   encode_deep(x, fx.dataset().vocab));
  return probs[static_cast<std::size_t>(GraspLabel::kSuitable)];
}

inline std::vector<double> score_grasps(const CageModel& model, const FeatureExtractor& fx,
                                        const Context& ctx,
                                        std::span<const LabeledGrasp> grasps) {
  std::vector<double> out;
  out.reserve(grasps.size());
  for (const auto& g : grasps) out.push_back(score_grasp(model, fx, ctx, g));
  return out;
}

}  // namespace cage
