#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "cage/experiment.hpp"

namespace fs = std::filesystem;

namespace {

cage::Protocol parse_protocol(const std::string& s) {
  if (s == "context" || s == "context_aware") return cage::Protocol::kContextAware;
  if (s == "instance" || s == "instance_generalization")
    return cage::Protocol::kInstanceGeneralization;
  if (s == "class" || s == "class_generalization") return cage::Protocol::kClassGeneralization;
  throw cage::Error("unknown protocol '" + s + "' (context_aware, instance_generalization, "
                    "class_generalization)");
}

std::vector<cage::Method> parse_methods(const std::string& csv) {
  std::vector<cage::Method> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const std::size_t comma = csv.find(',', start);
    const std::string item =
        csv.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!item.empty()) out.push_back(cage::method_from_string(item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (out.empty()) throw cage::Error("no methods given");
  return out;
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw cage::Error("cannot open '" + path.string() + "' for writing");
  os << text;
  os.flush();
  if (!os) throw cage::Error("failed while writing '" + path.string() + "'");
}

struct GenArgs {
  std::string out;
  std::uint64_t seed = 7;
  std::size_t objects_per_class = 8;
  std::size_t grasps = 20;
  std::size_t points_per_part = 80;
  std::string rules = "default";
};

void cmd_gen(const GenArgs& a) {
  cage::GeneratorConfig cfg = cage::GeneratorConfig::defaults();
  cfg.objects_per_class = a.objects_per_class;
  cfg.grasps_per_context = a.grasps;
  cfg.points_per_part = a.points_per_part;
  if (a.rules == "default") {
    cfg.rules = cage::default_rule_table();
  } else if (a.rules == "affordance") {
    cfg.rules = cage::affordance_rule_table();
    cfg.vocab = cage::Vocabularies::defaults();  // the plain six states suffice here
    cfg.states = cfg.vocab.states.labels();
    cfg.mirrored_parts = true;  // both hardness groups on every object
  } else {
    throw cage::Error("unknown rule table '" + a.rules + "' (default, affordance)");
  }
  const cage::Dataset ds = cage::generate_synthetic(cfg, a.seed);
  cage::save_dataset(ds, a.out);
  std::size_t n_grasps = 0;
  for (const auto& g : ds.grasps) n_grasps += g.size();
  std::cout << "wrote " << ds.objects.size() << " objects, " << ds.contexts.size()
            << " contexts, " << n_grasps << " grasps to " << a.out << '\n';
}

struct TrainArgs {
  std::string dataset;
  std::string out;
  std::uint64_t seed = 0;
  std::size_t epochs = 150;
  std::size_t batch = 32;
  std::string ablate = "none";
  bool crosses = false;
};

void cmd_train(const TrainArgs& a) {
  const cage::Dataset ds = cage::load_dataset(a.dataset);
  cage::ModelConfig cfg;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch;
  cfg.seed = a.seed;
  cfg.crosses.enabled = a.crosses;
  if (a.ablate != "none")
    cfg = cage::config_for_method(cfg, cage::method_from_string(a.ablate));

  std::vector<std::size_t> all(ds.contexts.size());
  std::iota(all.begin(), all.end(), 0);
  const cage::TrainResult tr = cage::train_model(ds, all, cfg);

  fs::create_directories(a.out);
  tr.model.save((fs::path(a.out) / "model.ckpt").string());
  std::string loss_csv = "epoch,loss\n";
  for (std::size_t e = 0; e < tr.epoch_loss.size(); ++e)
    loss_csv += std::to_string(e) + ',' + cage::format_g17(tr.epoch_loss[e]) + '\n';
  write_text_file(fs::path(a.out) / "loss.csv", loss_csv);
  std::cout << "trained on " << ds.contexts.size() << " contexts for " << tr.epoch_loss.size()
            << " epochs; final loss " << cage::format_sig(tr.epoch_loss.back(), 6) << '\n'
            << "checkpoint: " << (fs::path(a.out) / "model.ckpt").string() << '\n';
}

struct EvalArgs {
  std::string dataset;
  std::string out;
  std::uint64_t seed = 0;
  std::string protocol = "context_aware";
  std::size_t reps = 10;
  double train_fraction = 0.7;
  std::string methods = "cage,ft,ca";
  bool ablate = false;
  std::string held_out_class;
  std::size_t epochs = 150;
  std::size_t batch = 32;
  bool crosses = false;
  int jobs = 1;
};

void cmd_eval(const EvalArgs& a) {
  const cage::Dataset ds = cage::load_dataset(a.dataset);
  cage::SplitSpec spec;
  spec.protocol = parse_protocol(a.protocol);
  spec.repetitions = a.reps;
  spec.train_fraction = a.train_fraction;
  spec.seed = a.seed;
  spec.held_out_class = a.held_out_class;

  cage::ModelConfig cfg;
  cfg.epochs = a.epochs;
  cfg.batch_size = a.batch;
  cfg.crosses.enabled = a.crosses;

  std::vector<cage::Method> methods = parse_methods(a.methods);
  if (a.ablate) {
    for (cage::Method m : {cage::Method::kCage, cage::Method::kWithoutDeep,
                           cage::Method::kWithoutWide, cage::Method::kWithoutStates,
                           cage::Method::kWithoutTasks})
      methods.push_back(m);
  }

  const cage::EvalReport report = cage::run_protocol(ds, spec, cfg, methods, a.jobs);

  std::ostringstream csv, text;
  cage::render_report_csv(report, csv);
  cage::render_report_text(report, text);
  fs::create_directories(a.out);
  write_text_file(fs::path(a.out) / "report.csv", csv.str());
  write_text_file(fs::path(a.out) / "report.txt", text.str());
  std::cout << text.str();
}

struct RankArgs {
  std::string dataset;
  std::string model;
  std::string context;
  double threshold = 0.01;
  std::string out;
};

void cmd_rank(const RankArgs& a) {
  const cage::Dataset ds = cage::load_dataset(a.dataset);
  const cage::CageModel model = cage::CageModel::load(a.model);

  auto same = [](const cage::Vocab& x, const cage::Vocab& y) { return x.labels() == y.labels(); };
  const auto& mv = model.vocab();
  if (!same(mv.object_classes, ds.vocab.object_classes) || !same(mv.materials, ds.vocab.materials) ||
      !same(mv.tasks, ds.vocab.tasks) || !same(mv.states, ds.vocab.states) ||
      !same(mv.affordances, ds.vocab.affordances))
    throw cage::Error("model and dataset vocabularies differ");

  const std::size_t ci = ds.context_index_of(a.context);
  const cage::Context& ctx = ds.contexts[ci];
  const cage::FeatureExtractor fx(ds);
  const cage::RankingResult r = cage::rank_and_filter(model, fx, ctx, ds.grasps[ci], a.threshold);

  std::ostringstream os;
  if (r.rejected) {
    os << "REJECTED: no grasp above " << cage::format_sig(a.threshold, 6) << '\n';
  } else {
    os << "# context " << ctx.id << " task " << ctx.task << " state " << ctx.state << " object "
       << ctx.object_id << '\n';
    os << "rank,grasp,score,label\n";
    for (std::size_t k = 0; k < r.ranked.size(); ++k)
      os << k + 1 << ',' << r.ranked[k].grasp_index << ',' << cage::format_g9(r.ranked[k].score)
         << ',' << to_string(ds.grasps[ci][r.ranked[k].grasp_index].label) << '\n';
  }
  std::cout << os.str();
  if (!a.out.empty()) write_text_file(a.out, os.str());
}

struct ReportArgs {
  std::string in;
};

void cmd_report(const ReportArgs& a) {
  std::ifstream is(a.in, std::ios::binary);
  if (!is) throw cage::Error("cannot open '" + a.in + "'");
  const cage::EvalReport report = cage::parse_report_csv(is);
  cage::render_report_text(report, std::cout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"semantic grasp ranking over part-labeled objects"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(cage::kToolTag));

  GenArgs gen;
  auto* cgen = app.add_subcommand("gen", "generate a labeled synthetic dataset");
  cgen->add_option("--out", gen.out, "output dataset path (JSON lines)")->required();
  cgen->add_option("--seed", gen.seed, "generator seed");
  cgen->add_option("--objects-per-class", gen.objects_per_class, "object instances per class");
  cgen->add_option("--grasps", gen.grasps, "grasp candidates per context");
  cgen->add_option("--points-per-part", gen.points_per_part, "scan points per object part");
  cgen->add_option("--rules", gen.rules, "labeling rule table: default | affordance");

  TrainArgs train;
  auto* ctrain = app.add_subcommand("train", "train a model on a full dataset");
  ctrain->add_option("--dataset", train.dataset, "dataset path")->required();
  ctrain->add_option("--out", train.out, "output directory")->required();
  ctrain->add_option("--seed", train.seed, "training seed");
  ctrain->add_option("--epochs", train.epochs, "training epochs");
  ctrain->add_option("--batch", train.batch, "minibatch size (0 = full batch)");
  ctrain->add_option("--ablate", train.ablate,
                     "none | without-deep | without-wide | without-states | without-tasks");
  ctrain->add_flag("--crosses", train.crosses, "add crossed sparse feature blocks");

  EvalArgs eval;
  auto* ceval = app.add_subcommand("eval", "run a split protocol and report MAP per method");
  ceval->add_option("--dataset", eval.dataset, "dataset path")->required();
  ceval->add_option("--out", eval.out, "output directory")->required();
  ceval->add_option("--seed", eval.seed, "split/model seed");
  ceval->add_option("--protocol", eval.protocol,
                    "context_aware | instance_generalization | class_generalization");
  ceval->add_option("--reps", eval.reps, "split repetitions");
  ceval->add_option("--train-frac", eval.train_fraction, "train fraction of contexts");
  ceval->add_option("--methods", eval.methods, "comma list: cage,without-deep,without-wide,"
                    "without-states,without-tasks,ft,ca");
  ceval->add_flag("--ablate", eval.ablate, "evaluate all masking ablations");
  ceval->add_option("--held-out-class", eval.held_out_class,
                    "fix the held-out class (class protocol)");
  ceval->add_option("--epochs", eval.epochs, "training epochs");
  ceval->add_option("--batch", eval.batch, "minibatch size (0 = full batch)");
  ceval->add_flag("--crosses", eval.crosses, "add crossed sparse feature blocks");
  ceval->add_option("--jobs", eval.jobs, "parallel trainings (results are identical)");

  RankArgs rank;
  auto* crank = app.add_subcommand("rank", "rank one context's grasps with a trained model");
  crank->add_option("--dataset", rank.dataset, "dataset path")->required();
  crank->add_option("--model", rank.model, "model checkpoint")->required();
  crank->add_option("--context", rank.context, "context id")->required();
  crank->add_option("--threshold", rank.threshold, "rejection threshold on p(suitable)");
  crank->add_option("--out", rank.out, "also write the listing to this file");

  ReportArgs report;
  auto* creport = app.add_subcommand("report", "render a saved report.csv");
  creport->add_option("--in", report.in, "report.csv path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (cgen->parsed()) cmd_gen(gen);
    if (ctrain->parsed()) cmd_train(train);
    if (ceval->parsed()) cmd_eval(eval);
    if (crank->parsed()) cmd_rank(rank);
    if (creport->parsed()) cmd_report(report);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
