// Minimal end-to-end walkthrough: make a small synthetic dataset, train a
// scorer on most contexts, then rank the grasps of a held-out context.
#include <cstdio>
#include <numeric>
#include <vector>

#include "cage/eval.hpp"
#include "cage/generator.hpp"

int main() {
  cage::GeneratorConfig gen = cage::GeneratorConfig::defaults();
  gen.objects_per_class = 2;
  gen.grasps_per_context = 12;
  const cage::Dataset ds = cage::generate_synthetic(gen, 7);
  std::printf("dataset: %zu objects, %zu contexts\n", ds.objects.size(), ds.contexts.size());

  // hold out the last context, train on the rest
  std::vector<std::size_t> train_ids(ds.contexts.size() - 1);
  std::iota(train_ids.begin(), train_ids.end(), 0);
  cage::ModelConfig cfg;
  cfg.epochs = 40;
  cfg.seed = 1;
  const cage::TrainResult tr = cage::train_model(ds, train_ids, cfg);
  std::printf("trained %zu epochs, loss %.4f -> %.4f\n", tr.epoch_loss.size(),
              tr.epoch_loss.front(), tr.epoch_loss.back());

  const std::size_t held_out = ds.contexts.size() - 1;
  const cage::Context& ctx = ds.contexts[held_out];
  const cage::FeatureExtractor fx(ds);
  const auto result = cage::rank_and_filter(tr.model, fx, ctx, ds.grasps[held_out], 0.01);

  std::printf("\ncontext %s: task %s, state %s, object %s\n", ctx.id.c_str(), ctx.task.c_str(),
              ctx.state.c_str(), ctx.object_id.c_str());
  if (result.rejected) {
    std::printf("REJECTED: no grasp above %g\n", result.threshold);
    return 0;
  }
  std::printf("%4s %6s %10s  %s\n", "rank", "grasp", "p(suit)", "label");
  for (std::size_t k = 0; k < result.ranked.size(); ++k) {
    const auto& r = result.ranked[k];
    std::printf("%4zu %6zu %10.4f  %s\n", k + 1, r.grasp_index, r.score,
                to_string(ds.grasps[held_out][r.grasp_index].label));
  }
  return 0;
}
