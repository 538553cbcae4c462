// Default ten-task stream, full model versus the vanilla ablation, one seed.

#include <cstdio>

#include "macvqa/harness.hpp"

int main() {
  using namespace macvqa;
  const auto stream = datagen::generate_stream(datagen::StreamConfig{});
  const TrainConfig tc;
  for (bool modules : {true, false}) {
    ModelConfig mc;
    mc.enable_gonf = modules;
    mc.enable_ama = modules;
    const auto r = run_seed(mc, tc, stream, 1);
    std::printf("%-8s AP %.3f  AF %.3f  novel AP %.3f\n", modules ? "full" : "vanilla", r.ap, r.af.value_or(0.0),
                r.ap_novel.value_or(0.0));
    std::printf("  final row:");
    for (std::size_t j = 0; j < stream.tasks.size(); ++j) std::printf(" %.2f", *r.standard.at(stream.tasks.size() - 1, j));
    std::printf("\n");
  }
}
