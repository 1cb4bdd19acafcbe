// Counts steps on a continuous synthetic walk, raw and after Laplace noise.

#include <cstdio>

#include "strata/dataio/synth.hpp"
#include "strata/eval/pedometer.hpp"
#include "strata/eval/privacy.hpp"

using namespace strata;

int main() {
  const auto spec = dataio::default_corpus_spec(7);
  const auto walk = dataio::synthesize_walk(spec, 0, 600, 0, 11);
  std::printf("true steps %d, counted %d\n", walk.true_steps, eval::count_steps(walk.windows));
  for (double scale : eval::default_laplace_scales()) {
    const auto noisy = eval::laplace_baseline(walk.windows, {scale}, 5).front();
    std::printf("laplace %.1f x std: counted %d\n", scale, eval::count_steps(noisy));
  }
}
