// Smallest end-to-end run: synthesize a corpus, train the encoder stack and
// a short diffusion model, then regenerate one window at every granularity.

#include <cstdio>

#include "strata/dataio/synth.hpp"
#include "strata/diffusion/model.hpp"
#include "strata/pipeline/reconstruct.hpp"
#include "strata/scae/scae.hpp"

using namespace strata;

int main() {
  auto spec = dataio::default_corpus_spec(7);
  spec.n_subjects = 6;
  const auto raw = dataio::synthesize(spec);
  const auto ds = dataio::normalize(raw, dataio::fit_normalization(raw));
  std::printf("corpus: %zu windows of %d x %d\n", ds.size(), ds.window_length(), ds.channels());

  scae::ScaeConfig sc;
  sc.seed = 1;
  const auto stack = scae::train_stack(ds, sc);

  diffusion::DiffusionConfig dc;
  dc.epochs = 5;
  dc.seed = 2;
  const auto dm = diffusion::train(ds, stack, dc, [](int e, double loss) { std::printf("epoch %d loss %.4f\n", e + 1, loss); });

  const auto& w = ds.windows.front();
  for (int level = 0; level <= stack.depth(); ++level) {
    pipeline::GranularityRequest req;
    req.level = level;
    req.sampler.seed = 3;
    const auto r = pipeline::reconstruct(w, req, dm, stack);
    std::printf("granularity %d: rms difference to source %.3f\n", level,
                std::sqrt((r.samples - w.samples).squaredNorm() / static_cast<double>(w.samples.size())));
  }
}
