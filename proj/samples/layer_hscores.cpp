// How much activity information each encoder level keeps, measured by the
// H-score of its latent features.

#include <cstdio>

#include "strata/dataio/synth.hpp"
#include "strata/infometric/hscore.hpp"
#include "strata/scae/scae.hpp"

using namespace strata;

int main() {
  const auto raw = dataio::synthesize(dataio::default_corpus_spec(7));
  const auto ds = dataio::normalize(raw, dataio::fit_normalization(raw));
  scae::ScaeConfig sc;
  sc.seed = 1;
  const auto stack = scae::train_stack(ds, sc);
  for (int layer = 1; layer <= stack.depth(); ++layer) {
    const auto fm = infometric::feature_matrix(scae::extract_all(stack, ds, layer), ds.activity_labels());
    const auto h = infometric::hscore(fm);
    std::printf("z%d: H = %.4f over %d dims (%d constant columns dropped)\n", layer, h.value, h.dims,
                h.dropped_constant_columns);
  }
}
