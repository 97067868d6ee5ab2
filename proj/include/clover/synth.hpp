#pragma once

#include <cstdint>

#include "clover/data.hpp"

namespace clover {

struct SynthConfig {
  int n_users = 1000;
  int n_items = 500;
  int ratings_per_user = 30;
  int n_rating_levels = 5;
  double bias_strength = 0.75;  // in [0, 1]
  int latent_dim = 8;
  uint64_t seed = 7;

  void validate() const;
};

// ML-100K-shaped dataset with a planted binary attribute. The attribute
// shifts ratings along a fixed item direction (strength bias_strength) and
// item genres mirror the latent sign pattern, so both the rating stream and
// the item features carry attribute-correlated signal. bias_strength = 0
// makes ratings independent of the attribute by construction.
RawDataset generate_synthetic(const SynthConfig& cfg);

}  // namespace clover
