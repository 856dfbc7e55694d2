#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "discnet/study.hpp"

namespace discnet {

// Sampled transform parameters for one augmentation application.
struct AugmentSpec {
  double rotation_deg = 0.0;                 // [-10, 10]
  bool hflip = false;
  double translate_x = 0.0;                  // [-0.1, 0.1], fraction of width
  double translate_y = 0.0;                  // [-0.1, 0.1], fraction of height
  double scale_factor = 1.0;                 // [0.8, 1.0]
  std::optional<double> noise_sigma;         // [0.01, 0.05]
  uint64_t rng_seed = 0;
};

// Uniform draws from each interval, hflip with probability 0.5.
// Deterministic per seed.
AugmentSpec sample_spec(uint64_t rng_seed);
AugmentSpec identity_spec();

// Fixed composition flip -> scale -> rotate -> translate, center-anchored,
// bilinear resampling, zero fill outside, output clamped to [0,1].
// Output dimensions equal input dimensions.
GrayImage apply_geometric(const GrayImage& img, const AugmentSpec& spec);

// I.i.d. zero-mean Gaussian noise per pixel, clamped to [0,1].
GrayImage add_gaussian_noise(const GrayImage& img, double sigma, uint64_t seed);

// Full per-image application: geometry then noise (when present).
GrayImage apply_augmentation(const GrayImage& img, const AugmentSpec& spec,
                             uint64_t noise_seed);

// Expands each study into the original plus (multiplier-1) augmented copies.
// One AugmentSpec per copy is applied to all three modality images, so the
// anatomical correspondence across channels survives. Copy specs derive
// from (seed, copy index), so the result is identical for any worker count.
std::vector<PatientStudy> augment_dataset(const std::vector<PatientStudy>& studies,
                                          int multiplier, uint64_t seed,
                                          int workers = 1);

// splitmix64; used to derive per-sample sub-seeds.
uint64_t mix_seed(uint64_t seed, uint64_t index);

}  // namespace discnet
