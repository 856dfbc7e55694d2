#include "discnet/augment.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <thread>

namespace discnet {

uint64_t mix_seed(uint64_t seed, uint64_t index) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

AugmentSpec sample_spec(uint64_t rng_seed) {
  std::mt19937_64 rng(rng_seed);
  std::uniform_real_distribution<double> rot(-10.0, 10.0);
  std::uniform_real_distribution<double> trans(-0.1, 0.1);
  std::uniform_real_distribution<double> scale(0.8, 1.0);
  std::uniform_real_distribution<double> sigma(0.01, 0.05);
  std::uniform_int_distribution<int> coin(0, 1);

  AugmentSpec s;
  s.rotation_deg = rot(rng);
  s.hflip = coin(rng) == 1;
  s.translate_x = trans(rng);
  s.translate_y = trans(rng);
  s.scale_factor = scale(rng);
  s.noise_sigma = sigma(rng);
  s.rng_seed = rng_seed;
  return s;
}

AugmentSpec identity_spec() { return AugmentSpec{}; }

GrayImage apply_geometric(const GrayImage& img, const AugmentSpec& spec) {
  if (img.height < 1 || img.width < 1) {
    throw std::invalid_argument("apply_geometric: empty image");
  }
  const int64_t H = img.height, W = img.width;
  const double cx = static_cast<double>(W - 1) / 2.0;
  const double cy = static_cast<double>(H - 1) / 2.0;
  const double theta = spec.rotation_deg * std::acos(-1.0) / 180.0;
  const double c = std::cos(theta), s = std::sin(theta);
  const double shift_x = spec.translate_x * static_cast<double>(W);
  const double shift_y = spec.translate_y * static_cast<double>(H);

  GrayImage out;
  out.height = H;
  out.width = W;
  out.pixels.assign(static_cast<size_t>(H * W), 0.0);

  for (int64_t y = 0; y < H; ++y) {
    for (int64_t x = 0; x < W; ++x) {
      // Invert the forward chain flip -> scale -> rotate -> translate.
      double u = static_cast<double>(x) - cx - shift_x;
      double v = static_cast<double>(y) - cy - shift_y;
      double u2 = c * u + s * v;    // undo rotation
      double v2 = -s * u + c * v;
      u2 /= spec.scale_factor;      // undo content scaling
      v2 /= spec.scale_factor;
      double sx = u2 + cx;
      double sy = v2 + cy;
      if (spec.hflip) sx = static_cast<double>(W - 1) - sx;

      const double fx0 = std::floor(sx), fy0 = std::floor(sy);
      const int64_t x0 = static_cast<int64_t>(fx0), y0 = static_cast<int64_t>(fy0);
      const double wx = sx - fx0, wy = sy - fy0;

      auto sample = [&](int64_t yy, int64_t xx) {
        return (yy < 0 || yy >= H || xx < 0 || xx >= W) ? 0.0 : img.at(yy, xx);
      };
      double val = (1.0 - wy) * ((1.0 - wx) * sample(y0, x0) + wx * sample(y0, x0 + 1)) +
                   wy * ((1.0 - wx) * sample(y0 + 1, x0) + wx * sample(y0 + 1, x0 + 1));
      out.at(y, x) = std::clamp(val, 0.0, 1.0);
    }
  }
  return out;
}

GrayImage add_gaussian_noise(const GrayImage& img, double sigma, uint64_t seed) {
  if (sigma < 0.01 || sigma > 0.05) {
    throw std::invalid_argument("add_gaussian_noise: sigma outside [0.01, 0.05]");
  }
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  GrayImage out = img;
  for (auto& p : out.pixels) p = std::clamp(p + noise(rng), 0.0, 1.0);
  return out;
}

GrayImage apply_augmentation(const GrayImage& img, const AugmentSpec& spec,
                             uint64_t noise_seed) {
  GrayImage out = apply_geometric(img, spec);
  if (spec.noise_sigma) out = add_gaussian_noise(out, *spec.noise_sigma, noise_seed);
  return out;
}

std::vector<PatientStudy> augment_dataset(const std::vector<PatientStudy>& studies,
                                          int multiplier, uint64_t seed, int workers) {
  if (multiplier < 1) throw std::invalid_argument("augment_dataset: multiplier must be >= 1");
  if (workers < 1) workers = 1;
  for (const auto& st : studies) {
    if (st.validation_tagged) {
      throw std::invalid_argument("augment_dataset: refusing to augment validation study '" +
                                  st.patient_id + "'");
    }
  }

  const size_t copies = static_cast<size_t>(multiplier - 1);
  std::vector<PatientStudy> out(studies.size() * static_cast<size_t>(multiplier));

  auto emit_study = [&](size_t i) {
    out[i * static_cast<size_t>(multiplier)] = studies[i];
    for (size_t k = 0; k < copies; ++k) {
      const uint64_t copy_index = static_cast<uint64_t>(i * copies + k);
      const AugmentSpec spec = sample_spec(mix_seed(seed, copy_index));
      PatientStudy aug = studies[i];  // label, marker, age carried unchanged
      aug.t1_sag = apply_augmentation(studies[i].t1_sag, spec, mix_seed(spec.rng_seed, 1));
      aug.t2_sag = apply_augmentation(studies[i].t2_sag, spec, mix_seed(spec.rng_seed, 2));
      aug.t2_ax = apply_augmentation(studies[i].t2_ax, spec, mix_seed(spec.rng_seed, 3));
      out[i * static_cast<size_t>(multiplier) + 1 + k] = std::move(aug);
    }
  };

  if (workers == 1) {
    for (size_t i = 0; i < studies.size(); ++i) emit_study(i);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (size_t i = static_cast<size_t>(w); i < studies.size(); i += static_cast<size_t>(workers)) {
          emit_study(i);
        }
      });
    }
    for (auto& t : pool) t.join();
  }
  return out;
}

}  // namespace discnet
