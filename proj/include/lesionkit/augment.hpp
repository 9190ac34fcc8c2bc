#pragma once

#include "lesionkit/catalog.hpp"
#include "lesionkit/image.hpp"
#include "lesionkit/rng.hpp"
#include "lesionkit/transform.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace lesionkit {

struct AugmentPolicy {
  double rotation_max_deg = 20.0;
  double hflip_prob = 0.5;
  double vflip_prob = 0.5;
  int target_width = 299;
  int target_height = 299;
  bool normalize = true;

  /// Throws ConfigError when a field is out of range.
  void validate() const;
};

/// Identifies the random stream of one sample in one epoch. The stream does
/// not depend on worker count or visiting order.
struct SampleSeed {
  std::uint64_t master_seed = 0;
  std::string record_id;
  int epoch = 0;

  std::uint64_t stream_seed() const {
    return derive_seed(derive_seed(master_seed, record_id), static_cast<std::uint64_t>(epoch));
  }
};

struct AugmentDraw {
  double angle_deg = 0.0;
  bool hflip = false;
  bool vflip = false;
};

/// Draws, in order: angle ~ U[0, rotation_max_deg], hflip, vflip.
inline AugmentDraw draw_augmentation(const AugmentPolicy& policy, const SampleSeed& seed) {
  Random rng(seed.stream_seed());
  AugmentDraw d;
  d.angle_deg = rng.uniform(0.0, policy.rotation_max_deg);
  d.hflip = rng.bernoulli(policy.hflip_prob);
  d.vflip = rng.bernoulli(policy.vflip_prob);
  return d;
}

/// Integer samples of a `bit_depth` image mapped onto [0, 1].
template <typename Scalar, typename In>
Raster<Scalar> normalize(const Raster<In>& in, int bit_depth = 8) {
  const Scalar max_value = static_cast<Scalar>((std::uint64_t{1} << bit_depth) - 1);
  Raster<Scalar> out;
  for (const auto& p : in.planes) out.planes.push_back(p.template cast<Scalar>() / max_value);
  return out;
}

/// Training: normalize, rotate, flip, resize. Evaluation: normalize, resize.
template <typename Scalar, typename In>
Raster<Scalar> apply_pipeline(const Raster<In>& image, const AugmentPolicy& policy,
                              const SampleSeed& seed, bool training) {
  Raster<Scalar> x = policy.normalize ? normalize<Scalar>(image) : cast<Scalar>(image);
  if (training) {
    const AugmentDraw d = draw_augmentation(policy, seed);
    if (d.angle_deg != 0.0) x = rotate(x, d.angle_deg);
    if (d.hflip) x = flip_horizontal(x);
    if (d.vflip) x = flip_vertical(x);
  }
  return resize_bilinear(x, policy.target_width, policy.target_height);
}

/// Write the training-mode augmentation of each listed record as
/// {id}_{epoch}.png under out_dir. Returns the written paths.
std::vector<std::filesystem::path> materialize(const Manifest& m,
                                               const std::vector<std::string>& ids,
                                               const AugmentPolicy& policy,
                                               std::uint64_t master_seed, int epoch,
                                               const std::filesystem::path& out_dir,
                                               unsigned threads = 0);

}  // namespace lesionkit
