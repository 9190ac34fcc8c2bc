#include "lesionkit/augment.hpp"

#include "lesionkit/errors.hpp"
#include "lesionkit/parallel.hpp"

#include <map>

namespace lesionkit {

void AugmentPolicy::validate() const {
  if (!(rotation_max_deg >= 0.0 && rotation_max_deg < 360.0))
    throw ConfigError("augment.rotation_max_deg must lie in [0, 360)");
  if (!(hflip_prob >= 0.0 && hflip_prob <= 1.0))
    throw ConfigError("augment.hflip_prob must lie in [0, 1]");
  if (!(vflip_prob >= 0.0 && vflip_prob <= 1.0))
    throw ConfigError("augment.vflip_prob must lie in [0, 1]");
  if (target_width <= 0 || target_height <= 0)
    throw ConfigError("augment target size must be positive");
}

std::vector<std::filesystem::path> materialize(const Manifest& m,
                                               const std::vector<std::string>& ids,
                                               const AugmentPolicy& policy,
                                               std::uint64_t master_seed, int epoch,
                                               const std::filesystem::path& out_dir,
                                               unsigned threads) {
  policy.validate();
  std::map<std::string, const ImageRecord*> by_id;
  for (const auto& r : m.records) by_id.emplace(r.id, &r);
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> written(ids.size());
  parallel_for(ids.size(), threads, [&](std::size_t i) {
    const auto it = by_id.find(ids[i]);
    if (it == by_id.end()) throw DataError("unknown id " + ids[i]);
    const Image8 img = read_image(std::filesystem::path(m.corpus_root) / it->second->path);
    auto out = apply_pipeline<float>(img, policy, SampleSeed{master_seed, ids[i], epoch},
                                           /*training=*/true);
    written[i] = out_dir / (ids[i] + "_" + std::to_string(epoch) + ".png");
    if (!policy.normalize)
      for (auto& p : out.planes) p /= 255.0f;
    write_png(written[i], to_image8(out));
  });
  return written;
}

}  // namespace lesionkit
