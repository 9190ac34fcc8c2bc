#pragma once

#include "lesionkit/catalog.hpp"
#include "lesionkit/image.hpp"
#include "lesionkit/transform.hpp"

#include <bit>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace lesionkit {

struct PerceptualHash {
  std::uint64_t bits = 0;
  auto operator<=>(const PerceptualHash&) const = default;
};

inline constexpr int kHashColumns = 9;
inline constexpr int kHashRows = 8;

/// Difference hash.
///
/// The raster is converted to luma (0.299/0.587/0.114), bilinearly resampled
/// to 9 columns x 8 rows, and each row contributes 8 bits, one per adjacent
/// pair, set when the left pixel is strictly brighter than its right
/// neighbour. Rows are emitted top to bottom and the top-left comparison is
/// the most significant bit.
template <typename In>
PerceptualHash compute_dhash(const Raster<In>& image) {
  const Plane<double> small = resize_bilinear(to_luma<double>(image), kHashColumns, kHashRows);
  std::uint64_t bits = 0;
  for (Eigen::Index y = 0; y < kHashRows; ++y)
    for (Eigen::Index x = 0; x + 1 < kHashColumns; ++x)
      bits = (bits << 1) | (small(y, x) > small(y, x + 1) ? 1u : 0u);
  return {bits};
}

/// Decode then hash. Throws BadImageError for undecodable input.
PerceptualHash compute_dhash_file(const std::filesystem::path& path);

constexpr int hamming_distance(PerceptualHash a, PerceptualHash b) noexcept {
  return std::popcount(a.bits ^ b.bits);
}

/// Fill in the hash of every record from its file under m.corpus_root.
void hash_manifest(Manifest& m, unsigned threads = 0);

struct RemovedPair {
  std::string duplicate_id;
  std::string retained_id;
};

struct DedupResult {
  Manifest kept;
  std::vector<RemovedPair> removed;
};

/// Greedy first-wins pass in manifest order: a record is dropped when its
/// hash is within `threshold` bits of some record already kept. Every record
/// must carry a hash.
DedupResult deduplicate(const Manifest& m, int threshold = 0);

void write_removed_report(std::ostream& out, const std::vector<RemovedPair>& removed);
std::vector<RemovedPair> read_removed_report(std::istream& in);

}  // namespace lesionkit
