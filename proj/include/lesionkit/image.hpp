#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace lesionkit {

/// One image channel, rows = image height, cols = image width.
template <typename Scalar>
using Plane = Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Planar raster: one plane (gray) or three (RGB), all of equal size.
template <typename Scalar>
struct Raster {
  std::vector<Plane<Scalar>> planes;

  Raster() = default;
  Raster(Eigen::Index width, Eigen::Index height, std::size_t channels)
      : planes(channels, Plane<Scalar>::Zero(height, width)) {}

  Eigen::Index width() const { return planes.empty() ? 0 : planes.front().cols(); }
  Eigen::Index height() const { return planes.empty() ? 0 : planes.front().rows(); }
  std::size_t channels() const { return planes.size(); }

  bool operator==(const Raster& other) const {
    if (planes.size() != other.planes.size()) return false;
    for (std::size_t c = 0; c < planes.size(); ++c) {
      if (planes[c].rows() != other.planes[c].rows() ||
          planes[c].cols() != other.planes[c].cols() ||
          (planes[c] != other.planes[c]).any())
        return false;
    }
    return true;
  }
};

using Image8 = Raster<std::uint8_t>;

template <typename To, typename From>
Raster<To> cast(const Raster<From>& in) {
  Raster<To> out;
  out.planes.reserve(in.planes.size());
  for (const auto& p : in.planes) out.planes.push_back(p.template cast<To>());
  return out;
}

/// Luma (0.299, 0.587, 0.114). Gray rasters pass through unchanged.
template <typename Scalar, typename In>
Plane<Scalar> to_luma(const Raster<In>& in) {
  if (in.channels() < 3) return in.planes.front().template cast<Scalar>();
  return Scalar(0.299) * in.planes[0].template cast<Scalar>() +
         Scalar(0.587) * in.planes[1].template cast<Scalar>() +
         Scalar(0.114) * in.planes[2].template cast<Scalar>();
}

/// Decode PNG or JPEG bytes into 8-bit gray or RGB. Alpha is dropped.
/// Throws BadImageError on anything else.
Image8 decode_image(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);

Image8 read_image(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const Image8& image);

void write_png(const std::filesystem::path& path, const Image8& image);

/// Baseline JPEG encoder, mainly for building test corpora.
std::vector<std::uint8_t> encode_jpeg(const Image8& image, int quality = 90);

/// Map [0,1] samples to 8-bit with rounding; out-of-range values are clamped.
template <typename Scalar>
Image8 to_image8(const Raster<Scalar>& in) {
  Image8 out;
  for (const auto& p : in.planes) {
    out.planes.push_back(
        (p.cwiseMax(Scalar(0)).cwiseMin(Scalar(1)) * Scalar(255) + Scalar(0.5))
            .floor()
            .template cast<std::uint8_t>());
  }
  return out;
}

}  // namespace lesionkit
