#pragma once

#include "lesionkit/image.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace lesionkit {

/// a + t (b - a): exact when a == b, so flat regions stay flat.
template <typename T>
double lerp(T a, T b, double t) {
  const auto da = static_cast<double>(a);
  return da + t * (static_cast<double>(b) - da);
}

/// Bilinear resample with half-pixel centres; source coordinates are
/// clamped to the edge. Identity when the size is unchanged.
template <typename Scalar>
Plane<Scalar> resize_bilinear(const Plane<Scalar>& in, Eigen::Index out_w, Eigen::Index out_h) {
  const Eigen::Index in_w = in.cols(), in_h = in.rows();
  Plane<Scalar> out(out_h, out_w);
  const double sx = static_cast<double>(in_w) / static_cast<double>(out_w);
  const double sy = static_cast<double>(in_h) / static_cast<double>(out_h);
  for (Eigen::Index y = 0; y < out_h; ++y) {
    const double fy_src = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(in_h - 1));
    const auto y0 = static_cast<Eigen::Index>(std::floor(fy_src));
    const Eigen::Index y1 = std::min(y0 + 1, in_h - 1);
    const double fy = fy_src - static_cast<double>(y0);
    for (Eigen::Index x = 0; x < out_w; ++x) {
      const double fx_src = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(in_w - 1));
      const auto x0 = static_cast<Eigen::Index>(std::floor(fx_src));
      const Eigen::Index x1 = std::min(x0 + 1, in_w - 1);
      const double fx = fx_src - static_cast<double>(x0);
      const double top = lerp(in(y0, x0), in(y0, x1), fx);
      const double bottom = lerp(in(y1, x0), in(y1, x1), fx);
      out(y, x) = static_cast<Scalar>(top + fy * (bottom - top));
    }
  }
  return out;
}

template <typename Scalar>
Raster<Scalar> resize_bilinear(const Raster<Scalar>& in, Eigen::Index out_w, Eigen::Index out_h) {
  Raster<Scalar> out;
  for (const auto& p : in.planes) out.planes.push_back(resize_bilinear(p, out_w, out_h));
  return out;
}

template <typename Scalar>
Raster<Scalar> flip_horizontal(const Raster<Scalar>& in) {
  Raster<Scalar> out;
  for (const auto& p : in.planes) out.planes.push_back(p.rowwise().reverse());
  return out;
}

template <typename Scalar>
Raster<Scalar> flip_vertical(const Raster<Scalar>& in) {
  Raster<Scalar> out;
  for (const auto& p : in.planes) out.planes.push_back(p.colwise().reverse());
  return out;
}

/// Half-sample symmetric reflection of an index into [0, n): dcba|abcd|dcba.
inline Eigen::Index reflect_index(Eigen::Index i, Eigen::Index n) {
  const Eigen::Index period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

/// Rotate counter-clockwise by `degrees` about the image centre, bilinear
/// sampling with reflected borders. Output keeps the input size.
template <typename Scalar>
Raster<Scalar> rotate(const Raster<Scalar>& in, double degrees) {
  const Eigen::Index w = in.width(), h = in.height();
  const double rad = degrees * std::numbers::pi / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  const double cx = 0.5 * static_cast<double>(w - 1), cy = 0.5 * static_cast<double>(h - 1);
  Raster<Scalar> out(w, h, in.channels());
  for (Eigen::Index y = 0; y < h; ++y) {
    for (Eigen::Index x = 0; x < w; ++x) {
      // Inverse map: output pixel back into the source frame (y axis points down).
      const double dx = static_cast<double>(x) - cx, dy = static_cast<double>(y) - cy;
      const double src_x = c * dx - s * dy + cx;
      const double src_y = s * dx + c * dy + cy;
      const double fx0 = std::floor(src_x), fy0 = std::floor(src_y);
      const double fx = src_x - fx0, fy = src_y - fy0;
      const auto ix = static_cast<Eigen::Index>(fx0), iy = static_cast<Eigen::Index>(fy0);
      const Eigen::Index x0 = reflect_index(ix, w), x1 = reflect_index(ix + 1, w);
      const Eigen::Index y0 = reflect_index(iy, h), y1 = reflect_index(iy + 1, h);
      for (std::size_t ch = 0; ch < in.channels(); ++ch) {
        const auto& p = in.planes[ch];
        const double top = lerp(p(y0, x0), p(y0, x1), fx);
        const double bottom = lerp(p(y1, x0), p(y1, x1), fx);
        out.planes[ch](y, x) = static_cast<Scalar>(top + fy * (bottom - top));
      }
    }
  }
  return out;
}

}  // namespace lesionkit
