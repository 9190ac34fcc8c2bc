#include "lesionkit/synthetic.hpp"

#include "lesionkit/image.hpp"
#include "lesionkit/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <stdexcept>

namespace fs = std::filesystem;

namespace lesionkit {

std::vector<std::string> lesion_classes() {
  return {"psoriasis", "dermatitis", "lichen_planus", "pityriasis_rosea", "healthy"};
}

namespace {

struct ClassLook {
  std::array<double, 3> base;   // RGB in [0, 1]
  std::array<double, 3> accent;
  double frequency;             // stripe cycles per image width
  double angle;                 // stripe orientation, radians
};

ClassLook look_for(std::size_t c) {
  static const std::array<ClassLook, 5> looks = {{
      {{0.80, 0.35, 0.35}, {0.95, 0.90, 0.85}, 6.0, 0.0},
      {{0.85, 0.50, 0.30}, {0.60, 0.20, 0.15}, 2.0, 0.8},
      {{0.50, 0.30, 0.55}, {0.80, 0.70, 0.85}, 4.0, 1.6},
      {{0.90, 0.60, 0.55}, {0.70, 0.35, 0.35}, 3.0, 2.4},
      {{0.88, 0.72, 0.60}, {0.80, 0.62, 0.50}, 1.0, 0.3},
  }};
  if (c < looks.size()) return looks[c];
  // Extra classes: spread hues deterministically.
  Random rng(derive_seed(0xc1a55, static_cast<std::uint64_t>(c)));
  return {{rng.unit(), rng.unit(), rng.unit()}, {rng.unit(), rng.unit(), rng.unit()},
          1.0 + 6.0 * rng.unit(), std::numbers::pi * rng.unit()};
}

Image8 textured_image(std::size_t c, int w, int h, Random& rng) {
  const ClassLook look = look_for(c);
  const double phase = 2.0 * std::numbers::pi * rng.unit();
  const double brightness = rng.uniform(-0.08, 0.08);
  const double angle = look.angle + rng.uniform(-0.3, 0.3);
  const double ca = std::cos(angle), sa = std::sin(angle);
  Image8 img(w, h, 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double u = (ca * x + sa * y) / static_cast<double>(w);
      const double t = 0.5 + 0.5 * std::sin(2.0 * std::numbers::pi * look.frequency * u + phase);
      for (int ch = 0; ch < 3; ++ch) {
        const auto k = static_cast<std::size_t>(ch);
        double v = (1.0 - t) * look.base[k] + t * look.accent[k] + brightness;
        v += rng.uniform(-0.12, 0.12);
        img.planes[k](y, x) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      }
    }
  }
  return img;
}

Image8 noise_image(int w, int h, Random& rng) {
  Image8 img(w, h, 1);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img.planes[0](y, x) = static_cast<std::uint8_t>(rng.below(256));
  return img;
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

SyntheticCorpus generate_synthetic_corpus(const fs::path& root, const SyntheticCorpusSpec& spec) {
  if (spec.per_class.size() != spec.classes.size())
    throw std::invalid_argument("per_class must list one count per class");
  SyntheticCorpus out{root, 0, 0};
  std::vector<std::vector<fs::path>> written(spec.classes.size());
  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    const fs::path dir = root / spec.classes[c];
    fs::create_directories(dir);
    for (int i = 0; i < spec.per_class[c]; ++i) {
      Random rng(derive_seed(derive_seed(spec.seed, spec.classes[c]), static_cast<std::uint64_t>(i)));
      const Image8 img = spec.style == SyntheticStyle::noise
                             ? noise_image(spec.width, spec.height, rng)
                             : textured_image(c, spec.width, spec.height, rng);
      char name[32];
      std::snprintf(name, sizeof name, "img_%05d.png", i);
      written[c].push_back(dir / name);
      write_bytes(written[c].back(), encode_png(img));
      ++out.distinct;
    }
  }
  // Round-robin over classes, walking each class's files from the front.
  std::vector<std::size_t> next(spec.classes.size(), 0);
  for (int d = 0, c = 0; d < spec.duplicates; c = (c + 1) % static_cast<int>(spec.classes.size())) {
    auto& files = written[static_cast<std::size_t>(c)];
    auto& i = next[static_cast<std::size_t>(c)];
    if (i >= files.size()) {
      if (std::all_of(next.begin(), next.end(), [&, k = std::size_t{0}](std::size_t v) mutable {
            return v >= written[k++].size();
          }))
        throw std::invalid_argument("more duplicates requested than distinct images");
      continue;
    }
    fs::path copy = files[i];
    copy.replace_filename(files[i].stem().string() + "_dup.png");
    fs::copy_file(files[i], copy, fs::copy_options::overwrite_existing);
    ++i;
    ++d;
    ++out.duplicates;
  }
  return out;
}

}  // namespace lesionkit
