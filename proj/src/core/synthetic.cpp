#include "synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <numbers>

#include "util.hpp"

namespace convprobe {

namespace {

using Rng = std::mt19937_64;

double uni(Rng& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

struct Canvas {
  int size;
  std::vector<double> px;  // (y, x, c)

  explicit Canvas(int s) : size(s), px(static_cast<std::size_t>(s) * s * 3, 0.0) {}
  double& at(int y, int x, int c) { return px[(static_cast<std::size_t>(y) * size + x) * 3 + c]; }

  Image quantize() const {
    Image img{size, size, std::vector<std::uint8_t>(px.size())};
    for (std::size_t i = 0; i < px.size(); ++i)
      img.rgb[i] = static_cast<std::uint8_t>(std::clamp(std::lround(px[i]), 0L, 255L));
    return img;
  }
};

std::array<double, 3> random_color(Rng& rng, double lo = 40, double hi = 215) {
  return {uni(rng, lo, hi), uni(rng, lo, hi), uni(rng, lo, hi)};
}

void fill(Canvas& cv, const std::array<double, 3>& color) {
  for (int y = 0; y < cv.size; ++y)
    for (int x = 0; x < cv.size; ++x)
      for (int c = 0; c < 3; ++c) cv.at(y, x, c) = color[c];
}

// Linear ramp between two colors along a random direction, blended in with weight amp.
void linear_gradient(Canvas& cv, Rng& rng, double amp, double theta) {
  const auto a = random_color(rng), b = random_color(rng);
  const double dx = std::cos(theta), dy = std::sin(theta);
  const double half = (cv.size - 1) / 2.0;
  const double span = half * (std::abs(dx) + std::abs(dy));
  for (int y = 0; y < cv.size; ++y)
    for (int x = 0; x < cv.size; ++x) {
      const double t = 0.5 + 0.5 * ((x - half) * dx + (y - half) * dy) / span;
      for (int c = 0; c < 3; ++c) cv.at(y, x, c) += amp * (a[c] + (b[c] - a[c]) * t - cv.at(y, x, c));
    }
}

void radial_gradient(Canvas& cv, Rng& rng, double amp) {
  const auto a = random_color(rng), b = random_color(rng);
  const double cx = uni(rng, 0, cv.size), cy = uni(rng, 0, cv.size);
  const double reach = cv.size * 1.2;
  for (int y = 0; y < cv.size; ++y)
    for (int x = 0; x < cv.size; ++x) {
      const double t = std::min(1.0, std::hypot(x - cx, y - cy) / reach);
      for (int c = 0; c < 3; ++c) cv.at(y, x, c) += amp * (a[c] + (b[c] - a[c]) * t - cv.at(y, x, c));
    }
}

struct Texture {
  double freq;    // cycles per pixel
  double orient;  // radians
  double phase;
  double value(double x, double y) const {
    return 0.5 + 0.5 * std::sin(2 * std::numbers::pi * freq * (x * std::cos(orient) + y * std::sin(orient)) + phase);
  }
};

Texture random_texture(Rng& rng, double fmin = 0.12, double fmax = 0.3) {
  return {uni(rng, fmin, fmax), uni(rng, 0, std::numbers::pi), uni(rng, 0, 2 * std::numbers::pi)};
}

// Soft disc of radius r filled with a texture that swings between two colors.
void textured_blob(Canvas& cv, Rng& rng, double amp, double r, bool textured) {
  const double cx = uni(rng, r * 0.5, cv.size - r * 0.5), cy = uni(rng, r * 0.5, cv.size - r * 0.5);
  const auto lo = random_color(rng, 0, 120), hi = random_color(rng, 135, 255);
  const Texture tex = random_texture(rng);
  for (int y = 0; y < cv.size; ++y)
    for (int x = 0; x < cv.size; ++x) {
      const double d = std::hypot(x - cx, y - cy);
      const double w = amp / (1 + std::exp((d - r) * 1.5));
      if (w < 1e-4) continue;
      const double t = textured ? tex.value(x, y) : 0.5;
      for (int c = 0; c < 3; ++c) cv.at(y, x, c) += w * (lo[c] + (hi[c] - lo[c]) * t - cv.at(y, x, c));
    }
}

void global_texture(Canvas& cv, Rng& rng, double amp, double fmin, double fmax) {
  const Texture tex = random_texture(rng, fmin, fmax);
  for (int y = 0; y < cv.size; ++y)
    for (int x = 0; x < cv.size; ++x) {
      const double v = (tex.value(x, y) - 0.5) * 2 * amp;
      for (int c = 0; c < 3; ++c) cv.at(y, x, c) += v;
    }
}

void checker(Canvas& cv, Rng& rng, double amp) {
  const int cell = static_cast<int>(uni(rng, 4, 10));
  const int ox = static_cast<int>(uni(rng, 0, cell)), oy = static_cast<int>(uni(rng, 0, cell));
  for (int y = 0; y < cv.size; ++y)
    for (int x = 0; x < cv.size; ++x) {
      const double v = (((x + ox) / cell + (y + oy) / cell) % 2 ? 1.0 : -1.0) * amp;
      for (int c = 0; c < 3; ++c) cv.at(y, x, c) += v;
    }
}

void rings(Canvas& cv, Rng& rng, double amp) {
  const double cx = uni(rng, 0, cv.size), cy = uni(rng, 0, cv.size);
  const double f = uni(rng, 0.1, 0.25);
  for (int y = 0; y < cv.size; ++y)
    for (int x = 0; x < cv.size; ++x) {
      const double v = std::sin(2 * std::numbers::pi * f * std::hypot(x - cx, y - cy)) * amp;
      for (int c = 0; c < 3; ++c) cv.at(y, x, c) += v;
    }
}

void squares(Canvas& cv, Rng& rng, int count) {
  for (int i = 0; i < count; ++i) {
    const int side = static_cast<int>(uni(rng, cv.size * 0.15, cv.size * 0.35));
    const int x0 = static_cast<int>(uni(rng, 0, cv.size - side)), y0 = static_cast<int>(uni(rng, 0, cv.size - side));
    const auto color = random_color(rng, 0, 255);
    for (int y = y0; y < y0 + side; ++y)
      for (int x = x0; x < x0 + side; ++x)
        for (int c = 0; c < 3; ++c) cv.at(y, x, c) = color[c];
  }
}

void noise(Canvas& cv, Rng& rng, double sigma) {
  std::normal_distribution<double> n(0.0, sigma);
  for (double& v : cv.px) v += n(rng);
}

}  // namespace

Image render_binary(int label, int size, std::mt19937_64& rng, double contrast) {
  Canvas cv(size);
  fill(cv, random_color(rng));
  linear_gradient(cv, rng, uni(rng, 0.3, 0.9), uni(rng, 0, 2 * std::numbers::pi));
  global_texture(cv, rng, uni(rng, 0, 18), 0.05, 0.3);
  if (label == 1) {
    const int blobs = static_cast<int>(uni(rng, 1, 4));
    for (int i = 0; i < blobs; ++i) textured_blob(cv, rng, contrast * uni(rng, 0.35, 0.8), uni(rng, 5, 12), true);
  } else {
    if (uni(rng, 0, 1) < 0.5) radial_gradient(cv, rng, uni(rng, 0.2, 0.6));
    const int blobs = static_cast<int>(uni(rng, 0, 3));
    for (int i = 0; i < blobs; ++i) textured_blob(cv, rng, contrast * uni(rng, 0.35, 0.8), uni(rng, 5, 12), false);
  }
  noise(cv, rng, 14);
  return cv.quantize();
}

Image render_pretext(int cls, int size, std::mt19937_64& rng) {
  require(cls >= 0 && cls < kPretextClasses, ErrorCode::kInvalidArgument, "pretext class out of range");
  Canvas cv(size);
  fill(cv, random_color(rng));
  const double pi = std::numbers::pi;
  switch (cls) {
    case 0:  // textured blobs on a flat field
      for (int i = 0, n = static_cast<int>(uni(rng, 1, 4)); i < n; ++i)
        textured_blob(cv, rng, uni(rng, 0.6, 1.0), uni(rng, 5, 12), true);
      break;
    case 1:  // flat blobs
      for (int i = 0, n = static_cast<int>(uni(rng, 1, 4)); i < n; ++i)
        textured_blob(cv, rng, uni(rng, 0.6, 1.0), uni(rng, 5, 12), false);
      break;
    case 2:  // near-horizontal ramp
      linear_gradient(cv, rng, 1.0, uni(rng, -pi / 6, pi / 6) + (uni(rng, 0, 1) < 0.5 ? 0 : pi));
      break;
    case 3:  // near-vertical ramp
      linear_gradient(cv, rng, 1.0, pi / 2 + uni(rng, -pi / 6, pi / 6) + (uni(rng, 0, 1) < 0.5 ? 0 : pi));
      break;
    case 4:
      radial_gradient(cv, rng, 1.0);
      break;
    case 5:  // fine stripes
      global_texture(cv, rng, uni(rng, 30, 60), 0.15, 0.3);
      break;
    case 6:
      checker(cv, rng, uni(rng, 25, 50));
      break;
    case 7:
      rings(cv, rng, uni(rng, 25, 50));
      break;
    case 8:  // textured blobs over a ramp
      linear_gradient(cv, rng, uni(rng, 0.5, 1.0), uni(rng, 0, 2 * pi));
      for (int i = 0, n = static_cast<int>(uni(rng, 1, 4)); i < n; ++i)
        textured_blob(cv, rng, uni(rng, 0.5, 0.9), uni(rng, 5, 12), true);
      break;
    case 9:
      squares(cv, rng, static_cast<int>(uni(rng, 2, 5)));
      break;
  }
  noise(cv, rng, 14);
  return cv.quantize();
}

namespace {

SyntheticSet make_set(int count, int classes, std::uint64_t seed,
                      const std::function<Image(int, std::mt19937_64&)>& render) {
  require(count >= classes, ErrorCode::kInvalidArgument, "synthetic set needs at least one image per class");
  std::vector<int> labels(count);
  for (int i = 0; i < count; ++i) labels[i] = i % classes;
  std::mt19937_64 order(mix_seed(seed, "order"));
  std::shuffle(labels.begin(), labels.end(), order);
  SyntheticSet set;
  for (int i = 0; i < count; ++i) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    set.images.push_back(image_to_tensor(render(labels[i], rng)));
    set.labels.push_back(labels[i]);
  }
  return set;
}

}  // namespace

SyntheticSet make_binary_set(int count, int size, std::uint64_t seed, double contrast) {
  return make_set(count, 2, seed, [&](int label, std::mt19937_64& rng) {
    return render_binary(label, size, rng, contrast);
  });
}

SyntheticSet make_pretext_set(int count, int size, std::uint64_t seed) {
  return make_set(count, kPretextClasses, mix_seed(seed, "pretext"), [&](int cls, std::mt19937_64& rng) {
    return render_pretext(cls, size, rng);
  });
}

std::string write_binary_dataset(const std::string& dir, int count, int size, std::uint64_t seed, double contrast,
                                 int positives) {
  require(count >= 2, ErrorCode::kInvalidArgument, "dataset needs at least two images");
  if (positives < 0) positives = count / 2;
  require(positives >= 1 && positives < count, ErrorCode::kInvalidArgument, "both classes need at least one image");
  std::vector<int> labels(count, 0);
  std::fill(labels.begin(), labels.begin() + positives, 1);
  std::mt19937_64 order(mix_seed(seed, "order"));
  std::shuffle(labels.begin(), labels.end(), order);

  const std::filesystem::path root(dir);
  std::filesystem::create_directories(root / "images");
  DatasetManifest m;
  for (int i = 0; i < count; ++i) {
    std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    char name[32];
    std::snprintf(name, sizeof name, "img_%05d.ppm", i);
    const std::string path = (root / "images" / name).string();
    write_ppm(render_binary(labels[i], size, rng, contrast), path);
    m.records.push_back({path, labels[i], -1});
  }
  const std::string manifest = (root / "manifest.csv").string();
  write_manifest(m, manifest, false);
  return manifest;
}

}  // namespace convprobe
