#pragma once

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "salite/io.hpp"
#include "salite/rng.hpp"

namespace salite {

enum class ShapeKind { ellipse, rectangle, triangle };

inline const char* to_string(ShapeKind k) {
  switch (k) {
    case ShapeKind::ellipse: return "ellipse";
    case ShapeKind::rectangle: return "rectangle";
    default: return "triangle";
  }
}

struct SynthSpec {
  std::uint64_t seed = 1;
  int count = 200;
  int size = 224;
  int shapes_min = 1;
  int shapes_max = 3;
  std::vector<ShapeKind> kinds{ShapeKind::ellipse, ShapeKind::rectangle, ShapeKind::triangle};
  int octaves = 4;           // value-noise octaves in the background
  double noise_amp = 0.15;   // peak background noise amplitude
  double contrast_lo = 0.25;  // per-channel offset of a shape from the background mean
  double contrast_hi = 0.6;

  void validate() const {
    if (count < 1) throw std::invalid_argument("SynthSpec: count must be >= 1");
    if (size < 8) throw std::invalid_argument("SynthSpec: size must be >= 8");
    if (shapes_min < 1 || shapes_max < shapes_min) throw std::invalid_argument("SynthSpec: bad shapes-per-image range");
    if (kinds.empty()) throw std::invalid_argument("SynthSpec: no shape kinds");
    if (octaves < 0) throw std::invalid_argument("SynthSpec: octaves must be >= 0");
    if (!(contrast_lo >= 0 && contrast_hi >= contrast_lo && contrast_hi <= 1))
      throw std::invalid_argument("SynthSpec: bad contrast range");
  }
};

inline constexpr double kMinForeground = 0.02;
inline constexpr double kMaxForeground = 0.6;
inline constexpr int kSynthRetries = 16;

struct SynthSample {
  Image8 image;  // P6 raster
  Image8 mask;   // P5, 0 or 255
  int attempts = 1;
};

namespace detail {

/// Sum of octaves of bilinear-smoothstep lattice noise in [-amp, amp].
inline std::vector<double> value_noise(Rng& rng, int size, int octaves, double amp) {
  std::vector<double> out(std::size_t(size) * size, 0.0);
  double a = amp / 2.0, norm = 0.0;
  for (int o = 0; o < octaves; ++o, a *= 0.5) norm += a;
  a = amp / 2.0;
  for (int o = 0; o < octaves; ++o, a *= 0.5) {
    const int cells = 2 << o;
    std::vector<double> lat(std::size_t(cells + 1) * (cells + 1));
    for (auto& v : lat) v = rng.uniform(-1.0, 1.0);
    const double scale = double(cells) / size;
    for (int y = 0; y < size; ++y) {
      const double fy = (y + 0.5) * scale;
      const int iy = std::min(int(fy), cells - 1);
      double ty = fy - iy;
      ty = ty * ty * (3 - 2 * ty);
      for (int x = 0; x < size; ++x) {
        const double fx = (x + 0.5) * scale;
        const int ix = std::min(int(fx), cells - 1);
        double tx = fx - ix;
        tx = tx * tx * (3 - 2 * tx);
        auto L = [&](int r, int c) { return lat[std::size_t(r) * (cells + 1) + c]; };
        const double top = L(iy, ix) * (1 - tx) + L(iy, ix + 1) * tx;
        const double bot = L(iy + 1, ix) * (1 - tx) + L(iy + 1, ix + 1) * tx;
        out[std::size_t(y) * size + x] += a / norm * amp * (top * (1 - ty) + bot * ty);
      }
    }
  }
  return out;
}

struct ShapeGeom {
  ShapeKind kind;
  double cx, cy, a, b, angle;           // ellipse: semi-axes a, b rotated by angle; rectangle: half extents a, b
  std::array<double, 6> tri{};          // triangle vertices
  bool inside(double x, double y) const {
    switch (kind) {
      case ShapeKind::ellipse: {
        const double dx = x - cx, dy = y - cy, c = std::cos(angle), s = std::sin(angle);
        const double u = (c * dx + s * dy) / a, v = (-s * dx + c * dy) / b;
        return u * u + v * v <= 1.0;
      }
      case ShapeKind::rectangle: return std::abs(x - cx) <= a && std::abs(y - cy) <= b;
      default: {
        auto edge = [&](int i, int j) {
          return (tri[2 * j] - tri[2 * i]) * (y - tri[2 * i + 1]) - (tri[2 * j + 1] - tri[2 * i + 1]) * (x - tri[2 * i]);
        };
        const double e0 = edge(0, 1), e1 = edge(1, 2), e2 = edge(2, 0);
        return (e0 >= 0 && e1 >= 0 && e2 >= 0) || (e0 <= 0 && e1 <= 0 && e2 <= 0);
      }
    }
  }
};

inline ShapeGeom draw_shape(Rng& rng, ShapeKind kind, int size) {
  ShapeGeom g{kind, rng.uniform(0.2, 0.8) * size, rng.uniform(0.2, 0.8) * size, 0, 0, 0};
  switch (kind) {
    case ShapeKind::ellipse:
      g.a = rng.uniform(0.08, 0.3) * size;
      g.b = rng.uniform(0.08, 0.3) * size;
      g.angle = rng.uniform(0.0, std::numbers::pi);
      break;
    case ShapeKind::rectangle:
      g.a = rng.uniform(0.07, 0.27) * size;
      g.b = rng.uniform(0.07, 0.27) * size;
      break;
    case ShapeKind::triangle: {
      const double r = rng.uniform(0.12, 0.35) * size, theta = rng.uniform(0.0, 2 * std::numbers::pi);
      for (int k = 0; k < 3; ++k) {
        const double t = theta + k * 2 * std::numbers::pi / 3 + rng.uniform(-0.4, 0.4);
        g.tri[2 * k] = g.cx + r * std::cos(t);
        g.tri[2 * k + 1] = g.cy + r * std::sin(t);
      }
      break;
    }
  }
  return g;
}

}  // namespace detail

/// One image/mask pair from the stream; redraws (up to kSynthRetries) until the foreground fraction is in range.
inline SynthSample synth_sample(const SynthSpec& spec, Rng& rng) {
  const int n = spec.size;
  const std::size_t px = std::size_t(n) * n;
  for (int attempt = 1; attempt <= kSynthRetries; ++attempt) {
    std::array<double, 3> base;
    for (auto& c : base) c = rng.uniform(0.2, 0.8);
    std::array<std::vector<double>, 3> noise;
    for (auto& ch : noise) ch = detail::value_noise(rng, n, spec.octaves, spec.noise_amp);
    std::vector<double> rgb(3 * px);
    for (int c = 0; c < 3; ++c)
      for (std::size_t i = 0; i < px; ++i) rgb[3 * i + c] = base[c] + noise[c][i];
    std::vector<std::uint8_t> mask(px, 0);

    const int shapes = rng.range(spec.shapes_min, spec.shapes_max);
    for (int s = 0; s < shapes; ++s) {
      const auto kind = spec.kinds[rng.below(spec.kinds.size())];
      const auto geom = detail::draw_shape(rng, kind, n);
      std::array<double, 3> colour;
      for (int c = 0; c < 3; ++c) {
        const double off = rng.uniform(spec.contrast_lo, spec.contrast_hi);
        const double up = base[c] + off, down = base[c] - off;
        // prefer the direction that stays in range; ties broken by the stream
        colour[c] = up > 1.0 ? down : down < 0.0 ? up : (rng.below(2) ? up : down);
      }
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
          if (!geom.inside(x + 0.5, y + 0.5)) continue;
          const std::size_t i = std::size_t(y) * n + x;
          mask[i] = 255;
          for (int c = 0; c < 3; ++c) rgb[3 * i + c] = colour[c] + 0.5 * noise[c][i];
        }
    }
    std::size_t fg = 0;
    for (auto m : mask) fg += m != 0;
    const double frac = double(fg) / double(px);
    if (frac < kMinForeground || frac > kMaxForeground) continue;

    SynthSample out;
    out.attempts = attempt;
    out.image = {n, n, 3, std::vector<std::uint8_t>(3 * px)};
    for (std::size_t i = 0; i < 3 * px; ++i) out.image.pixels[i] = map_level(rgb[i]);
    out.mask = {n, n, 1, std::move(mask)};
    return out;
  }
  throw std::runtime_error("synth: no mask with foreground fraction in [0.02, 0.6] after 16 attempts");
}

/// Writes images/NNNNN.ppm, masks/NNNNN.pgm and manifest.tsv under out_dir.
inline DatasetManifest synth_generate(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir / "images", ec);
  fs::create_directories(out_dir / "masks", ec);
  if (ec) throw IoError(out_dir.string() + ": " + ec.message());
  Rng rng(spec.seed);
  DatasetManifest m;
  m.source = "synth-" + std::to_string(spec.seed);
  for (int i = 0; i < spec.count; ++i) {
    auto s = synth_sample(spec, rng);
    char stem[16];
    std::snprintf(stem, sizeof stem, "%05d", i);
    ManifestRow row{out_dir / "images" / (std::string(stem) + ".ppm"), out_dir / "masks" / (std::string(stem) + ".pgm")};
    write_pnm(row.image, s.image);
    write_pnm(row.mask, s.mask);
    m.rows.push_back(std::move(row));
  }
  save_manifest(out_dir / "manifest.tsv", m);
  return m;
}

}  // namespace salite
