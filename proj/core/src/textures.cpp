#include "gramtex/textures.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include "gramtex/error.hpp"

namespace gramtex {
namespace {

using Rgb = std::array<double, 3>;

double smoothstep(double edge0, double edge1, double x) {
  const double t = std::clamp((x - edge0) / (edge1 - edge0), 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

double frac(double v) { return v - std::floor(v); }

struct Palette {
  Rgb dark;
  Rgb light;
  Rgb mix(double t) const {
    return {dark[0] + t * (light[0] - dark[0]), dark[1] + t * (light[1] - dark[1]),
            dark[2] + t * (light[2] - dark[2])};
  }
};

Palette random_palette(CounterRng& rng) {
  Palette p;
  for (int c = 0; c < 3; ++c) {
    p.dark[c] = 0.05 + 0.35 * rng.uniform();
    p.light[c] = 0.6 + 0.35 * rng.uniform();
  }
  return p;
}

// Intensity field in [0, 1] at (y, x) for each process.
template <typename Field>
Tensor paint(std::size_t h, std::size_t w, const Palette& pal, Field field) {
  Tensor out({h, w, 3});
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const Rgb c = pal.mix(field(static_cast<double>(y), static_cast<double>(x)));
      for (int k = 0; k < 3; ++k) out.at(y, x, static_cast<std::size_t>(k)) = c[k];
    }
  }
  return out;
}

}  // namespace

std::string_view to_string(TextureKind kind) {
  switch (kind) {
    case TextureKind::Stripes: return "stripes";
    case TextureKind::Dots: return "dots";
    case TextureKind::Checker: return "checker";
    case TextureKind::Blobs: return "blobs";
    case TextureKind::Bricks: return "bricks";
    case TextureKind::Weave: return "weave";
  }
  return "?";
}

TextureKind parse_texture_kind(std::string_view name) {
  for (auto k : {TextureKind::Stripes, TextureKind::Dots, TextureKind::Checker, TextureKind::Blobs,
                 TextureKind::Bricks, TextureKind::Weave}) {
    if (to_string(k) == name) return k;
  }
  throw Error(ErrorCode::Parse, "unknown texture kind \"" + std::string(name) + "\"");
}

Tensor render_texture(TextureKind kind, std::size_t h, std::size_t w, CounterRng& rng) {
  const Palette pal = random_palette(rng);
  const double oy = rng.uniform() * 64.0, ox = rng.uniform() * 64.0;
  const double angle_jitter = (rng.uniform() - 0.5) * 0.35;
  const double scale = 0.85 + 0.3 * rng.uniform();

  switch (kind) {
    case TextureKind::Stripes: {
      const double theta = std::numbers::pi / 4.0 + angle_jitter;
      const double period = 6.0 * scale;
      const double cs = std::cos(theta), sn = std::sin(theta);
      return paint(h, w, pal, [&](double y, double x) {
        const double u = ((x + ox) * cs + (y + oy) * sn) / period;
        return smoothstep(-0.3, 0.3, std::sin(2.0 * std::numbers::pi * u));
      });
    }
    case TextureKind::Dots: {
      const double spacing = 7.0 * scale;
      const double radius = 1.9 * scale;
      return paint(h, w, pal, [&](double y, double x) {
        const double u = frac((x + ox) / spacing) - 0.5, v = frac((y + oy) / spacing) - 0.5;
        const double r = std::hypot(u, v) * spacing;
        return 1.0 - smoothstep(radius - 0.6, radius + 0.6, r);
      });
    }
    case TextureKind::Checker: {
      const double size = 5.0 * scale;
      const double cs = std::cos(angle_jitter), sn = std::sin(angle_jitter);
      return paint(h, w, pal, [&](double y, double x) {
        const double u = ((x + ox) * cs - (y + oy) * sn) / size;
        const double v = ((x + ox) * sn + (y + oy) * cs) / size;
        return (static_cast<long>(std::floor(u)) + static_cast<long>(std::floor(v))) % 2 == 0
                   ? 1.0
                   : 0.0;
      });
    }
    case TextureKind::Blobs: {
      const std::size_t count = std::max<std::size_t>(3, h * w / 60);
      std::vector<std::array<double, 3>> blobs(count);
      for (auto& b : blobs) {
        b = {rng.uniform() * static_cast<double>(h), rng.uniform() * static_cast<double>(w),
             (1.5 + 2.0 * rng.uniform()) * scale};
      }
      return paint(h, w, pal, [&](double y, double x) {
        double s = 0.0;
        for (const auto& b : blobs) {
          const double d2 = (y - b[0]) * (y - b[0]) + (x - b[1]) * (x - b[1]);
          s += std::exp(-d2 / (2.0 * b[2] * b[2]));
        }
        return smoothstep(0.35, 0.65, s);
      });
    }
    case TextureKind::Bricks: {
      const double bh = 5.0 * scale, bw = 11.0 * scale;
      return paint(h, w, pal, [&](double y, double x) {
        const double row = std::floor((y + oy) / bh);
        const double shift = std::fmod(row, 2.0) == 0.0 ? 0.0 : bw / 2.0;
        const double u = frac((x + ox + shift) / bw) * bw;
        const double v = frac((y + oy) / bh) * bh;
        return (u < 1.0 || v < 1.0) ? 0.0 : 0.85 + 0.15 * std::sin(row * 1.7);
      });
    }
    case TextureKind::Weave: {
      const double cell = 6.0 * scale;
      return paint(h, w, pal, [&](double y, double x) {
        const double cu = std::floor((x + ox) / cell), cv = std::floor((y + oy) / cell);
        const double u = frac((x + ox) / cell), v = frac((y + oy) / cell);
        const bool horizontal = static_cast<long>(cu + cv) % 2 == 0;
        const double t = horizontal ? v : u;
        return 0.2 + 0.8 * std::sin(std::numbers::pi * t) * (horizontal ? 1.0 : 0.75);
      });
    }
  }
  throw Error(ErrorCode::InvalidArgument, "unknown texture kind");
}

LabeledImages make_synthetic_dataset(const SyntheticSpec& spec) {
  if (spec.classes.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "synthetic dataset needs at least two classes");
  }
  if (spec.region > std::min(spec.height, spec.width)) {
    throw Error(ErrorCode::InvalidArgument, "textured region exceeds the image");
  }
  LabeledImages data;
  for (auto k : spec.classes) data.class_names.emplace_back(to_string(k));
  const CounterRng root(spec.seed);
  const std::size_t n = spec.classes.size() * spec.per_class;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t label = i % spec.classes.size();
    CounterRng rng = root.split(i);
    Tensor img;
    if (spec.region == 0) {
      img = render_texture(spec.classes[label], spec.height, spec.width, rng);
    } else {
      img = Tensor({spec.height, spec.width, 3}, 0.5);
      const Tensor patch = render_texture(spec.classes[label], spec.region, spec.region, rng);
      const std::size_t top = rng.below(spec.height - spec.region + 1);
      const std::size_t left = rng.below(spec.width - spec.region + 1);
      for (std::size_t y = 0; y < spec.region; ++y) {
        for (std::size_t x = 0; x < spec.region; ++x) {
          for (std::size_t c = 0; c < 3; ++c) img.at(top + y, left + x, c) = patch.at(y, x, c);
        }
      }
    }
    if (spec.noise > 0.0) {
      for (double& v : img.data()) v = std::clamp(v + spec.noise * rng.normal(), 0.0, 1.0);
    }
    data.images.push_back(std::move(img));
    data.labels.push_back(label);
  }
  return data;
}

}  // namespace gramtex
