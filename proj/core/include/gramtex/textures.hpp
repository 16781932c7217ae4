#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "gramtex/rng.hpp"
#include "gramtex/tensor.hpp"

namespace gramtex {

/// Procedural texture processes used for the shipped reference textures and
/// the synthetic classification datasets.
enum class TextureKind { Stripes, Dots, Checker, Blobs, Bricks, Weave };

std::string_view to_string(TextureKind kind);
TextureKind parse_texture_kind(std::string_view name);

/// Renders an H x W x 3 image in [0, 1] with random phase, small orientation
/// and scale jitter, and a random two-color palette.
Tensor render_texture(TextureKind kind, std::size_t height, std::size_t width, CounterRng& rng);

struct LabeledImages {
  std::vector<Tensor> images;
  std::vector<std::size_t> labels;
  std::vector<std::string> class_names;

  std::size_t size() const { return images.size(); }
};

struct SyntheticSpec {
  std::vector<TextureKind> classes{TextureKind::Stripes, TextureKind::Dots};
  std::size_t per_class = 10;
  std::size_t height = 48;
  std::size_t width = 48;
  /// 0 renders the texture over the whole frame. Otherwise a square region of
  /// this size is textured and pasted at a uniformly random position on a
  /// noisy background.
  std::size_t region = 0;
  double noise = 0.02;
  std::uint64_t seed = 0;
};

/// Class-interleaved samples (label i % K). Deterministic in spec.seed.
LabeledImages make_synthetic_dataset(const SyntheticSpec& spec);

}  // namespace gramtex
