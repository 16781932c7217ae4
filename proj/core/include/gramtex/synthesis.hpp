#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "gramtex/bilinear.hpp"
#include "gramtex/classify.hpp"
#include "gramtex/losses.hpp"
#include "gramtex/network.hpp"
#include "gramtex/optimize.hpp"
#include "gramtex/quilting.hpp"

namespace gramtex {

enum class InitMode { Rand, Quilt, Image };

std::string_view to_string(InitMode mode);
InitMode parse_init_mode(std::string_view text);

enum class EditMode { Texture, Content };

std::string_view to_string(EditMode mode);
EditMode parse_edit_mode(std::string_view text);

/// How per-scale Gram matrices are combined.
enum class ScaleAggregation {
  AverageRaw,         // mean of raw Grams, normalized once
  AverageNormalized,  // mean of per-scale normalized vectors
};

/// Image scales 2^s. A scale survives when its resized image covers the
/// layer's receptive field and has at most max_pixels pixels.
struct ScaleSet {
  std::vector<double> exponents{1.5, 1.0, 0.5, 0.0, -0.5, -1.0, -1.5, -2.0, -2.5, -3.0};
  std::size_t max_pixels = 1024 * 1024;

  static ScaleSet single() { return {{0.0}, 1024 * 1024}; }

  /// Surviving (height, width) pairs in exponent order.
  std::vector<std::pair<std::size_t, std::size_t>> sizes(const Network& net,
                                                         const std::string& layer,
                                                         std::size_t height,
                                                         std::size_t width) const;
};

/// Normalized Gram descriptor pooled over the surviving scales; the result's
/// matrix holds the C x C reshaped normalized vector. Throws ImageTooSmall
/// when no scale survives.
GramFeature multiscale_gram(const Network& net, const Tensor& image, const std::string& layer,
                            const ScaleSet& scales,
                            ScaleAggregation mode = ScaleAggregation::AverageRaw);

/// Settings shared by every synthesis-style optimization. Layer names may be
/// VGG-style; they are resolved against the network.
struct SynthesisJob {
  std::vector<std::string> texture_layers{"relu1_1", "relu2_1", "relu3_1", "relu4_1", "relu5_1"};
  double texture_weight = 1.0;
  std::string content_layer = "relu4_2";
  double content_weight = 0.0;
  std::vector<std::string> class_layers{"relu2_2", "relu3_3", "relu4_3", "relu5_3"};
  double class_weight = 100.0;
  double prior_weight = 1e-6;
  double tv_exponent = 2.0;
  double temperature = 1.0;
  GradNormalization normalization = GradNormalization::L1Image;

  InitMode init = InitMode::Rand;
  /// Image-init start; empty means "use the source (or content) image".
  Tensor init_image;
  /// Rand-init pixel std; 0 means the std of the channel-centered source,
  /// or fallback_init_std when there is no source.
  double init_std = 0.0;
  double fallback_init_std = 0.2;
  QuiltParams quilt;
  /// Weight of overlap error against correspondence error in transfer quilting.
  double quilt_alpha = 0.5;

  std::size_t out_h = 224;
  std::size_t out_w = 224;
  std::size_t iterations = 100;
  std::size_t memory = 10;
  std::uint64_t seed = 0;

  /// Called after each accepted iterate (1-based iteration, current image).
  std::function<void(std::size_t, const Tensor&)> on_iterate;

  void validate() const;
};

struct SynthesisResult {
  Tensor image;
  Tensor initial;
  OptTrace trace;
  ObjectiveSpec objective;
};

/// Texture targets: raw Gram matrices of `source` resized to the job's output
/// size, one per texture layer.
std::vector<TextureTerm> texture_targets(const Network& net, const Tensor& source,
                                         const SynthesisJob& job);

/// Starting image for the job. `source` may be empty for rand/image init
/// when an init image or fallback std is available; `correspondence`, when
/// non-empty, switches quilt init to transfer quilting.
Tensor initial_image(const Network& net, const Tensor& source, const Tensor& correspondence,
                     const SynthesisJob& job);

/// Minimizes the job's objective from its initial image with L-BFGS.
SynthesisResult run_objective(const Network& net, const ObjectiveSpec& spec, Tensor x0,
                              const SynthesisJob& job, const ClassifierSet* classifiers = nullptr);

/// Matches the Gram matrices of `source` at the texture layers.
SynthesisResult synthesize_texture(const Network& net, const Tensor& source,
                                   const SynthesisJob& job);

/// Texture terms from `style` plus a content term (weight job.content_weight)
/// from `content`.
SynthesisResult style_transfer(const Network& net, const Tensor& content, const Tensor& style,
                               const SynthesisJob& job);

/// Class NLL over the classifier layers (weight job.class_weight) plus the
/// prior. `source` is optional and only informs rand init statistics.
SynthesisResult invert_category(const Network& net, const ClassifierSet& classifiers,
                                std::size_t class_id, const SynthesisJob& job,
                                const Tensor& source = {});

struct AttributeTarget {
  std::size_t class_id = 0;
  double weight = 0.0;
};

/// Texture mode keeps the source's Gram matrices (job.texture_weight);
/// content mode keeps its content-layer activation (job.content_weight) and
/// drops texture terms. Each attribute adds a class term with its own weight.
SynthesisResult edit_with_attribute(const Network& net, const ClassifierSet& classifiers,
                                    const Tensor& source,
                                    const std::vector<AttributeTarget>& targets, EditMode mode,
                                    const SynthesisJob& job);

/// Resolved classifier layers, each checked against `classifiers`.
std::vector<std::string> resolve_class_layers(const Network& net,
                                              const ClassifierSet& classifiers,
                                              const SynthesisJob& job);

}  // namespace gramtex
