#pragma once

#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "gramtex/classify.hpp"
#include "gramtex/network.hpp"
#include "gramtex/tensor.hpp"

namespace gramtex {

struct ScalarGrad {
  double value = 0.0;
  Tensor grad;
};

/// sum (B - target)^2, gradient 2 (B - target).
ScalarGrad gram_loss(const Tensor& gram, const Tensor& target);

/// sum over locations and channels of (F - target)^2, gradient 2 (F - target).
ScalarGrad content_loss(const Tensor& features, const Tensor& target);

struct ClassLoss {
  double value = 0.0;
  std::vector<double> grad_logits;  // softmax(logits) - onehot(target)
};

/// Negative log-likelihood of `target` under softmax(logits), via log-sum-exp.
ClassLoss class_loss(std::span<const double> logits, std::size_t target);

/// -log probs[target] for a probability vector; gradient is w.r.t. the logits
/// that produced it (probs - onehot).
ClassLoss class_loss_from_probs(std::span<const double> probs, std::size_t target);

/// TV prior: sum over pixels and channels of (dx^2 + dy^2)^(exponent / 2)
/// using forward differences that stay inside the image.
ScalarGrad tv_prior(const Tensor& image, double exponent = 2.0);

enum class GradNormalization {
  None,
  /// Each texture term's image-space gradient is scaled to unit l1 norm.
  L1Image,
  /// Each texture term is divided by the l2 norm of its target Gram matrix.
  L2Target,
};

std::string_view to_string(GradNormalization mode);
GradNormalization parse_grad_normalization(std::string_view text);

struct TextureTerm {
  std::string layer;
  double weight = 1.0;
  Tensor target;  // raw C x C Gram matrix
};

struct ContentTerm {
  std::string layer;
  double weight = 0.0;
  Tensor target;  // H x W x C activation
};

/// One attribute target: NLL of `target_class`, summed over the classifier
/// layers, times `weight`.
struct ClassTerm {
  std::size_t target_class = 0;
  double weight = 0.0;
  std::vector<std::string> layers;
};

struct ObjectiveSpec {
  std::vector<TextureTerm> texture;
  std::optional<ContentTerm> content;
  std::vector<ClassTerm> classes;
  double prior_weight = 0.0;
  double tv_exponent = 2.0;
  double temperature = 1.0;
  GradNormalization normalization = GradNormalization::L1Image;

  /// Throws InvalidArgument on negative weights or when no term is present.
  void validate() const;
};

struct LossReport {
  double total = 0.0;
  /// Un-normalized, un-weighted value of each term ("texture:<layer>",
  /// "content:<layer>", "class:<index>", "prior").
  std::vector<std::pair<std::string, double>> per_term;
  Tensor image_grad;

  double term(std::string_view name) const;
};

/// Value and image gradient of the weighted objective from one forward pass.
/// `total` is always the weighted sum of un-normalized terms; with
/// normalization other than None, `image_grad` is the balanced search
/// direction rather than the exact gradient of `total`.
LossReport total_objective(const Network& net, const Tensor& image, const ObjectiveSpec& spec,
                           const ClassifierSet* classifiers = nullptr);

}  // namespace gramtex
