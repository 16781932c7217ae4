#pragma once

#include <span>
#include <string>
#include <vector>

#include "gramtex/tensor.hpp"

namespace gramtex {

/// Location-averaged second-moment (Gram) matrix of a feature map.
struct GramFeature {
  Tensor matrix;  // C x C, symmetric
  std::string source_layer;
  bool normalized = false;

  std::size_t channels() const { return matrix.empty() ? 0 : matrix.dim(0); }
};

/// B = (1/N) sum_j f_j f_j^T over the N = H * W locations of an H x W x C map.
///
/// Locations are accumulated in a canonical order (lexicographic on the
/// feature vector), so the result is bit-identical under any permutation of
/// locations.
GramFeature bilinear_pool(const Tensor& features, std::string source_layer = {});

/// dF_j = (dB + dB^T) f_j / N.
Tensor bilinear_backward(const Tensor& features, const Tensor& grad_gram);

/// Signed square root followed by l2 normalization, flattened row-major to C^2.
std::vector<double> normalize(const GramFeature& gram);

/// Gradient of normalize(). The square-root derivative uses max(|b|, 1e-10)
/// so zero entries get a finite slope.
Tensor normalize_backward(const GramFeature& gram, std::span<const double> upstream);

}  // namespace gramtex
