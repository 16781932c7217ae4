#include "gramtex/bilinear.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gramtex/error.hpp"

namespace gramtex {
namespace {

constexpr double kNormFloor = 1e-12;
constexpr double kSqrtFloor = 1e-10;

double signed_sqrt(double v) { return v < 0.0 ? -std::sqrt(-v) : std::sqrt(v); }

void require_gram(const Tensor& m, const char* what) {
  if (m.rank() != 2 || m.dim(0) != m.dim(1)) {
    throw Error(ErrorCode::DimensionMismatch,
                std::string(what) + " must be square, got " + dims_string(m.dims()));
  }
}

}  // namespace

GramFeature bilinear_pool(const Tensor& features, std::string source_layer) {
  if (features.rank() != 3) {
    throw Error(ErrorCode::DimensionMismatch,
                "bilinear_pool expects H x W x C, got " + dims_string(features.dims()));
  }
  const std::size_t n = features.dim(0) * features.dim(1);
  const std::size_t c = features.dim(2);
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "bilinear_pool: empty spatial extent");

  const double* f = features.data().data();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::lexicographical_compare(f + a * c, f + (a + 1) * c, f + b * c, f + (b + 1) * c);
  });

  Tensor gram({c, c});
  double* g = gram.data().data();
  for (std::size_t j : order) {
    const double* fj = f + j * c;
    for (std::size_t a = 0; a < c; ++a) {
      const double va = fj[a];
      if (va == 0.0) continue;
      double* row = g + a * c;
      for (std::size_t b = a; b < c; ++b) row[b] += va * fj[b];
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  for (std::size_t a = 0; a < c; ++a) {
    for (std::size_t b = a; b < c; ++b) {
      g[a * c + b] *= inv_n;
      g[b * c + a] = g[a * c + b];
    }
  }
  return GramFeature{std::move(gram), std::move(source_layer), false};
}

Tensor bilinear_backward(const Tensor& features, const Tensor& grad_gram) {
  require_gram(grad_gram, "bilinear_backward dB");
  if (features.rank() != 3 || features.dim(2) != grad_gram.dim(0)) {
    throw Error(ErrorCode::DimensionMismatch, "bilinear_backward: features " +
                                                  dims_string(features.dims()) + " vs dB " +
                                                  dims_string(grad_gram.dims()));
  }
  const std::size_t n = features.dim(0) * features.dim(1);
  const std::size_t c = features.dim(2);
  if (n == 0) throw Error(ErrorCode::InvalidArgument, "bilinear_backward: empty spatial extent");

  const double inv_n = 1.0 / static_cast<double>(n);
  Tensor sym({c, c});
  for (std::size_t a = 0; a < c; ++a) {
    for (std::size_t b = 0; b < c; ++b) {
      sym.at(a, b) = (grad_gram.at(a, b) + grad_gram.at(b, a)) * inv_n;
    }
  }
  Tensor out = Tensor::zeros_like(features);
  const double* f = features.data().data();
  double* o = out.data().data();
  const double* s = sym.data().data();
  for (std::size_t j = 0; j < n; ++j) {
    const double* fj = f + j * c;
    double* oj = o + j * c;
    for (std::size_t b = 0; b < c; ++b) {
      const double vb = fj[b];
      if (vb == 0.0) continue;
      const double* col = s + b * c;  // sym is symmetric: row b == column b
      for (std::size_t a = 0; a < c; ++a) oj[a] += col[a] * vb;
    }
  }
  return out;
}

std::vector<double> normalize(const GramFeature& gram) {
  require_gram(gram.matrix, "normalize input");
  std::vector<double> y(gram.matrix.size());
  double sq = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = signed_sqrt(gram.matrix[i]);
    sq += y[i] * y[i];
  }
  const double norm = std::max(std::sqrt(sq), kNormFloor);
  for (double& v : y) v /= norm;
  return y;
}

Tensor normalize_backward(const GramFeature& gram, std::span<const double> upstream) {
  require_gram(gram.matrix, "normalize_backward input");
  const std::size_t d = gram.matrix.size();
  if (upstream.size() != d) {
    throw Error(ErrorCode::DimensionMismatch, "normalize_backward upstream has " +
                                                  std::to_string(upstream.size()) +
                                                  " entries, expected " + std::to_string(d));
  }
  std::vector<double> y(d);
  double sq = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    y[i] = signed_sqrt(gram.matrix[i]);
    sq += y[i] * y[i];
  }
  const double raw_norm = std::sqrt(sq);
  Tensor grad = Tensor::zeros_like(gram.matrix);
  if (raw_norm > kNormFloor) {
    // z = y / |y|  =>  dy = (u - z (z . u)) / |y|
    double zu = 0.0;
    for (std::size_t i = 0; i < d; ++i) zu += (y[i] / raw_norm) * upstream[i];
    for (std::size_t i = 0; i < d; ++i) {
      grad[i] = (upstream[i] - (y[i] / raw_norm) * zu) / raw_norm;
    }
  } else {
    for (std::size_t i = 0; i < d; ++i) grad[i] = upstream[i] / kNormFloor;
  }
  for (std::size_t i = 0; i < d; ++i) {
    grad[i] *= 0.5 / std::sqrt(std::max(std::abs(gram.matrix[i]), kSqrtFloor));
  }
  return grad;
}

}  // namespace gramtex
