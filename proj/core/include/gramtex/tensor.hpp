#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace gramtex {

/// Dense double-precision tensor.
///
/// Layout is row-major with the last extent fastest. Images and activation
/// maps are H x W x C (channel fastest); convolution weights are
/// kH x kW x Cin x Cout. Weight files store data in exactly this order.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> dims, double fill = 0.0);
  Tensor(std::vector<std::size_t> dims, std::vector<double> data);
  Tensor(std::initializer_list<std::size_t> dims) : Tensor(std::vector<std::size_t>(dims)) {}

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.dims_); }

  const std::vector<std::size_t>& dims() const { return dims_; }
  std::size_t rank() const { return dims_.size(); }
  std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  const double& operator[](std::size_t i) const { return data_[i]; }

  /// Rank-3 (H x W x C) element access.
  double& at(std::size_t y, std::size_t x, std::size_t c) {
    return data_[(y * dims_[1] + x) * dims_[2] + c];
  }
  const double& at(std::size_t y, std::size_t x, std::size_t c) const {
    return data_[(y * dims_[1] + x) * dims_[2] + c];
  }
  /// Rank-2 element access.
  double& at(std::size_t r, std::size_t c) { return data_[r * dims_[1] + c]; }
  const double& at(std::size_t r, std::size_t c) const { return data_[r * dims_[1] + c]; }

  std::size_t height() const { return dims_.at(0); }
  std::size_t width() const { return dims_.at(1); }
  std::size_t channels() const { return dims_.at(2); }

  bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }
  bool all_finite() const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double s);

  /// Bitwise comparison of dims and values.
  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.dims_ == b.dims_ && a.data_ == b.data_;
  }

 private:
  std::vector<std::size_t> dims_;
  std::vector<double> data_;
};

std::string dims_string(const std::vector<std::size_t>& dims);

double dot(const Tensor& a, const Tensor& b);
double l1_norm(const Tensor& t);
double l2_norm(const Tensor& t);
double rms(const Tensor& t);
/// a + s * b
Tensor axpy(const Tensor& a, double s, const Tensor& b);

/// Value paired with an equally-shaped gradient buffer.
struct GradPair {
  explicit GradPair(Tensor v) : value(std::move(v)), grad(Tensor::zeros_like(value)) {}
  Tensor value;
  Tensor grad;
};

// --- Convolution -----------------------------------------------------------

Tensor conv2d(const Tensor& input, const Tensor& weights, std::span<const double> bias,
              std::size_t pad, std::size_t stride);

struct Conv2dGrads {
  Tensor input;
  Tensor weights;  // empty when not requested
  std::vector<double> bias;
};

/// Exact gradients of conv2d. Weight/bias gradients are skipped when
/// `with_params` is false (image-space optimization only needs the input one).
Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weights, const Tensor& upstream,
                            std::size_t pad, std::size_t stride, bool with_params = true);

// --- ReLU ------------------------------------------------------------------

Tensor relu(const Tensor& input);
Tensor relu_backward(const Tensor& input, const Tensor& upstream);

// --- Max pooling -------------------------------------------------------------

struct MaxPoolResult {
  Tensor output;
  /// Flat input index chosen for every output element.
  std::vector<std::size_t> argmax;
  std::vector<std::size_t> input_dims;
};

/// Output extent is floor((H - window) / stride) + 1; trailing rows/columns
/// that do not fill a window are dropped. Ties go to the first element in
/// row-major scan order within the window.
MaxPoolResult maxpool(const Tensor& input, std::size_t window, std::size_t stride);
Tensor maxpool_backward(const MaxPoolResult& forward, const Tensor& upstream);

// --- Finite differences ------------------------------------------------------

/// Scalar function that also writes its analytic gradient into `grad`
/// (already sized like the point).
using DifferentiableFn = std::function<double(const Tensor& x, Tensor& grad)>;

struct FiniteDiffOptions {
  /// Step is epsilon * max(rms(point), floor).
  double epsilon = 1e-3;
  double rms_floor = 1e-3;
  /// Lower bound on the relative-error denominator.
  double abs_floor = 1e-8;
  /// Optional coordinate filter; coordinates for which it returns false are skipped.
  std::function<bool(std::size_t)> include;
};

struct FiniteDiffReport {
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t checked = 0;
};

/// Central differences against the analytic gradient; relative error per
/// coordinate is |a - n| / max(|a|, |n|, abs_floor). Throws NonFinite if f is not
/// finite at any evaluated point.
FiniteDiffReport finite_diff_report(const DifferentiableFn& f, const Tensor& point,
                                    const FiniteDiffOptions& options = {});

double finite_diff_check(const DifferentiableFn& f, const Tensor& point, double epsilon = 1e-3);

}  // namespace gramtex
