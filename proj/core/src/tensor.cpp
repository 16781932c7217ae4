#include "gramtex/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "gramtex/error.hpp"

namespace gramtex {
namespace {

std::size_t product(const std::vector<std::size_t>& dims) {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw Error(ErrorCode::DimensionMismatch, std::string(what) + " must have rank " +
                                                  std::to_string(rank) + ", got " +
                                                  dims_string(t.dims()));
  }
}

std::size_t conv_extent(std::size_t in, std::size_t pad, std::size_t kernel, std::size_t stride,
                        const char* axis) {
  if (in + 2 * pad < kernel) {
    throw Error(ErrorCode::DimensionMismatch, std::string("padded ") + axis + " extent " +
                                                  std::to_string(in + 2 * pad) +
                                                  " is smaller than kernel " +
                                                  std::to_string(kernel));
  }
  return (in + 2 * pad - kernel) / stride + 1;
}

struct ConvGeometry {
  std::size_t h, w, cin, kh, kw, cout, oh, ow;
};

ConvGeometry conv_geometry(const Tensor& input, const Tensor& weights, std::size_t pad,
                           std::size_t stride) {
  require_rank(input, 3, "conv2d input");
  require_rank(weights, 4, "conv2d weights");
  if (stride == 0) throw Error(ErrorCode::InvalidArgument, "conv2d stride must be >= 1");
  if (weights.dim(2) != input.dim(2)) {
    throw Error(ErrorCode::DimensionMismatch,
                "conv2d Cin: input has " + std::to_string(input.dim(2)) +
                    " channels, weights expect " + std::to_string(weights.dim(2)));
  }
  ConvGeometry g{input.dim(0), input.dim(1), input.dim(2), weights.dim(0),
                 weights.dim(1), weights.dim(3), 0, 0};
  g.oh = conv_extent(g.h, pad, g.kh, stride, "H");
  g.ow = conv_extent(g.w, pad, g.kw, stride, "W");
  return g;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> dims, double fill)
    : dims_(std::move(dims)), data_(product(dims_), fill) {}

Tensor::Tensor(std::vector<std::size_t> dims, std::vector<double> data)
    : dims_(std::move(dims)), data_(std::move(data)) {
  if (data_.size() != product(dims_)) {
    throw Error(ErrorCode::DimensionMismatch, "data length " + std::to_string(data_.size()) +
                                                  " does not match dims " + dims_string(dims_));
  }
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor& Tensor::operator+=(const Tensor& other) {
  if (!same_shape(other)) {
    throw Error(ErrorCode::DimensionMismatch,
                dims_string(dims_) + " += " + dims_string(other.dims_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor& Tensor::operator-=(const Tensor& other) {
  if (!same_shape(other)) {
    throw Error(ErrorCode::DimensionMismatch,
                dims_string(dims_) + " -= " + dims_string(other.dims_));
  }
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

std::string dims_string(const std::vector<std::size_t>& dims) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < dims.size(); ++i) os << (i ? "x" : "") << dims[i];
  os << ']';
  return os.str();
}

double dot(const Tensor& a, const Tensor& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::DimensionMismatch,
                "dot " + dims_string(a.dims()) + " . " + dims_string(b.dims()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double l1_norm(const Tensor& t) {
  double s = 0.0;
  for (double v : t.data()) s += std::abs(v);
  return s;
}

double l2_norm(const Tensor& t) { return std::sqrt(dot(t, t)); }

double rms(const Tensor& t) {
  return t.empty() ? 0.0 : std::sqrt(dot(t, t) / static_cast<double>(t.size()));
}

Tensor axpy(const Tensor& a, double s, const Tensor& b) {
  if (!a.same_shape(b)) {
    throw Error(ErrorCode::DimensionMismatch,
                "axpy " + dims_string(a.dims()) + " vs " + dims_string(b.dims()));
  }
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += s * b[i];
  return out;
}

Tensor conv2d(const Tensor& input, const Tensor& weights, std::span<const double> bias,
              std::size_t pad, std::size_t stride) {
  const ConvGeometry g = conv_geometry(input, weights, pad, stride);
  if (bias.size() != g.cout) {
    throw Error(ErrorCode::DimensionMismatch, "conv2d bias has " + std::to_string(bias.size()) +
                                                  " entries, Cout is " + std::to_string(g.cout));
  }
  Tensor out({g.oh, g.ow, g.cout});
  const double* in = input.data().data();
  const double* wt = weights.data().data();
  for (std::size_t oy = 0; oy < g.oh; ++oy) {
    for (std::size_t ox = 0; ox < g.ow; ++ox) {
      double* acc = &out.at(oy, ox, 0);
      std::copy(bias.begin(), bias.end(), acc);
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                  static_cast<std::ptrdiff_t>(pad);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                    static_cast<std::ptrdiff_t>(pad);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
          const double* px = in + (static_cast<std::size_t>(iy) * g.w +
                                   static_cast<std::size_t>(ix)) * g.cin;
          const double* wk = wt + (ky * g.kw + kx) * g.cin * g.cout;
          for (std::size_t ci = 0; ci < g.cin; ++ci) {
            const double v = px[ci];
            if (v == 0.0) continue;
            const double* wrow = wk + ci * g.cout;
            for (std::size_t co = 0; co < g.cout; ++co) acc[co] += v * wrow[co];
          }
        }
      }
    }
  }
  return out;
}

Conv2dGrads conv2d_backward(const Tensor& input, const Tensor& weights, const Tensor& upstream,
                            std::size_t pad, std::size_t stride, bool with_params) {
  const ConvGeometry g = conv_geometry(input, weights, pad, stride);
  if (upstream.dims() != std::vector<std::size_t>{g.oh, g.ow, g.cout}) {
    throw Error(ErrorCode::DimensionMismatch,
                "conv2d upstream gradient " + dims_string(upstream.dims()) + " != output " +
                    dims_string({g.oh, g.ow, g.cout}));
  }
  Conv2dGrads grads;
  grads.input = Tensor::zeros_like(input);
  if (with_params) {
    grads.weights = Tensor::zeros_like(weights);
    grads.bias.assign(g.cout, 0.0);
  }
  const double* in = input.data().data();
  const double* wt = weights.data().data();
  double* gin = grads.input.data().data();
  double* gw = with_params ? grads.weights.data().data() : nullptr;

  for (std::size_t oy = 0; oy < g.oh; ++oy) {
    for (std::size_t ox = 0; ox < g.ow; ++ox) {
      const double* up = &upstream.at(oy, ox, 0);
      if (with_params) {
        for (std::size_t co = 0; co < g.cout; ++co) grads.bias[co] += up[co];
      }
      for (std::size_t ky = 0; ky < g.kh; ++ky) {
        const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                  static_cast<std::ptrdiff_t>(pad);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
        for (std::size_t kx = 0; kx < g.kw; ++kx) {
          const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                    static_cast<std::ptrdiff_t>(pad);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
          const std::size_t pix = (static_cast<std::size_t>(iy) * g.w +
                                   static_cast<std::size_t>(ix)) * g.cin;
          const std::size_t wofs = (ky * g.kw + kx) * g.cin * g.cout;
          for (std::size_t ci = 0; ci < g.cin; ++ci) {
            const double* wrow = wt + wofs + ci * g.cout;
            double s = 0.0;
            for (std::size_t co = 0; co < g.cout; ++co) s += wrow[co] * up[co];
            gin[pix + ci] += s;
            if (with_params) {
              const double v = in[pix + ci];
              if (v == 0.0) continue;
              double* gwrow = gw + wofs + ci * g.cout;
              for (std::size_t co = 0; co < g.cout; ++co) gwrow[co] += v * up[co];
            }
          }
        }
      }
    }
  }
  return grads;
}

Tensor relu(const Tensor& input) {
  Tensor out = input;
  for (double& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& upstream) {
  if (!input.same_shape(upstream)) {
    throw Error(ErrorCode::DimensionMismatch, "relu upstream " + dims_string(upstream.dims()) +
                                                  " != input " + dims_string(input.dims()));
  }
  Tensor out = upstream;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (!(input[i] > 0.0)) out[i] = 0.0;
  }
  return out;
}

MaxPoolResult maxpool(const Tensor& input, std::size_t window, std::size_t stride) {
  require_rank(input, 3, "maxpool input");
  if (window == 0 || stride == 0) {
    throw Error(ErrorCode::InvalidArgument, "maxpool window and stride must be >= 1");
  }
  const std::size_t h = input.dim(0), w = input.dim(1), c = input.dim(2);
  if (window > h || window > w) {
    throw Error(ErrorCode::DimensionMismatch, "maxpool window " + std::to_string(window) +
                                                  " larger than input " +
                                                  dims_string(input.dims()));
  }
  const std::size_t oh = (h - window) / stride + 1;
  const std::size_t ow = (w - window) / stride + 1;
  MaxPoolResult r{Tensor({oh, ow, c}), std::vector<std::size_t>(oh * ow * c), input.dims()};
  for (std::size_t oy = 0; oy < oh; ++oy) {
    for (std::size_t ox = 0; ox < ow; ++ox) {
      for (std::size_t ch = 0; ch < c; ++ch) {
        std::size_t best = ((oy * stride) * w + ox * stride) * c + ch;
        double best_v = input[best];
        for (std::size_t dy = 0; dy < window; ++dy) {
          for (std::size_t dx = 0; dx < window; ++dx) {
            const std::size_t idx = ((oy * stride + dy) * w + ox * stride + dx) * c + ch;
            if (input[idx] > best_v) {
              best_v = input[idx];
              best = idx;
            }
          }
        }
        const std::size_t o = (oy * ow + ox) * c + ch;
        r.output[o] = best_v;
        r.argmax[o] = best;
      }
    }
  }
  return r;
}

Tensor maxpool_backward(const MaxPoolResult& forward, const Tensor& upstream) {
  if (!upstream.same_shape(forward.output)) {
    throw Error(ErrorCode::DimensionMismatch, "maxpool upstream " +
                                                  dims_string(upstream.dims()) + " != output " +
                                                  dims_string(forward.output.dims()));
  }
  Tensor grad(forward.input_dims);
  for (std::size_t o = 0; o < upstream.size(); ++o) grad[forward.argmax[o]] += upstream[o];
  return grad;
}

FiniteDiffReport finite_diff_report(const DifferentiableFn& f, const Tensor& point,
                                    const FiniteDiffOptions& options) {
  Tensor analytic = Tensor::zeros_like(point);
  const double f0 = f(point, analytic);
  if (!std::isfinite(f0)) throw Error(ErrorCode::NonFinite, "f is not finite at the point");
  const double h = options.epsilon * std::max(rms(point), options.rms_floor);

  FiniteDiffReport report;
  Tensor x = point;
  Tensor scratch = Tensor::zeros_like(point);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (options.include && !options.include(i)) continue;
    const double orig = x[i];
    x[i] = orig + h;
    const double fp = f(x, scratch);
    x[i] = orig - h;
    const double fm = f(x, scratch);
    x[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw Error(ErrorCode::NonFinite, "f is not finite at a perturbed point");
    }
    const double numeric = (fp - fm) / (2.0 * h);
    const double a = analytic[i];
    const double rel =
        std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), options.abs_floor});
    ++report.checked;
    if (report.checked == 1 || rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
      report.analytic = a;
      report.numeric = numeric;
    }
  }
  return report;
}

double finite_diff_check(const DifferentiableFn& f, const Tensor& point, double epsilon) {
  FiniteDiffOptions options;
  options.epsilon = epsilon;
  return finite_diff_report(f, point, options).max_rel_error;
}

}  // namespace gramtex
