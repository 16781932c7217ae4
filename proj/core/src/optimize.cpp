#include "gramtex/optimize.hpp"

#include <chrono>
#include <cmath>
#include <deque>

#include "gramtex/binio.hpp"
#include "gramtex/error.hpp"

namespace gramtex {
namespace {

using Clock = std::chrono::steady_clock;

struct CurvaturePair {
  Tensor s;
  Tensor y;
  double rho;  // 1 / s.y
};

Tensor two_loop(const std::deque<CurvaturePair>& history, const Tensor& g, double h0) {
  Tensor q = g;
  std::vector<double> alpha(history.size());
  for (std::size_t i = history.size(); i-- > 0;) {
    alpha[i] = history[i].rho * dot(history[i].s, q);
    for (std::size_t k = 0; k < q.size(); ++k) q[k] -= alpha[i] * history[i].y[k];
  }
  q *= h0;
  for (std::size_t i = 0; i < history.size(); ++i) {
    const double beta = history[i].rho * dot(history[i].y, q);
    for (std::size_t k = 0; k < q.size(); ++k) q[k] += (alpha[i] - beta) * history[i].s[k];
  }
  q *= -1.0;
  return q;
}

}  // namespace

void OptTrace::write_csv(std::ostream& os, bool with_seconds) const {
  os << "iter,objective,grad_norm,seconds\n";
  for (std::size_t i = 0; i < objective.size(); ++i) {
    os << i << ',' << format_double(objective[i]) << ',' << format_double(grad_norm[i]) << ','
       << (with_seconds ? format_double(seconds[i]) : std::string("0")) << '\n';
  }
}

LbfgsResult lbfgs_minimize(const Objective& f, Tensor x0, const LbfgsOptions& options) {
  LbfgsResult result{std::move(x0), {}};
  Tensor& x = result.x;
  OptTrace& trace = result.trace;

  auto t0 = Clock::now();
  Tensor g = Tensor::zeros_like(x);
  double fx = f(x, g);
  if (!std::isfinite(fx) || !g.all_finite()) {
    throw Error(ErrorCode::NonFinite, "objective or gradient not finite at the initial point");
  }
  double gnorm = l2_norm(g);
  trace.objective.push_back(fx);
  trace.grad_norm.push_back(gnorm);
  trace.seconds.push_back(std::chrono::duration<double>(Clock::now() - t0).count());

  std::deque<CurvaturePair> history;
  // Initial inverse-Hessian scale; refreshed from every accepted step.
  double h0 = gnorm > 0.0 ? 1.0 / gnorm : 1.0;
  Tensor g_new = Tensor::zeros_like(x);

  for (std::size_t iter = 1; iter <= options.max_iters; ++iter) {
    if (gnorm <= options.grad_tol) {
      trace.stop_reason = "gradient tolerance";
      return result;
    }
    t0 = Clock::now();
    bool accepted = false;
    Tensor x_new;
    double f_new = 0.0;
    const double unit_scale = gnorm > 0.0 ? 1.0 / gnorm : 1.0;
    for (int attempt = 0; attempt < 2 && !accepted; ++attempt) {
      // Attempt 1 is a plain unit-length steepest-descent restart.
      const bool use_history = attempt == 0 && options.memory > 0 && !history.empty();
      const double scale = attempt == 0 ? h0 : unit_scale;
      Tensor d = use_history ? two_loop(history, g, scale) : axpy(Tensor::zeros_like(g), -scale, g);
      double slope = dot(g, d);
      if (!(slope < 0.0)) {
        d = axpy(Tensor::zeros_like(g), -scale, g);
        slope = dot(g, d);
      }
      double step = 1.0;
      for (std::size_t trial = 0; trial < options.max_line_search; ++trial, step *= 0.5) {
        x_new = axpy(x, step, d);
        f_new = f(x_new, g_new);
        if (std::isfinite(f_new) && g_new.all_finite() &&
            f_new <= fx + options.armijo_c1 * step * slope) {
          accepted = true;
          break;
        }
      }
      if (!accepted) {
        history.clear();
        if (!use_history && scale == unit_scale) break;
      }
    }
    if (!accepted) {
      trace.line_search_failed = true;
      trace.stop_reason = "line search failed";
      return result;
    }

    Tensor s = x_new;
    s -= x;
    Tensor y = g_new;
    y -= g;
    const double sy = dot(s, y);
    const double sn = l2_norm(s), yn = l2_norm(y);
    if (sy > 1e-10 * sn * yn && sy > 0.0) {
      h0 = sy / dot(y, y);
      if (options.memory > 0) {
        history.push_back({std::move(s), std::move(y), 1.0 / sy});
        if (history.size() > options.memory) history.pop_front();
      }
    }
    x = std::move(x_new);
    std::swap(g, g_new);
    fx = f_new;
    gnorm = l2_norm(g);
    trace.objective.push_back(fx);
    trace.grad_norm.push_back(gnorm);
    trace.seconds.push_back(std::chrono::duration<double>(Clock::now() - t0).count());
    if (options.on_iterate) options.on_iterate(iter, x);
  }
  trace.stop_reason = "max iterations";
  return result;
}

void sgd_momentum_step(std::span<double> params, std::span<const double> grads,
                       std::span<double> velocity, const SgdOptions& options) {
  if (params.size() != grads.size() || params.size() != velocity.size()) {
    throw Error(ErrorCode::DimensionMismatch, "sgd_momentum_step: params " +
                                                  std::to_string(params.size()) + ", grads " +
                                                  std::to_string(grads.size()) + ", velocity " +
                                                  std::to_string(velocity.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = options.momentum * velocity[i] -
                  options.learning_rate * (grads[i] + options.weight_decay * params[i]);
    params[i] += velocity[i];
  }
}

double lr_schedule_step(LrSchedule& state, std::span<const double> validation_errors) {
  for (; state.seen < validation_errors.size() && !state.stop; ++state.seen) {
    const double e = validation_errors[state.seen];
    if (state.seen == 0 || e < state.best * (1.0 - state.threshold)) {
      state.best = e;
      state.stale = 0;
      state.reductions_since_best = 0;
      continue;
    }
    if (++state.stale < state.patience) continue;
    state.stale = 0;
    if (state.reductions_since_best >= state.max_reductions) {
      state.stop = true;
    } else {
      state.learning_rate /= 10.0;
      ++state.reductions_since_best;
      ++state.reductions;
    }
  }
  return state.learning_rate;
}

}  // namespace gramtex
