#pragma once

#include <cstddef>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "gramtex/tensor.hpp"

namespace gramtex {

/// Objective value at x; the callee writes its gradient (or search-direction
/// proxy) into `grad`, which arrives shaped like x.
using Objective = std::function<double(const Tensor& x, Tensor& grad)>;

struct LbfgsOptions {
  std::size_t max_iters = 100;
  std::size_t memory = 10;
  double grad_tol = 1e-12;
  double armijo_c1 = 1e-4;
  std::size_t max_line_search = 40;
  /// Called after each accepted iterate with its 1-based iteration number.
  std::function<void(std::size_t, const Tensor&)> on_iterate;
};

struct OptTrace {
  std::vector<double> objective;
  std::vector<double> grad_norm;
  std::vector<double> seconds;
  std::string stop_reason;
  bool line_search_failed = false;

  std::size_t iterations() const { return objective.empty() ? 0 : objective.size() - 1; }
  /// iter,objective,grad_norm,seconds
  void write_csv(std::ostream& os, bool with_seconds = true) const;
};

struct LbfgsResult {
  Tensor x;
  OptTrace trace;
};

/// L-BFGS with the two-loop recursion and backtracking Armijo line search
/// (c1, halving, at most max_line_search trials). Curvature pairs with
/// s.y <= 1e-10 |s||y| are skipped. When a line search fails with history
/// present, the history is dropped and a scaled steepest-descent step is
/// tried once more before giving up. Throws NonFinite if f or its gradient is
/// not finite at x0.
LbfgsResult lbfgs_minimize(const Objective& f, Tensor x0, const LbfgsOptions& options = {});

struct SgdOptions {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 0.0;
};

/// v <- momentum v - lr (g + weight_decay p);  p <- p + v.
void sgd_momentum_step(std::span<double> params, std::span<const double> grads,
                       std::span<double> velocity, const SgdOptions& options);

/// Plateau rule for the learning rate: divide by 10 after `patience`
/// consecutive evaluations that fail to beat the best error by a relative
/// `threshold`; request a stop when that happens again after
/// `max_reductions` reductions without improvement.
struct LrSchedule {
  double learning_rate = 0.01;
  double threshold = 1e-3;
  std::size_t patience = 2;
  std::size_t max_reductions = 2;

  double best = 0.0;
  std::size_t seen = 0;
  std::size_t stale = 0;
  std::size_t reductions_since_best = 0;
  std::size_t reductions = 0;
  bool stop = false;
};

/// Consumes the validation errors not yet seen and returns the new rate.
double lr_schedule_step(LrSchedule& state, std::span<const double> validation_errors);

}  // namespace gramtex
