#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <utility>
#include <vector>

#include "cbal/errors.hpp"
#include "cbal/random.hpp"

namespace cbal {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

using PenaltyMask = Eigen::Array<bool, Eigen::Dynamic, 1>;

// Proximal map of t*|.|: sign(z) * max(|z| - t, 0).
inline double soft_threshold(double z, double t) {
  if (z > t) return z - t;
  if (z < -t) return z + t;
  return 0.0;
}

// Mask with every coordinate penalized except the intercept (column 0).
inline PenaltyMask all_but_intercept(Index d) {
  PenaltyMask m = PenaltyMask::Constant(d, true);
  m(0) = false;
  return m;
}

// Smooth convex part of an l1-penalized problem. value/gradient must be
// finite wherever the solver evaluates them; value_and_gradient, when set,
// is used on the hot path to share the linear-index computation.
struct SmoothObjective {
  std::function<double(const VectorXd&)> value;
  std::function<VectorXd(const VectorXd&)> gradient;
  std::function<std::pair<double, VectorXd>(const VectorXd&)> value_and_gradient;
  Index dimension = 0;
  PenaltyMask penalized;

  double eval(const VectorXd& x) const { return value(x); }
  std::pair<double, VectorXd> eval_with_gradient(const VectorXd& x) const {
    if (value_and_gradient) return value_and_gradient(x);
    return {value(x), gradient(x)};
  }
};

struct SolverSettings {
  int max_iterations = 10000;
  double tolerance = 1e-8;   // inf-norm of the prox-gradient map
  double initial_step = 1.0;
  double shrink = 0.5;       // backtracking factor

  void validate() const {
    if (max_iterations < 1) throw ConfigError("SolverSettings: max_iterations must be >= 1");
    if (!(tolerance > 0.0)) throw ConfigError("SolverSettings: tolerance must be positive");
    if (!(initial_step > 0.0)) throw ConfigError("SolverSettings: initial step must be positive");
    if (!(shrink > 0.0 && shrink < 1.0)) throw ConfigError("SolverSettings: shrink factor must lie in (0, 1)");
  }
};

struct MinimizeResult {
  VectorXd x;
  bool converged = false;
  bool diverged = false;  // unbounded penalized objective detected
  int iterations = 0;
  double gradient_map_norm = std::numeric_limits<double>::infinity();
  double kkt = std::numeric_limits<double>::infinity();  // certified residual at x
  double objective = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> objective_trace;  // accepted penalized objective values
};

// Stationarity residual of the penalized problem at x, computed from a fresh
// gradient. Used as the independent certificate of minimize_l1 results.
inline double kkt_residual(const VectorXd& x, const VectorXd& gradient,
                           double lambda, const PenaltyMask& penalized) {
  double r = 0.0;
  for (Index j = 0; j < x.size(); ++j) {
    const double g = gradient(j);
    double rj;
    if (!penalized(j)) {
      rj = std::abs(g);
    } else if (x(j) == 0.0) {
      rj = std::max(std::abs(g) - lambda, 0.0);
    } else {
      rj = std::abs(g + (x(j) > 0.0 ? lambda : -lambda));
    }
    r = std::max(r, rj);
  }
  return r;
}

// Accelerated proximal gradient (monotone FISTA with restarts) for
// min f(x) + lambda * sum_{j penalized} |x_j|. Returns the last iterate with
// converged=false when the certified stationarity residual never reaches the
// tolerance; throws InvalidObjectiveError on non-finite values.
inline MinimizeResult minimize_l1(const SmoothObjective& obj, double lambda,
                                  const VectorXd& init,
                                  const SolverSettings& settings) {
  settings.validate();
  if (lambda < 0.0) throw Error("minimize_l1: lambda must be nonnegative");
  const Index d = obj.dimension;
  if (init.size() != d) throw Error("minimize_l1: init has wrong dimension");
  if (obj.penalized.size() != d) throw Error("minimize_l1: penalty mask has wrong dimension");

  const auto penalty = [&](const VectorXd& v) {
    double s = 0.0;
    for (Index j = 0; j < d; ++j) {
      if (obj.penalized(j)) s += std::abs(v(j));
    }
    return lambda * s;
  };
  const auto prox = [&](const VectorXd& v, double t, VectorXd& out) {
    out.resize(d);
    const double tl = t * lambda;
    for (Index j = 0; j < d; ++j) {
      out(j) = obj.penalized(j) ? soft_threshold(v(j), tl) : v(j);
    }
  };
  const auto require_finite = [](double v) {
    if (!std::isfinite(v)) {
      throw InvalidObjectiveError("minimize_l1: objective evaluated to a non-finite value");
    }
  };

  MinimizeResult res;
  VectorXd x = init;
  double fx = obj.eval(x);
  require_finite(fx);
  double big_f = fx + penalty(x);
  res.objective_trace.push_back(big_f);

  VectorXd y = x;
  VectorXd x_old = x;
  VectorXd z(d), gy(d), diff(d);
  double t_mom = 1.0;
  double step = settings.initial_step;

  for (int iter = 1; iter <= settings.max_iterations; ++iter) {
    res.iterations = iter;
    auto [fy, g] = obj.eval_with_gradient(y);
    require_finite(fy);
    if (!g.allFinite()) {
      throw InvalidObjectiveError("minimize_l1: gradient evaluated to a non-finite value");
    }
    gy = std::move(g);

    // Backtracking line search on the quadratic majorization at y.
    double fz = 0.0;
    for (;;) {
      prox(y - step * gy, step, z);
      fz = obj.eval(z);
      diff = z - y;
      const double bound =
          fy + gy.dot(diff) + diff.squaredNorm() / (2.0 * step) +
          1e-12 * std::max(1.0, std::abs(fy));
      if (std::isfinite(fz) && fz <= bound) break;
      step *= settings.shrink;
      if (step < 1e-20) {
        throw InvalidObjectiveError("minimize_l1: line search step collapsed");
      }
    }

    const double gmap = (y - z).lpNorm<Eigen::Infinity>() / step;
    const double big_fz = fz + penalty(z);
    const bool improves = big_fz <= big_f;

    if (gmap <= settings.tolerance) {
      // Certify stationarity at the candidate before declaring convergence.
      const double kkt = kkt_residual(z, obj.gradient(z), lambda, obj.penalized);
      if (kkt <= settings.tolerance) {
        if (improves) {
          big_f = big_fz;
          res.objective_trace.push_back(big_f);
        }
        res.x = z;
        res.converged = true;
        res.gradient_map_norm = gmap;
        res.kkt = kkt;
        res.objective = big_fz;
        return res;
      }
    }
    res.gradient_map_norm = gmap;

    // Monotone (MFISTA) update: the accepted sequence never increases the
    // penalized objective; momentum restarts when the candidate is worse.
    const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_mom * t_mom));
    if (improves) {
      y = z + ((t_mom - 1.0) / t_next) * (z - x);
      x_old = x;
      x = z;
      big_f = big_fz;
      t_mom = t_next;
    } else {
      // A genuine overshoot re-anchors at the best iterate. Within rounding
      // of the optimum the search continues from the candidate instead;
      // re-proposing the identical candidate from x would cycle forever.
      const bool flat = big_fz <= big_f + 1e-12 * std::max(1.0, std::abs(big_f));
      y = flat ? z : x;
      x_old = x;
      t_mom = 1.0;
    }
    res.objective_trace.push_back(big_f);

    // The penalized problem can be unbounded below (separable data at a
    // tiny penalty); stop instead of burning the iteration budget.
    if (big_f < -1e10 || x.lpNorm<Eigen::Infinity>() > 1e8) {
      res.x = x;
      res.converged = false;
      res.diverged = true;
      res.kkt = std::numeric_limits<double>::infinity();
      res.objective = big_f;
      return res;
    }
  }

  res.x = x;
  res.converged = false;
  res.kkt = kkt_residual(x, obj.gradient(x), lambda, obj.penalized);
  res.objective = big_f;
  return res;
}

// Geometric penalty grid from lambda_max down to ratio * lambda_max.
inline VectorXd lambda_grid(double lambda_max, int points = 50,
                            double ratio = 1e-3) {
  if (points < 1) throw ConfigError("lambda_grid: need at least one point");
  if (!(ratio > 0.0 && ratio < 1.0)) throw ConfigError("lambda_grid: ratio must lie in (0, 1)");
  lambda_max = std::max(lambda_max, 1e-12);
  VectorXd grid(points);
  if (points == 1) {
    grid(0) = lambda_max;
    return grid;
  }
  const double factor = std::pow(ratio, 1.0 / (points - 1));
  grid(0) = lambda_max;
  for (int i = 1; i < points; ++i) grid(i) = grid(i - 1) * factor;
  return grid;
}

// Deterministic K-fold assignment: a seeded shuffle of the row indices dealt
// round-robin. Returns fold labels in [0, folds) per row.
inline std::vector<int> fold_assignment(Index n, int folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("fold_assignment: fold count must be >= 2");
  if (static_cast<Index>(folds) > n) throw ConfigError("fold_assignment: more folds than rows");
  std::vector<Index> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), Index{0});
  Rng rng(seed);
  shuffle(perm, rng);
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < perm.size(); ++i) {
    labels[static_cast<std::size_t>(perm[i])] = static_cast<int>(i % folds);
  }
  return labels;
}

// Penalty grid plus the held-out loss surface from cross-validation.
struct PenaltyPath {
  VectorXd lambdas;       // strictly decreasing
  int fold_count = 0;
  MatrixXd heldout_loss;  // fold_count x lambdas.size()
};

struct CvResult {
  double lambda = 0.0;
  Index index = 0;
  PenaltyPath path;
};

using ObjectiveBuilder =
    std::function<SmoothObjective(const std::vector<Index>&)>;

// K-fold selection of the penalty level: fits the full grid on each training
// split (warm-started along the path) and picks the grid element with the
// smallest average held-out loss, breaking ties toward the larger lambda.
inline CvResult select_lambda_cv(const std::vector<int>& folds,
                                 const ObjectiveBuilder& builder,
                                 const VectorXd& grid, int k,
                                 const SolverSettings& settings) {
  if (k < 2) throw ConfigError("select_lambda_cv: fold count must be >= 2");
  if (grid.size() == 0) throw ConfigError("select_lambda_cv: empty penalty grid");
  for (Index l = 1; l < grid.size(); ++l) {
    if (!(grid(l) < grid(l - 1))) {
      throw ConfigError("select_lambda_cv: grid must be strictly decreasing");
    }
  }

  const Index n = static_cast<Index>(folds.size());
  CvResult out;
  out.path.lambdas = grid;
  out.path.fold_count = k;
  out.path.heldout_loss = MatrixXd::Zero(k, grid.size());

  for (int f = 0; f < k; ++f) {
    std::vector<Index> train, held;
    train.reserve(static_cast<std::size_t>(n));
    held.reserve(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) {
      (folds[static_cast<std::size_t>(i)] == f ? held : train).push_back(i);
    }
    if (train.empty() || held.empty()) {
      throw DegenerateFoldError("select_lambda_cv: fold " + std::to_string(f) +
                                " leaves an empty split");
    }
    const SmoothObjective train_obj = builder(train);
    const SmoothObjective held_obj = builder(held);
    VectorXd x = VectorXd::Zero(train_obj.dimension);
    for (Index l = 0; l < grid.size(); ++l) {
      MinimizeResult r = minimize_l1(train_obj, grid(l), x, settings);
      if (r.diverged) {
        // Every smaller penalty is at least as unbounded; rule them out.
        for (Index ll = l; ll < grid.size(); ++ll) {
          out.path.heldout_loss(f, ll) = std::numeric_limits<double>::infinity();
        }
        break;
      }
      x = r.x;
      const double loss = held_obj.eval(x);
      out.path.heldout_loss(f, l) =
          std::isfinite(loss) ? loss : std::numeric_limits<double>::infinity();
    }
  }

  const VectorXd avg = out.path.heldout_loss.colwise().mean();
  Index best = 0;
  for (Index l = 1; l < avg.size(); ++l) {
    if (avg(l) < avg(best)) best = l;
  }
  out.index = best;
  out.lambda = grid(best);
  return out;
}

}  // namespace cbal
