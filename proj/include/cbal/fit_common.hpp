#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>

#include "cbal/optimize.hpp"

namespace cbal {

// Penalty level selection: a fixed lambda, or K-fold cross-validation over a
// geometric grid anchored at the smallest lambda that zeroes every penalized
// coordinate at the null model.
struct PenaltySpec {
  enum class Mode { fixed, cv };

  Mode mode = Mode::cv;
  double lambda = 0.0;  // fixed mode
  int folds = 5;
  std::uint64_t seed = 0;
  int grid_points = 50;
  double grid_ratio = 1e-3;

  static PenaltySpec Fixed(double lambda) {
    PenaltySpec p;
    p.mode = Mode::fixed;
    p.lambda = lambda;
    return p;
  }
  static PenaltySpec Cv(int folds = 5, std::uint64_t seed = 0) {
    PenaltySpec p;
    p.mode = Mode::cv;
    p.folds = folds;
    p.seed = seed;
    return p;
  }
};

namespace detail {

// Population standard deviation per column; the intercept and zero-variance
// columns keep scale 1.
inline VectorXd column_scales(const MatrixXd& x) {
  const Index n = x.rows();
  VectorXd s = VectorXd::Ones(x.cols());
  for (Index j = 1; j < x.cols(); ++j) {
    const double mean = x.col(j).mean();
    const double var = (x.col(j).array() - mean).square().sum() / static_cast<double>(n);
    if (var > 1e-24) s(j) = std::sqrt(var);
  }
  return s;
}

// Columns divided by their scale; no centering, the intercept is untouched.
inline MatrixXd standardized_design(const MatrixXd& x, const VectorXd& scales) {
  MatrixXd xs = x;
  for (Index j = 1; j < x.cols(); ++j) xs.col(j) /= scales(j);
  return xs;
}

struct PenalizedProblem {
  Index n_rows = 0;          // rows eligible for fold assignment
  ObjectiveBuilder builder;  // subset objective on the standardized design
  SmoothObjective full;      // all-rows objective
  VectorXd init;             // solver start (the zero vector)
  VectorXd null_coef;        // intercept-only solution, anchors lambda_max
};

struct PenalizedFitOutput {
  MinimizeResult fit;
  double lambda = 0.0;
  PenaltyPath path;  // populated in cv mode
};

inline PenalizedFitOutput fit_penalized(const PenalizedProblem& prob,
                                        const PenaltySpec& spec,
                                        const SolverSettings& settings) {
  PenalizedFitOutput out;
  if (spec.mode == PenaltySpec::Mode::fixed) {
    out.fit = minimize_l1(prob.full, spec.lambda, prob.init, settings);
    out.lambda = spec.lambda;
    return out;
  }
  const VectorXd g_null = prob.full.gradient(prob.null_coef);
  double lambda_max = 0.0;
  for (Index j = 0; j < g_null.size(); ++j) {
    if (prob.full.penalized(j)) lambda_max = std::max(lambda_max, std::abs(g_null(j)));
  }
  const VectorXd grid = lambda_grid(lambda_max, spec.grid_points, spec.grid_ratio);
  const std::vector<int> folds = fold_assignment(prob.n_rows, spec.folds, spec.seed);
  const CvResult cv = select_lambda_cv(folds, prob.builder, grid, spec.folds, settings);

  // Refit on the full data, warm-started along the grid down to the
  // selected point; a divergent intermediate iterate is not adopted as a
  // warm start.
  VectorXd x = prob.init;
  for (Index l = 0; l <= cv.index; ++l) {
    out.fit = minimize_l1(prob.full, grid(l), x, settings);
    if (!out.fit.diverged) x = out.fit.x;
  }
  out.lambda = cv.lambda;
  out.path = cv.path;
  return out;
}

}  // namespace detail
}  // namespace cbal
