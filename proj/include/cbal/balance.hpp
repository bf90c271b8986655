#pragma once

#include <Eigen/Dense>
#include <vector>

#include "cbal/model.hpp"
#include "cbal/outcome.hpp"
#include "cbal/propensity.hpp"

namespace cbal {

enum class PipelineKind { linear, glm };

// Ordered support of the outcome fit, intercept forced in.
struct Support {
  std::vector<Index> indices;  // strictly increasing, indices[0] == 0

  Index size() const { return static_cast<Index>(indices.size()); }
};

// S = {0} union {j : |alpha_j| > threshold}, thresholded on the standardized
// scale (proximal fits produce exact zeros; the threshold only guards
// round-off). Throws when the support exceeds the treated count, in which
// case the balance equations are unsolvable.
inline Support extract_support(const OutcomeFit& fit, double zero_threshold) {
  if (zero_threshold < 0.0) throw Error("extract_support: threshold must be nonnegative");
  Support s;
  s.indices.push_back(0);
  for (Index j = 1; j < fit.alpha.size(); ++j) {
    const double scale = fit.column_scale.size() == fit.alpha.size() ? fit.column_scale(j) : 1.0;
    if (std::abs(fit.alpha(j) * scale) > zero_threshold) s.indices.push_back(j);
  }
  if (fit.treated_count > 0 && s.size() > fit.treated_count) {
    throw OverSaturatedSupportError(
        "extract_support: support of size " + std::to_string(s.size()) +
        " exceeds the treated count " + std::to_string(fit.treated_count));
  }
  return s;
}

inline MatrixXd select_columns(const MatrixXd& x, const Support& s) {
  MatrixXd out(x.rows(), s.size());
  for (Index k = 0; k < s.size(); ++k) out.col(k) = x.col(s.indices[static_cast<std::size_t>(k)]);
  return out;
}

inline VectorXd select_coords(const VectorXd& v, const Support& s) {
  VectorXd out(s.size());
  for (Index k = 0; k < s.size(); ++k) out(k) = v(s.indices[static_cast<std::size_t>(k)]);
  return out;
}

// Balancing basis f_i: rows of X restricted to the support (linear pipeline)
// or the same rows weighted by b''(alpha' x_i) (glm pipeline).
inline MatrixXd balance_basis(const Dataset& data, const Support& support,
                              PipelineKind pipeline, const OutcomeFit& outcome) {
  MatrixXd xs = select_columns(data.X, support);
  if (pipeline == PipelineKind::linear) return xs;
  const VectorXd u = data.X * outcome.alpha;
  for (Index i = 0; i < xs.rows(); ++i) {
    xs.row(i) *= outcome.family.b_double_prime(u(i));
  }
  return xs;
}

// g(gamma) = (1/n) sum_i {T_i / pi(gamma'x_{i,S} + beta_hat'x_{i,S^c}) - 1} f_i.
inline VectorXd balance_residual(const VectorXd& gamma, const Dataset& data,
                                 const Support& support, const VectorXd& beta_hat,
                                 const MatrixXd& basis, const Link& link) {
  const MatrixXd xs = select_columns(data.X, support);
  const VectorXd offset = data.X * beta_hat - xs * select_coords(beta_hat, support);
  const VectorXd eta = xs * gamma + offset;
  VectorXd q(data.n());
  for (Index i = 0; i < data.n(); ++i) {
    q(i) = data.T(i) / link.pi(eta(i)) - 1.0;
  }
  return basis.transpose() * q / static_cast<double>(data.n());
}

struct CalibrationSettings {
  double damping_init = 1e-3;
  int max_iterations = 200;
  double tolerance = 1e-10;  // inf-norm of the balance residual
};

struct CalibrationResult {
  VectorXd gamma;       // coefficients on the support
  VectorXd tilde_beta;  // gamma on S, beta_hat on S^c
  VectorXd tilde_pi;    // pi(tilde_beta' x_i), capped to [1e-6, 1 - 1e-6]
  double residual_norm = std::numeric_limits<double>::infinity();  // ||g||_2
  double residual_inf = std::numeric_limits<double>::infinity();
  bool converged = false;
  int iterations = 0;
};

// Step-3 calibration: Levenberg-Marquardt on the balance equations with the
// analytic Jacobian, started at beta_hat restricted to the support. The
// system is exactly identified, so a near-zero residual is the expected
// outcome; non-convergence is reported, not thrown (estimation may proceed
// with the warning recorded in diagnostics).
inline CalibrationResult calibrate(const Dataset& data, const Support& support,
                                   const PropensityFit& ps, const OutcomeFit& outcome,
                                   PipelineKind pipeline,
                                   const CalibrationSettings& settings = {},
                                   const Link& link = {}) {
  const Index n = data.n();
  const Index s = support.size();
  if (s > data.treated_count()) {
    throw OverSaturatedSupportError("calibrate: support exceeds the treated count");
  }
  const MatrixXd xs = select_columns(data.X, support);
  const MatrixXd basis = balance_basis(data, support, pipeline, outcome);
  const VectorXd offset =
      data.X * ps.beta_hat - xs * select_coords(ps.beta_hat, support);
  const double inv_n = 1.0 / static_cast<double>(n);

  const auto residual_at = [&](const VectorXd& g) {
    const VectorXd eta = xs * g + offset;
    VectorXd q(n);
    for (Index i = 0; i < n; ++i) q(i) = data.T(i) / link.pi(eta(i)) - 1.0;
    return VectorXd(basis.transpose() * q * inv_n);
  };
  // J = -(1/n) sum_i T_i pi'(eta)/pi^2(eta) f_i x_{i,S}'
  const auto jacobian_at = [&](const VectorXd& g) {
    const VectorXd eta = xs * g + offset;
    VectorXd w(n);
    for (Index i = 0; i < n; ++i) {
      if (data.T(i) == 0.0) {
        w(i) = 0.0;
      } else {
        const double p = link.pi(eta(i));
        w(i) = -link.pi_prime(eta(i)) / (p * p) * inv_n;
      }
    }
    return MatrixXd(basis.transpose() * w.asDiagonal() * xs);
  };

  CalibrationResult result;
  VectorXd gamma = select_coords(ps.beta_hat, support);
  VectorXd r = residual_at(gamma);
  double mu = settings.damping_init;
  int iter = 0;

  while (iter < settings.max_iterations &&
         r.lpNorm<Eigen::Infinity>() > settings.tolerance) {
    const MatrixXd j = jacobian_at(gamma);
    const MatrixXd jtj = j.transpose() * j;
    const VectorXd jtr = j.transpose() * r;
    bool stepped = false;
    while (iter < settings.max_iterations) {
      ++iter;
      MatrixXd h = jtj;
      h.diagonal().array() += mu;
      const VectorXd delta = h.ldlt().solve(-jtr);
      const VectorXd trial = gamma + delta;
      const VectorXd r_trial = residual_at(trial);
      if (r_trial.norm() < r.norm()) {
        gamma = trial;
        r = r_trial;
        mu = std::max(mu * 0.25, 1e-14);
        stepped = true;
        break;
      }
      mu *= 4.0;
      if (mu > 1e14) break;
    }
    if (!stepped) break;  // damping exhausted
  }

  // Newton polish: the square Jacobian is well conditioned near the root and
  // a step or two squares the residual down to round-off.
  for (int p = 0; p < 3 && r.lpNorm<Eigen::Infinity>() > 1e-15; ++p) {
    const MatrixXd j = jacobian_at(gamma);
    const VectorXd delta = j.colPivHouseholderQr().solve(-r);
    const VectorXd trial = gamma + delta;
    const VectorXd r_trial = residual_at(trial);
    if (r_trial.norm() < r.norm()) {
      gamma = trial;
      r = r_trial;
    } else {
      break;
    }
  }

  result.gamma = gamma;
  result.iterations = iter;
  result.residual_norm = r.norm();
  result.residual_inf = r.lpNorm<Eigen::Infinity>();
  result.converged = result.residual_inf <= settings.tolerance;

  result.tilde_beta = ps.beta_hat;
  for (Index k = 0; k < s; ++k) {
    result.tilde_beta(support.indices[static_cast<std::size_t>(k)]) = gamma(k);
  }
  const VectorXd eta = data.X * result.tilde_beta;
  result.tilde_pi.resize(n);
  for (Index i = 0; i < n; ++i) {
    result.tilde_pi(i) = std::min(std::max(link.pi(eta(i)), 1e-6), 1.0 - 1e-6);
  }
  return result;
}

}  // namespace cbal
