#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "cbal/fit_common.hpp"
#include "cbal/model.hpp"

namespace cbal {

// Quasi-score (1/n) sum_i {T_i/pi(m_i) - 1} w1_i(m_i) x_i with m_i = beta'x_i.
// For w1 = pi this reduces to the logistic score (1/n) sum (T_i - pi(m_i)) x_i,
// computed in that form.
inline VectorXd quasi_score(const VectorXd& beta, const Dataset& data,
                            const PropensityWeight& w1, const Link& link) {
  const Index n = data.n();
  const VectorXd m = data.X * beta;
  VectorXd a(n);
  for (Index i = 0; i < n; ++i) {
    const double t = data.T(i);
    const double mc = clamp_index(m(i));
    switch (w1.selector) {
      case PropensityWeight::Selector::pi:
        a(i) = t - link.pi(mc);
        break;
      case PropensityWeight::Selector::one:
        a(i) = t * (1.0 + std::exp(-mc)) - 1.0;
        break;
      case PropensityWeight::Selector::bpp:
        a(i) = w1.constants(i) * (t * (1.0 + std::exp(-mc)) - 1.0);
        break;
    }
  }
  return data.X.transpose() * a / static_cast<double>(n);
}

namespace detail {

// Materialized rows of the (standardized) quasi-likelihood problem. The
// objective handed to the solver is -Q, normalized by the row count.
struct QuasiProblemData {
  MatrixXd X;
  VectorXd T;
  VectorXd c;  // bpp constants for these rows; empty otherwise
  PropensityWeight::Selector sel = PropensityWeight::Selector::one;
  Link link;

  double value(const VectorXd& beta) const {
    const VectorXd m = X * beta;
    return value_at_index(m);
  }

  double value_at_index(const VectorXd& m) const {
    const double log2 = std::log(2.0);
    double sum = 0.0;
    for (Index i = 0; i < X.rows(); ++i) {
      const double t = T(i);
      const double mi = m(i);
      switch (sel) {
        case PropensityWeight::Selector::pi:
          sum += t * mi - log1p_exp(mi) + log2;
          break;
        case PropensityWeight::Selector::one:
          sum += (t - 1.0) * mi - t * std::exp(-clamp_index(mi)) + t;
          break;
        case PropensityWeight::Selector::bpp:
          sum += c(i) * ((t - 1.0) * mi - t * std::exp(-clamp_index(mi)) + t);
          break;
      }
    }
    return -sum / static_cast<double>(X.rows());
  }

  std::pair<double, VectorXd> value_gradient(const VectorXd& beta) const {
    const VectorXd m = X * beta;
    const double inv_n = 1.0 / static_cast<double>(X.rows());
    VectorXd a(X.rows());
    for (Index i = 0; i < X.rows(); ++i) {
      const double t = T(i);
      const double mi = m(i);
      const double mc = clamp_index(mi);
      // The exp term of the value freezes once the clamp binds, so its
      // derivative must vanish there too; an inconsistent slope collapses
      // the line search on separable data.
      const double e = mi > -kIndexClamp ? std::exp(-mc) : 0.0;
      double s = 0.0;
      switch (sel) {
        case PropensityWeight::Selector::pi:
          s = t - link.pi(mc);
          break;
        case PropensityWeight::Selector::one:
          s = t * (1.0 + e) - 1.0;
          break;
        case PropensityWeight::Selector::bpp:
          s = c(i) * (t * (1.0 + e) - 1.0);
          break;
      }
      a(i) = -s * inv_n;
    }
    return {value_at_index(m), X.transpose() * a};
  }
};

inline SmoothObjective quasi_objective(std::shared_ptr<const QuasiProblemData> p) {
  SmoothObjective o;
  o.dimension = p->X.cols();
  o.penalized = all_but_intercept(o.dimension);
  o.value = [p](const VectorXd& b) { return p->value(b); };
  o.gradient = [p](const VectorXd& b) { return p->value_gradient(b).second; };
  o.value_and_gradient = [p](const VectorXd& b) { return p->value_gradient(b); };
  return o;
}

}  // namespace detail

struct PropensityFit {
  VectorXd beta_hat;
  double lambda_used = 0.0;
  bool converged = false;
  double gradient_residual = std::numeric_limits<double>::infinity();
  VectorXd fitted_pi;
  VectorXd linear_index;  // beta_hat' x_i
  VectorXd column_scale;
  PenaltyPath cv_path;  // populated in cv mode
};

// Step-1 fit: beta_hat = argmin -Q(beta) + lambda ||beta||_1 with the
// intercept unpenalized. Penalized coordinates are standardized to unit
// sample standard deviation internally and mapped back on output.
inline PropensityFit fit_initial_propensity(const Dataset& data,
                                            const PropensityWeight& w1,
                                            const Link& link,
                                            const PenaltySpec& penalty,
                                            const SolverSettings& settings) {
  data.validate();
  if (link.id != LinkId::logistic) {
    throw UnsupportedLinkError("fit_initial_propensity: only the logistic link ships");
  }
  if (w1.selector == PropensityWeight::Selector::bpp &&
      w1.constants.size() != data.n()) {
    throw Error("fit_initial_propensity: bpp weight needs one constant per observation");
  }

  const Index n = data.n();
  const Index d = data.d();
  const bool bpp = w1.selector == PropensityWeight::Selector::bpp;
  const VectorXd scales = detail::column_scales(data.X);

  auto full = std::make_shared<detail::QuasiProblemData>();
  full->X = detail::standardized_design(data.X, scales);
  full->T = data.T;
  if (bpp) full->c = w1.constants;
  full->sel = w1.selector;
  full->link = link;

  ObjectiveBuilder builder = [full](const std::vector<Index>& rows) {
    auto sub = std::make_shared<detail::QuasiProblemData>();
    const Index m = static_cast<Index>(rows.size());
    sub->X.resize(m, full->X.cols());
    sub->T.resize(m);
    if (full->c.size() > 0) sub->c.resize(m);
    Index treated = 0;
    for (Index i = 0; i < m; ++i) {
      sub->X.row(i) = full->X.row(rows[static_cast<std::size_t>(i)]);
      sub->T(i) = full->T(rows[static_cast<std::size_t>(i)]);
      if (full->c.size() > 0) sub->c(i) = full->c(rows[static_cast<std::size_t>(i)]);
      treated += sub->T(i) == 1.0;
    }
    if (treated == 0 || treated == m) {
      throw DegenerateFoldError(
          "propensity objective needs both treated and control rows in every fold");
    }
    sub->sel = full->sel;
    sub->link = full->link;
    return detail::quasi_objective(sub);
  };

  // Intercept-only solution: pi(b0) equals the (w1-weighted) treated share.
  double share;
  if (bpp) {
    share = data.T.dot(w1.constants) / w1.constants.sum();
  } else {
    share = data.T.mean();
  }
  share = std::min(std::max(share, 1e-12), 1.0 - 1e-12);
  VectorXd null_coef = VectorXd::Zero(d);
  null_coef(0) = clamp_index(std::log(share / (1.0 - share)));

  detail::PenalizedProblem prob;
  prob.n_rows = n;
  prob.builder = std::move(builder);
  prob.full = detail::quasi_objective(full);
  prob.init = VectorXd::Zero(d);
  prob.null_coef = std::move(null_coef);

  const detail::PenalizedFitOutput out = detail::fit_penalized(prob, penalty, settings);

  PropensityFit fit;
  fit.column_scale = scales;
  fit.beta_hat = out.fit.x.cwiseQuotient(scales);
  fit.lambda_used = out.lambda;
  fit.converged = out.fit.converged;
  fit.gradient_residual = out.fit.kkt;
  fit.cv_path = out.path;
  fit.linear_index = data.X * fit.beta_hat;
  fit.fitted_pi.resize(n);
  for (Index i = 0; i < n; ++i) fit.fitted_pi(i) = link.pi(fit.linear_index(i));
  return fit;
}

}  // namespace cbal
