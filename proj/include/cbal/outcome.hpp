#pragma once

#include <memory>
#include <utility>
#include <vector>

#include "cbal/fit_common.hpp"
#include "cbal/model.hpp"
#include "cbal/propensity.hpp"

namespace cbal {

// Weighted least squares loss over the treatment group:
// (1/n) sum_i T_i w2_i (y_i - alpha'x_i)^2.
inline double weighted_ls_loss(const VectorXd& alpha, const Dataset& data,
                               const VectorXd& w2_values) {
  if (w2_values.size() != data.n()) throw Error("weighted_ls_loss: w2 length mismatch");
  const VectorXd r = data.Y - data.X * alpha;
  double sum = 0.0;
  for (Index i = 0; i < data.n(); ++i) {
    sum += data.T(i) * w2_values(i) * r(i) * r(i);
  }
  return sum / static_cast<double>(data.n());
}

inline VectorXd weighted_ls_gradient(const VectorXd& alpha, const Dataset& data,
                                     const VectorXd& w2_values) {
  const VectorXd r = data.Y - data.X * alpha;
  VectorXd a(data.n());
  for (Index i = 0; i < data.n(); ++i) {
    a(i) = -2.0 * data.T(i) * w2_values(i) * r(i);
  }
  return data.X.transpose() * a / static_cast<double>(data.n());
}

// Negated weighted exponential-family log-likelihood over the treatment
// group: -(1/n) sum_i T_i w2_i / a(phi) {y_i u_i - b(u_i)}, u_i = alpha'x_i.
inline double glm_loss(const VectorXd& alpha, const Dataset& data,
                       const Family& family, const VectorXd& w2_values) {
  if (w2_values.size() != data.n()) throw Error("glm_loss: w2 length mismatch");
  const VectorXd u = data.X * alpha;
  double sum = 0.0;
  for (Index i = 0; i < data.n(); ++i) {
    if (data.T(i) == 0.0) continue;
    sum += w2_values(i) * (data.Y(i) * u(i) - family.b(u(i)));
  }
  return -sum / (family.dispersion * static_cast<double>(data.n()));
}

inline VectorXd glm_loss_gradient(const VectorXd& alpha, const Dataset& data,
                                  const Family& family, const VectorXd& w2_values) {
  const VectorXd u = data.X * alpha;
  VectorXd a(data.n());
  const double inv = 1.0 / (family.dispersion * static_cast<double>(data.n()));
  for (Index i = 0; i < data.n(); ++i) {
    a(i) = data.T(i) == 0.0
               ? 0.0
               : -w2_values(i) * (data.Y(i) - family.b_prime(u(i))) * inv;
  }
  return data.X.transpose() * a;
}

struct OutcomeFit {
  VectorXd alpha;
  double lambda_used = 0.0;
  Family family;
  VectorXd weights_applied;  // per-row w2 values (ones for the unweighted fit)
  bool converged = false;
  double gradient_residual = std::numeric_limits<double>::infinity();
  VectorXd column_scale;
  Index treated_count = 0;
  PenaltyPath cv_path;
};

namespace detail {

// Treated rows of the standardized design; inv_n keeps the original 1/n
// normalization of the subset the rows came from.
struct WlsProblemData {
  MatrixXd X;
  VectorXd y;
  VectorXd w;
  double inv_n = 0.0;

  std::pair<double, VectorXd> value_gradient(const VectorXd& alpha) const {
    const VectorXd r = y - X * alpha;
    double sum = 0.0;
    VectorXd a(X.rows());
    for (Index i = 0; i < X.rows(); ++i) {
      sum += w(i) * r(i) * r(i);
      a(i) = -2.0 * w(i) * r(i) * inv_n;
    }
    return {sum * inv_n, X.transpose() * a};
  }
  double value(const VectorXd& alpha) const {
    const VectorXd r = y - X * alpha;
    double sum = 0.0;
    for (Index i = 0; i < X.rows(); ++i) sum += w(i) * r(i) * r(i);
    return sum * inv_n;
  }
};

struct GlmProblemData {
  MatrixXd X;
  VectorXd y;
  VectorXd w;
  double inv_n = 0.0;
  Family family;

  std::pair<double, VectorXd> value_gradient(const VectorXd& alpha) const {
    const VectorXd u = X * alpha;
    const double scale = inv_n / family.dispersion;
    double sum = 0.0;
    VectorXd a(X.rows());
    for (Index i = 0; i < X.rows(); ++i) {
      sum += w(i) * (y(i) * u(i) - family.b(u(i)));
      // b is evaluated at the clamped index for the poisson family, so its
      // slope vanishes once the clamp binds.
      double bp = family.b_prime(u(i));
      if (family.id == Family::Id::poisson && std::abs(u(i)) >= kIndexClamp) {
        bp = 0.0;
      }
      a(i) = -w(i) * (y(i) - bp) * scale;
    }
    return {-sum * scale, X.transpose() * a};
  }
  double value(const VectorXd& alpha) const {
    const VectorXd u = X * alpha;
    double sum = 0.0;
    for (Index i = 0; i < X.rows(); ++i) {
      sum += w(i) * (y(i) * u(i) - family.b(u(i)));
    }
    return -sum * inv_n / family.dispersion;
  }
};

template <typename Problem>
SmoothObjective outcome_objective(std::shared_ptr<const Problem> p, Index dimension) {
  SmoothObjective o;
  o.dimension = dimension;
  o.penalized = all_but_intercept(dimension);
  o.value = [p](const VectorXd& a) { return p->value(a); };
  o.gradient = [p](const VectorXd& a) { return p->value_gradient(a).second; };
  o.value_and_gradient = [p](const VectorXd& a) { return p->value_gradient(a); };
  return o;
}

// Shared scaffolding for the two outcome fits. make_problem(rows) must
// materialize the treated rows of the subset and set inv_n = 1/|subset|.
template <typename Problem>
OutcomeFit run_outcome_fit(const Dataset& data, const VectorXd& w2_values,
                           const Family& family, double null_intercept,
                           const std::function<std::shared_ptr<Problem>(
                               const std::vector<Index>&)>& make_problem,
                           const PenaltySpec& penalty,
                           const SolverSettings& settings) {
  const Index n = data.n();
  const Index d = data.d();
  const VectorXd scales = column_scales(data.X);

  std::vector<Index> all_rows(static_cast<std::size_t>(n));
  std::iota(all_rows.begin(), all_rows.end(), Index{0});

  ObjectiveBuilder builder = [make_problem, d](const std::vector<Index>& rows) {
    return outcome_objective<Problem>(make_problem(rows), d);
  };

  VectorXd null_coef = VectorXd::Zero(d);
  null_coef(0) = null_intercept;

  detail::PenalizedProblem prob;
  prob.n_rows = n;
  prob.builder = builder;
  prob.full = builder(all_rows);
  prob.init = VectorXd::Zero(d);
  prob.null_coef = std::move(null_coef);

  const PenalizedFitOutput out = fit_penalized(prob, penalty, settings);

  OutcomeFit fit;
  fit.column_scale = scales;
  fit.alpha = out.fit.x.cwiseQuotient(scales);
  fit.lambda_used = out.lambda;
  fit.family = family;
  fit.weights_applied = w2_values;
  fit.converged = out.fit.converged;
  fit.gradient_residual = out.fit.kkt;
  fit.treated_count = data.treated_count();
  fit.cv_path = out.path;
  return fit;
}

inline void check_weights_positive(const VectorXd& w, const char* where) {
  for (Index i = 0; i < w.size(); ++i) {
    if (!(w(i) > 0.0) || !std::isfinite(w(i))) {
      throw Error(std::string(where) + ": w2 weights must be strictly positive and finite");
    }
  }
}

}  // namespace detail

// Step-2 fit of the linear outcome model within the treatment group, with
// weights w2(beta_hat' x_i) from the initial propensity fit.
inline OutcomeFit fit_outcome_linear(const Dataset& data, const PropensityFit& ps,
                                     const OutcomeWeight& w2, const Link& link,
                                     const PenaltySpec& penalty,
                                     const SolverSettings& settings) {
  data.validate();
  if (data.treated_count() < 2) {
    throw DegenerateDataError("fit_outcome_linear: need at least 2 treated rows");
  }
  const Index n = data.n();
  VectorXd w2_values(n);
  for (Index i = 0; i < n; ++i) w2_values(i) = w2.value(ps.linear_index(i), link);
  detail::check_weights_positive(w2_values, "fit_outcome_linear");

  const VectorXd scales = detail::column_scales(data.X);
  auto xs = std::make_shared<MatrixXd>(detail::standardized_design(data.X, scales));
  auto t = std::make_shared<VectorXd>(data.T);
  auto y = std::make_shared<VectorXd>(data.Y);
  auto w = std::make_shared<VectorXd>(w2_values);

  auto make_problem = std::function<std::shared_ptr<detail::WlsProblemData>(
      const std::vector<Index>&)>(
      [xs, t, y, w](const std::vector<Index>& rows) {
        auto p = std::make_shared<detail::WlsProblemData>();
        Index treated = 0;
        for (Index r : rows) treated += (*t)(r) == 1.0;
        if (treated == 0) {
          throw DegenerateFoldError("outcome objective needs treated rows in every fold");
        }
        p->X.resize(treated, xs->cols());
        p->y.resize(treated);
        p->w.resize(treated);
        Index k = 0;
        for (Index r : rows) {
          if ((*t)(r) != 1.0) continue;
          p->X.row(k) = xs->row(r);
          p->y(k) = (*y)(r);
          p->w(k) = (*w)(r);
          ++k;
        }
        p->inv_n = 1.0 / static_cast<double>(rows.size());
        return p;
      });

  double wsum = 0.0, wysum = 0.0;
  for (Index i = 0; i < n; ++i) {
    if (data.T(i) == 1.0) {
      wsum += w2_values(i);
      wysum += w2_values(i) * data.Y(i);
    }
  }
  const double null_intercept = wysum / wsum;

  return detail::run_outcome_fit<detail::WlsProblemData>(
      data, w2_values, Family::Gaussian(), null_intercept, make_problem,
      penalty, settings);
}

// Penalized (weighted) maximum likelihood outcome fit for an exponential
// family, within the treatment group. Passing an empty w2 vector fits the
// unweighted model (the initial fit of the GLM pipeline).
inline OutcomeFit fit_outcome_glm(const Dataset& data, const Family& family,
                                  const VectorXd& w2_values_in,
                                  const PenaltySpec& penalty,
                                  const SolverSettings& settings) {
  data.validate();
  if (data.treated_count() < 2) {
    throw DegenerateDataError("fit_outcome_glm: need at least 2 treated rows");
  }
  const Index n = data.n();
  VectorXd w2_values =
      w2_values_in.size() == 0 ? VectorXd::Ones(n) : w2_values_in;
  if (w2_values.size() != n) throw Error("fit_outcome_glm: w2 length mismatch");
  detail::check_weights_positive(w2_values, "fit_outcome_glm");

  // Family compatibility is a precondition on the rows entering the fit.
  {
    VectorXd treated_y(data.treated_count());
    Index k = 0;
    for (Index i = 0; i < n; ++i) {
      if (data.T(i) == 1.0) treated_y(k++) = data.Y(i);
    }
    family.validate_outcome(treated_y);
  }

  const VectorXd scales = detail::column_scales(data.X);
  auto xs = std::make_shared<MatrixXd>(detail::standardized_design(data.X, scales));
  auto t = std::make_shared<VectorXd>(data.T);
  auto y = std::make_shared<VectorXd>(data.Y);
  auto w = std::make_shared<VectorXd>(w2_values);

  auto make_problem = std::function<std::shared_ptr<detail::GlmProblemData>(
      const std::vector<Index>&)>(
      [xs, t, y, w, family](const std::vector<Index>& rows) {
        auto p = std::make_shared<detail::GlmProblemData>();
        Index treated = 0;
        for (Index r : rows) treated += (*t)(r) == 1.0;
        if (treated == 0) {
          throw DegenerateFoldError("outcome objective needs treated rows in every fold");
        }
        p->X.resize(treated, xs->cols());
        p->y.resize(treated);
        p->w.resize(treated);
        Index k = 0;
        for (Index r : rows) {
          if ((*t)(r) != 1.0) continue;
          p->X.row(k) = xs->row(r);
          p->y(k) = (*y)(r);
          p->w(k) = (*w)(r);
          ++k;
        }
        p->inv_n = 1.0 / static_cast<double>(rows.size());
        p->family = family;
        return p;
      });

  // Intercept-only solution: b'(a0) equals the weighted treated mean of y.
  double wsum = 0.0, wysum = 0.0;
  for (Index i = 0; i < n; ++i) {
    if (data.T(i) == 1.0) {
      wsum += w2_values(i);
      wysum += w2_values(i) * data.Y(i);
    }
  }
  const double wmean = wysum / wsum;
  double null_intercept = 0.0;
  switch (family.id) {
    case Family::Id::gaussian:
      null_intercept = wmean;
      break;
    case Family::Id::poisson:
      null_intercept = clamp_index(std::log(std::max(wmean, 1e-12)));
      break;
    case Family::Id::binomial: {
      const double p = std::min(std::max(wmean / family.trials, 1e-12), 1.0 - 1e-12);
      null_intercept = clamp_index(std::log(p / (1.0 - p)));
      break;
    }
  }

  return detail::run_outcome_fit<detail::GlmProblemData>(
      data, w2_values, family, null_intercept, make_problem, penalty, settings);
}

}  // namespace cbal
