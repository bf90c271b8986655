#pragma once

#include <optional>

#include "cbal/balance.hpp"
#include "cbal/model.hpp"
#include "cbal/normal.hpp"
#include "cbal/outcome.hpp"
#include "cbal/propensity.hpp"

namespace cbal {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double length() const { return hi - lo; }
  bool contains(double v) const { return v >= lo && v <= hi; }
};

// Horvitz-Thompson estimator (1/n) sum_i T_i y_i / pi_i.
inline double horvitz_thompson(const Dataset& data, const VectorXd& tilde_pi) {
  double sum = 0.0;
  for (Index i = 0; i < data.n(); ++i) {
    if (data.T(i) == 1.0) sum += data.Y(i) / tilde_pi(i);
  }
  return sum / static_cast<double>(data.n());
}

// Normalized (Hajek) form; agrees with horvitz_thompson once the intercept
// is balanced.
inline double hajek(const Dataset& data, const VectorXd& tilde_pi) {
  double num = 0.0, den = 0.0;
  for (Index i = 0; i < data.n(); ++i) {
    if (data.T(i) == 1.0) {
      num += data.Y(i) / tilde_pi(i);
      den += 1.0 / tilde_pi(i);
    }
  }
  return num / den;
}

// AIPW estimator of the GLM pipeline:
// (1/n) sum T_i y_i / pi_i - (1/n) sum (T_i/pi_i - 1) b'(alpha'x_i).
inline double aipw_glm(const Dataset& data, const VectorXd& tilde_pi,
                       const OutcomeFit& outcome) {
  const VectorXd u = data.X * outcome.alpha;
  double sum = 0.0;
  for (Index i = 0; i < data.n(); ++i) {
    const double inv = data.T(i) == 1.0 ? 1.0 / tilde_pi(i) : 0.0;
    sum += data.T(i) * data.Y(i) * inv -
           (inv - 1.0) * outcome.family.b_prime(u(i));
  }
  return sum / static_cast<double>(data.n());
}

// AIPW form with the linear outcome model; equals horvitz_thompson once the
// selected covariates are balanced.
inline double aipw_linear(const Dataset& data, const VectorXd& tilde_pi,
                          const OutcomeFit& outcome) {
  const VectorXd u = data.X * outcome.alpha;
  double sum = 0.0;
  for (Index i = 0; i < data.n(); ++i) {
    const double inv = data.T(i) == 1.0 ? 1.0 / tilde_pi(i) : 0.0;
    sum += data.T(i) * data.Y(i) * inv + (1.0 - inv) * u(i);
  }
  return sum / static_cast<double>(data.n());
}

// Plug-in variance (1/n) sum {T_i/pi_i^2 (y_i - m_i)^2 + (m_i - mu1)^2} with
// m_i = alpha'x_i (linear) or b'(alpha'x_i) (glm).
inline double variance_hat(const Dataset& data, const VectorXd& tilde_pi,
                           const OutcomeFit& outcome, double mu1_hat,
                           PipelineKind pipeline) {
  const VectorXd u = data.X * outcome.alpha;
  double sum = 0.0;
  for (Index i = 0; i < data.n(); ++i) {
    const double m = pipeline == PipelineKind::linear
                         ? u(i)
                         : outcome.family.b_prime(u(i));
    if (data.T(i) == 1.0) {
      const double r = data.Y(i) - m;
      sum += r * r / (tilde_pi(i) * tilde_pi(i));
    }
    const double dev = m - mu1_hat;
    sum += dev * dev;
  }
  return sum / static_cast<double>(data.n());
}

// (1 - eta) interval: estimate +- z_{1-eta/2} sqrt(v_hat / n).
inline Interval confidence_interval(double estimate, double v_hat, Index n,
                                    double eta) {
  if (!(eta > 0.0 && eta < 1.0)) {
    throw InvalidLevelError("confidence_interval: eta must lie in (0, 1)");
  }
  if (v_hat < 0.0) throw Error("confidence_interval: negative variance");
  if (n < 1) throw Error("confidence_interval: n must be >= 1");
  const double half =
      normal_quantile(1.0 - eta / 2.0) * std::sqrt(v_hat / static_cast<double>(n));
  return {estimate - half, estimate + half};
}

struct EstimatorConfig {
  Family family = Family::Gaussian();
  PropensityWeight::Selector w1 = PropensityWeight::Selector::one;
  OutcomeWeight::Selector w2 = OutcomeWeight::Selector::ps_adjusted;
  PenaltySpec penalty_ps = PenaltySpec::Cv();
  PenaltySpec penalty_outcome = PenaltySpec::Cv();
  double level = 0.95;
  SolverSettings solver{};
  CalibrationSettings calibration{};
  double support_threshold = 1e-8;
  // GLM pipeline: skip the unweighted initial outcome fit. Only legal when
  // w1 does not depend on it (i.e. w1 != bpp).
  bool skip_initial_glm_outcome = false;
  std::optional<PipelineKind> pipeline;  // defaults to linear iff gaussian

  PipelineKind resolved_pipeline() const {
    if (pipeline) return *pipeline;
    return family.id == Family::Id::gaussian ? PipelineKind::linear
                                             : PipelineKind::glm;
  }

  void validate() const {
    if (!(level > 0.0 && level < 1.0)) {
      throw InvalidLevelError("EstimatorConfig: confidence level must lie in (0, 1)");
    }
    if (support_threshold < 0.0) {
      throw ConfigError("EstimatorConfig: support threshold must be nonnegative");
    }
    const PipelineKind p = resolved_pipeline();
    if (p == PipelineKind::linear && family.id != Family::Id::gaussian) {
      throw ConfigError("EstimatorConfig: a non-gaussian family requires the glm pipeline");
    }
    if (p == PipelineKind::linear && w1 == PropensityWeight::Selector::bpp) {
      throw ConfigError("EstimatorConfig: the bpp weight requires the glm pipeline");
    }
    if (skip_initial_glm_outcome && w1 == PropensityWeight::Selector::bpp) {
      throw ConfigError(
          "EstimatorConfig: the initial outcome fit cannot be skipped when w1 = bpp");
    }
    if (penalty_ps.mode == PenaltySpec::Mode::fixed && penalty_ps.lambda < 0.0) {
      throw ConfigError("EstimatorConfig: negative propensity penalty");
    }
    if (penalty_outcome.mode == PenaltySpec::Mode::fixed && penalty_outcome.lambda < 0.0) {
      throw ConfigError("EstimatorConfig: negative outcome penalty");
    }
  }
};

// One arm of the estimator with every intermediate artifact retained.
struct ArmEstimate {
  double mu_hat = 0.0;
  double v_hat = 0.0;
  Interval ci;
  PropensityFit propensity;
  OutcomeFit outcome;
  std::optional<OutcomeFit> outcome_initial;  // GLM step-1 fit, when run
  Support support;
  CalibrationResult calibration;
  PipelineKind pipeline = PipelineKind::linear;
  // diagnostics
  double hajek_mu = 0.0;
  double aipw_linear_mu = 0.0;
  double balance_residual_inf = 0.0;
  double normalization_residual = 0.0;
  double min_pi = 0.0;
  double max_pi = 0.0;
  bool sample_bounded = false;
  double max_kkt = 0.0;
};

struct EffectEstimate {
  ArmEstimate arm1;
  std::optional<ArmEstimate> arm0;
  double mu1_hat = std::numeric_limits<double>::quiet_NaN();
  double mu0_hat = std::numeric_limits<double>::quiet_NaN();
  double ate_hat = std::numeric_limits<double>::quiet_NaN();
  double v1_hat = std::numeric_limits<double>::quiet_NaN();
  double v0_hat = std::numeric_limits<double>::quiet_NaN();
  double v_ate = std::numeric_limits<double>::quiet_NaN();
  Interval ci;  // for mu1 in single-arm runs, for the ATE otherwise
  double level = 0.95;
  Index n = 0;
};

namespace detail {

inline VectorXd fitted_outcome_means(const Dataset& data, const OutcomeFit& out,
                                     PipelineKind pipeline) {
  VectorXd u = data.X * out.alpha;
  if (pipeline == PipelineKind::glm) {
    for (Index i = 0; i < u.size(); ++i) u(i) = out.family.b_prime(u(i));
  }
  return u;
}

inline ArmEstimate run_arm(const Dataset& data, const EstimatorConfig& config) {
  const Link link{};
  const PipelineKind pipeline = config.resolved_pipeline();
  ArmEstimate arm;
  arm.pipeline = pipeline;

  if (pipeline == PipelineKind::linear) {
    const PropensityWeight w1{config.w1, {}};
    arm.propensity = fit_initial_propensity(data, w1, link, config.penalty_ps,
                                            config.solver);
    arm.outcome = fit_outcome_linear(data, arm.propensity,
                                     OutcomeWeight{config.w2}, link,
                                     config.penalty_outcome, config.solver);
  } else {
    PropensityWeight w1{config.w1, {}};
    if (config.w1 == PropensityWeight::Selector::bpp) {
      arm.outcome_initial = fit_outcome_glm(data, config.family, VectorXd(),
                                            config.penalty_outcome, config.solver);
      const VectorXd u = data.X * arm.outcome_initial->alpha;
      VectorXd c(data.n());
      for (Index i = 0; i < data.n(); ++i) {
        c(i) = config.family.b_double_prime(u(i));
      }
      w1 = PropensityWeight::Bpp(std::move(c));
    } else if (!config.skip_initial_glm_outcome) {
      arm.outcome_initial = fit_outcome_glm(data, config.family, VectorXd(),
                                            config.penalty_outcome, config.solver);
    }
    arm.propensity = fit_initial_propensity(data, w1, link, config.penalty_ps,
                                            config.solver);
    VectorXd w2_values(data.n());
    const OutcomeWeight w2{config.w2};
    for (Index i = 0; i < data.n(); ++i) {
      w2_values(i) = w2.value(arm.propensity.linear_index(i), link);
    }
    arm.outcome = fit_outcome_glm(data, config.family, w2_values,
                                  config.penalty_outcome, config.solver);
  }

  arm.support = extract_support(arm.outcome, config.support_threshold);
  arm.calibration = calibrate(data, arm.support, arm.propensity, arm.outcome,
                              pipeline, config.calibration, link);

  const VectorXd& tilde_pi = arm.calibration.tilde_pi;
  arm.mu_hat = pipeline == PipelineKind::linear
                   ? horvitz_thompson(data, tilde_pi)
                   : aipw_glm(data, tilde_pi, arm.outcome);
  arm.v_hat = variance_hat(data, tilde_pi, arm.outcome, arm.mu_hat, pipeline);
  arm.ci = confidence_interval(arm.mu_hat, arm.v_hat, data.n(), 1.0 - config.level);

  // Diagnostics, all computed from the capped propensities used downstream.
  const MatrixXd basis = balance_basis(data, arm.support, pipeline, arm.outcome);
  VectorXd q(data.n());
  for (Index i = 0; i < data.n(); ++i) q(i) = data.T(i) / tilde_pi(i) - 1.0;
  arm.balance_residual_inf =
      (basis.transpose() * q / static_cast<double>(data.n()))
          .lpNorm<Eigen::Infinity>();
  arm.normalization_residual = q.mean();
  arm.hajek_mu = hajek(data, tilde_pi);
  arm.aipw_linear_mu = aipw_linear(data, tilde_pi, arm.outcome);
  arm.min_pi = tilde_pi.minCoeff();
  arm.max_pi = tilde_pi.maxCoeff();
  double y_min = std::numeric_limits<double>::infinity();
  double y_max = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < data.n(); ++i) {
    if (data.T(i) == 1.0) {
      y_min = std::min(y_min, data.Y(i));
      y_max = std::max(y_max, data.Y(i));
    }
  }
  // Boundedness holds exactly at exact balance; the attained normalization
  // residual bounds the possible overshoot.
  const double y_abs = std::max(std::abs(y_min), std::abs(y_max));
  const double slack =
      std::abs(arm.normalization_residual) * y_abs + 1e-12 * (1.0 + y_abs);
  arm.sample_bounded = arm.mu_hat >= y_min - slack && arm.mu_hat <= y_max + slack;
  arm.max_kkt = std::max(arm.propensity.gradient_residual,
                         arm.outcome.gradient_residual);
  if (arm.outcome_initial) {
    arm.max_kkt = std::max(arm.max_kkt, arm.outcome_initial->gradient_residual);
  }
  return arm;
}

}  // namespace detail

// Full single-arm pipeline for mu1 = E{Y(1)}.
inline EffectEstimate estimate_mu1(const Dataset& data,
                                   const EstimatorConfig& config) {
  config.validate();
  data.validate();
  EffectEstimate est;
  est.arm1 = detail::run_arm(data, config);
  est.mu1_hat = est.arm1.mu_hat;
  est.v1_hat = est.arm1.v_hat;
  est.ci = est.arm1.ci;
  est.level = config.level;
  est.n = data.n();
  return est;
}

// Two-arm pipeline: mu1 from (T, Y), mu0 from the label-swapped sample, each
// arm with its own propensity fit, outcome fit, support and calibration. The
// ATE variance combines the per-observation influence contributions.
inline EffectEstimate estimate_ate(const Dataset& data,
                                   const EstimatorConfig& config) {
  config.validate();
  data.validate();
  EffectEstimate est;
  est.arm1 = detail::run_arm(data, config);
  const Dataset swapped = data.swapped_arms();
  est.arm0 = detail::run_arm(swapped, config);

  est.mu1_hat = est.arm1.mu_hat;
  est.mu0_hat = est.arm0->mu_hat;
  est.ate_hat = est.mu1_hat - est.mu0_hat;
  est.v1_hat = est.arm1.v_hat;
  est.v0_hat = est.arm0->v_hat;
  est.level = config.level;
  est.n = data.n();

  const VectorXd m1 =
      detail::fitted_outcome_means(data, est.arm1.outcome, est.arm1.pipeline);
  const VectorXd m0 =
      detail::fitted_outcome_means(data, est.arm0->outcome, est.arm0->pipeline);
  const VectorXd& pi1 = est.arm1.calibration.tilde_pi;
  const VectorXd& pi0 = est.arm0->calibration.tilde_pi;

  double sum = 0.0;
  for (Index i = 0; i < data.n(); ++i) {
    const double t = data.T(i);
    const double a1 = t / pi1(i) * (data.Y(i) - m1(i)) + m1(i);
    const double a0 = (1.0 - t) / pi0(i) * (data.Y(i) - m0(i)) + m0(i);
    const double psi = a1 - a0 - est.ate_hat;
    sum += psi * psi;
  }
  est.v_ate = sum / static_cast<double>(data.n());
  est.ci = confidence_interval(est.ate_hat, est.v_ate, data.n(), 1.0 - config.level);
  return est;
}

}  // namespace cbal
