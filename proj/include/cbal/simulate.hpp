#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <functional>
#include <string>
#include <thread>
#include <vector>

#include "cbal/estimate.hpp"
#include "cbal/random.hpp"

namespace cbal {

enum class Scenario {
  both_correct,
  ps_misspecified,
  outcome_misspecified,
  both_misspecified
};

enum class OutcomeKind { linear, binomial_logistic };

struct ScenarioSpec {
  Scenario scenario = Scenario::both_correct;
  Index n = 500;
  Index d = 1000;  // generated covariates, excluding the intercept
  double rho = 0.5;
  int replications = 200;
  std::uint64_t master_seed = 1;
  OutcomeKind outcome_kind = OutcomeKind::linear;

  bool ps_transformed() const {
    return scenario == Scenario::ps_misspecified ||
           scenario == Scenario::both_misspecified;
  }
  bool outcome_transformed() const {
    return scenario == Scenario::outcome_misspecified ||
           scenario == Scenario::both_misspecified;
  }

  void validate() const {
    if (d < 10) throw ConfigError("ScenarioSpec: the generating process references X10, need d >= 10");
    if (n < 20) throw ConfigError("ScenarioSpec: n too small");
    if (!(rho > -1.0 && rho < 1.0)) throw ConfigError("ScenarioSpec: rho must lie in (-1, 1)");
    if (replications < 1) throw ConfigError("ScenarioSpec: need at least one replication");
  }
};

struct Truth {
  double mu1 = 0.0;
  double mu0 = 0.0;
  double ate = 0.0;
  double mc_se = 0.0;  // Monte Carlo standard error of the ate truth; 0 when analytic
};

namespace dgp {

// Seeds and draw count behind the frozen Monte Carlo constants below. The
// cbal-regen-constants tool reproduces them.
inline constexpr std::uint64_t kMomentSeed = 81241u;
inline constexpr std::uint64_t kTruthSeed = 81242u;
inline constexpr std::int64_t kOracleDraws = 10000000;

// Mean and standard deviation of the eight raw covariate transforms under
// the rho = 1/2 AR(1) covariate law (10^7-draw Monte Carlo).
inline constexpr std::array<double, 8> kTransformMean = {
    1.1334044005615254,
    9.8966640305411957,
    0.23020040977785644,
    402.49109603308597,
    0.00027857497785460807,
    4.4783176749319304,
    0.99941106575473848,
    -20.000020259291038};
inline constexpr std::array<double, 8> kTransformSd = {
    0.60399115387551738,
    0.54628341739687047,
    0.051985411271287689,
    63.341714248475313,
    0.99972978881108088,
    19.498906875963993,
    1.4136198816988335,
    3.8720808208893294};

struct FrozenTruth {
  double mu1, mu0, se_ate;  // se_ate: Monte Carlo standard error of mu1 - mu0
};

// Frozen 10^7-draw oracle truths (computed under the standardization
// constants above).
inline constexpr FrozenTruth kLinearMis = {2.0000302158261287,
                                           1.0000962617616915, 0.000214925};
inline constexpr FrozenTruth kBinomialCorrect = {4.9461761834494515,
                                                 3.2051899676607389, 0.000360552};
inline constexpr FrozenTruth kBinomialMis = {4.9510019686880122,
                                             3.0762545657137919, 0.000332041};

}  // namespace dgp

namespace detail {

// One AR(1) row: x_1 = z_1, x_j = rho x_{j-1} + sqrt(1 - rho^2) z_j.
inline void fill_ar1_row(Rng& rng, double rho, double* out, Index d) {
  const double w = std::sqrt(1.0 - rho * rho);
  double prev = rng.normal();
  out[0] = prev;
  for (Index j = 1; j < d; ++j) {
    prev = rho * prev + w * rng.normal();
    out[j] = prev;
  }
}

inline double treatment_index(const double* x) {
  return -x[0] + x[1] / 2.0 - x[2] / 4.0 - x[3] / 10.0 - x[4] / 10.0 +
         x[5] / 10.0;
}

inline double linear_mean_treated(const double* x) {
  return 2.0 + 0.137 * (x[4] + x[5] + x[6] + x[7]);
}
inline double linear_mean_control(const double* x) {
  return 1.0 + 0.291 * (x[4] + x[5] + x[6] + x[7] + x[8] + x[9]);
}

inline constexpr int kBinomialTrials = 8;

inline double binomial_p_treated(const double* x) {
  return 1.0 / (1.0 + std::exp(-(0.5 + 0.137 * (x[4] + x[5] + x[6] + x[7]))));
}
inline double binomial_p_control(const double* x) {
  return 1.0 / (1.0 + std::exp(-(-0.5 + 0.291 * (x[4] + x[5] + x[6] + x[7] +
                                                 x[8] + x[9]))));
}

}  // namespace detail

// Raw values of the eight covariate transforms at one row (before
// standardization). Needs at least 9 effective coordinates.
inline std::array<double, 8> raw_transforms(const double* x) {
  return {
      std::exp(x[0] / 2.0),
      x[1] / (1.0 + std::exp(x[0])) + 10.0,
      std::pow(x[0] * x[2] / 25.0 + 0.6, 3.0),
      (x[1] + x[3] + 20.0) * (x[1] + x[3] + 20.0),
      x[5],
      std::exp(x[5] + x[6]),
      x[8] * x[8],
      x[6] * x[6] * x[6] - 20.0,
  };
}

// Covariate draw for the analysis design: n rows of the AR(1) law with an
// intercept column of ones prepended. The generating-process indices X1..
// refer to the columns after the intercept.
inline MatrixXd gen_covariates(Index n, Index d, double rho, std::uint64_t seed) {
  if (d < 1) throw ConfigError("gen_covariates: d must be >= 1");
  if (!(rho > -1.0 && rho < 1.0)) throw ConfigError("gen_covariates: rho must lie in (-1, 1)");
  MatrixXd x(n, d + 1);
  x.col(0).setOnes();
  Rng rng(seed);
  std::vector<double> row(static_cast<std::size_t>(d));
  for (Index i = 0; i < n; ++i) {
    detail::fill_ar1_row(rng, rho, row.data(), d);
    for (Index j = 0; j < d; ++j) x(i, j + 1) = row[static_cast<std::size_t>(j)];
  }
  return x;
}

// T_i ~ Bernoulli(pi_i) with
// pi = 1 - 1/{1 + exp(-X1 + X2/2 - X3/4 - X4/10 - X5/10 + X6/10)}.
inline VectorXd gen_treatment(const Eigen::Ref<const MatrixXd>& x_eff,
                              std::uint64_t seed) {
  if (x_eff.cols() < 6) throw ConfigError("gen_treatment: need at least 6 effective columns");
  const Index n = x_eff.rows();
  VectorXd t(n);
  Rng rng(seed);
  std::vector<double> row(6);
  for (Index i = 0; i < n; ++i) {
    for (int j = 0; j < 6; ++j) row[static_cast<std::size_t>(j)] = x_eff(i, j);
    const double p = 1.0 / (1.0 + std::exp(-detail::treatment_index(row.data())));
    t(i) = rng.uniform() < p ? 1.0 : 0.0;
  }
  return t;
}

// Replaces the first eight effective coordinates with the standardized
// transforms (frozen Monte Carlo constants); coordinates 9.. pass through.
inline MatrixXd transform_mis(const Eigen::Ref<const MatrixXd>& x_eff) {
  if (x_eff.cols() < 9) throw ConfigError("transform_mis: need at least 9 effective columns");
  MatrixXd out = x_eff;
  std::vector<double> row(9);
  for (Index i = 0; i < x_eff.rows(); ++i) {
    for (int j = 0; j < 9; ++j) row[static_cast<std::size_t>(j)] = x_eff(i, j);
    const std::array<double, 8> raw = raw_transforms(row.data());
    for (int j = 0; j < 8; ++j) {
      out(i, j) = (raw[static_cast<std::size_t>(j)] - dgp::kTransformMean[static_cast<std::size_t>(j)]) /
                  dgp::kTransformSd[static_cast<std::size_t>(j)];
    }
  }
  return out;
}

struct GeneratedOutcomes {
  VectorXd y;
  Truth truth;
};

// Potential outcomes per the linear or binomial-logistic generating process;
// x_eff is the (possibly transformed) effective design the outcomes are
// generated from, and covariates_transformed selects the matching frozen
// truth.
inline GeneratedOutcomes gen_outcomes(const Eigen::Ref<const MatrixXd>& x_eff,
                                      const VectorXd& t, OutcomeKind kind,
                                      bool covariates_transformed,
                                      std::uint64_t seed) {
  if (x_eff.cols() < 10) throw ConfigError("gen_outcomes: need at least 10 effective columns");
  const Index n = x_eff.rows();
  GeneratedOutcomes out;
  out.y.resize(n);
  Rng rng(seed);
  std::vector<double> row(10);
  for (Index i = 0; i < n; ++i) {
    for (int j = 0; j < 10; ++j) row[static_cast<std::size_t>(j)] = x_eff(i, j);
    if (kind == OutcomeKind::linear) {
      const double y1 = detail::linear_mean_treated(row.data()) + rng.normal();
      const double y0 = detail::linear_mean_control(row.data()) + rng.normal();
      out.y(i) = t(i) == 1.0 ? y1 : y0;
    } else {
      const double p1 = detail::binomial_p_treated(row.data());
      const double p0 = detail::binomial_p_control(row.data());
      int y1 = 0, y0 = 0;
      for (int k = 0; k < detail::kBinomialTrials; ++k) y1 += rng.uniform() < p1;
      for (int k = 0; k < detail::kBinomialTrials; ++k) y0 += rng.uniform() < p0;
      out.y(i) = t(i) == 1.0 ? y1 : y0;
    }
  }
  if (kind == OutcomeKind::linear) {
    if (covariates_transformed) {
      out.truth = {dgp::kLinearMis.mu1, dgp::kLinearMis.mu0,
                   dgp::kLinearMis.mu1 - dgp::kLinearMis.mu0,
                   dgp::kLinearMis.se_ate};
    } else {
      out.truth = {2.0, 1.0, 1.0, 0.0};
    }
  } else {
    const dgp::FrozenTruth& ft =
        covariates_transformed ? dgp::kBinomialMis : dgp::kBinomialCorrect;
    out.truth = {ft.mu1, ft.mu0, ft.mu1 - ft.mu0, ft.se_ate};
  }
  return out;
}

struct TransformMoments {
  std::array<double, 8> mean{};
  std::array<double, 8> sd{};
  std::array<double, 8> se_mean{};
};

// Monte Carlo moments of the raw transforms under the AR(1) covariate law;
// regenerates the frozen standardization constants.
inline TransformMoments mc_transform_moments(double rho, std::uint64_t seed,
                                             std::int64_t draws) {
  Rng rng(seed);
  std::array<double, 8> sum{}, sumsq{};
  double row[9];
  for (std::int64_t k = 0; k < draws; ++k) {
    detail::fill_ar1_row(rng, rho, row, 9);
    const std::array<double, 8> r = raw_transforms(row);
    for (int j = 0; j < 8; ++j) {
      sum[static_cast<std::size_t>(j)] += r[static_cast<std::size_t>(j)];
      sumsq[static_cast<std::size_t>(j)] +=
          r[static_cast<std::size_t>(j)] * r[static_cast<std::size_t>(j)];
    }
  }
  TransformMoments m;
  for (int j = 0; j < 8; ++j) {
    const auto u = static_cast<std::size_t>(j);
    m.mean[u] = sum[u] / static_cast<double>(draws);
    const double var = sumsq[u] / static_cast<double>(draws) - m.mean[u] * m.mean[u];
    m.sd[u] = std::sqrt(var);
    m.se_mean[u] = m.sd[u] / std::sqrt(static_cast<double>(draws));
  }
  return m;
}

// Monte Carlo oracle for the outcome-truth constants. When mean8/sd8 are
// null the frozen standardization constants are used for the transformed
// coordinates.
inline Truth mc_truth(OutcomeKind kind, bool transformed, double rho,
                      std::uint64_t seed, std::int64_t draws,
                      const double* mean8 = nullptr,
                      const double* sd8 = nullptr) {
  Rng rng(seed);
  double row[10];
  double eff[10];
  double s1 = 0.0, s0 = 0.0, sd2 = 0.0, sdiff = 0.0;
  for (std::int64_t k = 0; k < draws; ++k) {
    detail::fill_ar1_row(rng, rho, row, 10);
    for (int j = 0; j < 10; ++j) eff[j] = row[j];
    if (transformed) {
      const std::array<double, 8> raw = raw_transforms(row);
      for (int j = 0; j < 8; ++j) {
        const auto u = static_cast<std::size_t>(j);
        const double m = mean8 ? mean8[j] : dgp::kTransformMean[u];
        const double s = sd8 ? sd8[j] : dgp::kTransformSd[u];
        eff[j] = (raw[u] - m) / s;
      }
    }
    double m1, m0;
    if (kind == OutcomeKind::linear) {
      m1 = detail::linear_mean_treated(eff);
      m0 = detail::linear_mean_control(eff);
    } else {
      m1 = detail::kBinomialTrials * detail::binomial_p_treated(eff);
      m0 = detail::kBinomialTrials * detail::binomial_p_control(eff);
    }
    s1 += m1;
    s0 += m0;
    const double diff = m1 - m0;
    sdiff += diff;
    sd2 += diff * diff;
  }
  Truth t;
  const double dn = static_cast<double>(draws);
  t.mu1 = s1 / dn;
  t.mu0 = s0 / dn;
  t.ate = t.mu1 - t.mu0;
  const double mean_diff = sdiff / dn;
  const double var_diff = sd2 / dn - mean_diff * mean_diff;
  t.mc_se = std::sqrt(var_diff / dn);
  return t;
}

// Generic index-parallel loop; thread count 0 means hardware concurrency.
inline void parallel_for(int threads, int count,
                         const std::function<void(int)>& body) {
  if (threads <= 0) {
    threads = static_cast<int>(std::thread::hardware_concurrency());
    if (threads < 1) threads = 1;
  }
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(threads));
  for (int w = 0; w < threads; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= count) return;
        body(i);
      }
    });
  }
  for (auto& th : pool) th.join();
}

struct RepRecord {
  int rep = 0;
  bool failed = false;
  std::string error;
  double mu1 = std::numeric_limits<double>::quiet_NaN();
  double mu0 = std::numeric_limits<double>::quiet_NaN();
  double ate = std::numeric_limits<double>::quiet_NaN();
  double v_ate = std::numeric_limits<double>::quiet_NaN();
  double se = std::numeric_limits<double>::quiet_NaN();  // sqrt(v_ate / n)
  Interval ci;
  bool covered = false;
  // diagnostics
  double max_kkt = 0.0;
  double max_balance_inf = 0.0;
  double max_normalization = 0.0;
  double ht_hajek_gap = 0.0;
  double ht_aipw_gap = 0.0;
  bool calibration_converged = false;  // both arms
  bool sample_bounded = false;         // both arms
  double min_pi = 1.0;
  double max_pi = 0.0;
  Index support1 = 0;
  Index support0 = 0;
};

struct SimulationReport {
  ScenarioSpec spec;
  Truth truth;
  int completed = 0;
  int failed = 0;
  double bias = 0.0;
  double std_err = 0.0;         // Monte Carlo SD of the estimates
  double rmse = 0.0;            // sqrt(mean squared error) / truth
  double coverage = 0.0;
  double mean_ci_length = 0.0;
  double mean_se_hat = 0.0;     // mean estimated standard error
  double mc_variance = 0.0;     // sample variance of the estimates
  double mean_vhat_over_n = 0.0;
  double max_kkt = 0.0;
  double max_balance_inf = 0.0;
  double max_normalization = 0.0;
  double max_ht_hajek_gap = 0.0;
  double max_ht_aipw_gap = 0.0;
  int calibration_converged_count = 0;
  int bounded_given_converged_count = 0;
  std::vector<RepRecord> records;
};

// Full replication loop of one scenario: per-replication seeds derive from
// the master seed, the analyst always sees the untransformed covariates, and
// aggregation runs in replication order so the report does not depend on the
// thread count.
inline SimulationReport run_scenario(const ScenarioSpec& spec,
                                     const EstimatorConfig& config,
                                     int threads = 0) {
  spec.validate();
  config.validate();

  SimulationReport report;
  report.spec = spec;

  std::vector<std::string> names(static_cast<std::size_t>(spec.d) + 1);
  names[0] = "(Intercept)";
  for (Index j = 1; j <= spec.d; ++j) {
    names[static_cast<std::size_t>(j)] = "X" + std::to_string(j);
  }

  {
    // Resolve the truth once; gen_outcomes returns the same constants.
    if (spec.outcome_kind == OutcomeKind::linear) {
      report.truth = spec.outcome_transformed()
                         ? Truth{dgp::kLinearMis.mu1, dgp::kLinearMis.mu0,
                                 dgp::kLinearMis.mu1 - dgp::kLinearMis.mu0,
                                 dgp::kLinearMis.se_ate}
                         : Truth{2.0, 1.0, 1.0, 0.0};
    } else {
      const dgp::FrozenTruth& ft = spec.outcome_transformed()
                                       ? dgp::kBinomialMis
                                       : dgp::kBinomialCorrect;
      report.truth = {ft.mu1, ft.mu0, ft.mu1 - ft.mu0, ft.se_ate};
    }
  }

  report.records.resize(static_cast<std::size_t>(spec.replications));
  parallel_for(threads, spec.replications, [&](int r) {
    RepRecord& rec = report.records[static_cast<std::size_t>(r)];
    rec.rep = r;
    try {
      const std::uint64_t seed_r = derive_seed(spec.master_seed, static_cast<std::uint64_t>(r));
      const MatrixXd x = gen_covariates(spec.n, spec.d, spec.rho, derive_seed(seed_r, 0));
      const auto x_eff = x.rightCols(spec.d);
      MatrixXd x_mis;
      if (spec.ps_transformed() || spec.outcome_transformed()) {
        x_mis = transform_mis(x_eff);
      }
      const VectorXd t = gen_treatment(
          spec.ps_transformed() ? Eigen::Ref<const MatrixXd>(x_mis) : x_eff,
          derive_seed(seed_r, 1));
      const GeneratedOutcomes gen = gen_outcomes(
          spec.outcome_transformed() ? Eigen::Ref<const MatrixXd>(x_mis) : x_eff,
          t, spec.outcome_kind, spec.outcome_transformed(), derive_seed(seed_r, 2));

      Dataset data{x, t, gen.y, names};
      EstimatorConfig cfg = config;
      cfg.penalty_ps.seed = derive_seed(seed_r, 3);
      cfg.penalty_outcome.seed = derive_seed(seed_r, 4);

      const EffectEstimate est = estimate_ate(data, cfg);
      rec.mu1 = est.mu1_hat;
      rec.mu0 = est.mu0_hat;
      rec.ate = est.ate_hat;
      rec.v_ate = est.v_ate;
      rec.se = std::sqrt(est.v_ate / static_cast<double>(est.n));
      rec.ci = est.ci;
      rec.covered = est.ci.contains(report.truth.ate);
      const ArmEstimate& a1 = est.arm1;
      const ArmEstimate& a0 = *est.arm0;
      rec.max_kkt = std::max(a1.max_kkt, a0.max_kkt);
      rec.max_balance_inf = std::max(a1.balance_residual_inf, a0.balance_residual_inf);
      rec.max_normalization = std::max(std::abs(a1.normalization_residual),
                                       std::abs(a0.normalization_residual));
      rec.ht_hajek_gap = std::max(std::abs(a1.mu_hat - a1.hajek_mu),
                                  std::abs(a0.mu_hat - a0.hajek_mu));
      rec.ht_aipw_gap = std::max(std::abs(a1.mu_hat - a1.aipw_linear_mu),
                                 std::abs(a0.mu_hat - a0.aipw_linear_mu));
      rec.calibration_converged =
          a1.calibration.converged && a0.calibration.converged;
      rec.sample_bounded = a1.sample_bounded && a0.sample_bounded;
      rec.min_pi = std::min(a1.min_pi, a0.min_pi);
      rec.max_pi = std::max(a1.max_pi, a0.max_pi);
      rec.support1 = a1.support.size();
      rec.support0 = a0.support.size();
    } catch (const std::exception& e) {
      rec.failed = true;
      rec.error = e.what();
    }
  });

  // Aggregate in replication order.
  double sum = 0.0, sumsq = 0.0, sq_err = 0.0, ci_len = 0.0, se_hat = 0.0,
         vhat = 0.0;
  int covered = 0;
  for (const RepRecord& rec : report.records) {
    if (rec.failed) {
      ++report.failed;
      continue;
    }
    ++report.completed;
    sum += rec.ate;
    sumsq += rec.ate * rec.ate;
    const double err = rec.ate - report.truth.ate;
    sq_err += err * err;
    ci_len += rec.ci.length();
    se_hat += rec.se;
    vhat += rec.v_ate / static_cast<double>(spec.n);
    covered += rec.covered;
    report.max_kkt = std::max(report.max_kkt, rec.max_kkt);
    report.max_balance_inf = std::max(report.max_balance_inf, rec.max_balance_inf);
    report.max_normalization = std::max(report.max_normalization, rec.max_normalization);
    report.max_ht_hajek_gap = std::max(report.max_ht_hajek_gap, rec.ht_hajek_gap);
    report.max_ht_aipw_gap = std::max(report.max_ht_aipw_gap, rec.ht_aipw_gap);
    if (rec.calibration_converged) {
      ++report.calibration_converged_count;
      if (rec.sample_bounded) ++report.bounded_given_converged_count;
    }
  }
  if (report.failed > 0.02 * spec.replications) {
    std::string first;
    for (const RepRecord& rec : report.records) {
      if (rec.failed) {
        first = rec.error;
        break;
      }
    }
    throw SimulationError("run_scenario: " + std::to_string(report.failed) +
                          " of " + std::to_string(spec.replications) +
                          " replications failed; first failure: " + first);
  }
  const double r = static_cast<double>(report.completed);
  const double mean = sum / r;
  report.bias = mean - report.truth.ate;
  const double var_pop = sumsq / r - mean * mean;
  report.mc_variance = report.completed > 1 ? var_pop * r / (r - 1.0) : 0.0;
  report.std_err = std::sqrt(report.mc_variance);
  report.rmse = std::sqrt(sq_err / r) / std::abs(report.truth.ate);
  report.coverage = static_cast<double>(covered) / r;
  report.mean_ci_length = ci_len / r;
  report.mean_se_hat = se_hat / r;
  report.mean_vhat_over_n = vhat / r;
  return report;
}

}  // namespace cbal
