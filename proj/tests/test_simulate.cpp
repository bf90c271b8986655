#include <doctest.h>

#include "cbal/simulate.hpp"

using namespace cbal;

namespace {

EstimatorConfig quick_config() {
  EstimatorConfig c;
  c.penalty_ps = PenaltySpec::Fixed(0.05);
  c.penalty_outcome = PenaltySpec::Fixed(0.05);
  return c;
}

}  // namespace

TEST_CASE("covariates: seed determinism and intercept column") {
  const MatrixXd a = gen_covariates(40, 12, 0.5, 99);
  const MatrixXd b = gen_covariates(40, 12, 0.5, 99);
  const MatrixXd c = gen_covariates(40, 12, 0.5, 100);
  CHECK(a == b);
  CHECK(a != c);
  CHECK(a.rows() == 40);
  CHECK(a.cols() == 13);
  CHECK((a.col(0).array() == 1.0).all());
}

TEST_CASE("covariates: independence at rho = 0") {
  const Index n = 100000;
  const MatrixXd x = gen_covariates(n, 4, 0.0, 7);
  for (Index j = 1; j <= 4; ++j) {
    const double mean = x.col(j).mean();
    const double var = (x.col(j).array() - mean).square().sum() / n;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.02);
    for (Index k = j + 1; k <= 4; ++k) {
      const double cov =
          ((x.col(j).array() - x.col(j).mean()) * (x.col(k).array() - x.col(k).mean()))
              .sum() /
          n;
      CHECK(std::abs(cov) < 0.02);
    }
  }
}

TEST_CASE("covariates: ar(1) autocorrelation at rho = 0.5") {
  const Index n = 100000;
  const MatrixXd x = gen_covariates(n, 6, 0.5, 11);
  const auto corr = [&](Index j, Index k) {
    const double mj = x.col(j).mean();
    const double mk = x.col(k).mean();
    const double cjk =
        ((x.col(j).array() - mj) * (x.col(k).array() - mk)).sum() / n;
    const double vj = (x.col(j).array() - mj).square().sum() / n;
    const double vk = (x.col(k).array() - mk).square().sum() / n;
    return cjk / std::sqrt(vj * vk);
  };
  for (Index j = 1; j <= 4; ++j) {
    CHECK(std::abs(corr(j, j + 1) - 0.5) < 0.02);
    if (j + 2 <= 6) CHECK(std::abs(corr(j, j + 2) - 0.25) < 0.02);
  }
}

TEST_CASE("treatment probabilities follow the stated logistic form") {
  // zero covariates: pi = 1/2
  const MatrixXd zeros = MatrixXd::Zero(100000, 10);
  const VectorXd t0 = gen_treatment(zeros, 3);
  CHECK(std::abs(t0.mean() - 0.5) < 0.005);

  // X1 = 1, rest 0: pi = 1 - 1/(1 + exp(-1)) ~ 0.268941
  MatrixXd one = MatrixXd::Zero(100000, 10);
  one.col(0).setOnes();
  const VectorXd t1 = gen_treatment(one, 4);
  CHECK(std::abs(t1.mean() - 0.268941) < 0.005);

  // law of large numbers on the correct-specification design
  const MatrixXd x = gen_covariates(100000, 10, 0.5, 5);
  const auto x_eff = x.rightCols(10);
  const VectorXd t = gen_treatment(x_eff, 6);
  double pbar = 0.0;
  for (Index i = 0; i < x_eff.rows(); ++i) {
    const double idx = -x_eff(i, 0) + x_eff(i, 1) / 2.0 - x_eff(i, 2) / 4.0 -
                       x_eff(i, 3) / 10.0 - x_eff(i, 4) / 10.0 + x_eff(i, 5) / 10.0;
    pbar += 1.0 / (1.0 + std::exp(-idx));
  }
  pbar /= static_cast<double>(x_eff.rows());
  CHECK(std::abs(t.mean() - pbar) < 0.01);
}

TEST_CASE("outcome means and truths under the correct specification") {
  // formula means at the zero row
  double zero_row[10] = {0, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  CHECK(detail::linear_mean_treated(zero_row) == 2.0);
  CHECK(detail::linear_mean_control(zero_row) == 1.0);

  const MatrixXd x = gen_covariates(5000, 10, 0.5, 8);
  const auto x_eff = x.rightCols(10);
  const VectorXd t = gen_treatment(x_eff, 9);
  const GeneratedOutcomes out =
      gen_outcomes(x_eff, t, OutcomeKind::linear, false, 10);
  CHECK(out.truth.mu1 == 2.0);
  CHECK(out.truth.mu0 == 1.0);
  CHECK(out.truth.ate == 1.0);
  CHECK(out.truth.mc_se == 0.0);

  // all-treated rows at zero covariates average to 2
  const MatrixXd zeros = MatrixXd::Zero(200000, 10);
  const VectorXd ones = VectorXd::Ones(200000);
  const GeneratedOutcomes o2 =
      gen_outcomes(zeros, ones, OutcomeKind::linear, false, 11);
  CHECK(std::abs(o2.y.mean() - 2.0) < 0.01);
}

TEST_CASE("binomial outcomes stay in range and match the frozen truth scale") {
  const MatrixXd x = gen_covariates(20000, 10, 0.5, 12);
  const auto x_eff = x.rightCols(10);
  const VectorXd t = gen_treatment(x_eff, 13);
  const GeneratedOutcomes out =
      gen_outcomes(x_eff, t, OutcomeKind::binomial_logistic, false, 14);
  CHECK(out.truth.mu1 == dgp::kBinomialCorrect.mu1);
  for (Index i = 0; i < out.y.size(); ++i) {
    CHECK(out.y(i) >= 0.0);
    CHECK(out.y(i) <= 8.0);
    CHECK(out.y(i) == std::floor(out.y(i)));
  }
  double treated_sum = 0.0;
  Index treated_n = 0;
  for (Index i = 0; i < out.y.size(); ++i) {
    if (t(i) == 1.0) {
      treated_sum += out.y(i);
      ++treated_n;
    }
  }
  // treated mean is confounded upward only mildly; sanity band around mu1
  CHECK(std::abs(treated_sum / treated_n - dgp::kBinomialCorrect.mu1) < 0.25);
}

TEST_CASE("raw transforms at the zero row") {
  double zero_row[9] = {0, 0, 0, 0, 0, 0, 0, 0, 0};
  const std::array<double, 8> r = raw_transforms(zero_row);
  CHECK(r[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r[1] == doctest::Approx(10.0).epsilon(1e-15));
  CHECK(r[2] == doctest::Approx(0.216).epsilon(1e-12));
  CHECK(r[3] == doctest::Approx(400.0).epsilon(1e-15));
  CHECK(r[4] == 0.0);
  CHECK(r[5] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r[6] == 0.0);
  CHECK(r[7] == doctest::Approx(-20.0).epsilon(1e-15));
}

TEST_CASE("transformed covariates standardize to mean 0, sd 1") {
  const MatrixXd x = gen_covariates(100000, 12, 0.5, 17);
  const MatrixXd m = transform_mis(x.rightCols(12));
  for (Index j = 0; j < 8; ++j) {
    const double mean = m.col(j).mean();
    const double sd = std::sqrt((m.col(j).array() - mean).square().sum() / m.rows());
    CHECK(std::abs(mean) < 0.02);
    // exp(X6 + X7) is lognormal with sigma^2 = 3; its sample SD at 1e5 draws
    // carries ~15% sampling noise, far above the band the light-tailed
    // coordinates satisfy.
    const double sd_tol = j == 5 ? 0.45 : 0.02;
    CHECK(std::abs(sd - 1.0) < sd_tol);
  }
  // pass-through coordinates are bit-identical
  for (Index j = 8; j < 12; ++j) {
    CHECK(m.col(j) == x.rightCols(12).col(j));
  }
}

TEST_CASE("frozen truths are reproduced by independent oracle runs") {
  const std::int64_t draws = 2000000;
  const Truth a = mc_truth(OutcomeKind::linear, true, 0.5, 424242, draws);
  const Truth b = mc_truth(OutcomeKind::linear, true, 0.5, 515151, draws);
  const double frozen = dgp::kLinearMis.mu1 - dgp::kLinearMis.mu0;
  CHECK(std::abs(a.ate - frozen) <= 2.0 * (a.mc_se + dgp::kLinearMis.se_ate));
  CHECK(std::abs(b.ate - frozen) <= 2.0 * (b.mc_se + dgp::kLinearMis.se_ate));
  CHECK(std::abs(a.ate - b.ate) <= 2.0 * (a.mc_se + b.mc_se));

  const Truth c = mc_truth(OutcomeKind::binomial_logistic, false, 0.5, 636363, draws);
  const double frozen_b = dgp::kBinomialCorrect.mu1 - dgp::kBinomialCorrect.mu0;
  CHECK(std::abs(c.ate - frozen_b) <= 2.0 * (c.mc_se + dgp::kBinomialCorrect.se_ate));
}

TEST_CASE("scenario runs are deterministic, also across thread counts") {
  ScenarioSpec spec;
  spec.scenario = Scenario::both_correct;
  spec.n = 80;
  spec.d = 10;
  spec.replications = 4;
  spec.master_seed = 5;
  const SimulationReport r1 = run_scenario(spec, quick_config(), 1);
  const SimulationReport r2 = run_scenario(spec, quick_config(), 2);
  REQUIRE(r1.records.size() == 4);
  for (std::size_t k = 0; k < 4; ++k) {
    CHECK(r1.records[k].ate == r2.records[k].ate);
    CHECK(r1.records[k].se == r2.records[k].se);
  }
  CHECK(r1.bias == r2.bias);
  CHECK(r1.coverage == r2.coverage);
}

TEST_CASE("metric algebra ties rmse, bias and std err together") {
  ScenarioSpec spec;
  spec.scenario = Scenario::both_correct;
  spec.n = 80;
  spec.d = 10;
  spec.replications = 8;
  spec.master_seed = 21;
  const SimulationReport rep = run_scenario(spec, quick_config(), 0);
  const double r = static_cast<double>(rep.completed);
  const double lhs = std::pow(rep.rmse * std::abs(rep.truth.ate), 2);
  const double rhs = rep.bias * rep.bias + rep.std_err * rep.std_err * (r - 1.0) / r;
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
  CHECK(std::abs(lhs - rhs) <= 1e-10);
  CHECK(rep.coverage >= 0.0);
  CHECK(rep.coverage <= 1.0);
}

TEST_CASE("single replication reports the raw error as bias") {
  ScenarioSpec spec;
  spec.scenario = Scenario::both_correct;
  spec.n = 80;
  spec.d = 10;
  spec.replications = 1;
  spec.master_seed = 33;
  const SimulationReport rep = run_scenario(spec, quick_config(), 1);
  REQUIRE(rep.completed == 1);
  CHECK(rep.bias == rep.records[0].ate - rep.truth.ate);
  CHECK(rep.std_err == 0.0);
}

TEST_CASE("misspecified scenarios use the transformed generator") {
  ScenarioSpec spec;
  spec.scenario = Scenario::outcome_misspecified;
  spec.n = 80;
  spec.d = 10;
  spec.replications = 2;
  spec.master_seed = 44;
  const SimulationReport rep = run_scenario(spec, quick_config(), 1);
  CHECK(rep.truth.mu1 == dgp::kLinearMis.mu1);
  CHECK(rep.truth.mc_se == dgp::kLinearMis.se_ate);
  CHECK(rep.completed == 2);
}

TEST_CASE("scenario spec validation") {
  ScenarioSpec spec;
  spec.d = 9;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = ScenarioSpec{};
  spec.rho = 1.0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
  spec = ScenarioSpec{};
  spec.replications = 0;
  CHECK_THROWS_AS(spec.validate(), ConfigError);
}
