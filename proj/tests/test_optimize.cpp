#include <doctest.h>

#include <memory>

#include "cbal/optimize.hpp"
#include "cbal/random.hpp"
#include "oracles.hpp"

using namespace cbal;

namespace {

// f(x) = (1/2n)||Ax - b||^2 as a SmoothObjective.
SmoothObjective quadratic_objective(std::shared_ptr<const MatrixXd> a,
                                    std::shared_ptr<const VectorXd> b,
                                    PenaltyMask mask) {
  SmoothObjective o;
  o.dimension = a->cols();
  o.penalized = std::move(mask);
  o.value = [a, b](const VectorXd& x) {
    return 0.5 * (*a * x - *b).squaredNorm() / static_cast<double>(a->rows());
  };
  o.gradient = [a, b](const VectorXd& x) {
    return VectorXd(a->transpose() * (*a * x - *b) / static_cast<double>(a->rows()));
  };
  return o;
}

struct RandomInstance {
  std::shared_ptr<MatrixXd> a;
  std::shared_ptr<VectorXd> b;
  PenaltyMask mask;
};

RandomInstance random_instance(Index n, Index d, std::uint64_t seed, bool with_intercept) {
  Rng rng(seed);
  RandomInstance inst;
  inst.a = std::make_shared<MatrixXd>(n, d);
  inst.b = std::make_shared<VectorXd>(n);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) (*inst.a)(i, j) = rng.normal();
    if (with_intercept) (*inst.a)(i, 0) = 1.0;
    (*inst.b)(i) = rng.normal() * 2.0;
  }
  inst.mask = with_intercept ? all_but_intercept(d) : PenaltyMask::Constant(d, true);
  return inst;
}

}  // namespace

TEST_CASE("soft threshold") {
  CHECK(soft_threshold(3.0, 1.0) == 2.0);
  CHECK(soft_threshold(-0.5, 1.0) == 0.0);
  for (double z : {-2.0, 0.0, 7.0}) CHECK(soft_threshold(z, 0.0) == z);
  CHECK(soft_threshold(-4.0, 1.5) == -2.5);
}

TEST_CASE("scalar lasso: soft-thresholded minimum") {
  // f(x) = (1/2)(x - 2)^2, penalized.
  SmoothObjective o;
  o.dimension = 1;
  o.penalized = PenaltyMask::Constant(1, true);
  o.value = [](const VectorXd& x) { return 0.5 * (x(0) - 2.0) * (x(0) - 2.0); };
  o.gradient = [](const VectorXd& x) {
    VectorXd g(1);
    g(0) = x(0) - 2.0;
    return g;
  };
  const SolverSettings s;
  const MinimizeResult r1 = minimize_l1(o, 1.0, VectorXd::Zero(1), s);
  CHECK(r1.converged);
  CHECK(r1.x(0) == doctest::Approx(1.0).epsilon(1e-8));
  const MinimizeResult r0 = minimize_l1(o, 0.0, VectorXd::Zero(1), s);
  CHECK(r0.x(0) == doctest::Approx(2.0).epsilon(1e-8));
}

TEST_CASE("random least-squares instance matches the coordinate-descent oracle") {
  const RandomInstance inst = random_instance(50, 3, 1234, false);
  const SmoothObjective o = quadratic_objective(inst.a, inst.b, inst.mask);
  const MinimizeResult r = minimize_l1(o, 0.1, VectorXd::Zero(3), SolverSettings{});
  CHECK(r.converged);
  const VectorXd x_cd = oracle::cd_lasso(*inst.a, *inst.b, 0.1, inst.mask);
  for (Index j = 0; j < 3; ++j) {
    CHECK(std::abs(r.x(j) - x_cd(j)) < 1e-4);
  }
}

TEST_CASE("oracle equivalence on 50 random instances") {
  Rng seeds(77);
  for (int k = 0; k < 50; ++k) {
    const Index d = 2 + static_cast<Index>(seeds.below(4));  // 2..5
    const bool intercept = seeds.uniform() < 0.5;
    const RandomInstance inst = random_instance(50, d, seeds.raw(), intercept);
    const double lambda = 0.02 + 0.3 * seeds.uniform();
    const SmoothObjective o = quadratic_objective(inst.a, inst.b, inst.mask);
    const MinimizeResult r = minimize_l1(o, lambda, VectorXd::Zero(d), SolverSettings{});
    REQUIRE(r.converged);
    const VectorXd x_cd = oracle::cd_lasso(*inst.a, *inst.b, lambda, inst.mask);
    for (Index j = 0; j < d; ++j) {
      CHECK(std::abs(r.x(j) - x_cd(j)) < 1e-4);
    }
    // independent stationarity certificate
    const double kkt = kkt_residual(r.x, o.gradient(r.x), lambda, inst.mask);
    CHECK(kkt <= 1e-8 * 1.5 + 1e-12);
    // monotone descent of the accepted iterates
    for (std::size_t i = 1; i < r.objective_trace.size(); ++i) {
      CHECK(r.objective_trace[i] <= r.objective_trace[i - 1]);
    }
  }
}

TEST_CASE("determinism: identical inputs give bit-identical solutions") {
  const RandomInstance inst = random_instance(40, 4, 555, true);
  const SmoothObjective o = quadratic_objective(inst.a, inst.b, inst.mask);
  const MinimizeResult r1 = minimize_l1(o, 0.05, VectorXd::Zero(4), SolverSettings{});
  const MinimizeResult r2 = minimize_l1(o, 0.05, VectorXd::Zero(4), SolverSettings{});
  CHECK(r1.x == r2.x);
  CHECK(r1.iterations == r2.iterations);
}

TEST_CASE("non-convergence returns a report instead of throwing") {
  const RandomInstance inst = random_instance(60, 5, 9, false);
  const SmoothObjective o = quadratic_objective(inst.a, inst.b, inst.mask);
  SolverSettings s;
  s.max_iterations = 3;
  const MinimizeResult r = minimize_l1(o, 0.01, VectorXd::Zero(5), s);
  CHECK(!r.converged);
  CHECK(r.x.size() == 5);
  CHECK(std::isfinite(r.kkt));
}

TEST_CASE("non-finite objective values raise invalid-objective") {
  // NaN objective at the start point
  SmoothObjective o;
  o.dimension = 1;
  o.penalized = PenaltyMask::Constant(1, true);
  o.value = [](const VectorXd&) { return std::numeric_limits<double>::quiet_NaN(); };
  o.gradient = [](const VectorXd& x) {
    VectorXd g(1);
    g(0) = x(0) - 2.0;
    return g;
  };
  CHECK_THROWS_AS(minimize_l1(o, 0.0, VectorXd::Zero(1), SolverSettings{}),
                  InvalidObjectiveError);

  // NaN gradient at a finite objective
  SmoothObjective bad_grad;
  bad_grad.dimension = 1;
  bad_grad.penalized = PenaltyMask::Constant(1, true);
  bad_grad.value = [](const VectorXd& x) { return 0.5 * (x(0) - 2.0) * (x(0) - 2.0); };
  bad_grad.gradient = [](const VectorXd&) {
    VectorXd g(1);
    g(0) = std::numeric_limits<double>::quiet_NaN();
    return g;
  };
  CHECK_THROWS_AS(minimize_l1(bad_grad, 0.0, VectorXd::Zero(1), SolverSettings{}),
                  InvalidObjectiveError);
}

TEST_CASE("solver settings validation") {
  SolverSettings s;
  s.tolerance = 0.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = SolverSettings{};
  s.shrink = 1.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s = SolverSettings{};
  s.max_iterations = 0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("lambda grid is geometric and decreasing") {
  const VectorXd g = lambda_grid(2.0, 50, 1e-3);
  CHECK(g.size() == 50);
  CHECK(g(0) == 2.0);
  CHECK(g(49) == doctest::Approx(2e-3).epsilon(1e-12));
  for (Index l = 1; l < g.size(); ++l) CHECK(g(l) < g(l - 1));
  const double ratio = g(1) / g(0);
  for (Index l = 2; l < g.size(); ++l) {
    CHECK(g(l) / g(l - 1) == doctest::Approx(ratio).epsilon(1e-12));
  }
}

TEST_CASE("fold assignment is deterministic, balanced and validated") {
  const auto f1 = fold_assignment(103, 5, 42);
  const auto f2 = fold_assignment(103, 5, 42);
  const auto f3 = fold_assignment(103, 5, 43);
  CHECK(f1 == f2);
  CHECK(f1 != f3);
  std::vector<int> counts(5, 0);
  for (int f : f1) {
    REQUIRE(f >= 0);
    REQUIRE(f < 5);
    ++counts[static_cast<std::size_t>(f)];
  }
  for (int c : counts) CHECK(std::abs(c - 103 / 5) <= 1);
  CHECK_THROWS_AS(fold_assignment(10, 1, 0), ConfigError);
  CHECK_THROWS_AS(fold_assignment(3, 5, 0), ConfigError);
}

TEST_CASE("cv selection: single candidate, dominance and ties") {
  const RandomInstance inst = random_instance(80, 4, 31, true);
  // Strong dense signal: smaller lambda wins on every fold.
  VectorXd strong(4);
  strong << 0.5, 2.0, -3.0, 2.5;
  *inst.b = *inst.a * strong;
  const auto builder = [&](const std::vector<Index>& rows) {
    auto a_sub = std::make_shared<MatrixXd>(rows.size(), 4);
    auto b_sub = std::make_shared<VectorXd>(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      a_sub->row(static_cast<Index>(i)) = inst.a->row(rows[i]);
      (*b_sub)(static_cast<Index>(i)) = (*inst.b)(rows[i]);
    }
    return quadratic_objective(a_sub, b_sub, inst.mask);
  };
  const auto folds = fold_assignment(80, 4, 7);

  VectorXd single(1);
  single << 0.3;
  const CvResult r1 = select_lambda_cv(folds, builder, single, 4, SolverSettings{});
  CHECK(r1.lambda == 0.3);
  CHECK(r1.path.heldout_loss.rows() == 4);
  CHECK(r1.path.heldout_loss.cols() == 1);

  VectorXd two(2);
  two << 1.0, 0.01;
  const CvResult r2 = select_lambda_cv(folds, builder, two, 4, SolverSettings{});
  for (int f = 0; f < 4; ++f) {
    CHECK(r2.path.heldout_loss(f, 1) < r2.path.heldout_loss(f, 0));
  }
  CHECK(r2.lambda == 0.01);

  // Ties break toward the larger lambda: both grid points keep every
  // penalized coordinate at zero, so the held-out losses coincide.
  const double huge = 1e4;
  VectorXd tie(2);
  tie << 2.0 * huge, 1.0 * huge;
  const CvResult r3 = select_lambda_cv(folds, builder, tie, 4, SolverSettings{});
  CHECK(r3.index == 0);
  CHECK(r3.lambda == 2.0 * huge);

  // Grid must decrease strictly.
  VectorXd bad(2);
  bad << 1.0, 1.0;
  CHECK_THROWS_AS(select_lambda_cv(folds, builder, bad, 4, SolverSettings{}),
                  ConfigError);
}

TEST_CASE("cv selection propagates degenerate folds") {
  const auto thrower = [](const std::vector<Index>& rows) -> SmoothObjective {
    if (rows.size() < 4) throw DegenerateFoldError("too small");
    SmoothObjective o;
    o.dimension = 1;
    o.penalized = PenaltyMask::Constant(1, true);
    o.value = [](const VectorXd& x) { return x(0) * x(0); };
    o.gradient = [](const VectorXd& x) { return VectorXd(2.0 * x); };
    return o;
  };
  // Manual folds: one held-out fold has 2 rows < 4 -> the builder throws.
  const std::vector<int> folds{0, 0, 0, 0, 1, 1};
  VectorXd grid(1);
  grid << 0.1;
  CHECK_THROWS_AS(select_lambda_cv(folds, thrower, grid, 2, SolverSettings{}),
                  DegenerateFoldError);

  // An empty fold is rejected outright.
  const std::vector<int> empty_fold{0, 0, 1, 1};
  CHECK_THROWS_AS(select_lambda_cv(empty_fold, thrower, grid, 3, SolverSettings{}),
                  DegenerateFoldError);
}
