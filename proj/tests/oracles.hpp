#pragma once

// Test-only oracles, independent of the library's solver paths: coordinate
// descent for quadratic lasso problems, IRLS for unpenalized GLMs, weighted
// least squares by normal equations, quadrature, finite differences, scalar
// root finding and an erf-based normal quantile.

#include <Eigen/Dense>
#include <cmath>
#include <functional>

#include "cbal/model.hpp"
#include "cbal/optimize.hpp"

namespace oracle {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Coordinate descent for min (1/2n)||Ax - b||^2 + lambda sum_{penalized} |x_j|.
inline VectorXd cd_lasso(const MatrixXd& a, const VectorXd& b, double lambda,
                         const cbal::PenaltyMask& penalized,
                         double tol = 1e-12, int max_sweeps = 200000) {
  const Index n = a.rows();
  const Index d = a.cols();
  VectorXd x = VectorXd::Zero(d);
  VectorXd r = b;  // b - Ax
  VectorXd colsq(d);
  for (Index j = 0; j < d; ++j) colsq(j) = a.col(j).squaredNorm() / static_cast<double>(n);
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double max_change = 0.0;
    for (Index j = 0; j < d; ++j) {
      if (colsq(j) == 0.0) continue;
      const double rho = a.col(j).dot(r) / static_cast<double>(n) + colsq(j) * x(j);
      const double xj = penalized(j) ? cbal::soft_threshold(rho, lambda) / colsq(j)
                                     : rho / colsq(j);
      const double change = xj - x(j);
      if (change != 0.0) {
        r -= a.col(j) * change;
        x(j) = xj;
        max_change = std::max(max_change, std::abs(change));
      }
    }
    if (max_change < tol) break;
  }
  return x;
}

// Newton (IRLS) for the unpenalized weighted exponential-family fit:
// max sum_i w_i {y_i u_i - b(u_i)}, u = X beta. Logistic regression on a 0/1
// response is the binomial(1) case.
inline VectorXd irls_glm(const MatrixXd& x, const VectorXd& y,
                         const cbal::Family& family, const VectorXd& w,
                         double tol = 1e-10, int max_iter = 200) {
  const Index d = x.cols();
  VectorXd beta = VectorXd::Zero(d);
  for (int it = 0; it < max_iter; ++it) {
    const VectorXd u = x * beta;
    VectorXd resid(x.rows()), curv(x.rows());
    for (Index i = 0; i < x.rows(); ++i) {
      resid(i) = w(i) * (y(i) - family.b_prime(u(i)));
      curv(i) = w(i) * family.b_double_prime(u(i));
    }
    const VectorXd score = x.transpose() * resid;
    if (score.lpNorm<Eigen::Infinity>() < tol) break;
    const MatrixXd h = x.transpose() * curv.asDiagonal() * x;
    beta += h.ldlt().solve(score);
  }
  return beta;
}

// Weighted least squares by the normal equations.
inline VectorXd wls(const MatrixXd& x, const VectorXd& y, const VectorXd& w) {
  const MatrixXd xtwx = x.transpose() * w.asDiagonal() * x;
  const VectorXd xtwy = x.transpose() * (w.cwiseProduct(y));
  return xtwx.ldlt().solve(xtwy);
}

// Composite Simpson quadrature.
inline double simpson(const std::function<double(double)>& f, double a,
                      double b, int intervals = 20000) {
  if (intervals % 2 == 1) ++intervals;
  const double h = (b - a) / intervals;
  double sum = f(a) + f(b);
  for (int k = 1; k < intervals; ++k) {
    sum += f(a + k * h) * (k % 2 == 1 ? 4.0 : 2.0);
  }
  return sum * h / 3.0;
}

// Central finite-difference gradient.
inline VectorXd fd_gradient(const std::function<double(const VectorXd&)>& f,
                            const VectorXd& x, double h = 1e-6) {
  VectorXd g(x.size());
  VectorXd xp = x;
  for (Index j = 0; j < x.size(); ++j) {
    const double step = h * std::max(1.0, std::abs(x(j)));
    xp(j) = x(j) + step;
    const double fp = f(xp);
    xp(j) = x(j) - step;
    const double fm = f(xp);
    xp(j) = x(j);
    g(j) = (fp - fm) / (2.0 * step);
  }
  return g;
}

// Bisection root of a monotone scalar function.
inline double bisect(const std::function<double(double)>& f, double lo,
                     double hi, int iters = 200) {
  double flo = f(lo);
  for (int k = 0; k < iters; ++k) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((flo <= 0.0) == (fm <= 0.0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

// Inverse of erf by bisection (erf is monotone on [-6, 6]).
inline double erfinv(double y) {
  return bisect([y](double t) { return std::erf(t) - y; }, -6.0, 6.0, 200);
}

// Standard normal quantile via the erf inverse.
inline double z_quantile(double p) {
  return std::sqrt(2.0) * erfinv(2.0 * p - 1.0);
}

}  // namespace oracle
