#pragma once

#include <Eigen/Core>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "cbal/errors.hpp"

namespace cbal {

using Eigen::ArrayXd;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Linear indices are clamped to [-30, 30] before exponentiation; pi(+-30) is
// within 1e-13 of {0, 1}, below every tolerance in the estimator.
inline constexpr double kIndexClamp = 30.0;

inline double clamp_index(double u) {
  if (u < -kIndexClamp) return -kIndexClamp;
  if (u > kIndexClamp) return kIndexClamp;
  return u;
}

// log(1 + exp(x)) without overflow.
inline double log1p_exp(double x) {
  return (x > 0.0 ? x : 0.0) + std::log1p(std::exp(-std::abs(x)));
}

enum class LinkId { logistic };

struct Link {
  LinkId id = LinkId::logistic;

  double pi(double u) const { return 1.0 / (1.0 + std::exp(-clamp_index(u))); }
  double pi_prime(double u) const {
    const double p = pi(u);
    return p * (1.0 - p);
  }
};

inline Link logistic_link() { return Link{}; }

// Weight w1 applied inside the quasi-likelihood integrand. The bpp selector
// carries one constant per observation, b''(alpha_hat' x_i), frozen from the
// initial outcome fit.
struct PropensityWeight {
  enum class Selector { pi, one, bpp };

  Selector selector = Selector::one;
  VectorXd constants;  // per-observation values, bpp only

  static PropensityWeight Pi() { return {Selector::pi, {}}; }
  static PropensityWeight One() { return {Selector::one, {}}; }
  static PropensityWeight Bpp(VectorXd c) {
    if ((c.array() <= 0.0).any()) {
      throw Error("PropensityWeight: bpp constants must be strictly positive");
    }
    return {Selector::bpp, std::move(c)};
  }

  // w1 value for observation i at linear index u.
  double value(double u, Index i, const Link& link) const {
    switch (selector) {
      case Selector::pi:
        return link.pi(u);
      case Selector::one:
        return 1.0;
      case Selector::bpp:
        return constants(i);
    }
    return 1.0;
  }
};

// Weight w2 applied in the outcome loss.
struct OutcomeWeight {
  enum class Selector { one, inv_pi, ps_adjusted };

  Selector selector = Selector::ps_adjusted;

  // For the logistic link, pi'(u)/pi(u)^2 = (1 - pi(u))/pi(u) = exp(-u).
  double value(double u, const Link& link) const {
    switch (selector) {
      case Selector::one:
        return 1.0;
      case Selector::inv_pi:
        return 1.0 / link.pi(u);
      case Selector::ps_adjusted:
        return std::exp(-clamp_index(u));
    }
    return 1.0;
  }
};

// Exponential-family terms. The dispersion a(phi) is treated as known and
// fixed at 1; it never enters the point estimator.
struct Family {
  enum class Id { gaussian, binomial, poisson };

  Id id = Id::gaussian;
  int trials = 1;           // binomial only
  double dispersion = 1.0;  // a(phi)

  static Family Gaussian() { return {Id::gaussian, 1, 1.0}; }
  static Family Binomial(int m) {
    if (m < 1) throw ConfigError("Family::Binomial: trial count must be >= 1");
    return {Id::binomial, m, 1.0};
  }
  static Family Poisson() { return {Id::poisson, 1, 1.0}; }

  double b(double u) const {
    switch (id) {
      case Id::gaussian:
        return 0.5 * u * u;
      case Id::binomial:
        return trials * log1p_exp(u);
      case Id::poisson:
        return std::exp(clamp_index(u));
    }
    return 0.0;
  }

  double b_prime(double u) const {
    switch (id) {
      case Id::gaussian:
        return u;
      case Id::binomial:
        return trials / (1.0 + std::exp(-clamp_index(u)));
      case Id::poisson:
        return std::exp(clamp_index(u));
    }
    return 0.0;
  }

  double b_double_prime(double u) const {
    switch (id) {
      case Id::gaussian:
        return 1.0;
      case Id::binomial: {
        const double p = 1.0 / (1.0 + std::exp(-clamp_index(u)));
        return trials * p * (1.0 - p);
      }
      case Id::poisson:
        return std::exp(clamp_index(u));
    }
    return 0.0;
  }

  // Throws InvalidOutcomeError when y is incompatible with the family.
  void validate_outcome(const VectorXd& y) const {
    for (Index i = 0; i < y.size(); ++i) {
      const double v = y(i);
      if (!std::isfinite(v)) {
        throw InvalidOutcomeError("outcome contains a non-finite value at row " +
                                  std::to_string(i + 1));
      }
      switch (id) {
        case Id::gaussian:
          break;
        case Id::binomial:
          if (v != std::floor(v) || v < 0.0 || v > trials) {
            throw InvalidOutcomeError(
                "binomial outcome must be an integer in [0, " +
                std::to_string(trials) + "], got " + std::to_string(v) +
                " at row " + std::to_string(i + 1));
          }
          break;
        case Id::poisson:
          if (v != std::floor(v) || v < 0.0) {
            throw InvalidOutcomeError(
                "poisson outcome must be a nonnegative integer, got " +
                std::to_string(v) + " at row " + std::to_string(i + 1));
          }
          break;
      }
    }
  }
};

// Observed sample: design matrix with a mandatory intercept column, binary
// treatment and outcome.
struct Dataset {
  MatrixXd X;  // n x d, column 0 identically one
  VectorXd T;  // values in {0, 1}
  VectorXd Y;
  std::vector<std::string> names;  // d column names, names[0] is the intercept

  Index n() const { return X.rows(); }
  Index d() const { return X.cols(); }

  Index treated_count() const {
    return static_cast<Index>(std::lround(T.sum()));
  }

  void validate() const {
    if (X.rows() == 0 || X.cols() == 0) throw Error("Dataset: empty design");
    if (T.size() != X.rows() || Y.size() != X.rows()) {
      throw Error("Dataset: T/Y length must match the design rows");
    }
    if (!X.allFinite() || !Y.allFinite()) {
      throw Error("Dataset: non-finite entries");
    }
    if ((X.col(0).array() != 1.0).any()) {
      throw Error("Dataset: column 0 must be the intercept (all ones)");
    }
    for (Index i = 0; i < T.size(); ++i) {
      if (T(i) != 0.0 && T(i) != 1.0) {
        throw Error("Dataset: treatment must be 0/1, got " +
                    std::to_string(T(i)) + " at row " + std::to_string(i + 1));
      }
    }
    const Index n1 = treated_count();
    if (n1 == 0 || n1 == n()) {
      throw DegenerateDataError(
          "Dataset: need at least one treated and one control row");
    }
    if (!names.empty() && static_cast<Index>(names.size()) != d()) {
      throw Error("Dataset: name count must match the design columns");
    }
  }

  // Same sample with the treatment labels flipped (used for the control arm).
  Dataset swapped_arms() const {
    Dataset out = *this;
    out.T = VectorXd::Ones(T.size()) - T;
    return out;
  }
};

// Integrand of the generalized quasi-likelihood: {t/pi(u) - 1} * w1.
// c supplies the per-observation constant for the bpp selector.
inline double quasi_integrand(double u, double t, const Link& link,
                              PropensityWeight::Selector w1, double c = 1.0) {
  double w = 1.0;
  switch (w1) {
    case PropensityWeight::Selector::pi:
      w = link.pi(u);
      break;
    case PropensityWeight::Selector::one:
      w = 1.0;
      break;
    case PropensityWeight::Selector::bpp:
      w = c;
      break;
  }
  return (t / link.pi(u) - 1.0) * w;
}

// Closed-form quasi-likelihood Q(beta) = (1/n) sum_i int_0^{beta'x_i}
// {T_i/pi(u) - 1} w1(u) du for the logistic link:
//   w1 = pi : T m - log(1 + e^m) + log 2
//   w1 = 1  : (T - 1) m - T e^{-m} + T
//   w1 = bpp: c * [(T - 1) m - T e^{-m} + T]
inline double closed_form_Q(const VectorXd& beta, const Dataset& data,
                            const PropensityWeight& w1, const Link& link) {
  if (link.id != LinkId::logistic) {
    throw UnsupportedLinkError("closed_form_Q: only the logistic link ships");
  }
  const VectorXd m = data.X * beta;
  const double log2 = std::log(2.0);
  double sum = 0.0;
  for (Index i = 0; i < data.n(); ++i) {
    const double t = data.T(i);
    const double mi = m(i);
    switch (w1.selector) {
      case PropensityWeight::Selector::pi:
        sum += t * mi - log1p_exp(mi) + log2;
        break;
      case PropensityWeight::Selector::one:
        sum += (t - 1.0) * mi - t * std::exp(-clamp_index(mi)) + t;
        break;
      case PropensityWeight::Selector::bpp:
        sum += w1.constants(i) *
               ((t - 1.0) * mi - t * std::exp(-clamp_index(mi)) + t);
        break;
    }
  }
  return sum / static_cast<double>(data.n());
}

}  // namespace cbal
