// Regenerates the frozen Monte Carlo constants in cbal/simulate.hpp: the
// standardization moments of the eight covariate transforms and the oracle
// truths of the misspecified / binomial generating processes. Prints a
// pasteable snippet.

#include <algorithm>
#include <cstdio>

#include "cbal/simulate.hpp"

int main() {
  using namespace cbal;
  const double rho = 0.5;
  const std::int64_t draws = dgp::kOracleDraws;

  std::printf("// rho = %.1f, %lld draws, moment seed %llu, truth seed %llu\n",
              rho, static_cast<long long>(draws),
              static_cast<unsigned long long>(dgp::kMomentSeed),
              static_cast<unsigned long long>(dgp::kTruthSeed));

  const TransformMoments m = mc_transform_moments(rho, dgp::kMomentSeed, draws);
  std::printf("inline constexpr std::array<double, 8> kTransformMean = {\n");
  for (int j = 0; j < 8; ++j) {
    std::printf("    %.17g,%s\n", m.mean[static_cast<std::size_t>(j)],
                j == 7 ? "};" : "");
  }
  std::printf("inline constexpr std::array<double, 8> kTransformSd = {\n");
  for (int j = 0; j < 8; ++j) {
    std::printf("    %.17g,%s\n", m.sd[static_cast<std::size_t>(j)],
                j == 7 ? "};" : "");
  }
  std::printf("// largest standard error of a transform mean: %.3g\n",
              *std::max_element(m.se_mean.begin(), m.se_mean.end()));

  const Truth lin_mis = mc_truth(OutcomeKind::linear, true, rho,
                                 derive_seed(dgp::kTruthSeed, 0), draws,
                                 m.mean.data(), m.sd.data());
  std::printf(
      "inline constexpr FrozenTruth kLinearMis = {%.17g, %.17g, %.6g};\n",
      lin_mis.mu1, lin_mis.mu0, lin_mis.mc_se);

  const Truth bin = mc_truth(OutcomeKind::binomial_logistic, false, rho,
                             derive_seed(dgp::kTruthSeed, 1), draws);
  std::printf(
      "inline constexpr FrozenTruth kBinomialCorrect = {%.17g, %.17g, %.6g};\n",
      bin.mu1, bin.mu0, bin.mc_se);

  const Truth bin_mis = mc_truth(OutcomeKind::binomial_logistic, true, rho,
                                 derive_seed(dgp::kTruthSeed, 2), draws,
                                 m.mean.data(), m.sd.data());
  std::printf(
      "inline constexpr FrozenTruth kBinomialMis = {%.17g, %.17g, %.6g};\n",
      bin_mis.mu1, bin_mis.mu0, bin_mis.mc_se);
  return 0;
}
