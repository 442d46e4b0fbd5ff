#include "drcurve/kernels.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace drcurve {
namespace {

const KernelSpec kEpan{KernelFamily::Epanechnikov};
const KernelSpec kTri{KernelFamily::Triangular};
const KernelSpec kGauss{KernelFamily::TruncatedGaussian};

TEST(Kernels, ClosedFormValues)
{
  EXPECT_DOUBLE_EQ(eval_kernel(kEpan, 0.0), 0.75);
  EXPECT_DOUBLE_EQ(eval_kernel(kEpan, 1.5), 0.0);
  EXPECT_DOUBLE_EQ(eval_kernel(kTri, 0.5), 0.5);
  EXPECT_DOUBLE_EQ(eval_kernel(kGauss, -1.0001), 0.0);
}

TEST(Kernels, SymmetricAndNonnegative)
{
  for (const auto& k : {kEpan, kTri, kGauss}) {
    for (double u = -1.2; u <= 1.2; u += 0.01) {
      EXPECT_GE(k(u), 0.0);
      EXPECT_DOUBLE_EQ(k(u), k(-u));
    }
  }
}

TEST(Kernels, IntegrateToOne)
{
  for (const auto& k : {kEpan, kTri, kGauss}) {
    EXPECT_NEAR(kernel_moment(k, 0, 1), 1.0, 1e-10) << k.name();
  }
}

TEST(Kernels, TruncatedGaussianIsRenormalizedNormal)
{
  const double mass = std::erf(1.0 / std::numbers::sqrt2);
  const double phi0 = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  EXPECT_NEAR(kGauss(0.0), phi0 / mass, 1e-14);
}

TEST(Kernels, EpanechnikovMoments)
{
  const KernelConstants kc = kernel_constants(kEpan);
  EXPECT_NEAR(kc.c[0], 1.0, 1e-12);
  EXPECT_NEAR(kc.c[1], 0.0, 1e-12);
  EXPECT_NEAR(kc.c[2], 0.2, 1e-12);
  EXPECT_NEAR(kc.c[4], 3.0 / 35.0, 1e-12);
  EXPECT_NEAR(kc.cstar[0], 0.6, 1e-12);
  EXPECT_NEAR(kc.cstar[2], 3.0 / 35.0, 1e-12);
}

TEST(Kernels, MomentMatricesAndJensen)
{
  for (const auto& k : {kEpan, kTri, kGauss}) {
    const KernelConstants kc = kernel_constants(k);
    EXPECT_LT(kc.c[2] * kc.c[2], kc.c[4]);
    for (int j = 1; j < 6; j += 2) {
      EXPECT_NEAR(kc.c[j], 0.0, 1e-12);
    }
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) {
        const double want = r + c < 6 ? kc.c[r + c] : kernel_moment(k, r + c, 1);
        EXPECT_NEAR(kc.s4(r, c), want, 1e-12);
      }
    }
    EXPECT_GT(kc.s2.llt().matrixL().toDenseMatrix().diagonal().minCoeff(), 0.0);
    Eigen::LLT<Eigen::Matrix4d> llt(kc.s4);
    EXPECT_EQ(llt.info(), Eigen::Success);
  }
}

TEST(Kernels, VarianceConstantPaperValues)
{
  EXPECT_NEAR(v_k_tau(kEpan, 1.0), 1.25, 1e-6);
  EXPECT_NEAR(v_k_tau(kEpan, 0.0), 0.6, 1e-6);
}

// Composite Simpson on each segment between the kinks of the integrand.
double triangular_v_reference(double tau)
{
  const double c2 = 1.0 / 6.0;
  const double c4 = 1.0 / 15.0;
  auto tri = [](double u) { return std::abs(u) <= 1.0 ? 1.0 - std::abs(u) : 0.0; };
  auto f = [&](double u) {
    const double g =
      tri(u) - tau * tau * tau * c2 * ((tau * u) * (tau * u) - c2) / (c4 - c2 * c2) * tri(tau * u);
    return g * g;
  };
  std::vector<double> cuts{-1.0, 0.0, 1.0};
  if (tau > 0) {
    cuts.push_back(-1.0 / tau);
    cuts.push_back(1.0 / tau);
  }
  std::sort(cuts.begin(), cuts.end());
  double total = 0.0;
  const int m = 20000;
  for (std::size_t s = 0; s + 1 < cuts.size(); ++s) {
    const double lo = cuts[s];
    const double hi = cuts[s + 1];
    if (hi <= lo) {
      continue;
    }
    const double step = (hi - lo) / m;
    double acc = f(lo) + f(hi);
    for (int k = 1; k < m; ++k) {
      acc += f(lo + k * step) * (k % 2 ? 4.0 : 2.0);
    }
    total += acc * step / 3.0;
  }
  return total;
}

TEST(Kernels, TriangularVarianceConstantMatchesIndependentQuadrature)
{
  for (double tau : {0.5, 1.0, 2.0}) {
    EXPECT_NEAR(v_k_tau(kTri, tau), triangular_v_reference(tau), 1e-8) << tau;
  }
}

TEST(Kernels, IntegralAndExpandedFormsAgree)
{
  for (const auto& k : {kEpan, kTri, kGauss}) {
    for (double tau : {0.0, 0.5, 1.0, 2.0}) {
      EXPECT_NEAR(v_k_tau(k, tau), v_k_tau_expanded(k, tau), 1e-8) << k.name() << " " << tau;
    }
  }
}

TEST(Kernels, VarianceConstantPositive)
{
  for (const auto& k : {kEpan, kTri, kGauss}) {
    for (double tau = 0.0; tau <= 4.0; tau += 0.25) {
      EXPECT_GT(v_k_tau(k, tau), 0.0);
    }
  }
}

TEST(Kernels, ParseNames)
{
  EXPECT_EQ(parse_kernel("epanechnikov").family, KernelFamily::Epanechnikov);
  EXPECT_EQ(parse_kernel("triangular").family, KernelFamily::Triangular);
  EXPECT_EQ(parse_kernel("truncated-gaussian").family, KernelFamily::TruncatedGaussian);
  EXPECT_ANY_THROW(parse_kernel("uniform"));
}

} // namespace
} // namespace drcurve
