#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "acmmd/estimator.hpp"
#include "acmmd/rng.hpp"
#include "acmmd/toy.hpp"

namespace {

using namespace acmmd;

Output out(std::string_view s) { return {Sequence::parse(toy::alphabet(), s), std::nullopt}; }

struct ConstantKernel {
  double operator()(const Input &, const Input &) const { return 1.0; }
};

std::vector<Triplet> toy_data(std::size_t n, std::uint64_t seed, double dp = 0.25) {
  toy::Config cfg = toy::default_config();
  cfg.delta_p = dp;
  Rng rng = make_rng(seed);
  return toy::sample_triplets(cfg, n, rng);
}

TEST(GTerm, WorkedExamples) {
  const KernelSpec ky = KernelSpec::exp_hamming(1.0);
  EXPECT_EQ(g_term(out("AB"), out("AB"), out("B"), out("B"), ky), 0.0);
  const double g = g_term(out("A"), out("B"), out("A"), out("B"), ky);
  EXPECT_NEAR(g, 2.0 * (1.0 - std::exp(-1.0)), 1e-12);
  EXPECT_NEAR(g, 1.264241, 1e-6);
  EXPECT_EQ(g_term(out("B"), out("A"), out("A"), out("B"), ky), -g);
}

TEST(GTerm, SwapFlipsSignExactly) {
  const Kernel ky(KernelSpec::exp_hamming(0.8));
  const auto data = toy_data(40, 9);
  for (std::size_t i = 0; i + 1 < data.size(); ++i) {
    const auto &a = data[i];
    const auto &b = data[i + 1];
    EXPECT_EQ(g_term(a.y_model, a.y, b.y, b.y_model, ky),
              -g_term(a.y, a.y_model, b.y, b.y_model, ky));
  }
}

TEST(HMatrix, RejectsAsymmetricOrNonSquare) {
  Matrix m(2, 2);
  m << 0, 1, 2, 0;
  EXPECT_THROW(HMatrix{m}, std::invalid_argument);
  EXPECT_THROW(HMatrix{Matrix(2, 3)}, std::invalid_argument);
}

TEST(HMatrix, ZeroWhenModelSamplesEqualOutputs) {
  auto data = toy_data(6, 1);
  for (auto &t : data) t.y_model = t.y;
  const HMatrix h = h_matrix(data, KernelSpec::gaussian(1.0), KernelSpec::exp_hamming(1.0));
  EXPECT_EQ(h.values(), Matrix::Zero(6, 6));
  EXPECT_EQ(acmmd_sq(h), 0.0);
}

TEST(HMatrix, ConstantInputKernelGivesGTerm) {
  const auto data = toy_data(5, 2);
  const Kernel ky(KernelSpec::exp_hamming(1.0));
  const HMatrix h = h_matrix(std::span<const Triplet>(data), ConstantKernel{}, ky);
  for (std::size_t i = 0; i < 5; ++i) {
    for (std::size_t j = 0; j < 5; ++j) {
      EXPECT_EQ(h(i, j), g_term(data[i].y, data[i].y_model, data[j].y, data[j].y_model, ky));
    }
  }
}

TEST(HMatrix, MatchesScalarOracle) {
  const auto data = toy_data(4, 3);
  const Kernel kx(KernelSpec::gaussian(1.0));
  const Kernel ky(KernelSpec::exp_hamming(1.0));
  const HMatrix h = h_matrix(data, KernelSpec::gaussian(1.0), KernelSpec::exp_hamming(1.0));
  for (std::size_t i = 0; i < 4; ++i) {
    for (std::size_t j = 0; j < 4; ++j) {
      const double x = std::get<double>(data[i].x) - std::get<double>(data[j].x);
      const double k = std::exp(-0.5 * x * x);
      const auto &a = data[i];
      const auto &b = data[j];
      const double g = exp_hamming(a.y_model.tokens, b.y_model.tokens, 1.0) +
                       exp_hamming(a.y.tokens, b.y.tokens, 1.0) -
                       exp_hamming(a.y_model.tokens, b.y.tokens, 1.0) -
                       exp_hamming(a.y.tokens, b.y_model.tokens, 1.0);
      EXPECT_NEAR(h(i, j), k * g, 1e-15);
    }
  }
}

TEST(HMatrix, Errors) {
  const auto data = toy_data(3, 4);
  EXPECT_THROW(h_matrix(std::span<const Triplet>(data.data(), 1), KernelSpec::gaussian(1.0),
                        KernelSpec::exp_hamming()),
               std::invalid_argument);
  auto mixed = data;
  mixed[1].x = Vector::Zero(2);
  EXPECT_THROW(h_matrix(mixed, KernelSpec::gaussian(1.0), KernelSpec::exp_hamming()),
               std::invalid_argument);
  auto other = data;
  other[2].y = {Sequence::parse(make_alphabet({"A", "B"}), "A"), std::nullopt};
  EXPECT_THROW(h_matrix(other, KernelSpec::gaussian(1.0), KernelSpec::exp_hamming()),
               std::invalid_argument);
}

TEST(HMatrix, IndependentOfThreadCount) {
  const auto data = toy_data(60, 5);
  const auto h1 = h_matrix(data, KernelSpec::gaussian(), KernelSpec::exp_hamming(), 1);
  const auto h3 = h_matrix(data, KernelSpec::gaussian(), KernelSpec::exp_hamming(), 3);
  EXPECT_EQ(h1.values(), h3.values());
}

TEST(AcmmdSq, WorkedExamples) {
  Matrix m(2, 2);
  m << 7.0, -0.3, -0.3, 9.0;
  EXPECT_EQ(acmmd_sq(HMatrix(m)), -0.3);
  EXPECT_EQ(acmmd_sq(HMatrix(Matrix::Zero(5, 5))), 0.0);
  EXPECT_THROW(acmmd_sq(HMatrix(Matrix::Zero(1, 1))), std::invalid_argument);
}

TEST(AcmmdSq, IgnoresDiagonal) {
  Rng rng = make_rng(6);
  Matrix m(5, 5);
  for (int i = 0; i < 5; ++i) {
    for (int j = i; j < 5; ++j) m(i, j) = m(j, i) = uniform01(rng) - 0.5;
  }
  Matrix d = m;
  d.diagonal().setConstant(1e6);
  EXPECT_EQ(acmmd_sq(HMatrix(m)), acmmd_sq(HMatrix(d)));
}

TEST(AcmmdSq, MatchesDoubleLoopOracle) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const std::size_t n = 2 + seed % 7;
    const auto data = toy_data(n, 100 + seed);
    const HMatrix h = h_matrix(data, KernelSpec::gaussian(1.0), KernelSpec::exp_hamming(1.0));
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        if (i == j) continue;
        const double dx = std::get<double>(data[i].x) - std::get<double>(data[j].x);
        const double g = exp_hamming(data[i].y_model.tokens, data[j].y_model.tokens, 1.0) +
                         exp_hamming(data[i].y.tokens, data[j].y.tokens, 1.0) -
                         exp_hamming(data[i].y_model.tokens, data[j].y.tokens, 1.0) -
                         exp_hamming(data[i].y.tokens, data[j].y_model.tokens, 1.0);
        s += std::exp(-0.5 * dx * dx) * g;
      }
    }
    const double oracle = s / static_cast<double>(n * (n - 1));
    EXPECT_NEAR(acmmd_sq(h), oracle, 1e-12 * std::max(1.0, std::abs(oracle)));
  }
}

TEST(AcmmdSq, PermutationInvariant) {
  const auto data = toy_data(12, 7);
  const double base =
      acmmd_sq(h_matrix(data, KernelSpec::gaussian(1.0), KernelSpec::exp_hamming(1.0)));
  std::vector<std::size_t> perm(data.size());
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng = make_rng(8);
  std::shuffle(perm.begin(), perm.end(), rng);
  std::vector<Triplet> shuffled;
  for (auto p : perm) shuffled.push_back(data[p]);
  const double permuted =
      acmmd_sq(h_matrix(shuffled, KernelSpec::gaussian(1.0), KernelSpec::exp_hamming(1.0)));
  EXPECT_NEAR(permuted, base, 1e-14);
}

TEST(AcmmdSq, NegativeValuesAreNotClamped) {
  bool seen_negative = false;
  for (std::uint64_t seed = 0; seed < 50 && !seen_negative; ++seed) {
    const auto data = toy_data(10, seed, 0.0);
    seen_negative =
        acmmd_sq(h_matrix(data, KernelSpec::gaussian(1.0), KernelSpec::exp_hamming())) < 0.0;
  }
  EXPECT_TRUE(seen_negative);
}

TEST(SigmaHSq, WorkedExamples) {
  Matrix c = Matrix::Constant(4, 4, 0.7);
  c.diagonal().setConstant(3.0);
  EXPECT_NEAR(sigma_h_sq(HMatrix(c)), 0.0, 1e-15);
  // Off-diagonal row means 0, 1, 2: H01 + H02 = 0, H01 + H12 = 2, H02 + H12 = 4.
  Matrix m(3, 3);
  m << 0, -1, 1, -1, 0, 3, 1, 3, 0;
  EXPECT_NEAR(sigma_h_sq(HMatrix(m)), 4.0, 1e-12);
  EXPECT_THROW(sigma_h_sq(HMatrix(Matrix::Zero(2, 2))), std::invalid_argument);
}

TEST(SigmaHSq, MatchesDirectFormula) {
  Rng rng = make_rng(12);
  const int n = 9;
  Matrix m(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) m(i, j) = m(j, i) = uniform01(rng);
  }
  std::vector<double> means;
  for (int i = 0; i < n; ++i) means.push_back((m.row(i).sum() - m(i, i)) / (n - 1));
  const double mu = std::accumulate(means.begin(), means.end(), 0.0) / n;
  double var = 0.0;
  for (double x : means) var += (x - mu) * (x - mu);
  EXPECT_NEAR(sigma_h_sq(HMatrix(m)), 4.0 * var / (n - 1), 1e-14);
}

TEST(Estimator, MedianBandwidthIsResolvedFromInputs) {
  const auto data = toy_data(30, 13);
  const KernelSpec kx = resolve_input_kernel(KernelSpec::gaussian(), data);
  ASSERT_TRUE(kx.sigma);
  EXPECT_GT(*kx.sigma, 0.0);
  EXPECT_EQ(resolve_output_kernel(KernelSpec::exp_hamming(), std::span<const Triplet>(data)),
            KernelSpec::exp_hamming());
}

} // namespace
