#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include <gtest/gtest.h>

#include "acmmd/toy.hpp"

namespace {

using namespace acmmd;

struct FirstToken {
  double a, b, s;
};

// E exp(-lambda d_H(y, y')) for independent toy sequences whose first tokens
// follow f1, f2 and later tokens A/B/STOP with (p, p, 1 - 2p). Position-by-
// position recursion truncated after `steps` shared letters.
double expected_kernel(double p1, FirstToken f1, double p2, FirstToken f2, double lambda,
                       int steps = 4000) {
  const double e = std::exp(-lambda);
  auto rest = [&](double p) { return (1.0 - 2.0 * p) / (1.0 - 2.0 * p * e); };
  double alive = 1.0, total = 0.0;
  FirstToken a = f1, b = f2;
  for (int t = 0; t < steps && alive > 1e-300; ++t) {
    total += alive * (a.s * b.s + a.s * (b.a + b.b) * e * rest(p2) +
                      b.s * (a.a + a.b) * e * rest(p1));
    alive *= a.a * b.a + a.b * b.b + (a.a * b.b + a.b * b.a) * e;
    a = {p1, p1, 1.0 - 2.0 * p1};
    b = {p2, p2, 1.0 - 2.0 * p2};
  }
  return total;
}

FirstToken model_first(double p, double dp) { return {p - dp, p + dp, 1.0 - 2.0 * p}; }
FirstToken data_first(double p) { return model_first(p, 0.0); }

double oracle_mmd_models(double p, double q, double lambda, double dp) {
  auto t = [&](double u, double v) {
    return expected_kernel(u, model_first(u, dp), v, model_first(v, dp), lambda);
  };
  return t(p, p) + t(q, q) - 2.0 * t(p, q);
}

// E[g | p, p'] with y from the data and y_model from the model.
double oracle_g(double p, double q, double lambda, double dp) {
  auto k = [&](FirstToken f1, double u, FirstToken f2, double v) {
    return expected_kernel(u, f1, v, f2, lambda);
  };
  return k(model_first(p, dp), p, model_first(q, dp), q) + k(data_first(p), p, data_first(q), q) -
         k(model_first(p, dp), p, data_first(q), q) - k(data_first(p), p, model_first(q, dp), q);
}

double oracle_acmmd_sq(const toy::Config &c, bool rel) {
  const Kernel kx(c.kx);
  double s = 0.0;
  for (const auto &a : c.prior.atoms()) {
    for (const auto &b : c.prior.atoms()) {
      const double w = rel ? distribution_kernel(oracle_mmd_models(a.p, b.p, c.lambda, c.delta_p),
                                                 c.sigma)
                           : kx(Input{a.p}, Input{b.p});
      s += a.weight * b.weight * w * oracle_g(a.p, b.p, c.lambda, c.delta_p);
    }
  }
  return s;
}

// Sanity check of the recursion against brute-force enumeration with the
// library kernel, for short-lived sequences.
TEST(ToyOracle, RecursionMatchesEnumeration) {
  const double p1 = 0.08, p2 = 0.11, dp = 0.05, lambda = 0.7;
  const Kernel k(KernelSpec::exp_hamming(lambda));
  struct Weighted {
    Sequence s;
    double w;
  };
  auto enumerate = [&](double p, FirstToken f) {
    std::vector<Weighted> out;
    std::function<void(std::vector<Token>, double)> rec = [&](std::vector<Token> t, double w) {
      const FirstToken cur = t.empty() ? f : FirstToken{p, p, 1.0 - 2.0 * p};
      out.push_back({Sequence(toy::alphabet(), t), w * cur.s});
      if (t.size() == 7) return;
      for (Token x : {toy::kA, toy::kB}) {
        auto next = t;
        next.push_back(x);
        rec(next, w * (x == toy::kA ? cur.a : cur.b));
      }
    };
    rec({}, 1.0);
    return out;
  };
  const auto s1 = enumerate(p1, model_first(p1, dp));
  const auto s2 = enumerate(p2, data_first(p2));
  double brute = 0.0;
  for (const auto &a : s1) {
    for (const auto &b : s2) brute += a.w * b.w * k(Output{a.s, {}}, Output{b.s, {}});
  }
  EXPECT_NEAR(brute, expected_kernel(p1, model_first(p1, dp), p2, data_first(p2), lambda), 1e-6);
}

TEST(ToyExact, ModelMmdMatchesOracle) {
  for (double lambda : {0.5, 1.0, 2.0}) {
    for (double p : {0.1, 0.3, 0.45}) {
      for (double q : {0.2, 0.35, 0.45}) {
        for (double dp : {0.0, 0.05, 0.1}) {
          EXPECT_NEAR(toy::mmd_sq_models_exact(p, q, lambda, dp),
                      oracle_mmd_models(p, q, lambda, dp), 1e-12);
        }
      }
    }
  }
}

TEST(ToyExact, AcmmdMatchesOracle) {
  for (double lambda : {0.5, 1.0, 1.7}) {
    for (double dp : {0.05, 0.15, 0.25}) {
      toy::Config c = toy::default_config();
      c.lambda = lambda;
      c.delta_p = dp;
      EXPECT_NEAR(toy::acmmd_sq_exact(c), oracle_acmmd_sq(c, false), 1e-12);
      EXPECT_NEAR(toy::acmmd_rel_sq_exact(c), oracle_acmmd_sq(c, true), 1e-12);
    }
  }
}

TEST(ToyExact, SingleAtomPrior) {
  toy::Config c;
  c.prior = toy::Prior::single(0.4);
  c.delta_p = 0.2;
  EXPECT_NEAR(toy::acmmd_sq_exact(c), oracle_acmmd_sq(c, false), 1e-12);
  // One atom: the distribution kernel is exp(-0) = 1 and kx(p, p) = 1.
  EXPECT_NEAR(toy::acmmd_rel_sq_exact(c), toy::acmmd_sq_exact(c), 1e-15);
}

TEST(ToyExact, ZeroPerturbationGivesZero) {
  toy::Config c = toy::default_config();
  c.delta_p = 0.0;
  EXPECT_EQ(toy::acmmd_sq_exact(c), 0.0);
  EXPECT_EQ(toy::acmmd_rel_sq_exact(c), 0.0);
  EXPECT_NEAR(oracle_acmmd_sq(c, false), 0.0, 1e-14);
}

TEST(ToyExact, QuadraticInPerturbation) {
  toy::Config c = toy::default_config();
  c.delta_p = 0.1;
  const double base = oracle_acmmd_sq(c, false) / 0.01;
  for (double dp : {0.02, 0.2, 0.3}) {
    c.delta_p = dp;
    EXPECT_NEAR(oracle_acmmd_sq(c, false) / (dp * dp), base, 1e-10);
    EXPECT_NEAR(toy::acmmd_sq_exact(c) / (dp * dp), base, 1e-10);
  }
}

TEST(ToyExact, SymmetricAndNonNegative) {
  for (double p = 0.05; p < 0.5; p += 0.05) {
    for (double q = 0.05; q < 0.5; q += 0.05) {
      EXPECT_NEAR(toy::detail::pair_weight(p, q, 1.0), toy::detail::pair_weight(q, p, 1.0), 1e-15);
      EXPECT_GE(toy::detail::pair_weight(p, q, 0.3), 0.0);
      const double dp = std::min(p, q) / 2;
      EXPECT_GE(toy::mmd_sq_models_exact(p, q, 1.0, dp), -1e-15);
      EXPECT_NEAR(toy::mmd_sq_models_exact(p, q, 1.0, dp), toy::mmd_sq_models_exact(q, p, 1.0, dp),
                  1e-15);
    }
    EXPECT_NEAR(toy::mmd_sq_models_exact(p, p, 1.0, p / 2), 0.0, 1e-15);
  }
}

TEST(ToyExact, DenominatorsStayPositive) {
  for (double lambda : {1e-6, 0.1, 1.0, 10.0}) {
    EXPECT_GT(toy::detail::shared_denominator(0.4999, 0.4999, lambda), 0.0);
    EXPECT_TRUE(std::isfinite(toy::detail::tail_factor(0.4999, 0.4999, lambda)));
  }
}

TEST(ToyConfig, Validation) {
  toy::Config c = toy::default_config();
  EXPECT_NO_THROW(c.validate());
  c.delta_p = 0.31;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  EXPECT_THROW(toy::Prior({{0.5, 1.0}}), std::invalid_argument);
  EXPECT_THROW(toy::Prior({{0.3, 0.4}}), std::invalid_argument);
  EXPECT_THROW(toy::Prior::uniform_grid(0.1, 0.2, 0), std::invalid_argument);
  const auto g = toy::Prior::uniform_grid(0.3, 0.45, 4);
  EXPECT_NEAR(g.atoms()[1].p, 0.35, 1e-15);
  EXPECT_EQ(g.min_p(), 0.3);
}

TEST(ToySampler, LengthIsGeometric) {
  Rng rng = make_rng(1);
  const double p = 0.3;
  const int n = 200000;
  double sum = 0.0;
  int empty = 0;
  for (int i = 0; i < n; ++i) {
    const auto s = toy::sample_data_seq(p, rng);
    sum += static_cast<double>(s.length());
    empty += s.length() == 0;
  }
  const double mean = 2 * p / (1 - 2 * p);
  const double sd = std::sqrt(2 * p) / (1 - 2 * p);
  EXPECT_NEAR(sum / n, mean, 5 * sd / std::sqrt(n));
  EXPECT_NEAR(static_cast<double>(empty) / n, 1 - 2 * p, 5 * std::sqrt(0.24 / n));
}

TEST(ToySampler, ModelFirstTokenIsPerturbed) {
  Rng rng = make_rng(2);
  const int n = 200000;
  int b_first = 0, b_second = 0, second = 0;
  for (int i = 0; i < n; ++i) {
    const auto s = toy::sample_model_seq(0.4, 0.25, rng);
    if (s.length() > 0) b_first += s[0] == toy::kB;
    if (s.length() > 1) {
      ++second;
      b_second += s[1] == toy::kB;
    }
  }
  EXPECT_NEAR(static_cast<double>(b_first) / n, 0.65, 5 * std::sqrt(0.65 * 0.35 / n));
  EXPECT_NEAR(static_cast<double>(b_second) / second, 0.5, 5 * std::sqrt(0.25 / second));
}

TEST(ToySampler, RecordsUseModelForSamples) {
  toy::Config c = toy::default_config();
  Rng rng = make_rng(3);
  const auto recs = toy::sample_reliability_records(c, 5, 7, rng);
  ASSERT_EQ(recs.size(), 5u);
  for (const auto &r : recs) {
    EXPECT_EQ(r.model_samples.size(), 7u);
    ASSERT_TRUE(r.x);
    EXPECT_NE(std::find_if(c.prior.atoms().begin(), c.prior.atoms().end(),
                           [&](const toy::Atom &a) { return a.p == std::get<double>(*r.x); }),
              c.prior.atoms().end());
  }
  Rng a = make_rng(4), b = make_rng(4);
  const auto ta = toy::sample_triplets(c, 20, a), tb = toy::sample_triplets(c, 20, b);
  for (std::size_t i = 0; i < ta.size(); ++i) {
    EXPECT_EQ(std::get<double>(ta[i].x), std::get<double>(tb[i].x));
    EXPECT_EQ(ta[i].y, tb[i].y);
    EXPECT_EQ(ta[i].y_model, tb[i].y_model);
  }
}

TEST(ToySampler, MonteCarloAgreesWithExact) {
  // Mean of many small-N unbiased estimates converges to the exact value.
  toy::Config c = toy::default_config();
  const double exact = toy::acmmd_sq_exact(c);
  double sum = 0.0, sq = 0.0;
  const int reps = 400;
  for (int s = 0; s < reps; ++s) {
    Rng rng = make_rng(500, {static_cast<std::uint64_t>(s)});
    const auto data = toy::sample_triplets(c, 40, rng);
    const double v = acmmd_sq(h_matrix(data, c.kx, c.ky()));
    sum += v;
    sq += v * v;
  }
  const double mean = sum / reps;
  const double se = std::sqrt((sq / reps - mean * mean) / reps);
  EXPECT_NEAR(mean, exact, 4 * se);
}

} // namespace
