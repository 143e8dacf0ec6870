#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "acmmd/estimator.hpp"
#include "acmmd/kernels.hpp"
#include "acmmd/reliability.hpp"
#include "acmmd/rng.hpp"
#include "acmmd/sequence.hpp"

// Synthetic conditional sequence model over {A, B} with implicit STOP.
//
// Given a scalar input p in (0, 1/2), the data emits A or B with probability p
// each and STOP with probability 1 - 2p at every position. The model differs
// only in its first token: A with p - dp, B with p + dp, STOP with 1 - 2p.
// Under the exponentiated Hamming kernel both ACMMD^2 and ACMMD-Rel^2 equal
// C * dp^2 with C available in closed form for discrete priors on p.
namespace acmmd::toy {

inline const AlphabetPtr &alphabet() {
  static const AlphabetPtr a = make_alphabet({"A", "B", "STOP"}, "STOP");
  return a;
}

inline constexpr Token kA = 0;
inline constexpr Token kB = 1;

struct Atom {
  double p = 0.4;
  double weight = 1.0;
};

class Prior {
public:
  Prior() : Prior(std::vector<Atom>{{0.4, 1.0}}) {}

  explicit Prior(std::vector<Atom> atoms) : atoms_(std::move(atoms)) {
    if (atoms_.empty()) throw std::invalid_argument("prior needs at least one atom");
    double total = 0.0;
    for (const auto &a : atoms_) {
      if (!(a.p > 0.0 && a.p < 0.5)) {
        throw std::invalid_argument("prior atoms must lie in (0, 0.5)");
      }
      if (!(a.weight > 0.0)) throw std::invalid_argument("prior weights must be positive");
      total += a.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw std::invalid_argument("prior weights must sum to 1");
    }
    cumulative_.reserve(atoms_.size());
    double c = 0.0;
    for (const auto &a : atoms_) cumulative_.push_back(c += a.weight);
  }

  // m evenly spaced atoms on [lo, hi] with equal weights.
  static Prior uniform_grid(double lo, double hi, std::size_t m) {
    if (m == 0) throw std::invalid_argument("grid needs at least one atom");
    std::vector<Atom> atoms;
    for (std::size_t i = 0; i < m; ++i) {
      const double t = m == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(m - 1);
      atoms.push_back({lo + t * (hi - lo), 1.0 / static_cast<double>(m)});
    }
    return Prior(std::move(atoms));
  }

  static Prior single(double p) { return Prior({{p, 1.0}}); }

  const std::vector<Atom> &atoms() const { return atoms_; }

  double min_p() const {
    double m = atoms_.front().p;
    for (const auto &a : atoms_) m = std::min(m, a.p);
    return m;
  }

  double sample(Rng &rng) const {
    if (atoms_.size() == 1) return atoms_.front().p;
    const double u = uniform01(rng) * cumulative_.back();
    for (std::size_t i = 0; i < atoms_.size(); ++i) {
      if (u < cumulative_[i]) return atoms_[i].p;
    }
    return atoms_.back().p;
  }

private:
  std::vector<Atom> atoms_;
  std::vector<double> cumulative_;
};

struct Config {
  Prior prior = Prior::uniform_grid(0.3, 0.45, 5);
  double lambda = 1.0;
  double delta_p = 0.25;
  // Bandwidth of the distribution kernel used by ACMMD-Rel.
  double sigma = 1.0;
  // Kernel on the scalar input p.
  KernelSpec kx = KernelSpec::gaussian(1.0);

  KernelSpec ky() const { return KernelSpec::exp_hamming(lambda); }
  KernelSpec kp() const { return KernelSpec::distribution_exp_mmd(sigma, ky()); }

  void validate() const {
    if (!(lambda > 0)) throw std::invalid_argument("toy lambda must be > 0");
    if (!(sigma > 0)) throw std::invalid_argument("toy sigma must be > 0");
    if (!(delta_p >= 0.0) || delta_p > prior.min_p()) {
      throw std::invalid_argument("toy delta_p must satisfy 0 <= delta_p <= min p");
    }
    if (!kx.sigma && kx.on_vectors()) {
      throw std::invalid_argument("toy kx needs an explicit bandwidth");
    }
    kx.validate();
  }
};

// Five evenly spaced atoms on [0.3, 0.45], lambda = 1, dp = 0.25, sigma = 1,
// Gaussian kx with unit bandwidth.
inline Config default_config() { return Config{}; }

namespace detail {

inline Token draw_token(double u, double p_a, double p_ab, bool &stop) {
  if (u < p_a) return kA;
  if (u < p_ab) return kB;
  stop = true;
  return 0;
}

inline void check_p(double p) {
  if (!(p > 0.0 && p < 0.5)) throw std::invalid_argument("toy p must lie in (0, 0.5)");
}

} // namespace detail

// Tokens A, B (probability p each) until STOP (probability 1 - 2p).
inline Sequence sample_data_seq(double p, Rng &rng) {
  detail::check_p(p);
  std::vector<Token> tokens;
  for (;;) {
    bool stop = false;
    const Token t = detail::draw_token(uniform01(rng), p, 2.0 * p, stop);
    if (stop) break;
    tokens.push_back(t);
  }
  return Sequence(alphabet(), std::move(tokens));
}

// As sample_data_seq, with the first token drawn as A: p - dp, B: p + dp.
inline Sequence sample_model_seq(double p, double delta_p, Rng &rng) {
  detail::check_p(p);
  if (p - delta_p < 0.0 || p + delta_p > 1.0) {
    throw std::invalid_argument("toy model probabilities out of range");
  }
  std::vector<Token> tokens;
  bool stop = false;
  const Token first = detail::draw_token(uniform01(rng), p - delta_p, 2.0 * p, stop);
  if (stop) return Sequence(alphabet(), {});
  tokens.push_back(first);
  for (;;) {
    const Token t = detail::draw_token(uniform01(rng), p, 2.0 * p, stop);
    if (stop) break;
    tokens.push_back(t);
  }
  return Sequence(alphabet(), std::move(tokens));
}

inline Triplet sample_triplet(const Config &config, Rng &rng) {
  const double p = config.prior.sample(rng);
  Triplet t;
  t.x = p;
  t.y.tokens = sample_data_seq(p, rng);
  t.y_model.tokens = sample_model_seq(p, config.delta_p, rng);
  return t;
}

inline std::vector<Triplet> sample_triplets(const Config &config, std::size_t n, Rng &rng) {
  std::vector<Triplet> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample_triplet(config, rng));
  return out;
}

// Reliability record conditioned on the model's own prediction q_{|p}: the
// true output follows the data law at p; y_model and the R model samples are
// independent draws from the model at p.
inline ReliabilityRecord sample_reliability_record(const Config &config, std::size_t r,
                                                   Rng &rng) {
  const double p = config.prior.sample(rng);
  ReliabilityRecord rec;
  rec.x = p;
  rec.y.tokens = sample_data_seq(p, rng);
  rec.y_model.tokens = sample_model_seq(p, config.delta_p, rng);
  rec.model_samples.reserve(r);
  for (std::size_t k = 0; k < r; ++k) {
    rec.model_samples.push_back({sample_model_seq(p, config.delta_p, rng), std::nullopt});
  }
  return rec;
}

inline std::vector<ReliabilityRecord> sample_reliability_records(const Config &config,
                                                                 std::size_t n, std::size_t r,
                                                                 Rng &rng) {
  std::vector<ReliabilityRecord> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) out.push_back(sample_reliability_record(config, r, rng));
  return out;
}

// ---------------------------------------------------------------------------
// Closed forms
// ---------------------------------------------------------------------------

namespace detail {

// (2p' e / (1 - 2p' e) + 2p e / (1 - 2p e) + 1) with e = exp(-lambda): the
// contribution of sequences where one side stops before the other.
inline double tail_factor(double p, double q, double lambda) {
  const double e = std::exp(-lambda);
  const double dp = 1.0 - 2.0 * p * e;
  const double dq = 1.0 - 2.0 * q * e;
  if (!(dp > 0.0) || !(dq > 0.0)) throw std::domain_error("toy tail denominator <= 0");
  return 2.0 * q * e / dq + 2.0 * p * e / dp + 1.0;
}

// 1 - 4pq(1 + e)/2, the geometric-series denominator over shared lengths.
inline double shared_denominator(double p, double q, double lambda) {
  const double d = 1.0 - 4.0 * p * q * (1.0 + std::exp(-lambda)) / 2.0;
  if (!(d > 0.0)) throw std::domain_error("toy shared-length denominator <= 0");
  return d;
}

// Weight of the pair (p, q) in C / dp^2, excluding the input kernel:
// 2(1 - e)(1 - 2p)(1 - 2q) / (1 - 4pq(1 + e)/2) * tail_factor.
inline double pair_weight(double p, double q, double lambda) {
  return 2.0 * (1.0 - std::exp(-lambda)) * (1.0 - 2.0 * p) * (1.0 - 2.0 * q) /
         shared_denominator(p, q, lambda) * tail_factor(p, q, lambda);
}

} // namespace detail

// Terms of E k(y, y') for y ~ q_{|p}, y' ~ q_{|p'} split by whether the first
// tokens are both letters (C * A) or at least one side stops at once (T0).
struct ModelPairTerms {
  double c = 0.0;   // C(p, p')
  double a = 0.0;   // A(p, p')
  double t0 = 0.0;  // T0(p, p')
  double t() const { return c * a + t0; }
};

inline ModelPairTerms model_pair_terms(double p, double q, double lambda, double delta_p) {
  detail::check_p(p);
  detail::check_p(q);
  const double e = std::exp(-lambda);
  ModelPairTerms terms;
  terms.c = (1.0 - 2.0 * p) * (1.0 - 2.0 * q) * 4.0 * p * q /
            detail::shared_denominator(p, q, lambda) * detail::tail_factor(p, q, lambda);
  terms.a = (2.0 * p * q + 2.0 * delta_p * delta_p) / (4.0 * p * q) * (1.0 - e) + e;
  terms.t0 = (1.0 - 2.0 * p) * (1.0 - 2.0 * q) * detail::tail_factor(p, q, lambda);
  return terms;
}

// Exact MMD^2 between the model distributions at p and p' under e^{-lambda d_H}.
inline double mmd_sq_models_exact(double p, double q, double lambda, double delta_p) {
  if (delta_p < 0.0 || p - delta_p < 0.0 || q - delta_p < 0.0) {
    throw std::invalid_argument("toy delta_p out of range");
  }
  return model_pair_terms(p, p, lambda, delta_p).t() +
         model_pair_terms(q, q, lambda, delta_p).t() -
         2.0 * model_pair_terms(p, q, lambda, delta_p).t();
}

// Constant C with ACMMD^2 = C dp^2, as the weighted double sum over atoms.
inline double acmmd_sq_constant(const Config &config) {
  config.validate();
  const Kernel kx(config.kx);
  double c = 0.0;
  for (const auto &a : config.prior.atoms()) {
    for (const auto &b : config.prior.atoms()) {
      c += a.weight * b.weight * kx(Input{a.p}, Input{b.p}) *
           detail::pair_weight(a.p, b.p, config.lambda);
    }
  }
  return c;
}

// ACMMD^2 (the square; ACMMD itself is sqrt(C) |dp|).
inline double acmmd_sq_exact(const Config &config) {
  return acmmd_sq_constant(config) * config.delta_p * config.delta_p;
}

inline double acmmd_rel_sq_constant(const Config &config) {
  config.validate();
  double c = 0.0;
  for (const auto &a : config.prior.atoms()) {
    for (const auto &b : config.prior.atoms()) {
      const double mmd = mmd_sq_models_exact(a.p, b.p, config.lambda, config.delta_p);
      c += a.weight * b.weight * distribution_kernel(mmd, config.sigma) *
           detail::pair_weight(a.p, b.p, config.lambda);
    }
  }
  return c;
}

// ACMMD-Rel^2 with k_P(q, q') = exp(-MMD^2(q, q') / (2 sigma^2)).
inline double acmmd_rel_sq_exact(const Config &config) {
  return acmmd_rel_sq_constant(config) * config.delta_p * config.delta_p;
}

} // namespace acmmd::toy
