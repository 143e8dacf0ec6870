#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "acmmd/estimator.hpp"
#include "acmmd/hypothesis_test.hpp"
#include "acmmd/kernels.hpp"
#include "acmmd/parallel.hpp"
#include "acmmd/sample_set.hpp"

namespace acmmd {

// One reliability observation. `y_model` enters the g term; `model_samples`
// (R >= 2 further draws from the same predicted distribution) are used only
// to estimate the kernel between predicted distributions.
struct ReliabilityRecord {
  Output y;
  Output y_model;
  std::vector<Output> model_samples;
  std::optional<Input> x;
};

// Unbiased MMD^2 U-statistic between two samples:
// mean_{i!=j} k(a_i, a_j) + mean_{i!=j} k(b_i, b_j) - 2/(|a||b|) sum k(a_i, b_j).
template <class T, class K>
double mmd_sq_unbiased(std::span<const T> a, std::span<const T> b, const K &k) {
  if (a.size() < 2 || b.size() < 2) {
    throw std::invalid_argument("mmd_sq_unbiased requires >= 2 samples per side");
  }
  auto within = [&k](std::span<const T> s) {
    double total = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      for (std::size_t j = 0; j < s.size(); ++j) {
        if (i != j) total += k(s[i], s[j]);
      }
    }
    const auto n = static_cast<double>(s.size());
    return total / (n * (n - 1.0));
  };
  double cross = 0.0;
  for (const auto &u : a) {
    for (const auto &v : b) cross += k(u, v);
  }
  return within(a) + within(b) -
         2.0 * cross / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

namespace detail {

template <class T>
std::vector<T> concat(std::span<const T> a, std::span<const T> b) {
  std::vector<T> out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

} // namespace detail

inline double mmd_sq_unbiased(std::span<const Sequence> a, std::span<const Sequence> b,
                              const KernelSpec &ky) {
  return mmd_sq_unbiased(a, b, Kernel(ky));
}

inline double mmd_sq_unbiased(std::span<const Output> a, std::span<const Output> b,
                              const KernelSpec &ky) {
  const auto all = detail::concat(a, b);
  return mmd_sq_unbiased(a, b, Kernel(resolve_bandwidth(ky, std::span<const Output>(all))));
}

// k(q, q') = exp(-MMD^2(q, q') / (2 sigma^2)).
inline double distribution_kernel(double mmd_sq, double sigma) {
  if (!(sigma > 0)) throw std::invalid_argument("sigma must be > 0");
  return std::exp(-mmd_sq / (2.0 * sigma * sigma));
}

// Estimated kernel between predicted distributions. Entries may exceed 1 since
// the unbiased MMD^2 can be negative; the matrix need not be PSD.
struct KhatMatrix {
  Matrix values;
  Matrix mmd_sq;  // the pairwise unbiased MMD^2 estimates
  double sigma = 1.0;
};

// Pairwise unbiased MMD^2 between the model_samples of every pair of records.
// The diagonal holds a split-half estimate (first half vs second half of the
// record's own samples), or 0 when R < 4.
inline Matrix pairwise_mmd_sq(std::span<const ReliabilityRecord> records,
                              const KernelSpec &inner, unsigned threads = 1) {
  if (records.size() < 2) throw std::invalid_argument("need at least 2 records");
  for (const auto &r : records) {
    if (r.model_samples.size() < 2) {
      throw std::invalid_argument("every record needs R >= 2 model samples");
    }
  }
  const std::size_t n = records.size();
  const auto ni = static_cast<Eigen::Index>(n);
  Matrix mmd(ni, ni);

  auto split_half = [](const std::vector<Output> &s) {
    const std::size_t half = s.size() / 2;
    return std::pair{std::span<const Output>(s.data(), half),
                     std::span<const Output>(s.data() + half, s.size() - half)};
  };

  if (inner.on_sequences()) {
    const Kernel kernel(inner);
    const auto &alphabet = records.front().model_samples.front().tokens.alphabet();
    const unsigned bits = alphabet ? SampleSet::token_bits(*alphabet) : 1;
    const bool tilted = detail::tilted(kernel);
    std::vector<SampleSet> sets(n);
    std::vector<std::vector<double>> weights(n);
    std::vector<double> within(n);
    parallel_for(n, [&](std::size_t i) {
      std::vector<Sequence> seqs;
      seqs.reserve(records[i].model_samples.size());
      for (const auto &o : records[i].model_samples) {
        if (!same_alphabet(o.tokens.alphabet(), alphabet)) {
          throw std::invalid_argument("model samples use different alphabets");
        }
        seqs.push_back(o.tokens);
      }
      sets[i] = SampleSet(seqs, bits);
      weights[i] = detail::sample_weights(sets[i], tilted);
      within[i] = within_mean(sets[i], kernel);
    }, threads);
    parallel_for(n, [&](std::size_t i) {
      const auto ii = static_cast<Eigen::Index>(i);
      for (std::size_t j = i + 1; j < n; ++j) {
        const double cross = kernel_sum(sets[i], weights[i], sets[j], weights[j], kernel) /
                             (static_cast<double>(sets[i].total()) *
                              static_cast<double>(sets[j].total()));
        mmd(ii, static_cast<Eigen::Index>(j)) = within[i] + within[j] - 2.0 * cross;
      }
      const auto &s = records[i].model_samples;
      if (s.size() >= 4) {
        std::vector<Sequence> seqs;
        for (const auto &o : s) seqs.push_back(o.tokens);
        const std::size_t half = seqs.size() / 2;
        const SampleSet lo(std::span<const Sequence>(seqs.data(), half), bits);
        const SampleSet hi(std::span<const Sequence>(seqs.data() + half, seqs.size() - half), bits);
        const double cross = kernel_sum(lo, hi, kernel) /
                             (static_cast<double>(lo.total()) * static_cast<double>(hi.total()));
        mmd(ii, ii) = within_mean(lo, kernel) + within_mean(hi, kernel) - 2.0 * cross;
      } else {
        mmd(ii, ii) = 0.0;
      }
    }, threads);
  } else {
    const Kernel kernel(inner);
    parallel_for(n, [&](std::size_t i) {
      const auto ii = static_cast<Eigen::Index>(i);
      const auto &si = records[i].model_samples;
      for (std::size_t j = i + 1; j < n; ++j) {
        const auto &sj = records[j].model_samples;
        mmd(ii, static_cast<Eigen::Index>(j)) =
            mmd_sq_unbiased(std::span<const Output>(si), std::span<const Output>(sj), kernel);
      }
      if (si.size() >= 4) {
        const auto [lo, hi] = split_half(si);
        mmd(ii, ii) = mmd_sq_unbiased(lo, hi, kernel);
      } else {
        mmd(ii, ii) = 0.0;
      }
    }, threads);
  }
  for (Eigen::Index i = 0; i < ni; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) mmd(i, j) = mmd(j, i);
  }
  return mmd;
}

// Median of sqrt(max(MMD^2, 0)) over record pairs, falling back to 1.
inline double median_mmd_bandwidth(const Matrix &mmd_sq) {
  std::vector<double> d;
  for (Eigen::Index i = 0; i < mmd_sq.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < mmd_sq.cols(); ++j) {
      d.push_back(std::sqrt(std::max(mmd_sq(i, j), 0.0)));
    }
  }
  return median_heuristic(std::move(d));
}

inline KhatMatrix khat_from_mmd(Matrix mmd_sq, std::optional<double> sigma) {
  KhatMatrix out;
  out.sigma = sigma ? *sigma : median_mmd_bandwidth(mmd_sq);
  if (!(out.sigma > 0)) throw std::invalid_argument("sigma must be > 0");
  out.values.resize(mmd_sq.rows(), mmd_sq.cols());
  for (Eigen::Index i = 0; i < mmd_sq.rows(); ++i) {
    for (Eigen::Index j = 0; j < mmd_sq.cols(); ++j) {
      out.values(i, j) = distribution_kernel(mmd_sq(i, j), out.sigma);
    }
  }
  out.mmd_sq = std::move(mmd_sq);
  return out;
}

// k_ij = exp(-MMD^2_ij / (2 sigma^2)) from the records' model samples only.
inline KhatMatrix khat_matrix(std::span<const ReliabilityRecord> records,
                              const KernelSpec &inner, std::optional<double> sigma,
                              unsigned threads = 1) {
  if (sigma && !(*sigma > 0)) throw std::invalid_argument("sigma must be > 0");
  return khat_from_mmd(pairwise_mmd_sq(records, inner, threads), sigma);
}

struct RelEstimate {
  double statistic = 0.0;
  KhatMatrix khat;
  HMatrix h;  // entries k_ij * g_ij
  KernelSpec ky;
  KernelSpec kp;  // resolved dist-expmmd spec
};

inline HMatrix rel_h_matrix(std::span<const ReliabilityRecord> records, const KhatMatrix &khat,
                            const Kernel &ky, unsigned threads = 1) {
  const std::size_t n = records.size();
  const auto ni = static_cast<Eigen::Index>(n);
  if (khat.values.rows() != ni) throw std::invalid_argument("khat size mismatch");
  Matrix h(ni, ni);
  parallel_for(n, [&](std::size_t i) {
    const auto &a = records[i];
    for (std::size_t j = i; j < n; ++j) {
      const auto &b = records[j];
      h(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          khat.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) *
          g_term(a.y, a.y_model, b.y, b.y_model, ky);
    }
  }, threads);
  for (Eigen::Index i = 0; i < ni; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) h(i, j) = h(j, i);
  }
  return HMatrix(std::move(h));
}

// Distribution-kernel spec used when none is given: MMD in the output kernel.
inline KernelSpec default_distribution_kernel(const KernelSpec &ky, std::optional<double> sigma) {
  return KernelSpec::distribution_exp_mmd(sigma, ky);
}

// Full estimate with the distribution kernel `kp` (a dist-expmmd spec whose
// inner kernel computes the MMDs) and output kernel `ky` for the g term.
inline RelEstimate acmmd_rel_estimate(std::span<const ReliabilityRecord> records,
                                      const KernelSpec &ky, const KernelSpec &kp,
                                      unsigned threads = 1) {
  if (records.size() < 2) throw std::invalid_argument("acmmd_rel requires N >= 2");
  if (kp.kind != KernelKind::DistributionExpMmd) {
    throw std::invalid_argument("distribution kernel must be dist-expmmd");
  }
  kp.validate();
  std::vector<Output> outs;
  outs.reserve(2 * records.size());
  for (const auto &r : records) {
    outs.push_back(r.y);
    outs.push_back(r.y_model);
  }
  detail::check_outputs(outs, "acmmd_rel");
  RelEstimate est;
  est.ky = resolve_output_kernel(ky, std::span<const Output>(outs));
  est.khat = khat_matrix(records, *kp.inner, kp.sigma, threads);
  est.kp = kp;
  est.kp.sigma = est.khat.sigma;
  est.h = rel_h_matrix(records, est.khat, Kernel(est.ky), threads);
  est.statistic = acmmd_sq(est.h);
  return est;
}

// 2/(N(N-1)) sum_{i<j} k_ij g_ij with the distribution kernel built on ky.
inline double acmmd_rel_sq(std::span<const ReliabilityRecord> records, const KernelSpec &ky,
                           std::optional<double> sigma, unsigned threads = 1) {
  return acmmd_rel_estimate(records, ky, default_distribution_kernel(ky, sigma), threads)
      .statistic;
}

// Wild bootstrap over the k_ij g_ij entries followed by the randomized
// decision rule. The k_ij depend only on model_samples, so the swapped
// statistics stay exchangeable under the null.
inline TestReport acmmd_rel_test(std::span<const ReliabilityRecord> records,
                                 const KernelSpec &ky, const KernelSpec &kp, double alpha,
                                 std::size_t b_count, std::uint64_t seed,
                                 unsigned threads = 1) {
  const RelEstimate est = acmmd_rel_estimate(records, ky, kp, threads);
  TestReport report = test_from_h(est.h, alpha, b_count, seed, threads);
  report.test = "acmmd-rel";
  report.kernel_x = to_string(est.kp);
  report.kernel_y = to_string(est.ky);
  std::size_t r_min = records.front().model_samples.size();
  for (const auto &r : records) r_min = std::min(r_min, r.model_samples.size());
  report.r = r_min;
  return report;
}

inline TestReport acmmd_rel_test(std::span<const ReliabilityRecord> records,
                                 const KernelSpec &ky, std::optional<double> sigma,
                                 double alpha, std::size_t b_count, std::uint64_t seed,
                                 unsigned threads = 1) {
  return acmmd_rel_test(records, ky, default_distribution_kernel(ky, sigma), alpha, b_count,
                        seed, threads);
}

// R = max(16, ceil(sqrt(N))).
inline std::size_t default_inner_samples(std::size_t n) {
  return std::max<std::size_t>(
      16, static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n)))));
}

} // namespace acmmd
