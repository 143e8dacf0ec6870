#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "acmmd/kernels.hpp"
#include "acmmd/parallel.hpp"

namespace acmmd {

// One observation: conditioning input, true output, and one model sample.
struct Triplet {
  Input x;
  Output y;
  Output y_model;
};

// Symmetric N x N table of pairwise h values. The diagonal is stored but no
// statistic reads it.
class HMatrix {
public:
  HMatrix() = default;

  explicit HMatrix(Matrix values) : values_(std::move(values)) {
    if (values_.rows() != values_.cols()) {
      throw std::invalid_argument("HMatrix must be square");
    }
    for (Eigen::Index i = 0; i < values_.rows(); ++i) {
      for (Eigen::Index j = i + 1; j < values_.cols(); ++j) {
        if (values_(i, j) != values_(j, i)) {
          throw std::invalid_argument("HMatrix must be exactly symmetric");
        }
      }
    }
  }

  std::size_t n() const { return static_cast<std::size_t>(values_.rows()); }
  double operator()(std::size_t i, std::size_t j) const {
    return values_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  const Matrix &values() const { return values_; }

  // Contiguous row i, used by the bootstrap inner loops.
  const double *row(std::size_t i) const {
    return values_.data() + static_cast<std::ptrdiff_t>(i) * values_.cols();
  }

private:
  Matrix values_;
};

// k(m1, m2) + k(y1, y2) - k(m1, y2) - k(y1, m2), where m is the model sample.
// Swapping (y, m) within one pair exchanges the two bracketed sums, so the
// sign flip is exact in floating point.
template <class K>
double g_term(const Output &y1, const Output &m1, const Output &y2,
              const Output &m2, const K &ky) {
  return (ky(m1, m2) + ky(y1, y2)) - (ky(m1, y2) + ky(y1, m2));
}

inline double g_term(const Output &y1, const Output &m1, const Output &y2,
                     const Output &m2, const KernelSpec &ky) {
  return g_term(y1, m1, y2, m2, Kernel(ky));
}

namespace detail {

inline void check_outputs(std::span<const Output> outs, const char *what) {
  if (outs.empty()) return;
  const auto &alpha = outs.front().tokens.alphabet();
  const auto dim = outs.front().embedding ? outs.front().embedding->size() : -1;
  for (const auto &o : outs) {
    if (!same_alphabet(o.tokens.alphabet(), alpha)) {
      throw std::invalid_argument(std::string(what) + ": outputs use different alphabets");
    }
    const auto d = o.embedding ? o.embedding->size() : -1;
    if (d != dim) {
      throw std::invalid_argument(std::string(what) +
                                  ": inconsistent output embedding dimension");
    }
  }
}

inline void check_triplets(std::span<const Triplet> samples) {
  if (samples.size() < 2) {
    throw std::invalid_argument("h_matrix requires at least 2 samples");
  }
  const auto x_kind = samples.front().x.index();
  Eigen::Index x_dim = -1;
  if (const auto *v = std::get_if<Vector>(&samples.front().x)) x_dim = v->size();
  std::vector<Output> outs;
  outs.reserve(2 * samples.size());
  for (const auto &t : samples) {
    if (t.x.index() != x_kind) {
      throw std::invalid_argument("h_matrix: heterogeneous conditioning inputs");
    }
    if (const auto *v = std::get_if<Vector>(&t.x); v && v->size() != x_dim) {
      throw std::invalid_argument("h_matrix: inconsistent input embedding dimension");
    }
    outs.push_back(t.y);
    outs.push_back(t.y_model);
  }
  check_outputs(outs, "h_matrix");
}

} // namespace detail

// Resolves median-heuristic bandwidths of kx (over the inputs) and ky (over
// all true and model outputs) against a dataset.
inline KernelSpec resolve_input_kernel(const KernelSpec &kx,
                                       std::span<const Triplet> samples) {
  std::vector<Input> xs;
  xs.reserve(samples.size());
  for (const auto &t : samples) xs.push_back(t.x);
  return resolve_bandwidth(kx, std::span<const Input>(xs));
}

inline KernelSpec resolve_output_kernel(const KernelSpec &ky,
                                        std::span<const Output> outputs) {
  return resolve_bandwidth(ky, outputs);
}

inline KernelSpec resolve_output_kernel(const KernelSpec &ky,
                                        std::span<const Triplet> samples) {
  if (!ky.on_vectors() || ky.sigma) return ky;
  std::vector<Output> ys;
  ys.reserve(2 * samples.size());
  for (const auto &t : samples) {
    ys.push_back(t.y);
    ys.push_back(t.y_model);
  }
  return resolve_bandwidth(ky, std::span<const Output>(ys));
}

// H(i, j) = kx(x_i, x_j) * g((y_i, m_i), (y_j, m_j)).
template <class KX, class KY>
HMatrix h_matrix(std::span<const Triplet> samples, const KX &kx, const KY &ky,
                 unsigned threads = 1) {
  detail::check_triplets(samples);
  const auto n = static_cast<Eigen::Index>(samples.size());
  Matrix h(n, n);
  parallel_for(samples.size(), [&](std::size_t i) {
    const auto &a = samples[i];
    for (std::size_t j = i; j < samples.size(); ++j) {
      const auto &b = samples[j];
      h(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          kx(a.x, b.x) * g_term(a.y, a.y_model, b.y, b.y_model, ky);
    }
  }, threads);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) h(i, j) = h(j, i);
  }
  return HMatrix(std::move(h));
}

inline HMatrix h_matrix(std::span<const Triplet> samples, const KernelSpec &kx,
                        const KernelSpec &ky, unsigned threads = 1) {
  detail::check_triplets(samples);
  return h_matrix(samples, Kernel(resolve_input_kernel(kx, samples)),
                  Kernel(resolve_output_kernel(ky, samples)), threads);
}

// Unbiased U-statistic: the mean of H over pairs i < j, summed row by row.
// Negative values are returned as-is.
inline double acmmd_sq(const HMatrix &h) {
  const std::size_t n = h.n();
  if (n < 2) throw std::invalid_argument("acmmd_sq requires N >= 2");
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double *row = h.row(i);
    for (std::size_t j = i + 1; j < n; ++j) total += row[j];
  }
  return 2.0 * total / (static_cast<double>(n) * static_cast<double>(n - 1));
}

// Plug-in estimate of 4 Var[E h(Z1, Z2 | Z2)]: four times the sample variance
// of the off-diagonal row means of H.
inline double sigma_h_sq(const HMatrix &h) {
  const std::size_t n = h.n();
  if (n < 3) throw std::invalid_argument("sigma_h_sq requires N >= 3");
  std::vector<double> means(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double *row = h.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) s += row[j];
    }
    means[i] = s / static_cast<double>(n - 1);
  }
  double mean = 0.0;
  for (double m : means) mean += m;
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (double m : means) ss += (m - mean) * (m - mean);
  return 4.0 * ss / static_cast<double>(n - 1);
}

} // namespace acmmd
