#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "acmmd/parallel.hpp"
#include "acmmd/sequence.hpp"

namespace acmmd {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>;

// ---------------------------------------------------------------------------
// Hamming distance on variable-length sequences
// ---------------------------------------------------------------------------

enum class HammingMode {
  // Both sequences are padded with the terminal symbol past their end.
  TerminalPadded,
  // Mismatches over the common prefix plus the length difference.
  LengthPenalty,
};

inline std::size_t hamming_distance(const Sequence &a, const Sequence &b,
                                    HammingMode mode = HammingMode::TerminalPadded) {
  if (!same_alphabet(a.alphabet(), b.alphabet())) {
    throw std::invalid_argument("hamming_distance: alphabet mismatch");
  }
  const auto &ta = a.tokens();
  const auto &tb = b.tokens();
  const std::size_t common = std::min(ta.size(), tb.size());
  std::size_t d = 0;
  if (mode == HammingMode::TerminalPadded) {
    // Position i of a padded sequence holds either a token or the terminal;
    // terminal-free sequences make a padded position differ from any token.
    const std::size_t longest = std::max(ta.size(), tb.size());
    for (std::size_t i = 0; i <= longest; ++i) {
      const bool a_ended = i >= ta.size();
      const bool b_ended = i >= tb.size();
      if (a_ended && b_ended) break;
      if (a_ended != b_ended || ta[i] != tb[i]) ++d;
    }
    return d;
  }
  for (std::size_t i = 0; i < common; ++i) d += ta[i] != tb[i];
  return d + (std::max(ta.size(), tb.size()) - common);
}

inline double exp_hamming(const Sequence &a, const Sequence &b, double lambda,
                          HammingMode mode = HammingMode::TerminalPadded) {
  if (!(lambda > 0)) throw std::invalid_argument("exp_hamming: lambda must be > 0");
  return std::exp(-lambda * static_cast<double>(hamming_distance(a, b, mode)));
}

// e^{-lambda d_H(a, b)} / (|a| |b|); undefined for empty sequences.
inline double tilted_exp_hamming(const Sequence &a, const Sequence &b,
                                 double lambda,
                                 HammingMode mode = HammingMode::TerminalPadded) {
  if (a.empty() || b.empty()) {
    throw std::invalid_argument(
        "tilted_exp_hamming: empty sequences are invalid input");
  }
  return exp_hamming(a, b, lambda, mode) /
         (static_cast<double>(a.length()) * static_cast<double>(b.length()));
}

inline double gaussian(std::span<const double> u, std::span<const double> v,
                       double sigma) {
  if (u.size() != v.size()) {
    throw std::invalid_argument("gaussian: dimension mismatch");
  }
  if (!(sigma > 0)) throw std::invalid_argument("gaussian: sigma must be > 0");
  double sq = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double d = u[i] - v[i];
    sq += d * d;
  }
  return std::exp(-sq / (2.0 * sigma * sigma));
}

inline double gaussian(const Vector &u, const Vector &v, double sigma) {
  return gaussian(std::span<const double>(u.data(), static_cast<std::size_t>(u.size())),
                  std::span<const double>(v.data(), static_cast<std::size_t>(v.size())),
                  sigma);
}

// Column-wise mean of an L x d matrix of per-position embeddings.
inline Vector mean_pool(const Eigen::MatrixXd &per_position) {
  if (per_position.rows() == 0 || per_position.cols() == 0) {
    throw std::invalid_argument("mean_pool: empty matrix");
  }
  Vector out = Vector::Zero(per_position.cols());
  for (Eigen::Index r = 0; r < per_position.rows(); ++r) {
    out += per_position.row(r).transpose();
  }
  return out / static_cast<double>(per_position.rows());
}

// ---------------------------------------------------------------------------
// Kernel specifications
// ---------------------------------------------------------------------------

enum class KernelKind {
  ExpHamming,
  TiltedExpHamming,
  Gaussian,
  MeanEmbeddingGaussian,
  DistributionExpMmd,
};

struct KernelSpec {
  KernelKind kind = KernelKind::ExpHamming;
  double lambda = 1.0;
  // nullopt selects the median heuristic at resolution time.
  std::optional<double> sigma;
  HammingMode mode = HammingMode::TerminalPadded;
  // Sequence kernel the MMD is computed with (DistributionExpMmd only).
  std::shared_ptr<const KernelSpec> inner;

  static KernelSpec exp_hamming(double lambda = 1.0,
                                HammingMode mode = HammingMode::TerminalPadded) {
    return {KernelKind::ExpHamming, lambda, std::nullopt, mode, nullptr};
  }
  static KernelSpec tilted_exp_hamming(double lambda = 1.0,
                                       HammingMode mode = HammingMode::TerminalPadded) {
    return {KernelKind::TiltedExpHamming, lambda, std::nullopt, mode, nullptr};
  }
  static KernelSpec gaussian(std::optional<double> sigma = std::nullopt) {
    return {KernelKind::Gaussian, 1.0, sigma, HammingMode::TerminalPadded, nullptr};
  }
  static KernelSpec mean_embedding_gaussian(std::optional<double> sigma = std::nullopt) {
    return {KernelKind::MeanEmbeddingGaussian, 1.0, sigma,
            HammingMode::TerminalPadded, nullptr};
  }
  static KernelSpec distribution_exp_mmd(std::optional<double> sigma,
                                         KernelSpec inner) {
    return {KernelKind::DistributionExpMmd, 1.0, sigma,
            HammingMode::TerminalPadded,
            std::make_shared<const KernelSpec>(std::move(inner))};
  }

  bool on_sequences() const {
    return kind == KernelKind::ExpHamming || kind == KernelKind::TiltedExpHamming;
  }
  bool on_vectors() const {
    return kind == KernelKind::Gaussian || kind == KernelKind::MeanEmbeddingGaussian;
  }
  bool needs_sigma() const { return !on_sequences(); }
  bool resolved() const {
    if (needs_sigma() && !sigma) return false;
    return !inner || inner->resolved();
  }

  void validate() const {
    if (on_sequences() && !(lambda > 0)) {
      throw std::invalid_argument("kernel lambda must be > 0");
    }
    if (sigma && !(*sigma > 0)) {
      throw std::invalid_argument("kernel sigma must be > 0");
    }
    if (kind == KernelKind::DistributionExpMmd) {
      if (!inner) throw std::invalid_argument("dist-expmmd requires an inner kernel");
      if (!inner->on_sequences()) {
        throw std::invalid_argument("dist-expmmd inner kernel must act on sequences");
      }
      inner->validate();
    }
  }

  friend bool operator==(const KernelSpec &a, const KernelSpec &b) {
    if (a.kind != b.kind || a.sigma != b.sigma) return false;
    if (a.on_sequences() && (a.lambda != b.lambda || a.mode != b.mode)) return false;
    if (static_cast<bool>(a.inner) != static_cast<bool>(b.inner)) return false;
    return !a.inner || *a.inner == *b.inner;
  }
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, res.ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

inline double parse_double(std::string_view text, std::string_view what) {
  double v = 0.0;
  const char *end = text.data() + text.size();
  auto res = std::from_chars(text.data(), end, v);
  if (res.ec != std::errc() || res.ptr != end) {
    throw std::invalid_argument("invalid number for " + std::string(what) +
                                ": '" + std::string(text) + "'");
  }
  return v;
}

} // namespace detail

// Compact text form, e.g. `exp-hamming:lambda=1.0:mode=padded`,
// `gaussian:sigma=median`, `dist-expmmd:sigma=1.0:inner=exp-hamming:lambda=1.0`.
inline std::string to_string(const KernelSpec &spec) {
  std::string out;
  switch (spec.kind) {
  case KernelKind::ExpHamming: out = "exp-hamming"; break;
  case KernelKind::TiltedExpHamming: out = "tilted-exp-hamming"; break;
  case KernelKind::Gaussian: out = "gaussian"; break;
  case KernelKind::MeanEmbeddingGaussian: out = "mean-embedding-gaussian"; break;
  case KernelKind::DistributionExpMmd: out = "dist-expmmd"; break;
  }
  if (spec.on_sequences()) {
    out += ":lambda=" + detail::format_double(spec.lambda);
    out += spec.mode == HammingMode::TerminalPadded ? ":mode=padded"
                                                    : ":mode=length-penalty";
  } else {
    out += ":sigma=" + (spec.sigma ? detail::format_double(*spec.sigma)
                                   : std::string("median"));
  }
  if (spec.inner) out += ":inner=" + to_string(*spec.inner);
  return out;
}

inline KernelSpec parse_kernel_spec(std::string_view text) {
  auto take = [&text]() {
    const auto pos = text.find(':');
    std::string_view head = text.substr(0, pos);
    text = pos == std::string_view::npos ? std::string_view{} : text.substr(pos + 1);
    return head;
  };
  const std::string_view name = take();
  KernelSpec spec;
  if (name == "exp-hamming") {
    spec.kind = KernelKind::ExpHamming;
  } else if (name == "tilted-exp-hamming") {
    spec.kind = KernelKind::TiltedExpHamming;
  } else if (name == "gaussian") {
    spec.kind = KernelKind::Gaussian;
  } else if (name == "mean-embedding-gaussian") {
    spec.kind = KernelKind::MeanEmbeddingGaussian;
  } else if (name == "dist-expmmd" || name == "distribution-exp-mmd") {
    spec.kind = KernelKind::DistributionExpMmd;
  } else {
    throw std::invalid_argument("unknown kernel kind '" + std::string(name) + "'");
  }
  while (!text.empty()) {
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) {
      throw std::invalid_argument("malformed kernel parameter '" +
                                  std::string(text) + "'");
    }
    const std::string_view key = text.substr(0, eq);
    if (key == "inner") {
      if (spec.kind != KernelKind::DistributionExpMmd) {
        throw std::invalid_argument("only dist-expmmd takes an inner kernel");
      }
      // The inner spec consumes the remainder of the string.
      spec.inner = std::make_shared<const KernelSpec>(
          parse_kernel_spec(text.substr(eq + 1)));
      text = {};
      break;
    }
    text.remove_prefix(eq + 1);
    const std::string_view value = take();
    if (key == "lambda") {
      spec.lambda = detail::parse_double(value, "lambda");
    } else if (key == "sigma") {
      if (value == "median") {
        spec.sigma.reset();
      } else {
        spec.sigma = detail::parse_double(value, "sigma");
      }
    } else if (key == "mode") {
      if (value == "padded" || value == "terminal-padded") {
        spec.mode = HammingMode::TerminalPadded;
      } else if (value == "length-penalty") {
        spec.mode = HammingMode::LengthPenalty;
      } else {
        throw std::invalid_argument("unknown hamming mode '" + std::string(value) + "'");
      }
    } else {
      throw std::invalid_argument("unknown kernel parameter '" + std::string(key) + "'");
    }
  }
  if (spec.kind == KernelKind::DistributionExpMmd && !spec.inner) {
    spec.inner = std::make_shared<const KernelSpec>(KernelSpec::exp_hamming());
  }
  spec.validate();
  return spec;
}

// ---------------------------------------------------------------------------
// Kernel inputs
// ---------------------------------------------------------------------------

// Conditioning input: a scalar, an embedding vector, or a token sequence.
using Input = std::variant<double, Vector, Sequence>;

// Output sequence with an optional pre-pooled embedding.
struct Output {
  Sequence tokens;
  std::optional<Vector> embedding;

  friend bool operator==(const Output &a, const Output &b) {
    if (!(a.tokens == b.tokens)) return false;
    if (a.embedding.has_value() != b.embedding.has_value()) return false;
    return !a.embedding || *a.embedding == *b.embedding;
  }
};

// Median of pairwise distances among the points, or 1.0 when that median is 0.
inline double median_heuristic(std::vector<double> pairwise) {
  if (pairwise.empty()) return 1.0;
  const std::size_t mid = pairwise.size() / 2;
  std::nth_element(pairwise.begin(), pairwise.begin() + static_cast<std::ptrdiff_t>(mid),
                   pairwise.end());
  double med = pairwise[mid];
  if (pairwise.size() % 2 == 0) {
    const double lower =
        *std::max_element(pairwise.begin(), pairwise.begin() + static_cast<std::ptrdiff_t>(mid));
    med = 0.5 * (med + lower);
  }
  return med > 0 ? med : 1.0;
}

inline double median_pairwise_distance(std::span<const Vector> points) {
  std::vector<double> d;
  d.reserve(points.size() * (points.size() - (points.empty() ? 0 : 1)) / 2);
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      if (points[i].size() != points[j].size()) {
        throw std::invalid_argument("median heuristic: dimension mismatch");
      }
      d.push_back((points[i] - points[j]).norm());
    }
  }
  return median_heuristic(std::move(d));
}

// Evaluates a resolved KernelSpec on sequences, vectors, inputs and outputs.
// Distribution kernels act on sample sets and live in reliability.hpp.
class Kernel {
public:
  explicit Kernel(KernelSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    if (spec_.on_vectors() && !spec_.sigma) {
      throw std::invalid_argument("kernel bandwidth is unresolved: " + to_string(spec_));
    }
    if (spec_.on_sequences()) {
      decay_.resize(kTableSize);
      for (std::size_t d = 0; d < kTableSize; ++d) {
        decay_[d] = std::exp(-spec_.lambda * static_cast<double>(d));
      }
    }
  }

  const KernelSpec &spec() const { return spec_; }

  // e^{-lambda d} for a hamming distance d.
  double decay(std::size_t d) const {
    return d < kTableSize ? decay_[d] : std::exp(-spec_.lambda * static_cast<double>(d));
  }

  // decay(d) for d < decay_table_size(); empty for vector kernels.
  const double *decay_table() const { return decay_.data(); }
  static constexpr std::size_t decay_table_size() { return kTableSize; }

  double operator()(const Sequence &a, const Sequence &b) const {
    switch (spec_.kind) {
    case KernelKind::ExpHamming:
      return decay(hamming_distance(a, b, spec_.mode));
    case KernelKind::TiltedExpHamming:
      if (a.empty() || b.empty()) {
        throw std::invalid_argument(
            "tilted_exp_hamming: empty sequences are invalid input");
      }
      return decay(hamming_distance(a, b, spec_.mode)) /
             (static_cast<double>(a.length()) * static_cast<double>(b.length()));
    default:
      throw std::invalid_argument("kernel " + to_string(spec_) +
                                  " cannot be evaluated on token sequences");
    }
  }

  double operator()(std::span<const double> u, std::span<const double> v) const {
    if (!spec_.on_vectors()) {
      throw std::invalid_argument("kernel " + to_string(spec_) +
                                  " cannot be evaluated on vectors");
    }
    return gaussian(u, v, *spec_.sigma);
  }

  double operator()(const Vector &u, const Vector &v) const {
    return (*this)(std::span<const double>(u.data(), static_cast<std::size_t>(u.size())),
                   std::span<const double>(v.data(), static_cast<std::size_t>(v.size())));
  }

  double operator()(const Input &a, const Input &b) const {
    if (a.index() != b.index()) {
      throw std::invalid_argument("heterogeneous kernel inputs");
    }
    if (const auto *sa = std::get_if<Sequence>(&a)) {
      return (*this)(*sa, std::get<Sequence>(b));
    }
    if (const auto *xa = std::get_if<double>(&a)) {
      const double xb = std::get<double>(b);
      return (*this)(std::span<const double>(xa, 1), std::span<const double>(&xb, 1));
    }
    return (*this)(std::get<Vector>(a), std::get<Vector>(b));
  }

  double operator()(const Output &a, const Output &b) const {
    if (spec_.on_vectors()) {
      if (!a.embedding || !b.embedding) {
        throw std::invalid_argument("kernel " + to_string(spec_) +
                                    " requires output embeddings");
      }
      return (*this)(*a.embedding, *b.embedding);
    }
    return (*this)(a.tokens, b.tokens);
  }

private:
  static constexpr std::size_t kTableSize = 256;
  KernelSpec spec_;
  std::vector<double> decay_;
};

namespace detail {

inline std::optional<Vector> as_vector(const Input &x) {
  if (const auto *s = std::get_if<double>(&x)) return Vector::Constant(1, *s);
  if (const auto *v = std::get_if<Vector>(&x)) return *v;
  return std::nullopt;
}

inline std::optional<Vector> as_vector(const Output &y) { return y.embedding; }

inline std::optional<Vector> as_vector(const Vector &v) { return v; }

inline std::optional<Vector> as_vector(const Sequence &) { return std::nullopt; }

} // namespace detail

// Fills in a median-heuristic bandwidth from the given items when the spec
// leaves sigma unspecified. Sequence kernels are returned unchanged.
template <class Item>
KernelSpec resolve_bandwidth(KernelSpec spec, std::span<const Item> items) {
  if (!spec.on_vectors() || spec.sigma) return spec;
  std::vector<Vector> points;
  points.reserve(items.size());
  for (const auto &item : items) {
    auto v = detail::as_vector(item);
    if (!v) {
      throw std::invalid_argument("kernel " + to_string(spec) +
                                  " requires vector-valued items");
    }
    points.push_back(std::move(*v));
  }
  spec.sigma = median_pairwise_distance(points);
  return spec;
}

// Gram matrix G(i, j) = kernel(a[i], b[j]). Entries are computed
// independently; the symmetric case evaluates the upper triangle and mirrors.
template <class A, class B, class K>
Matrix gram(const K &kernel, std::span<const A> a, std::span<const B> b,
            unsigned threads = 1) {
  Matrix g(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(b.size()));
  parallel_for(a.size(), [&](std::size_t i) {
    for (std::size_t j = 0; j < b.size(); ++j) {
      g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = kernel(a[i], b[j]);
    }
  }, threads);
  return g;
}

template <class A, class K>
Matrix gram(const K &kernel, std::span<const A> a, unsigned threads = 1) {
  const auto n = static_cast<Eigen::Index>(a.size());
  Matrix g(n, n);
  parallel_for(a.size(), [&](std::size_t i) {
    const auto ii = static_cast<Eigen::Index>(i);
    for (std::size_t j = i; j < a.size(); ++j) {
      g(ii, static_cast<Eigen::Index>(j)) = kernel(a[i], a[j]);
    }
  }, threads);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) g(i, j) = g(j, i);
  }
  return g;
}

template <class A, class B>
Matrix gram(const KernelSpec &spec, std::span<const A> a, std::span<const B> b,
            unsigned threads = 1) {
  KernelSpec resolved = spec;
  if (spec.on_vectors() && !spec.sigma) {
    std::vector<Vector> pooled;
    for (const auto &x : a) {
      auto v = detail::as_vector(x);
      if (!v) throw std::invalid_argument("incompatible item for " + to_string(spec));
      pooled.push_back(*v);
    }
    for (const auto &x : b) {
      auto v = detail::as_vector(x);
      if (!v) throw std::invalid_argument("incompatible item for " + to_string(spec));
      pooled.push_back(*v);
    }
    resolved.sigma = median_pairwise_distance(pooled);
  }
  return gram(Kernel(resolved), a, b, threads);
}

template <class A>
Matrix gram(const KernelSpec &spec, std::span<const A> a, unsigned threads = 1) {
  return gram(Kernel(resolve_bandwidth(spec, a)), a, threads);
}

} // namespace acmmd
