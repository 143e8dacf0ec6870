#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#if defined(__AVX512F__) && defined(__AVX512VPOPCNTDQ__)
#include <immintrin.h>
#endif

#include "acmmd/kernels.hpp"
#include "acmmd/sequence.hpp"

namespace acmmd {

// A multiset of token sequences stored as distinct bit-packed sequences with
// multiplicities. Hamming distances between packed sequences take one XOR and
// popcount per 64-bit word, which makes the O(R^2) sums inside nested MMD
// estimates affordable.
class SampleSet {
public:
  SampleSet() = default;

  // `bits` is the packed width of one token; all sets compared with each
  // other must share it (see token_bits()).
  SampleSet(std::span<const Sequence> samples, unsigned bits) : bits_(bits) {
    if (bits_ == 0 || bits_ > 16 || 64 % bits_ != 0) {
      throw std::invalid_argument("invalid token width");
    }
    total_ = samples.size();
    std::vector<const std::vector<Token> *> sorted;
    sorted.reserve(samples.size());
    for (const auto &s : samples) sorted.push_back(&s.tokens());
    const std::size_t per_word = per_word_();
    std::sort(sorted.begin(), sorted.end(), [per_word](const auto *a, const auto *b) {
      const bool sa = a->size() < per_word;
      const bool sb = b->size() < per_word;
      if (sa != sb) return sa;
      return *a < *b;
    });
    for (std::size_t i = 0; i < sorted.size();) {
      std::size_t j = i;
      while (j < sorted.size() && *sorted[j] == *sorted[i]) ++j;
      const auto &tokens = *sorted[i];
      offsets_.push_back(static_cast<std::uint32_t>(words_.size()));
      lengths_.push_back(tokens.size());
      counts_.push_back(static_cast<double>(j - i));
      const std::size_t n_words = (tokens.size() + per_word - 1) / per_word;
      for (std::size_t w = 0; w < n_words; ++w) {
        std::uint64_t word = 0;
        for (std::size_t k = 0; k < per_word; ++k) {
          const std::size_t pos = w * per_word + k;
          if (pos >= tokens.size()) break;
          word |= static_cast<std::uint64_t>(tokens[pos]) << (k * bits_);
        }
        words_.push_back(word);
      }
      heads_.push_back(n_words > 0 ? words_[offsets_.back()] : 0);
      if (tokens.size() < per_word) ++n_short_;
      i = j;
    }
    switch (bits_) {
    case 1: low_bits_ = ~0ull; break;
    case 2: low_bits_ = 0x5555555555555555ull; break;
    case 4: low_bits_ = 0x1111111111111111ull; break;
    case 8: low_bits_ = 0x0101010101010101ull; break;
    default: low_bits_ = 0x0001000100010001ull; break;
    }
  }

  // Packed width needed for the non-terminal tokens of an alphabet.
  static unsigned token_bits(const Alphabet &alphabet) {
    std::size_t max_id = 0;
    for (std::size_t t = 0; t < alphabet.size(); ++t) {
      if (alphabet.terminal() && t == *alphabet.terminal()) continue;
      max_id = t;
    }
    unsigned bits = 1;
    while (bits < 16 && (max_id >> bits) != 0) bits *= 2;
    return bits;
  }

  std::size_t total() const { return total_; }
  std::size_t distinct() const { return counts_.size(); }
  double count(std::size_t u) const { return counts_[u]; }
  std::size_t length(std::size_t u) const { return lengths_[u]; }
  unsigned bits() const { return bits_; }

  // Hamming distance between distinct sequence u of this set and v of other,
  // with the shorter sequence padded by the terminal symbol.
  std::size_t distance(std::size_t u, const SampleSet &other, std::size_t v) const {
    const std::uint64_t la = lengths_[u];
    const std::uint64_t lb = other.lengths_[v];
    const std::uint64_t common = std::min(la, lb);
    const std::uint64_t *a = words_.data() + offsets_[u];
    const std::uint64_t *b = other.words_.data() + other.offsets_[v];
    const std::uint32_t per_word = per_word_();
    const std::uint64_t full = common / per_word;
    std::size_t d = la > lb ? la - lb : lb - la;
    for (std::uint64_t w = 0; w < full; ++w) d += mismatches(a[w] ^ b[w]);
    const std::uint64_t rest = common % per_word;
    if (rest != 0) {
      const std::uint64_t mask = (1ull << (rest * bits_)) - 1;
      d += mismatches((a[full] ^ b[full]) & mask);
    }
    return d;
  }

  // sum_v w[v] * kernel.decay(distance(u, other, v)).
  double weighted_decay_sum(std::size_t u, const SampleSet &other, std::span<const double> w,
                            const Kernel &kernel) const {
    switch (bits_) {
    case 1: return decay_sum_impl<1>(u, other, w, kernel);
    case 2: return decay_sum_impl<2>(u, other, w, kernel);
    case 4: return decay_sum_impl<4>(u, other, w, kernel);
    case 8: return decay_sum_impl<8>(u, other, w, kernel);
    default: return decay_sum_impl<16>(u, other, w, kernel);
    }
  }

private:
  std::uint32_t per_word_() const { return 64 / bits_; }

  std::size_t mismatches(std::uint64_t x) const {
    for (unsigned shift = 1; shift < bits_; shift *= 2) x |= x >> shift;
    return static_cast<std::size_t>(std::popcount(x & low_bits_));
  }

  // Short sequences (shorter than one packed word) are stored first. For a
  // short u against the short part of the other set every distance fits the
  // decay table and the common prefix fits one word, so the loop is branch
  // free. Terms are accumulated in 16 interleaved lanes in a fixed order.
  template <unsigned Bits>
  double decay_sum_impl(std::size_t u, const SampleSet &other, std::span<const double> w,
                        const Kernel &kernel) const {
    const std::uint64_t la = lengths_[u];
    const std::size_t nb = other.distinct();
    const double *table = kernel.decay_table();
    constexpr std::size_t lanes = 16;
    double acc[lanes] = {};
    std::size_t v = 0;
    if (la < per_word_()) {
      const std::uint64_t ha = heads_[u];
      const std::uint64_t *hb = other.heads_.data();
      const std::uint64_t *lb = other.lengths_.data();
      const double *wp = w.data();
      const std::size_t ns = other.n_short_;
#if defined(__AVX512F__) && defined(__AVX512VPOPCNTDQ__)
      if constexpr (Bits == 1) {
        const __m512i va = _mm512_set1_epi64(static_cast<long long>(la));
        const __m512i vh = _mm512_set1_epi64(static_cast<long long>(ha));
        const __m512i one = _mm512_set1_epi64(1);
        __m512d lo = _mm512_setzero_pd();
        __m512d hi = _mm512_setzero_pd();
        auto lane_terms = [&](std::size_t k) {
          const __m512i l = _mm512_loadu_si512(lb + k);
          const __m512i common = _mm512_min_epu64(va, l);
          const __m512i mask = _mm512_sub_epi64(_mm512_sllv_epi64(one, common), one);
          const __m512i x = _mm512_and_si512(_mm512_xor_si512(vh, _mm512_loadu_si512(hb + k)), mask);
          const __m512i diff = _mm512_sub_epi64(_mm512_max_epu64(va, l), common);
          const __m512i d = _mm512_add_epi64(_mm512_popcnt_epi64(x), diff);
          return _mm512_mul_pd(_mm512_loadu_pd(wp + k), _mm512_i64gather_pd(d, table, 8));
        };
        for (; v + lanes <= ns; v += lanes) {
          lo = _mm512_add_pd(lo, lane_terms(v));
          hi = _mm512_add_pd(hi, lane_terms(v + 8));
        }
        _mm512_storeu_pd(acc, lo);
        _mm512_storeu_pd(acc + 8, hi);
      }
#endif
      for (; v < ns; ++v) {
        const std::uint64_t common = la < lb[v] ? la : lb[v];
        const std::uint64_t x = (ha ^ hb[v]) & ((std::uint64_t{1} << (common * Bits)) - 1);
        std::uint64_t d;
        if constexpr (Bits == 1) {
          d = static_cast<std::uint64_t>(std::popcount(x));
        } else {
          d = mismatches(x);
        }
        d += la > lb[v] ? la - lb[v] : lb[v] - la;
        acc[v % lanes] += wp[v] * table[d];
      }
    }
    for (; v < nb; ++v) acc[v % lanes] += w[v] * kernel.decay(distance(u, other, v));
    double total = 0.0;
    for (std::size_t l = 0; l < lanes; ++l) total += acc[l];
    return total;
  }

  unsigned bits_ = 1;
  std::uint64_t low_bits_ = ~0ull;
  std::size_t total_ = 0;
  std::size_t n_short_ = 0;  // distinct sequences shorter than per_word_()
  std::vector<std::uint64_t> words_;
  std::vector<std::uint64_t> heads_;
  std::vector<std::uint32_t> offsets_;
  std::vector<std::uint64_t> lengths_;
  std::vector<double> counts_;
};

namespace detail {

inline bool tilted(const Kernel &kernel) {
  if (!kernel.spec().on_sequences()) {
    throw std::invalid_argument("sample-set sums require a hamming-based kernel");
  }
  return kernel.spec().kind == KernelKind::TiltedExpHamming;
}

// Per-sequence weights: counts, divided by length for the tilted kernel.
inline std::vector<double> sample_weights(const SampleSet &s, bool tilted) {
  std::vector<double> w(s.distinct());
  for (std::size_t v = 0; v < s.distinct(); ++v) {
    w[v] = s.count(v);
    if (tilted) {
      if (s.length(v) == 0) {
        throw std::invalid_argument("tilted_exp_hamming: empty sequences are invalid input");
      }
      w[v] /= static_cast<double>(s.length(v));
    }
  }
  return w;
}

} // namespace detail

// As kernel_sum below with precomputed sample_weights for both sets.
inline double kernel_sum(const SampleSet &a, std::span<const double> wa, const SampleSet &b,
                         std::span<const double> wb, const Kernel &kernel) {
  double total = 0.0;
  for (std::size_t u = 0; u < a.distinct(); ++u) {
    total += wa[u] * a.weighted_decay_sum(u, b, wb, kernel);
  }
  return total;
}

// sum_{a in A, b in B} k(a, b) over the multisets, for a hamming-based kernel.
inline double kernel_sum(const SampleSet &a, const SampleSet &b, const Kernel &kernel) {
  const bool tilted = detail::tilted(kernel);
  return kernel_sum(a, detail::sample_weights(a, tilted), b, detail::sample_weights(b, tilted),
                    kernel);
}

// Mean of k(a_r, a_s) over ordered pairs r != s of the multiset.
inline double within_mean(const SampleSet &a, const Kernel &kernel) {
  const double r = static_cast<double>(a.total());
  if (a.total() < 2) throw std::invalid_argument("within_mean requires >= 2 samples");
  const bool tilted = detail::tilted(kernel);
  double diag = 0.0;
  for (std::size_t u = 0; u < a.distinct(); ++u) {
    double k = kernel.decay(0);
    if (tilted) {
      const auto len = static_cast<double>(a.length(u));
      k /= len * len;
    }
    diag += a.count(u) * k;
  }
  return (kernel_sum(a, a, kernel) - diag) / (r * (r - 1.0));
}

} // namespace acmmd
