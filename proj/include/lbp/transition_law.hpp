#pragma once

#include <algorithm>
#include <type_traits>
#include <vector>

#include "lbp/errors.hpp"
#include "lbp/rational.hpp"
#include "lbp/rng.hpp"

namespace lbp {

// Backward-in-time law of the lineage count across one reproduction event
// (i, j) seen by n lineages sitting on a uniform n-subset of N labels.
// Label categories after the event: blue = {1..i} (children of a minus
// parent / the certain children), red = {i+1..i+j} (selective surplus),
// top = the j top-most labels, rest = everything else. With hit counts
// (b, r, m):
//   - r >= 1 and m >= 1 cannot be resolved without types  -> cemetery
//   - otherwise the count jumps to n - b + 1{b + r >= 1}.
// The four closed forms below reproduce the aggregated masses of the named
// events; the full distribution is completed by enumeration.

enum class JumpKind { stay, up, down, merge, cemetery };

template <typename Real>
struct TransitionDistribution {
  Real stay{};
  Real up{};        // +1
  Real down{};      // -1
  Real cemetery{};  // *
  std::vector<std::pair<int, Real>> merges;  // (k >= 3, mass): jump to n - k + 1

  Real total() const {
    Real t = stay + up + down + cemetery;
    for (const auto& [k, p] : merges) t += p;
    return t;
  }
};

namespace detail {

template <typename Real>
Real binom(long long n, long long k) {
  if constexpr (std::is_same_v<Real, Rational>)
    return Rational(binomial(n, k));
  else
    return binomial_d(n, k);
}

inline void check_geometry(long long i, long long j, long long n, long long N) {
  if (i < 0 || j < 0 || n < 0 || n > N) throw GeometryViolation("need 0 <= n <= N and i, j >= 0");
  if (N < i + 2 * j)
    throw GeometryViolation("label categories need N >= i + 2j (N=" + std::to_string(N) +
                            ", i=" + std::to_string(i) + ", j=" + std::to_string(j) + ")");
}

}  // namespace detail

template <typename Real>
TransitionDistribution<Real> transition_distribution(long long i, long long j, long long n,
                                                     long long N) {
  detail::check_geometry(i, j, n, N);
  TransitionDistribution<Real> dist;
  if (n == 0) {
    dist.stay = Real(1);
    return dist;
  }
  const long long rest_pool = N - i - 2 * j;
  const Real denom = detail::binom<Real>(N, n);
  std::vector<Real> merge_mass(static_cast<std::size_t>(std::max<long long>(n + 1, 1)), Real(0));
  for (long long b = 0; b <= std::min(i, n); ++b) {
    const Real wb = detail::binom<Real>(i, b);
    for (long long r = 0; r <= std::min(j, n - b); ++r) {
      const Real wr = wb * detail::binom<Real>(j, r);
      for (long long m = 0; m <= std::min(j, n - b - r); ++m) {
        const long long rest = n - b - r - m;
        if (rest > rest_pool) continue;
        const Real w = wr * detail::binom<Real>(j, m) * detail::binom<Real>(rest_pool, rest) / denom;
        if (w == Real(0)) continue;
        if (r >= 1 && m >= 1)
          dist.cemetery += w;
        else if (b == 0 && r == 0)
          dist.stay += w;
        else if (b == 0)
          dist.up += w;
        else if (b == 1)
          dist.stay += w;
        else if (b == 2)
          dist.down += w;
        else
          merge_mass[static_cast<std::size_t>(b)] += w;
      }
    }
  }
  for (long long k = 3; k <= n; ++k)
    if (merge_mass[static_cast<std::size_t>(k)] != Real(0))
      dist.merges.push_back({static_cast<int>(k), merge_mass[static_cast<std::size_t>(k)]});
  return dist;
}

// Exactly one lineage on a red label, none on blue or top.
template <typename Real>
Real p_plus(long long i, long long j, long long n, long long N) {
  detail::check_geometry(i, j, n, N);
  if (n == 0 || j == 0) return Real(0);
  if (N - i - 2 * j < n - 1) return Real(0);
  Real p = Real(n) * Real(j) / Real(N);
  for (long long k = 1; k <= n - 1; ++k)
    p *= Real(1) - Real((i + j - 1) + j) / Real(N - k);
  return p;
}

// At least two lineages on red labels, none on blue or top.
template <typename Real>
Real p_hat_plus(long long i, long long j, long long n, long long N) {
  detail::check_geometry(i, j, n, N);
  Real p{};
  const Real denom = detail::binom<Real>(N, n);
  for (long long l = 2; l <= std::min(n, i + j); ++l)
    p += detail::binom<Real>(j, l) * detail::binom<Real>(N - (i + 2 * j), n - l) / denom;
  return p;
}

// Exactly two lineages on blue labels, none on red.
template <typename Real>
Real p_minus(long long i, long long j, long long n, long long N) {
  detail::check_geometry(i, j, n, N);
  if (n < 2 || i < 2) return Real(0);
  if (N - i - j < n - 2) return Real(0);
  Real p = detail::binom<Real>(n, 2) * Real(i) * Real(i - 1) / (Real(N) * Real(N - 1));
  for (long long k = 2; k <= n - 1; ++k)
    p *= Real(1) - Real((i - 1) + (j - 1)) / Real(N - k);
  return p;
}

// Exactly two on blue, at least one on red, none on top.
template <typename Real>
Real p_hat_minus(long long i, long long j, long long n, long long N) {
  detail::check_geometry(i, j, n, N);
  Real p{};
  const Real denom = detail::binom<Real>(N, n);
  for (long long l = 1; l <= std::min(n - 2, j); ++l)
    p += detail::binom<Real>(i, 2) * detail::binom<Real>(j, l) *
         detail::binom<Real>(N - (i + 2 * j), n - 2 - l) / denom;
  return p;
}

struct TransitionSample {
  JumpKind kind = JumpKind::stay;
  long long new_count = 0;  // meaningless for cemetery
};

namespace detail {

struct HitCounts {
  long long b = 0, r = 0, m = 0;
};

// Draw the hit counts of n lineages over the four label categories without
// replacement (sequential conditional draws; exact).
inline HitCounts draw_hits(RandomStream& rng, long long i, long long j, long long n, long long N) {
  HitCounts h;
  long long blue = i, red = j, top = j;
  for (long long l = 0; l < n; ++l) {
    const auto v = static_cast<long long>(rng.below(static_cast<std::uint64_t>(N - l)));
    if (v < blue) {
      ++h.b;
      --blue;
    } else if (v < blue + red) {
      ++h.r;
      --red;
    } else if (v < blue + red + top) {
      ++h.m;
      --top;
    }
  }
  return h;
}

inline TransitionSample classify(const HitCounts& h, long long n) {
  TransitionSample s;
  if (h.r >= 1 && h.m >= 1) {
    s.kind = JumpKind::cemetery;
    return s;
  }
  const long long next = n - h.b + ((h.b + h.r >= 1) ? 1 : 0);
  s.new_count = next;
  if (next == n)
    s.kind = JumpKind::stay;
  else if (next == n + 1)
    s.kind = JumpKind::up;
  else if (next == n - 1)
    s.kind = JumpKind::down;
  else
    s.kind = JumpKind::merge;
  return s;
}

}  // namespace detail

// One backward-event draw. The no-hit case is resolved with a single uniform
// against P(no category hit); only the rare remainder pays for sequential
// sampling.
inline TransitionSample sample_transition(RandomStream& rng, long long i, long long j, long long n,
                                          long long N) {
  detail::check_geometry(i, j, n, N);
  TransitionSample s;
  s.new_count = n;
  if (n == 0 || (i == 0 && j == 0)) return s;

  const long long free_pool = N - i - 2 * j;
  double p_none = 1.0;
  if (free_pool < n) {
    p_none = 0.0;
  } else {
    for (long long k = 0; k < n; ++k)
      p_none *= static_cast<double>(free_pool - k) / static_cast<double>(N - k);
  }
  if (rng.uniform01() < p_none) return s;

  // Conditioned on at least one hit: rejection on the sequential draw, with
  // an exact enumeration fallback if the conditioning event is very rare.
  for (int tries = 0; tries < 4096; ++tries) {
    const auto h = detail::draw_hits(rng, i, j, n, N);
    if (h.b + h.r + h.m >= 1) return detail::classify(h, n);
  }
  const double scale = 1.0 - p_none;
  double u = rng.uniform01() * scale;
  const double denom = binomial_d(N, n);
  for (long long b = 0; b <= std::min(i, n); ++b)
    for (long long r = 0; r <= std::min(j, n - b); ++r)
      for (long long m = 0; m <= std::min(j, n - b - r); ++m) {
        if (b + r + m == 0) continue;
        const long long rest = n - b - r - m;
        if (rest > free_pool) continue;
        const double w = binomial_d(i, b) * binomial_d(j, r) * binomial_d(j, m) *
                         binomial_d(free_pool, rest) / denom;
        u -= w;
        if (u <= 0) return detail::classify({b, r, m}, n);
      }
  return detail::classify({std::min(i, n), 0, 0}, n);  // numeric fallback
}

}  // namespace lbp
