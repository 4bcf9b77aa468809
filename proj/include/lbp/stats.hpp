#pragma once

#include <boost/math/special_functions/gamma.hpp>

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "lbp/errors.hpp"

namespace lbp {

struct SummaryStats {
  double mean = 0.0;
  double variance = 0.0;  // unbiased
  double se = 0.0;
  std::size_t count = 0;
};

inline SummaryStats summary_stats(std::span<const double> xs) {
  if (xs.empty()) throw EmptySample("summary_stats: empty sample");
  SummaryStats s;
  s.count = xs.size();
  double sum = 0.0;
  for (double x : xs) sum += x;
  s.mean = sum / static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) {
      const double d = x - s.mean;
      ss += d * d;
    }
    s.variance = ss / static_cast<double>(xs.size() - 1);
  }
  s.se = std::sqrt(s.variance / static_cast<double>(xs.size()));
  return s;
}

inline double two_sample_z(const SummaryStats& a, const SummaryStats& b) {
  const double denom = std::sqrt(a.se * a.se + b.se * b.se);
  if (denom == 0.0) return a.mean == b.mean ? 0.0 : std::numeric_limits<double>::infinity();
  return (a.mean - b.mean) / denom;
}

struct ChiSquareResult {
  double statistic = 0.0;
  std::size_t df = 0;
  double p_value = 1.0;
};

// Pearson goodness-of-fit against given cell probabilities. Cells with
// expected count below min_expected are pooled into their neighbour.
inline ChiSquareResult chi_square_gof(std::span<const std::size_t> observed,
                                      std::span<const double> expected_probs,
                                      double min_expected = 5.0) {
  if (observed.size() != expected_probs.size() || observed.empty())
    throw EmptySample("chi_square_gof: mismatched or empty cells");
  double total = 0.0;
  for (std::size_t c : observed) total += static_cast<double>(c);

  std::vector<double> obs, exp;
  double o_acc = 0.0, e_acc = 0.0;
  for (std::size_t k = 0; k < observed.size(); ++k) {
    o_acc += static_cast<double>(observed[k]);
    e_acc += expected_probs[k] * total;
    if (e_acc >= min_expected) {
      obs.push_back(o_acc);
      exp.push_back(e_acc);
      o_acc = e_acc = 0.0;
    }
  }
  if (e_acc > 0.0 || o_acc > 0.0) {
    if (exp.empty()) {
      obs.push_back(o_acc);
      exp.push_back(e_acc);
    } else {
      obs.back() += o_acc;
      exp.back() += e_acc;
    }
  }

  ChiSquareResult r;
  if (exp.size() < 2) return r;  // everything pooled: nothing to test
  for (std::size_t k = 0; k < exp.size(); ++k) {
    if (exp[k] <= 0.0) continue;
    const double d = obs[k] - exp[k];
    r.statistic += d * d / exp[k];
  }
  r.df = exp.size() - 1;
  r.p_value = boost::math::gamma_q(static_cast<double>(r.df) / 2.0, r.statistic / 2.0);
  return r;
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  std::size_t points = 0;
};

inline LineFit fit_line(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw EmptySample("fit_line: need at least two points");
  const auto n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sx += x[k];
    sy += y[k];
    sxx += x[k] * x[k];
    sxy += x[k] * y[k];
  }
  LineFit f;
  f.points = x.size();
  const double denom = n * sxx - sx * sx;
  f.slope = (n * sxy - sx * sy) / denom;
  f.intercept = (sy - f.slope * sx) / n;
  return f;
}

inline bool strictly_decreasing(std::span<const double> v) {
  for (std::size_t k = 1; k < v.size(); ++k)
    if (!(v[k] < v[k - 1])) return false;
  return true;
}

}  // namespace lbp
