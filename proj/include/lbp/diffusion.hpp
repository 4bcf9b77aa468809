#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "lbp/errors.hpp"
#include "lbp/law_family.hpp"
#include "lbp/rng.hpp"
#include "lbp/stats.hpp"
#include "lbp/thread_pool.hpp"

namespace lbp {

// Limit constants of the frequency diffusion
//   dW = -((s+ - v+) - (s- - v-)) W(1-W) dt + (th+ (1-W) - th- W) dt
//        + sqrt((m + v-) W(1-W) - (v+ - v-) W^2 (1-W)) dB.
struct DiffusionParams {
  double m = 1.0;
  double s_plus = 0.0, s_minus = 0.0;
  double v_plus = 1.0, v_minus = 1.0;
  double theta_plus = 0.0, theta_minus = 0.0;

  void validate() const {
    if (m <= 0 || v_plus <= 0 || v_minus <= 0)
      throw ConfigError("diffusion params need m > 0 and v± > 0");
    if (theta_plus < 0 || theta_minus < 0) throw ConfigError("mutation rates must be >= 0");
    // noise term nonnegative on [0,1] <=> v+ - v- <= m + v-
    if (v_plus - v_minus > m + v_minus + 1e-12)
      throw NegativeVariance("noise coefficient dips below zero on (0,1)");
  }

  static DiffusionParams from_model(const ModelParams& p) {
    DiffusionParams d;
    d.m = to_double(p.family.m());
    d.s_plus = to_double(p.family.s_plus());
    d.s_minus = to_double(p.family.s_minus());
    d.v_plus = to_double(p.family.v_plus());
    d.v_minus = to_double(p.family.v_minus());
    d.theta_plus = p.theta_plus;
    d.theta_minus = p.theta_minus;
    d.validate();
    return d;
  }

  double selection_gap() const { return (s_plus - v_plus) - (s_minus - v_minus); }

  double default_dt() const { return 1e-4 * std::min(1.0, 1.0 / (m + v_plus + v_minus)); }
};

inline double drift(double w, const DiffusionParams& p) {
  return -p.selection_gap() * w * (1.0 - w) + p.theta_plus * (1.0 - w) - p.theta_minus * w;
}

inline double diffusion_coefficient(double w, const DiffusionParams& p) {
  const double value = (p.m + p.v_minus) * w * (1.0 - w) - (p.v_plus - p.v_minus) * w * w * (1.0 - w);
  if (value < -1e-12)
    throw NegativeVariance("diffusion coefficient negative at w = " + std::to_string(w));
  return std::max(value, 0.0);
}

// One Euler-Maruyama step with clamping to [0,1]. Clamping (rather than
// reflection) keeps the boundary-absorption identities of the tests.
inline double sde_step(double w, double dt, const DiffusionParams& p, RandomStream& rng) {
  const double g = diffusion_coefficient(w, p);
  w += drift(w, p) * dt + std::sqrt(g * dt) * rng.normal();
  return std::clamp(w, 0.0, 1.0);
}

struct SdePath {
  std::vector<std::pair<double, double>> points;  // (t, w)
};

inline SdePath simulate_sde(double w0, const DiffusionParams& p, double horizon, double dt,
                            std::uint64_t seed) {
  if (dt <= 0) throw ConfigError("dt must be > 0");
  if (w0 < 0 || w0 > 1) throw ConfigError("w0 must lie in [0,1]");
  p.validate();
  RandomStream rng(seed);
  SdePath path;
  const auto steps = static_cast<std::size_t>(std::ceil(horizon / dt));
  path.points.reserve(steps + 1);
  double w = w0, t = 0.0;
  path.points.push_back({t, w});
  for (std::size_t k = 0; k < steps; ++k) {
    const double h = std::min(dt, horizon - t);
    w = sde_step(w, h, p, rng);
    t += h;
    path.points.push_back({t, w});
  }
  return path;
}

// W at the requested (sorted) times only; shares the stepper with
// simulate_sde so paths agree in law.
inline std::vector<double> sde_values_at(double w0, const DiffusionParams& p,
                                         const std::vector<double>& times, double dt,
                                         RandomStream& rng) {
  std::vector<double> out;
  out.reserve(times.size());
  double w = w0, t = 0.0;
  for (double target : times) {
    while (t < target - 1e-15) {
      const double h = std::min(dt, target - t);
      w = sde_step(w, h, p, rng);
      t += h;
    }
    out.push_back(w);
  }
  return out;
}

// Branching-coalescing dual with annihilation is not needed: under the
// duality conditions (s+ - v+ >= s- - v-, v+ >= v-, th- = 0) the dual is the
// N0-valued chain with
//   n -> n-1 at th+ n + (m + v-) C(n,2)
//   n -> n+1 at ((s+ - v+) - (s- - v-)) n + (v+ - v-) C(n,2),
// absorbed at 0.
struct DualRates {
  double down_lin = 0.0;   // theta+
  double down_pair = 0.0;  // m + v-
  double up_lin = 0.0;     // selection gap
  double up_pair = 0.0;    // v+ - v-

  static DualRates from(const DiffusionParams& p) {
    if (p.theta_minus != 0.0) throw InvalidDualParams("dual chain requires theta- = 0");
    DualRates r;
    r.down_lin = p.theta_plus;
    r.down_pair = p.m + p.v_minus;
    r.up_lin = p.selection_gap();
    r.up_pair = p.v_plus - p.v_minus;
    if (r.up_lin < 0 || r.up_pair < 0)
      throw InvalidDualParams("dual rates negative: need s+ - v+ >= s- - v- and v+ >= v-");
    return r;
  }
};

struct DualPath {
  std::vector<std::pair<double, long>> points;  // (t, n); 0 is absorbing
};

template <typename Visit>
long run_dual(long n, double& t, const DualRates& r, double horizon, RandomStream& rng,
              Visit&& visit) {
  while (n > 0) {
    const auto nd = static_cast<double>(n);
    const double pairs = nd * (nd - 1.0) / 2.0;
    const double down = r.down_lin * nd + r.down_pair * pairs;
    const double up = r.up_lin * nd + r.up_pair * pairs;
    const double R = up + down;
    if (R == 0.0) break;
    const double t_next = t + rng.exponential(R);
    if (t_next > horizon) break;
    t = t_next;
    n += rng.uniform01() * R < up ? 1 : -1;
    if (n > 100'000'000) throw RateOverflow("dual chain exploded");
    if (!visit(t, n)) break;
  }
  t = std::min(t, horizon);
  return n;
}

inline DualPath simulate_dual(long n0, const DiffusionParams& p, double horizon,
                              std::uint64_t seed) {
  if (n0 < 0) throw ConfigError("n0 must be >= 0");
  const DualRates rates = DualRates::from(p);
  RandomStream rng(seed);
  DualPath path;
  path.points.push_back({0.0, n0});
  double t = 0.0;
  run_dual(n0, t, rates, horizon, rng, [&](double tt, long nn) {
    path.points.push_back({tt, nn});
    return true;
  });
  return path;
}

// Difference of the two generator applications on f(w) = w^n; identically
// zero when theta- = 0, which is the executable content of the duality.
inline double generator_duality_residual(double w, long n, const DiffusionParams& p) {
  const DualRates r = DualRates::from(p);  // validates the duality conditions
  if (n == 0) return 0.0;
  const auto nd = static_cast<double>(n);
  const double pairs = nd * (nd - 1.0) / 2.0;

  const double w_nm1 = std::pow(w, static_cast<double>(n - 1));
  const double w_n = w_nm1 * w;
  const double w_np1 = w_n * w;

  double lhs = drift(w, p) * nd * w_nm1;
  if (n >= 2) lhs += 0.5 * diffusion_coefficient(w, p) * nd * (nd - 1.0) * std::pow(w, static_cast<double>(n - 2));

  const double rhs = (r.down_lin * nd + r.down_pair * pairs) * (w_nm1 - w_n) +
                     (r.up_lin * nd + r.up_pair * pairs) * (w_np1 - w_n);
  return lhs - rhs;
}

struct DualityReport {
  double lhs_mean = 0.0, lhs_se = 0.0;  // E[W(t)^n | W(0) = w0]
  double rhs_mean = 0.0, rhs_se = 0.0;  // E[w0^A(t) | A(0) = n0]
  double z = 0.0;
  std::size_t replicates = 0;
  std::uint64_t seed = 0;
};

// Monte Carlo check of E[W(t)^n] = E[w^A(t)]: SDE paths on the left, dual
// chain on the right, a two-sample z statistic in between.
inline DualityReport duality_check(double w0, long n0, double t, const DiffusionParams& p,
                                   std::size_t replicates, std::uint64_t root_seed,
                                   double dt = 0.0, unsigned jobs = 1) {
  if (replicates == 0) throw EmptySample("duality_check needs replicates >= 1");
  const DualRates rates = DualRates::from(p);
  if (dt <= 0) dt = p.default_dt();

  std::vector<double> lhs(replicates), rhs(replicates);
  parallel_replicates(replicates, jobs, [&](std::size_t rep) {
    RandomStream rng(substream_seed(replicate_seed(root_seed, rep), 0));
    double w = w0, tt = 0.0;
    const auto steps = static_cast<std::size_t>(std::ceil(t / dt));
    for (std::size_t k = 0; k < steps; ++k) {
      const double h = std::min(dt, t - tt);
      w = sde_step(w, h, p, rng);
      tt += h;
    }
    lhs[rep] = std::pow(w, static_cast<double>(n0));

    RandomStream rng2(substream_seed(replicate_seed(root_seed, rep), 1));
    double td = 0.0;
    const long n_t = run_dual(n0, td, rates, t, rng2, [](double, long) { return true; });
    rhs[rep] = std::pow(w0, static_cast<double>(n_t));
  });

  DualityReport rep;
  const SummaryStats a = summary_stats(lhs);
  const SummaryStats b = summary_stats(rhs);
  rep.lhs_mean = a.mean;
  rep.lhs_se = a.se;
  rep.rhs_mean = b.mean;
  rep.rhs_se = b.se;
  rep.z = two_sample_z(a, b);
  rep.replicates = replicates;
  rep.seed = root_seed;
  return rep;
}

}  // namespace lbp
