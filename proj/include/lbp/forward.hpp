#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "lbp/errors.hpp"
#include "lbp/io.hpp"
#include "lbp/law_family.hpp"
#include "lbp/rational.hpp"
#include "lbp/rng.hpp"

namespace lbp {

struct PopulationState {
  long n_plus = 0;
  long n_minus = 0;
  long total() const { return n_plus + n_minus; }
  bool operator==(const PopulationState&) const = default;
};

struct TrajectoryPoint {
  double t = 0.0;
  PopulationState state;
};

struct Trajectory {
  std::vector<TrajectoryPoint> points;  // strictly increasing times, points[0].t == 0

  const PopulationState& back_state() const { return points.back().state; }
  double back_time() const { return points.back().t; }

  void write_csv(std::ostream& out) const {
    out << "t,n_plus,n_minus\n";
    for (const auto& p : points)
      out << format_double(p.t) << ',' << p.state.n_plus << ',' << p.state.n_minus << '\n';
  }
};

struct FrequencyPoint {
  double t = 0.0;
  double x_plus = 0.0;
  double x_minus = 0.0;
};

struct FrequencyPath {
  std::vector<FrequencyPoint> points;

  void write_csv(std::ostream& out) const {
    out << "t,x_plus,x_minus\n";
    for (const auto& p : points)
      out << format_double(p.t) << ',' << format_double(p.x_plus) << ','
          << format_double(p.x_minus) << '\n';
  }
};

// Per-individual rates lowered to doubles for the event loop. comp is the
// competition coefficient m/K: each individual dies at comp * N on top of its
// natural death rate.
struct ForwardRates {
  std::vector<std::pair<int, double>> birth_plus, birth_minus;  // atoms with i >= 1, cumulative mass
  double birth_plus_total = 0.0, birth_minus_total = 0.0;
  double death_plus = 0.0, death_minus = 0.0;  // mu(0)
  double comp = 0.0;
  double mut_plus = 0.0, mut_minus = 0.0;  // theta / K
  double max_total_rate = 1e15;

  static ForwardRates lower(const ReproductionLaw& plus, const ReproductionLaw& minus, double comp,
                            double mut_plus, double mut_minus) {
    ForwardRates r;
    auto fill = [](const ReproductionLaw& law, std::vector<std::pair<int, double>>& atoms,
                   double& total, double& death) {
      double cum = 0.0;
      for (const auto& a : law.atoms()) {
        if (a.count == 0) {
          death = to_double(a.mass);
          continue;
        }
        cum += to_double(a.mass);
        atoms.push_back({a.count, cum});
      }
      total = cum;
    };
    fill(plus, r.birth_plus, r.birth_plus_total, r.death_plus);
    fill(minus, r.birth_minus, r.birth_minus_total, r.death_minus);
    r.comp = comp;
    r.mut_plus = mut_plus;
    r.mut_minus = mut_minus;
    return r;
  }

  static ForwardRates from_model(const ModelParams& p) {
    const double K = static_cast<double>(p.K);
    return lower(p.family.plus(p.K), p.family.minus(p.K), to_double(p.family.m()) / K,
                 p.theta_plus / K, p.theta_minus / K);
  }
};

struct RateRow {
  Rational rate;
  PopulationState next;
};

// The six-row rate table of the two-type logistic branching chain, exact.
// Zero-rate rows are omitted; extinction (0,0) yields an empty table.
inline std::vector<RateRow> transition_rates(const PopulationState& s, const ModelParams& p) {
  std::vector<RateRow> rows;
  const ReproductionLaw plus = p.family.plus(p.K);
  const ReproductionLaw minus = p.family.minus(p.K);
  const Rational comp = p.family.m() / p.K;
  const Rational N(s.total());

  for (const auto& a : plus.atoms())
    if (a.count >= 1 && s.n_plus > 0)
      rows.push_back({Rational(s.n_plus) * a.mass, {s.n_plus + a.count - 1, s.n_minus}});
  for (const auto& a : minus.atoms())
    if (a.count >= 1 && s.n_minus > 0)
      rows.push_back({Rational(s.n_minus) * a.mass, {s.n_plus, s.n_minus + a.count - 1}});
  if (s.n_plus > 0) {
    const Rational rate = Rational(s.n_plus) * plus.mass(0) + Rational(s.n_plus) * N * comp;
    if (rate > 0) rows.push_back({rate, {s.n_plus - 1, s.n_minus}});
  }
  if (s.n_minus > 0) {
    const Rational rate = Rational(s.n_minus) * minus.mass(0) + Rational(s.n_minus) * N * comp;
    if (rate > 0) rows.push_back({rate, {s.n_plus, s.n_minus - 1}});
  }
  if (s.n_plus > 0 && p.theta_plus > 0)
    rows.push_back({Rational(s.n_plus) * Rational(p.theta_plus) / p.K,
                    {s.n_plus - 1, s.n_minus + 1}});
  if (s.n_minus > 0 && p.theta_minus > 0)
    rows.push_back({Rational(s.n_minus) * Rational(p.theta_minus) / p.K,
                    {s.n_plus + 1, s.n_minus - 1}});
  return rows;
}

enum class StopReason { horizon, absorbed, stop_predicate, visitor };

// Exact single-clock event loop: one exponential for the waiting time, one
// categorical pick proportional to the rate rows. visit(t, state) runs after
// every applied event; returning false ends the run.
template <typename Visit>
StopReason run_forward(PopulationState& s, double& t, const ForwardRates& r, double horizon,
                       RandomStream& rng, Visit&& visit) {
  for (;;) {
    const auto np = static_cast<double>(s.n_plus);
    const auto nm = static_cast<double>(s.n_minus);
    const double N = np + nm;
    const double rb_plus = np * r.birth_plus_total;
    const double rb_minus = nm * r.birth_minus_total;
    const double rd_plus = np * (r.death_plus + r.comp * N);
    const double rd_minus = nm * (r.death_minus + r.comp * N);
    const double rm_plus = np * r.mut_plus;
    const double rm_minus = nm * r.mut_minus;
    const double R = rb_plus + rb_minus + rd_plus + rd_minus + rm_plus + rm_minus;
    if (R == 0.0) return StopReason::absorbed;
    if (R > r.max_total_rate)
      throw RateOverflow("total rate " + format_double(R) + " exceeds the configured bound");

    const double t_next = t + rng.exponential(R);
    if (t_next > horizon) {
      t = horizon;
      return StopReason::horizon;
    }
    t = t_next;

    double u = rng.uniform01() * R;
    if (u < rb_plus) {
      const double target = u / np;
      int children = r.birth_plus.back().first;
      for (const auto& [i, cum] : r.birth_plus)
        if (target < cum) {
          children = i;
          break;
        }
      s.n_plus += children - 1;
    } else if ((u -= rb_plus) < rb_minus) {
      const double target = u / nm;
      int children = r.birth_minus.back().first;
      for (const auto& [i, cum] : r.birth_minus)
        if (target < cum) {
          children = i;
          break;
        }
      s.n_minus += children - 1;
    } else if ((u -= rb_minus) < rd_plus) {
      s.n_plus -= 1;
    } else if ((u -= rd_plus) < rd_minus) {
      s.n_minus -= 1;
    } else if ((u -= rd_minus) < rm_plus) {
      s.n_plus -= 1;
      s.n_minus += 1;
    } else {
      s.n_plus += 1;
      s.n_minus -= 1;
    }
    if (!visit(t, s)) return StopReason::visitor;
  }
}

using StopPredicate = std::function<bool(double, const PopulationState&)>;

struct SimulateResult {
  Trajectory trajectory;
  StopReason reason = StopReason::horizon;
};

// Exact-in-law sample path up to min(horizon, stop time, extinction); the
// full event sequence is recorded.
inline SimulateResult simulate(const PopulationState& initial, const ModelParams& params,
                               double horizon, const StopPredicate& stop, std::uint64_t seed) {
  if (horizon < 0) throw ConfigError("horizon must be >= 0");
  SimulateResult res;
  res.trajectory.points.push_back({0.0, initial});
  PopulationState s = initial;
  double t = 0.0;
  if (stop && stop(0.0, s)) {
    res.reason = StopReason::stop_predicate;
    return res;
  }
  RandomStream rng(seed);
  const ForwardRates rates = ForwardRates::from_model(params);
  bool stopped = false;
  res.reason = run_forward(s, t, rates, horizon, rng, [&](double tt, const PopulationState& ss) {
    res.trajectory.points.push_back({tt, ss});
    if (stop && stop(tt, ss)) {
      stopped = true;
      return false;
    }
    return true;
  });
  if (stopped) res.reason = StopReason::stop_predicate;
  return res;
}

// First event time with n+ + n- >= K - K^beta (the end of the growth phase).
inline std::optional<double> stopping_time_T_beta(const Trajectory& traj, long K, double beta) {
  if (beta <= 0.0 || beta >= 1.0) throw ConfigError("beta must lie in (0,1)");
  const double threshold = static_cast<double>(K) - std::pow(static_cast<double>(K), beta);
  for (const auto& p : traj.points)
    if (static_cast<double>(p.state.total()) >= threshold) return p.t;
  return std::nullopt;
}

// Time axis divided by K, counts divided by K (cadlag sampling is inherited
// from the event times).
inline FrequencyPath rescale_frequency(const Trajectory& traj, long K) {
  FrequencyPath path;
  const double Kd = static_cast<double>(K);
  path.points.reserve(traj.points.size());
  for (const auto& p : traj.points)
    path.points.push_back(
        {p.t / Kd, static_cast<double>(p.state.n_plus) / Kd, static_cast<double>(p.state.n_minus) / Kd});
  return path;
}

// Fraction of replicates whose rescaled total size stays in [1-eps, 1+eps]
// on the whole rescaled window [0, T].
inline double concentration_probe(const ModelParams& params, const PopulationState& initial,
                                  double T, double epsilon, std::size_t replicates,
                                  std::uint64_t root_seed) {
  const ForwardRates rates = ForwardRates::from_model(params);
  const double lo = (1.0 - epsilon) * static_cast<double>(params.K);
  const double hi = (1.0 + epsilon) * static_cast<double>(params.K);
  const double horizon = T * static_cast<double>(params.K);
  std::size_t inside = 0;
  for (std::size_t rep = 0; rep < replicates; ++rep) {
    RandomStream rng(replicate_seed(root_seed, rep));
    PopulationState s = initial;
    double t = 0.0;
    if (s.total() < lo || s.total() > hi) continue;
    bool ok = true;
    run_forward(s, t, rates, horizon, rng, [&](double, const PopulationState& ss) {
      const double n = static_cast<double>(ss.total());
      if (n < lo || n > hi) {
        ok = false;
        return false;
      }
      return true;
    });
    if (ok) ++inside;
  }
  return static_cast<double>(inside) / static_cast<double>(replicates);
}

}  // namespace lbp
