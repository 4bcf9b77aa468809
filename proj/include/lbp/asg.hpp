#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "lbp/coupling.hpp"
#include "lbp/errors.hpp"
#include "lbp/io.hpp"
#include "lbp/law_family.hpp"
#include "lbp/rng.hpp"
#include "lbp/transition_law.hpp"

namespace lbp {

// Graphical construction at carrying capacity (time rescaled by K): possible
// reproduction events arrive as a Poisson stream of (i, j) pairs from nu_K at
// intensity K * N_up * |nu_K|, thinned by the current population size. The
// logistic deaths of the underlying chain are kept as type-independent
// uniform deaths; they never colour labels, so the backward law only sees
// them through the recorded population sizes. A constructor flag drops them
// for the literal event-stream-only process.

enum class EventKind : std::uint8_t { rejected = 0, reproduction = 1, competition = 2 };

struct EventRecord {
  double t = 0.0;
  std::int32_t i = 0, j = 0;
  EventKind kind = EventKind::rejected;
  std::int8_t parent_plus = -1;  // 1 plus, 0 minus; -1 for rejected proposals
  std::int64_t post_size = 0;
  bool accepted() const { return kind != EventKind::rejected; }
};

struct GraphicalOptions {
  double epsilon = 0.0;            // band half-width; 0 selects K^{-1/4}
  bool competition_deaths = true;  // include the logistic deaths of the count chain
  bool keep_rejected = true;       // retain thinned-away proposals (the auxiliary chain needs them)
  std::uint64_t max_events = 2'000'000'000ULL;
};

inline double default_band_epsilon(long K) {
  return std::pow(static_cast<double>(K), -0.25);
}

namespace detail {

struct LoweredCoupling {
  std::vector<std::int32_t> is, js;
  std::vector<double> cum;  // cumulative masses
  double total = 0.0;

  static LoweredCoupling from(const CouplingMeasure& nu) {
    LoweredCoupling l;
    double c = 0.0;
    for (const auto& a : nu.atoms()) {
      c += to_double(a.mass);
      l.is.push_back(a.i);
      l.js.push_back(a.j);
      l.cum.push_back(c);
    }
    l.total = c;
    return l;
  }

  std::size_t pick(double target) const {
    for (std::size_t k = 0; k < cum.size(); ++k)
      if (target < cum[k]) return k;
    return cum.size() - 1;
  }
};

}  // namespace detail

// Resumable event generator; checkpoints capture everything needed to replay
// a block of events bit-exactly (used by the streaming backward pass).
class GraphicalProcess {
 public:
  struct Checkpoint {
    std::array<std::uint64_t, 4> rng_state{};
    long n_plus = 0, n_minus = 0;
    double t = 0.0;
    bool frozen = false, done = false;
    std::uint64_t events = 0;
  };

  GraphicalProcess(const ModelParams& params, const CouplingMeasure& nu, double T, long n_plus0,
                   long n_minus0, std::uint64_t seed, const GraphicalOptions& opts = {})
      : nu_(detail::LoweredCoupling::from(nu)), T_(T), opts_(opts), rng_(seed) {
    K_ = params.K;
    const double eps = opts.epsilon > 0 ? opts.epsilon : default_band_epsilon(K_);
    n_down_ = static_cast<long>(std::floor((1.0 - eps) * static_cast<double>(K_)));
    n_up_ = static_cast<long>(std::ceil((1.0 + eps) * static_cast<double>(K_)));
    comp_coeff_ = opts.competition_deaths ? to_double(params.family.m()) : 0.0;
    lambda_prop_ = static_cast<double>(K_) * static_cast<double>(n_up_) * nu_.total;
    n_plus_ = n_plus0;
    n_minus_ = n_minus0;
    if (n_plus_ < 0 || n_minus_ < 0) throw ConfigError("negative initial counts");
    if (total() < n_down_ || total() > n_up_)
      throw ConfigError("initial size must lie in the band [N_down, N_up]");
  }

  long K() const { return K_; }
  long n_down() const { return n_down_; }
  long n_up() const { return n_up_; }
  long n_plus() const { return n_plus_; }
  long n_minus() const { return n_minus_; }
  long total() const { return n_plus_ + n_minus_; }
  double t() const { return t_; }
  bool frozen() const { return frozen_; }
  double freeze_time() const { return freeze_time_; }
  std::uint64_t events_seen() const { return events_; }
  double nu_total_mass() const { return nu_.total; }

  Checkpoint checkpoint() const {
    return {rng_.engine_state(), n_plus_, n_minus_, t_, frozen_, done_, events_};
  }
  void restore(const Checkpoint& c) {
    rng_.set_engine_state(c.rng_state);
    n_plus_ = c.n_plus;
    n_minus_ = c.n_minus;
    t_ = c.t;
    frozen_ = c.frozen;
    done_ = c.done;
    events_ = c.events;
  }

  // Produces the next event of the construction; false once the horizon is
  // reached or the process froze.
  bool next(EventRecord& ev) {
    if (frozen_ || done_) return false;
    if (events_ >= opts_.max_events) throw RateOverflow("graphical construction: event budget exhausted");
    const double N = static_cast<double>(total());
    const double r_comp = comp_coeff_ * N * N;
    const double R = lambda_prop_ + r_comp;
    const double t_next = t_ + rng_.exponential(R);
    if (t_next > T_) {
      t_ = T_;
      done_ = true;
      return false;
    }
    t_ = t_next;
    ++events_;

    if (rng_.uniform01() * R < lambda_prop_) {
      const std::size_t a = nu_.pick(rng_.uniform01() * nu_.total);
      const std::int32_t i = nu_.is[a], j = nu_.js[a];
      ev.t = t_;
      ev.i = i;
      ev.j = j;
      if (rng_.uniform01() >= N / static_cast<double>(n_up_)) {
        ev.kind = EventKind::rejected;
        ev.parent_plus = -1;
        ev.post_size = total();
        return true;
      }
      const bool plus = rng_.uniform01() < static_cast<double>(n_plus_) / N;
      const long delta = plus ? i + j - 1 : i - 1;
      const long post = total() + delta;
      if (post < i + 2L * j) {  // colour categories would overlap: freeze untouched
        frozen_ = true;
        freeze_time_ = t_;
        return false;
      }
      if (plus)
        n_plus_ += delta;
      else
        n_minus_ += delta;
      ev.kind = EventKind::reproduction;
      ev.parent_plus = plus ? 1 : 0;
      ev.post_size = post;
      if (post < n_down_ || post > n_up_) {
        frozen_ = true;
        freeze_time_ = t_;
      }
      return true;
    }

    // competition death: a uniform individual dies regardless of type
    const bool minus = rng_.uniform01() < static_cast<double>(n_minus_) / N;
    if (minus)
      n_minus_ -= 1;
    else
      n_plus_ -= 1;
    ev.t = t_;
    ev.i = 0;
    ev.j = 0;
    ev.kind = EventKind::competition;
    ev.parent_plus = minus ? 0 : 1;
    ev.post_size = total();
    if (total() < n_down_) {
      frozen_ = true;
      freeze_time_ = t_;
    }
    return true;
  }

 private:
  detail::LoweredCoupling nu_;
  double T_;
  GraphicalOptions opts_;
  RandomStream rng_;
  long K_ = 1, n_down_ = 0, n_up_ = 0;
  long n_plus_ = 0, n_minus_ = 0;
  double t_ = 0.0;
  double lambda_prop_ = 0.0, comp_coeff_ = 0.0;
  bool frozen_ = false, done_ = false;
  double freeze_time_ = std::numeric_limits<double>::infinity();
  std::uint64_t events_ = 0;
};

struct GraphicalRun {
  std::vector<EventRecord> events;
  long K = 1;
  long n_down = 0, n_up = 0;
  long init_plus = 0, init_minus = 0;
  long final_plus = 0, final_minus = 0;
  double T = 0.0;
  bool frozen = false;
  double freeze_time = std::numeric_limits<double>::infinity();
  double nu_total_mass = 0.0;

  long final_total() const { return final_plus + final_minus; }

  // Forward count path reconstructed from the log.
  std::vector<std::tuple<double, long, long>> count_path() const {
    std::vector<std::tuple<double, long, long>> path;
    long np = init_plus, nm = init_minus;
    path.emplace_back(0.0, np, nm);
    for (const auto& ev : events) {
      if (!ev.accepted()) continue;
      if (ev.kind == EventKind::competition) {
        (ev.parent_plus == 1 ? np : nm) -= 1;
      } else {
        if (ev.parent_plus == 1)
          np += ev.i + ev.j - 1;
        else
          nm += ev.i - 1;
      }
      path.emplace_back(ev.t, np, nm);
    }
    return path;
  }

  void write_events_jsonl(std::ostream& out) const {
    for (const auto& ev : events) {
      out << "{\"t\":" << format_double(ev.t) << ",\"i\":" << ev.i << ",\"j\":" << ev.j
          << ",\"accepted\":" << (ev.accepted() ? "true" : "false");
      if (ev.accepted())
        out << ",\"post_size\":" << ev.post_size << ",\"parent_type\":\""
            << (ev.parent_plus == 1 ? '+' : '-') << '"';
      out << "}\n";
    }
  }
};

inline GraphicalRun simulate_graphical(const ModelParams& params, const CouplingMeasure& nu,
                                       double T, long n_plus0, long n_minus0, std::uint64_t seed,
                                       const GraphicalOptions& opts = {}) {
  GraphicalProcess proc(params, nu, T, n_plus0, n_minus0, seed, opts);
  GraphicalRun run;
  run.K = proc.K();
  run.n_down = proc.n_down();
  run.n_up = proc.n_up();
  run.init_plus = n_plus0;
  run.init_minus = n_minus0;
  run.T = T;
  run.nu_total_mass = proc.nu_total_mass();
  EventRecord ev;
  while (proc.next(ev)) {
    if (ev.kind == EventKind::rejected && !opts.keep_rejected) continue;
    run.events.push_back(ev);
  }
  run.final_plus = proc.n_plus();
  run.final_minus = proc.n_minus();
  run.frozen = proc.frozen();
  run.freeze_time = proc.freeze_time();
  return run;
}

struct LineagePath {
  std::vector<std::pair<double, long>> points;  // (backward time, count); -1 encodes the cemetery
  long sample_size = 0;
  double T = 0.0;
  bool absorbed = false;

  void write_csv(std::ostream& out) const {
    out << "t_backward,count\n";
    for (const auto& [t, n] : points) out << format_double(t) << ',' << n << '\n';
  }
};

// Backward-in-time lineage count of a uniform sample of m individuals alive
// at time T: jumps only at accepted reproduction events, with the exact
// transition law at the recorded post-event size.
inline LineagePath lineage_counting(const GraphicalRun& run, long m, std::uint64_t seed) {
  if (m < 0 || m > run.final_total())
    throw SampleTooLarge("sample size exceeds the population alive at time T");
  LineagePath path;
  path.sample_size = m;
  path.T = run.T;
  path.points.push_back({0.0, m});
  RandomStream rng(seed);
  long n = m;
  for (auto it = run.events.rbegin(); it != run.events.rend(); ++it) {
    const EventRecord& ev = *it;
    if (ev.kind != EventKind::reproduction) continue;
    if (ev.i == 0 && ev.j == 0) continue;  // common death: no coloured labels
    const TransitionSample s = sample_transition(rng, ev.i, ev.j, n, ev.post_size);
    if (s.kind == JumpKind::cemetery) {
      path.points.push_back({run.T - ev.t, -1});
      path.absorbed = true;
      return path;
    }
    if (s.new_count != n) {
      n = s.new_count;
      path.points.push_back({run.T - ev.t, n});
    }
  }
  return path;
}

// kappa_L = 1/(20 L): strictly inside the monotonicity region of the
// transition probabilities for n <= L.
inline double kappa_for(long L) {
  if (L < 1) throw ConfigError("kappa_for needs L >= 1");
  return 1.0 / (20.0 * static_cast<double>(L));
}

namespace detail {

// Non-throwing closed forms used by the auxiliary chain (out-of-range
// configurations have probability zero).
inline double p_plus_d(long i, long j, long n, long N) {
  return static_cast<double>(j) * binomial_d(N - i - 2 * j, n - 1) / binomial_d(N, n);
}
inline double p_minus_d(long i, long j, long n, long N) {
  return binomial_d(i, 2) * binomial_d(N - i - j, n - 2) / binomial_d(N, n);
}

}  // namespace detail

struct AuxiliaryRun {
  std::vector<std::pair<double, long>> a_path;  // backward time, count (-1 = cemetery)
  std::vector<std::pair<double, long>> b_path;
  double tau = std::numeric_limits<double>::infinity();    // first backward time with A != B
  double sigma = std::numeric_limits<double>::infinity();  // first backward time with B >= L
  bool fallback = false;  // off-band realisation or oversized events
};

// The quasi-autonomous companion chain of the lineage count. On good
// realisations B copies A's up/down jumps with probability
// p(n, N_up) / (p(n, N) + p_hat(n, N)) and moves on its own at thinned-away
// proposals; on bad realisations it runs independently on the proposal
// skeleton with the N_up probabilities.
inline AuxiliaryRun auxiliary_process(const GraphicalRun& run, long m, long L,
                                      std::uint64_t seed) {
  if (L < 2) throw ConfigError("auxiliary_process needs L >= 2");
  if (m < 0 || m > run.final_total())
    throw SampleTooLarge("sample size exceeds the population alive at time T");
  const double kappa_K = kappa_for(L) * static_cast<double>(run.K);
  AuxiliaryRun aux;
  aux.fallback = run.frozen;
  for (const auto& ev : run.events)
    if (ev.kind != EventKind::competition && ev.i + ev.j > kappa_K) aux.fallback = true;

  RandomStream rng_a(substream_seed(seed, 0));
  RandomStream rng_v(substream_seed(seed, 1));

  long a = m, b = m;
  bool a_absorbed = false;
  aux.a_path.push_back({0.0, a});
  aux.b_path.push_back({0.0, b});
  if (b >= L) aux.sigma = 0.0;

  const long n_up = run.n_up;
  for (auto it = run.events.rbegin(); it != run.events.rend(); ++it) {
    const EventRecord& ev = *it;
    if (ev.kind == EventKind::competition) continue;  // not a point of the proposal stream
    const double tb = run.T - ev.t;

    const long a_pre = a;
    const long b_pre = b;
    JumpKind a_jump = JumpKind::stay;
    if (ev.kind == EventKind::reproduction && !a_absorbed && !(ev.i == 0 && ev.j == 0)) {
      const TransitionSample s = sample_transition(rng_a, ev.i, ev.j, a, ev.post_size);
      a_jump = s.kind;
      if (s.kind == JumpKind::cemetery) {
        a_absorbed = true;
        aux.a_path.push_back({tb, -1});
      } else if (s.new_count != a) {
        a = s.new_count;
        aux.a_path.push_back({tb, a});
      }
    }

    const bool coupled_step = !aux.fallback && ev.kind == EventKind::reproduction &&
                              !a_absorbed_pre(a_absorbed, a_jump) && a_pre == b_pre;
    const double v = rng_v.uniform01();
    if (coupled_step) {
      if (a_jump == JumpKind::up) {
        const double denom = p_plus<double>(ev.i, ev.j, b_pre, ev.post_size) +
                             p_hat_plus<double>(ev.i, ev.j, b_pre, ev.post_size);
        const double q = denom > 0 ? detail::p_plus_d(ev.i, ev.j, b_pre, n_up) / denom : 0.0;
        if (v <= q) b = b_pre + 1;
      } else if (a_jump == JumpKind::down) {
        const double denom = p_minus<double>(ev.i, ev.j, b_pre, ev.post_size) +
                             p_hat_minus<double>(ev.i, ev.j, b_pre, ev.post_size);
        const double q = denom > 0 ? detail::p_minus_d(ev.i, ev.j, b_pre, n_up) / denom : 0.0;
        if (v <= q) b = b_pre - 1;
      }
    } else {
      const double pu = detail::p_plus_d(ev.i, ev.j, b_pre, n_up);
      const double pd = detail::p_minus_d(ev.i, ev.j, b_pre, n_up);
      if (v <= pu)
        b = b_pre + 1;
      else if (v <= pu + pd)
        b = b_pre - 1;
    }
    if (b != b_pre) aux.b_path.push_back({tb, b});

    const bool differ = a_absorbed || a != b;
    if (differ && std::isinf(aux.tau)) aux.tau = tb;
    if (b >= L && std::isinf(aux.sigma)) aux.sigma = tb;
  }
  return aux;
}

struct LimitProbeRow {
  long K = 0;
  int n = 0;
  double sum_p_plus = 0.0;      // K^2 sum p+ nu_K
  double sum_p_minus = 0.0;     // K^2 sum p- nu_K
  double sum_residual = 0.0;    // K^2 sum pbar nu_K
  double target_up = 0.0;       // n * s
  double target_down = 0.0;     // C(n,2) (m + v)
};

// Exact rational sums of the transition probabilities against nu_K at N = K,
// scaled by K^2; they approach the limiting branch and coalescence rates.
inline std::vector<LimitProbeRow> generator_limit_probe(const LawFamily& family, int n_max,
                                                        std::span<const long> Ks) {
  std::vector<LimitProbeRow> rows;
  const double s = to_double(family.s_plus() - family.s_minus());
  const double mv = to_double(family.m() + family.v_minus());
  for (long K : Ks) {
    ModelParams params;
    params.K = K;
    params.family = family;
    const CouplingMeasure nu = build_coupling(params);
    for (int n = 1; n <= n_max; ++n) {
      Rational sp = 0, sm = 0, sres = 0;
      for (const auto& atom : nu.atoms()) {
        const Rational pp = p_plus<Rational>(atom.i, atom.j, n, K);
        const Rational pm = p_minus<Rational>(atom.i, atom.j, n, K);
        const auto dist = transition_distribution<Rational>(atom.i, atom.j, n, K);
        Rational residual = (dist.up - pp) + (dist.down - pm) + dist.cemetery;
        for (const auto& [k, mass] : dist.merges) residual += mass;
        sp += pp * atom.mass;
        sm += pm * atom.mass;
        sres += residual * atom.mass;
      }
      const Rational K2(BigInt(K) * K);
      LimitProbeRow row;
      row.K = K;
      row.n = n;
      row.sum_p_plus = to_double(K2 * sp);
      row.sum_p_minus = to_double(K2 * sm);
      row.sum_residual = to_double(K2 * sres);
      row.target_up = static_cast<double>(n) * s;
      row.target_down = binomial_d(n, 2) * mv;
      rows.push_back(row);
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Streaming backward statistics for the Monte Carlo harness: the forward pass
// keeps only periodic checkpoints, then each block is re-simulated and walked
// backwards, so memory stays bounded while the replayed event stream is
// bit-identical.

struct AsgReplicateStats {
  long up_jumps = 0, down_jumps = 0;
  double lineage_time = 0.0;  // integral of A(t) dt over the backward window
  double pair_time = 0.0;     // integral of C(A(t),2) dt
  bool absorbed = false;
  double absorb_time = std::numeric_limits<double>::infinity();
  long terminal = 0;  // A at backward time T (only meaningful if !absorbed)
  bool frozen = false;
};

inline AsgReplicateStats asg_rate_replicate(const ModelParams& params, const CouplingMeasure& nu,
                                            double T, long n_plus0, long n_minus0, long m,
                                            std::uint64_t seed, const GraphicalOptions& opts_in = {},
                                            std::size_t block_events = 1u << 19) {
  GraphicalOptions opts = opts_in;
  opts.keep_rejected = true;  // replay fidelity; rejected events are simply not buffered

  GraphicalProcess proc(params, nu, T, n_plus0, n_minus0, seed, opts);
  std::vector<GraphicalProcess::Checkpoint> checkpoints;
  checkpoints.push_back(proc.checkpoint());
  EventRecord ev;
  std::size_t in_block = 0;
  while (proc.next(ev)) {
    if (++in_block == block_events) {
      checkpoints.push_back(proc.checkpoint());
      in_block = 0;
    }
  }
  AsgReplicateStats stats;
  stats.frozen = proc.frozen();
  const long final_total = proc.total();
  if (m < 0 || m > final_total)
    throw SampleTooLarge("sample size exceeds the population alive at time T");

  struct Compact {
    double t;
    std::int32_t i, j;
    std::int64_t post;
  };
  std::vector<Compact> buffer;
  buffer.reserve(block_events);

  RandomStream rng_b(substream_seed(seed, 1));
  long n = m;
  double last_tb = 0.0;
  auto integrate_to = [&](double tb) {
    const auto nd = static_cast<double>(n);
    stats.lineage_time += nd * (tb - last_tb);
    stats.pair_time += nd * (nd - 1.0) / 2.0 * (tb - last_tb);
    last_tb = tb;
  };

  GraphicalProcess replay(params, nu, T, n_plus0, n_minus0, seed, opts);
  for (std::size_t blk = checkpoints.size(); blk-- > 0 && !stats.absorbed;) {
    replay.restore(checkpoints[blk]);
    buffer.clear();
    const std::uint64_t stop_at =
        blk + 1 < checkpoints.size() ? checkpoints[blk + 1].events : proc.events_seen() + 1;
    while (replay.events_seen() < stop_at && replay.next(ev)) {
      if (ev.kind == EventKind::reproduction && !(ev.i == 0 && ev.j == 0))
        buffer.push_back({ev.t, ev.i, ev.j, ev.post_size});
    }
    for (auto it = buffer.rbegin(); it != buffer.rend(); ++it) {
      const double tb = T - it->t;
      const TransitionSample s = sample_transition(rng_b, it->i, it->j, n, it->post);
      if (s.kind == JumpKind::cemetery) {
        integrate_to(tb);
        stats.absorbed = true;
        stats.absorb_time = tb;
        break;
      }
      if (s.new_count != n) {
        integrate_to(tb);
        if (s.kind == JumpKind::up)
          ++stats.up_jumps;
        else if (s.kind == JumpKind::down)
          ++stats.down_jumps;
        n = s.new_count;
      }
    }
  }
  if (!stats.absorbed) {
    integrate_to(T);
    stats.terminal = n;
  }
  return stats;
}

namespace detail {

inline bool a_absorbed_pre(bool absorbed_now, JumpKind jump) {
  // absorbed before this event <=> absorbed now but not by this very jump
  return absorbed_now && jump != JumpKind::cemetery;
}

}  // namespace detail

using detail::a_absorbed_pre;

}  // namespace lbp
