#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "lbp/errors.hpp"
#include "lbp/forward.hpp"
#include "lbp/law_family.hpp"
#include "lbp/rng.hpp"
#include "lbp/thread_pool.hpp"

namespace lbp {

// Individuals are tuples of positive integers; the parent is the prefix one
// shorter, so a label encodes its whole ancestry.
using Label = std::vector<std::uint32_t>;

inline std::string label_to_string(const Label& u) {
  std::string s;
  for (std::size_t k = 0; k < u.size(); ++k) {
    if (k) s += '.';
    s += std::to_string(u[k]);
  }
  return s;
}

inline Label label_from_string(std::string_view s) {
  Label u;
  std::uint64_t cur = 0;
  bool have = false;
  for (char c : s) {
    if (c == '.') {
      if (!have || cur == 0) throw ConfigError("bad label: '" + std::string(s) + "'");
      u.push_back(static_cast<std::uint32_t>(cur));
      cur = 0;
      have = false;
    } else if (c >= '0' && c <= '9') {
      cur = cur * 10 + static_cast<std::uint64_t>(c - '0');
      have = true;
    } else {
      throw ConfigError("bad label: '" + std::string(s) + "'");
    }
  }
  if (!have || cur == 0) throw ConfigError("bad label: '" + std::string(s) + "'");
  u.push_back(static_cast<std::uint32_t>(cur));
  return u;
}

// u is an ancestor of v or equal to it (prefix order).
inline bool is_ancestor_or_self(const Label& u, const Label& v) {
  if (u.size() > v.size()) return false;
  return std::equal(u.begin(), u.end(), v.begin());
}

inline bool label_less(const Label& a, const Label& b) {
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

// An element of the labeled-population state space: two disjoint finite sets
// of labels, kept sorted so subtree queries are contiguous range scans.
class LabeledPopulation {
 public:
  LabeledPopulation() = default;
  LabeledPopulation(std::vector<Label> plus, std::vector<Label> minus)
      : plus_(std::move(plus)), minus_(std::move(minus)) {
    std::sort(plus_.begin(), plus_.end(), label_less);
    std::sort(minus_.begin(), minus_.end(), label_less);
    for (const auto& u : plus_)
      if (contains_minus(u)) throw ConfigError("labeled population: type sets must be disjoint");
  }

  const std::vector<Label>& plus() const { return plus_; }
  const std::vector<Label>& minus() const { return minus_; }
  std::size_t size() const { return plus_.size() + minus_.size(); }
  bool empty() const { return plus_.empty() && minus_.empty(); }

  bool contains_plus(const Label& u) const {
    auto it = std::lower_bound(plus_.begin(), plus_.end(), u, label_less);
    return it != plus_.end() && *it == u;
  }
  bool contains_minus(const Label& u) const {
    auto it = std::lower_bound(minus_.begin(), minus_.end(), u, label_less);
    return it != minus_.end() && *it == u;
  }

  long descendant_count(const Label& u) const {
    auto count_in = [&](const std::vector<Label>& v) {
      long c = 0;
      auto it = std::lower_bound(v.begin(), v.end(), u, label_less);
      while (it != v.end() && is_ancestor_or_self(u, *it)) {
        ++c;
        ++it;
      }
      return c;
    };
    return count_in(plus_) + count_in(minus_);
  }

  // F^u: zero on the empty population (indicator convention).
  double descendant_fraction(const Label& u) const {
    if (empty()) return 0.0;
    return static_cast<double>(descendant_count(u)) / static_cast<double>(size());
  }

  // Live labels must be pairwise non-ancestral.
  bool is_antichain() const {
    std::vector<const Label*> all;
    all.reserve(size());
    for (const auto& u : plus_) all.push_back(&u);
    for (const auto& u : minus_) all.push_back(&u);
    std::sort(all.begin(), all.end(), [](const Label* a, const Label* b) { return label_less(*a, *b); });
    for (std::size_t k = 1; k < all.size(); ++k)
      if (is_ancestor_or_self(*all[k - 1], *all[k])) return false;
    return true;
  }

  void write_jsonl(std::ostream& out, double t) const {
    for (const auto& u : plus_)
      out << "{\"t\":" << format_double(t) << ",\"type\":\"+\",\"label\":\"" << label_to_string(u)
          << "\"}\n";
    for (const auto& u : minus_)
      out << "{\"t\":" << format_double(t) << ",\"type\":\"-\",\"label\":\"" << label_to_string(u)
          << "\"}\n";
  }

 private:
  std::vector<Label> plus_, minus_;
};

inline double descendant_fraction(const LabeledPopulation& pop, const Label& u) {
  return pop.descendant_fraction(u);
}

// Per-individual rates of the labeled chain, lowered to cumulative tables.
struct BranchingRates {
  std::vector<std::pair<int, double>> atoms_plus, atoms_minus;  // (i, cumulative mass), i >= 0
  double total_plus = 0.0, total_minus = 0.0;
  double comp = 0.0;       // individual dies at comp * N on top of mu(0)
  double mut_plus = 0.0, mut_minus = 0.0;

  static std::vector<std::pair<int, double>> cumulative(const ReproductionLaw& law, double& total) {
    std::vector<std::pair<int, double>> atoms;
    double cum = 0.0;
    for (const auto& a : law.atoms()) {
      cum += to_double(a.mass);
      atoms.push_back({a.count, cum});
    }
    total = cum;
    return atoms;
  }

  static BranchingRates from_model(const ModelParams& p) {
    BranchingRates r;
    r.atoms_plus = cumulative(p.family.plus(p.K), r.total_plus);
    r.atoms_minus = cumulative(p.family.minus(p.K), r.total_minus);
    const double K = static_cast<double>(p.K);
    r.comp = to_double(p.family.m()) / K;
    r.mut_plus = p.theta_plus / K;
    r.mut_minus = p.theta_minus / K;
    return r;
  }

  // The K = infinity chain: limit laws, no competition, no mutation.
  static BranchingRates limit(const LawFamily& f) {
    BranchingRates r;
    r.atoms_plus = cumulative(f.limit_plus(), r.total_plus);
    r.atoms_minus = cumulative(f.limit_minus(), r.total_minus);
    return r;
  }
};

namespace detail {

struct Indiv {
  Label label;
  std::uint32_t founder = 0;
};

struct TypedPop {
  std::vector<Indiv> plus, minus;
  long total() const { return static_cast<long>(plus.size() + minus.size()); }
};

inline int pick_atom(const std::vector<std::pair<int, double>>& cum, double target) {
  for (const auto& [i, c] : cum)
    if (target < c) return i;
  return cum.back().first;
}

inline Label child_label(const Label& parent, std::uint32_t k) {
  Label c;
  c.reserve(parent.size() + 1);
  c = parent;
  c.push_back(k);
  return c;
}

inline LabeledPopulation materialize(const TypedPop& pop) {
  std::vector<Label> plus, minus;
  plus.reserve(pop.plus.size());
  minus.reserve(pop.minus.size());
  for (const auto& ind : pop.plus) plus.push_back(ind.label);
  for (const auto& ind : pop.minus) minus.push_back(ind.label);
  return LabeledPopulation(std::move(plus), std::move(minus));
}

// Core event loop shared by the labeled chain and the limit chain. visit runs
// after every event; founder_desc tracks descendant counts of the founders.
template <typename Visit>
StopReason run_labeled(TypedPop& pop, std::vector<long>& founder_desc, double& t,
                       const BranchingRates& r, double horizon, RandomStream& rng, Visit&& visit) {
  for (;;) {
    const auto np = static_cast<double>(pop.plus.size());
    const auto nm = static_cast<double>(pop.minus.size());
    const double N = np + nm;
    const double r_rep_plus = np * r.total_plus;
    const double r_rep_minus = nm * r.total_minus;
    const double r_comp = N * N * r.comp;
    const double r_mut_plus = np * r.mut_plus;
    const double r_mut_minus = nm * r.mut_minus;
    const double R = r_rep_plus + r_rep_minus + r_comp + r_mut_plus + r_mut_minus;
    if (R == 0.0) return StopReason::absorbed;
    if (R > 1e15) throw RateOverflow("labeled chain: total rate exceeds bound");

    const double t_next = t + rng.exponential(R);
    if (t_next > horizon) {
      t = horizon;
      return StopReason::horizon;
    }
    t = t_next;

    double u = rng.uniform01() * R;
    if (u < r_rep_plus + r_rep_minus) {
      const bool is_plus = u < r_rep_plus;
      auto& side = is_plus ? pop.plus : pop.minus;
      const auto& atoms = is_plus ? r.atoms_plus : r.atoms_minus;
      const double target = (is_plus ? u : u - r_rep_plus) / static_cast<double>(side.size());
      const int children = pick_atom(atoms, target);
      const auto idx = static_cast<std::size_t>(rng.below(side.size()));
      const Indiv parent = std::move(side[idx]);
      founder_desc[parent.founder] += children - 1;
      if (children == 0) {
        side[idx] = std::move(side.back());
        side.pop_back();
      } else {
        side[idx] = {child_label(parent.label, 1), parent.founder};
        for (int k = 2; k <= children; ++k)
          side.push_back({child_label(parent.label, static_cast<std::uint32_t>(k)), parent.founder});
      }
    } else if (u < r_rep_plus + r_rep_minus + r_comp) {
      const auto idx = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(pop.total())));
      auto& side = idx < pop.plus.size() ? pop.plus : pop.minus;
      const auto k = idx < pop.plus.size() ? idx : idx - pop.plus.size();
      founder_desc[side[k].founder] -= 1;
      side[k] = std::move(side.back());
      side.pop_back();
    } else {
      const bool from_plus = u < r_rep_plus + r_rep_minus + r_comp + r_mut_plus;
      auto& from = from_plus ? pop.plus : pop.minus;
      auto& to = from_plus ? pop.minus : pop.plus;
      const auto idx = static_cast<std::size_t>(rng.below(from.size()));
      to.push_back(std::move(from[idx]));
      from[idx] = std::move(from.back());
      from.pop_back();
    }
    if (!visit(t, pop)) return StopReason::visitor;
  }
}

inline TypedPop to_typed(const LabeledPopulation& pop, std::vector<Label>& founders) {
  TypedPop tp;
  founders.clear();
  for (const auto& u : pop.plus()) {
    tp.plus.push_back({u, static_cast<std::uint32_t>(founders.size())});
    founders.push_back(u);
  }
  for (const auto& u : pop.minus()) {
    tp.minus.push_back({u, static_cast<std::uint32_t>(founders.size())});
    founders.push_back(u);
  }
  return tp;
}

}  // namespace detail

using LabeledStop = std::function<bool(double, long, long)>;  // (t, n_plus, n_minus)

struct LabeledRun {
  LabeledPopulation final;
  std::vector<std::pair<double, LabeledPopulation>> snapshots;  // only if requested
  std::vector<Label> founders;          // initial individuals, plus block first
  std::vector<long> founder_descendants;
  double t_end = 0.0;
  StopReason reason = StopReason::horizon;
};

// Exact simulation of the labeled chain: u of type +- is replaced by its
// children u1..ui at rate mu(i), dies at mu(0) + N m/K, flips type at
// theta/K. The initial population must be an antichain.
inline LabeledRun simulate_labeled(const LabeledPopulation& initial, const BranchingRates& rates,
                                   double horizon, const LabeledStop& stop, std::uint64_t seed,
                                   bool record_snapshots = false) {
  if (!initial.is_antichain()) throw ConfigError("initial population must be an antichain");
  LabeledRun run;
  detail::TypedPop pop = detail::to_typed(initial, run.founders);
  run.founder_descendants.assign(run.founders.size(), 1);
  double t = 0.0;
  if (record_snapshots) run.snapshots.push_back({0.0, initial});
  RandomStream rng(seed);
  bool stopped = false;
  run.reason = detail::run_labeled(pop, run.founder_descendants, t, rates, horizon, rng,
                                   [&](double tt, const detail::TypedPop& p) {
                                     if (record_snapshots)
                                       run.snapshots.push_back({tt, detail::materialize(p)});
                                     if (stop && stop(tt, static_cast<long>(p.plus.size()),
                                                      static_cast<long>(p.minus.size()))) {
                                       stopped = true;
                                       return false;
                                     }
                                     return true;
                                   });
  if (stopped) run.reason = StopReason::stop_predicate;
  run.t_end = t;
  run.final = detail::materialize(pop);
  return run;
}

inline LabeledRun simulate_labeled(const LabeledPopulation& initial, const ModelParams& params,
                                   double horizon, const LabeledStop& stop, std::uint64_t seed,
                                   bool record_snapshots = false) {
  return simulate_labeled(initial, BranchingRates::from_model(params), horizon, stop, seed,
                          record_snapshots);
}

struct FractionEstimate {
  double value = 0.0;
  bool extinct = false;
  long reached_size = 0;
  double t_end = 0.0;
};

// Estimate of F^u(inf) for the limit chain: run until the population reaches
// stop_size (or dies out) and report the descendant fraction there.
inline FractionEstimate asymptotic_fraction_estimate(const LawFamily& family, const Label& u,
                                                     const LabeledPopulation& initial,
                                                     long stop_size, std::uint64_t seed) {
  if (to_double(family.m()) <= 0) throw ConfigError("limit laws must be supercritical (m > 0)");
  const BranchingRates rates = BranchingRates::limit(family);
  LabeledStop stop = [stop_size](double, long np, long nm) { return np + nm >= stop_size; };
  const LabeledRun run = simulate_labeled(initial, rates, 1e30, stop, seed);
  FractionEstimate est;
  est.extinct = run.final.empty();
  est.value = run.final.descendant_fraction(u);
  est.reached_size = static_cast<long>(run.final.size());
  est.t_end = run.t_end;
  return est;
}

// ---------------------------------------------------------------------------
// Coupled pair (N_inf, N_K): shared individuals reproduce through common
// events at the atom-wise minimum of the two laws; the excess rates, the
// logistic deaths and the mutations act on one population only. Membership is
// by label, so a child created in one population merges back into the shared
// set whenever the same label is alive with the same type in the other.

struct CoupledPair {
  LabeledPopulation pop_inf;
  LabeledPopulation pop_K;
  std::vector<Label> shared;  // alive in both with matching type
};

struct CoupledRun {
  CoupledPair final;
  std::vector<std::pair<double, CoupledPair>> snapshots;
  std::vector<Label> founders;
  std::vector<long> founder_desc_inf, founder_desc_K;
  long n_inf_plus = 0, n_inf_minus = 0, n_K_plus = 0, n_K_minus = 0;
  double t_end = 0.0;
  StopReason reason = StopReason::horizon;
};

namespace detail {

// Categories of a live label.
enum Cat : int { JP = 0, JM = 1, IP = 2, IM = 3, KP = 4, KM = 5 };

struct Presence {
  std::int8_t inf_cat = -1;  // JP, JM, IP or IM
  std::uint32_t inf_idx = 0;
  std::int8_t k_cat = -1;  // JP, JM, KP or KM
  std::uint32_t k_idx = 0;
};

struct LabelHash {
  std::size_t operator()(const Label& u) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::uint32_t w : u) {
      h ^= w;
      h *= 0x100000001b3ULL;
    }
    return static_cast<std::size_t>(h);
  }
};

struct CoupledAtoms {
  // cumulative tables per type
  std::vector<std::pair<int, double>> joint, exc_inf, exc_K, full_inf, full_K;
  double joint_tot = 0, exc_inf_tot = 0, exc_K_tot = 0, full_inf_tot = 0, full_K_tot = 0;

  static CoupledAtoms from(const ReproductionLaw& inf_law, const ReproductionLaw& k_law) {
    CoupledAtoms a;
    std::vector<LawAtom> mins, exc_i, exc_k;
    const int imax = std::max(inf_law.max_count(), k_law.max_count());
    for (int i = 0; i <= imax; ++i) {
      const Rational mi = inf_law.mass(i), mk = k_law.mass(i);
      const Rational mn = std::min(mi, mk);
      if (mn > 0) mins.push_back({i, mn});
      if (mi - mn > 0) exc_i.push_back({i, mi - mn});
      if (mk - mn > 0) exc_k.push_back({i, mk - mn});
    }
    auto lower = [](const std::vector<LawAtom>& atoms, std::vector<std::pair<int, double>>& cum,
                    double& total) {
      double c = 0;
      for (const auto& at : atoms) {
        c += to_double(at.mass);
        cum.push_back({at.count, c});
      }
      total = c;
    };
    lower(mins, a.joint, a.joint_tot);
    lower(exc_i, a.exc_inf, a.exc_inf_tot);
    lower(exc_k, a.exc_K, a.exc_K_tot);
    a.full_inf = BranchingRates::cumulative(inf_law, a.full_inf_tot);
    a.full_K = BranchingRates::cumulative(k_law, a.full_K_tot);
    return a;
  }
};

class CoupledEngine {
 public:
  CoupledEngine(const LabeledPopulation& initial, const ModelParams& params) {
    atoms_plus_ = CoupledAtoms::from(params.family.limit_plus(), params.family.plus(params.K));
    atoms_minus_ = CoupledAtoms::from(params.family.limit_minus(), params.family.minus(params.K));
    const double K = static_cast<double>(params.K);
    comp_ = to_double(params.family.m()) / K;
    mut_plus_ = params.theta_plus / K;
    mut_minus_ = params.theta_minus / K;
    if (!initial.is_antichain()) throw ConfigError("initial population must be an antichain");
    for (const auto& u : initial.plus()) {
      founders_.push_back(u);
      insert(u, static_cast<std::uint32_t>(founders_.size() - 1), JP);
    }
    for (const auto& u : initial.minus()) {
      founders_.push_back(u);
      insert(u, static_cast<std::uint32_t>(founders_.size() - 1), JM);
    }
    desc_inf_.assign(founders_.size(), 1);
    desc_K_.assign(founders_.size(), 1);
  }

  long n_inf() const { return size(JP) + size(JM) + size(IP) + size(IM); }
  long n_K() const { return size(JP) + size(JM) + size(KP) + size(KM); }
  long n_inf_plus() const { return size(JP) + size(IP); }
  long n_inf_minus() const { return size(JM) + size(IM); }
  long n_K_plus() const { return size(JP) + size(KP); }
  long n_K_minus() const { return size(JM) + size(KM); }

  const std::vector<Label>& founders() const { return founders_; }
  const std::vector<long>& desc_inf() const { return desc_inf_; }
  const std::vector<long>& desc_K() const { return desc_K_; }

  // One exact event; false when the whole system is absorbed or t would pass
  // the horizon (t is then set to the horizon).
  bool step(double& t, double horizon, RandomStream& rng) {
    const double jp = static_cast<double>(size(JP)), jm = static_cast<double>(size(JM));
    const double ip = static_cast<double>(size(IP)), im = static_cast<double>(size(IM));
    const double kp = static_cast<double>(size(KP)), km = static_cast<double>(size(KM));
    const double nk = jp + jm + kp + km;

    const double rates[13] = {
        jp * atoms_plus_.joint_tot,    jm * atoms_minus_.joint_tot,
        jp * atoms_plus_.exc_inf_tot,  jm * atoms_minus_.exc_inf_tot,
        jp * atoms_plus_.exc_K_tot,    jm * atoms_minus_.exc_K_tot,
        ip * atoms_plus_.full_inf_tot, im * atoms_minus_.full_inf_tot,
        kp * atoms_plus_.full_K_tot,   km * atoms_minus_.full_K_tot,
        nk * nk * comp_,
        (jp + kp) * mut_plus_,         (jm + km) * mut_minus_};
    double R = 0;
    for (double r : rates) R += r;
    if (R == 0.0) return false;
    if (R > 1e15) throw RateOverflow("coupled chain: total rate exceeds bound");
    const double t_next = t + rng.exponential(R);
    if (t_next > horizon) {
      t = horizon;
      return false;
    }
    t = t_next;

    double u = rng.uniform01() * R;
    int ev = 0;
    while (ev < 12 && u >= rates[ev]) u -= rates[ev++];
    switch (ev) {
      case 0: joint_repro(JP, atoms_plus_.joint, rates[0], u, rng); break;
      case 1: joint_repro(JM, atoms_minus_.joint, rates[1], u, rng); break;
      case 2: excess_inf(JP, atoms_plus_.exc_inf, rates[2], u, rng); break;
      case 3: excess_inf(JM, atoms_minus_.exc_inf, rates[3], u, rng); break;
      case 4: excess_K(JP, atoms_plus_.exc_K, rates[4], u, rng); break;
      case 5: excess_K(JM, atoms_minus_.exc_K, rates[5], u, rng); break;
      case 6: solo_inf(IP, atoms_plus_.full_inf, rates[6], u, rng); break;
      case 7: solo_inf(IM, atoms_minus_.full_inf, rates[7], u, rng); break;
      case 8: solo_K(KP, atoms_plus_.full_K, rates[8], u, rng); break;
      case 9: solo_K(KM, atoms_minus_.full_K, rates[9], u, rng); break;
      case 10: competition_death(rng); break;
      case 11: mutation(true, rng); break;
      default: mutation(false, rng); break;
    }
    return true;
  }

  CoupledPair materialize() const {
    std::vector<Label> inf_p, inf_m, k_p, k_m, shared;
    for (const auto& ind : cats_[JP]) {
      inf_p.push_back(ind.label);
      k_p.push_back(ind.label);
      shared.push_back(ind.label);
    }
    for (const auto& ind : cats_[JM]) {
      inf_m.push_back(ind.label);
      k_m.push_back(ind.label);
      shared.push_back(ind.label);
    }
    for (const auto& ind : cats_[IP]) inf_p.push_back(ind.label);
    for (const auto& ind : cats_[IM]) inf_m.push_back(ind.label);
    for (const auto& ind : cats_[KP]) k_p.push_back(ind.label);
    for (const auto& ind : cats_[KM]) k_m.push_back(ind.label);
    CoupledPair pair;
    pair.pop_inf = LabeledPopulation(std::move(inf_p), std::move(inf_m));
    pair.pop_K = LabeledPopulation(std::move(k_p), std::move(k_m));
    std::sort(shared.begin(), shared.end(), label_less);
    pair.shared = std::move(shared);
    return pair;
  }

  // The infinity marginal as a typed population (used to continue the limit
  // chain after the coupled phase).
  TypedPop inf_population() const {
    TypedPop pop;
    for (const auto& ind : cats_[JP]) pop.plus.push_back(ind);
    for (const auto& ind : cats_[IP]) pop.plus.push_back(ind);
    for (const auto& ind : cats_[JM]) pop.minus.push_back(ind);
    for (const auto& ind : cats_[IM]) pop.minus.push_back(ind);
    return pop;
  }

 private:
  long size(int cat) const { return static_cast<long>(cats_[cat].size()); }

  void insert(const Label& label, std::uint32_t founder, int cat) {
    cats_[cat].push_back({label, founder});
    auto& p = reg_[label];
    const auto idx = static_cast<std::uint32_t>(cats_[cat].size() - 1);
    if (cat == JP || cat == JM) {
      p.inf_cat = p.k_cat = static_cast<std::int8_t>(cat);
      p.inf_idx = p.k_idx = idx;
    } else if (cat == IP || cat == IM) {
      p.inf_cat = static_cast<std::int8_t>(cat);
      p.inf_idx = idx;
    } else {
      p.k_cat = static_cast<std::int8_t>(cat);
      p.k_idx = idx;
    }
  }

  Indiv take(int cat, std::size_t idx) {
    Indiv out = std::move(cats_[cat][idx]);
    clear_slot(out.label, cat);
    cats_[cat][idx] = std::move(cats_[cat].back());
    cats_[cat].pop_back();
    if (idx < cats_[cat].size()) {
      auto& moved = reg_.at(cats_[cat][idx].label);
      if (moved.inf_cat == cat) moved.inf_idx = static_cast<std::uint32_t>(idx);
      if (moved.k_cat == cat) moved.k_idx = static_cast<std::uint32_t>(idx);
    }
    return out;
  }

  void clear_slot(const Label& label, int cat) {
    auto it = reg_.find(label);
    auto& p = it->second;
    if (p.inf_cat == cat) p.inf_cat = -1;
    if (p.k_cat == cat) p.k_cat = -1;
    if (p.inf_cat < 0 && p.k_cat < 0) reg_.erase(it);
  }

  // Children of a parent alive in both populations are always globally fresh
  // labels (a label enters each population at most once, and reproduction
  // removes the parent), so joint births skip the registry lookup.
  void joint_repro(int jcat, const std::vector<std::pair<int, double>>& atoms, double cat_rate,
                   double u, RandomStream& rng) {
    const int children = pick_atom(atoms, u / cat_rate * back_total(atoms));
    const auto idx = static_cast<std::size_t>(rng.below(cats_[jcat].size()));
    const Indiv parent = take(jcat, idx);
    desc_inf_[parent.founder] += children - 1;
    desc_K_[parent.founder] += children - 1;
    for (int k = 1; k <= children; ++k)
      insert(child_label(parent.label, static_cast<std::uint32_t>(k)), parent.founder, jcat);
  }

  // Shared u reproduces in the infinity population only: u itself stays alive
  // in N_K.
  void excess_inf(int jcat, const std::vector<std::pair<int, double>>& atoms, double cat_rate,
                  double u, RandomStream& rng) {
    const int children = pick_atom(atoms, u / cat_rate * back_total(atoms));
    const auto idx = static_cast<std::size_t>(rng.below(cats_[jcat].size()));
    const Indiv parent = take(jcat, idx);
    insert(parent.label, parent.founder, jcat == JP ? KP : KM);
    desc_inf_[parent.founder] += children - 1;
    spawn_inf(parent, children, jcat == JP);
  }

  void excess_K(int jcat, const std::vector<std::pair<int, double>>& atoms, double cat_rate,
                double u, RandomStream& rng) {
    const int children = pick_atom(atoms, u / cat_rate * back_total(atoms));
    const auto idx = static_cast<std::size_t>(rng.below(cats_[jcat].size()));
    const Indiv parent = take(jcat, idx);
    insert(parent.label, parent.founder, jcat == JP ? IP : IM);
    desc_K_[parent.founder] += children - 1;
    spawn_K(parent, children, jcat == JP);
  }

  void solo_inf(int icat, const std::vector<std::pair<int, double>>& atoms, double cat_rate,
                double u, RandomStream& rng) {
    const int children = pick_atom(atoms, u / cat_rate * back_total(atoms));
    const auto idx = static_cast<std::size_t>(rng.below(cats_[icat].size()));
    const Indiv parent = take(icat, idx);
    desc_inf_[parent.founder] += children - 1;
    spawn_inf(parent, children, icat == IP);
  }

  void solo_K(int kcat, const std::vector<std::pair<int, double>>& atoms, double cat_rate,
              double u, RandomStream& rng) {
    const int children = pick_atom(atoms, u / cat_rate * back_total(atoms));
    const auto idx = static_cast<std::size_t>(rng.below(cats_[kcat].size()));
    const Indiv parent = take(kcat, idx);
    desc_K_[parent.founder] += children - 1;
    spawn_K(parent, children, kcat == KP);
  }

  // A child born into N_inf re-merges with its own K copy when that copy is
  // alive with the same type.
  void spawn_inf(const Indiv& parent, int children, bool plus) {
    for (int k = 1; k <= children; ++k) {
      Label c = child_label(parent.label, static_cast<std::uint32_t>(k));
      auto it = reg_.find(c);
      if (it != reg_.end() && it->second.k_cat == (plus ? KP : KM)) {
        const Indiv copy = take(plus ? KP : KM, it->second.k_idx);
        insert(copy.label, copy.founder, plus ? JP : JM);
      } else {
        insert(c, parent.founder, plus ? IP : IM);
      }
    }
  }

  void spawn_K(const Indiv& parent, int children, bool plus) {
    for (int k = 1; k <= children; ++k) {
      Label c = child_label(parent.label, static_cast<std::uint32_t>(k));
      auto it = reg_.find(c);
      if (it != reg_.end() && it->second.inf_cat == (plus ? IP : IM)) {
        const Indiv copy = take(plus ? IP : IM, it->second.inf_idx);
        insert(copy.label, copy.founder, plus ? JP : JM);
      } else {
        insert(c, parent.founder, plus ? KP : KM);
      }
    }
  }

  void competition_death(RandomStream& rng) {
    const long total = n_K();
    auto idx = static_cast<long>(rng.below(static_cast<std::uint64_t>(total)));
    for (int cat : {JP, JM, KP, KM}) {
      if (idx < size(cat)) {
        const Indiv victim = take(cat, static_cast<std::size_t>(idx));
        desc_K_[victim.founder] -= 1;
        if (cat == JP || cat == JM)  // still alive in N_inf
          insert(victim.label, victim.founder, cat == JP ? IP : IM);
        return;
      }
      idx -= size(cat);
    }
  }

  // Type flip in N_K only. A shared individual splits (its infinity copy
  // keeps the old type); a K-only individual whose infinity copy carries the
  // new type re-merges.
  void mutation(bool from_plus, RandomStream& rng) {
    const int jcat = from_plus ? JP : JM;
    const int kcat = from_plus ? KP : KM;
    const int kdst = from_plus ? KM : KP;
    auto idx = static_cast<long>(rng.below(static_cast<std::uint64_t>(size(jcat) + size(kcat))));
    if (idx < size(jcat)) {
      const Indiv ind = take(jcat, static_cast<std::size_t>(idx));
      insert(ind.label, ind.founder, from_plus ? IP : IM);
      insert(ind.label, ind.founder, kdst);
    } else {
      const Indiv ind = take(kcat, static_cast<std::size_t>(idx - size(jcat)));
      auto it = reg_.find(ind.label);
      const int inf_match = from_plus ? IM : IP;
      if (it != reg_.end() && it->second.inf_cat == inf_match) {
        const Indiv copy = take(inf_match, it->second.inf_idx);
        insert(copy.label, copy.founder, from_plus ? JM : JP);
      } else {
        insert(ind.label, ind.founder, kdst);
      }
    }
  }

  static double back_total(const std::vector<std::pair<int, double>>& cum) {
    return cum.back().second;
  }

  std::array<std::vector<Indiv>, 6> cats_;
  std::unordered_map<Label, Presence, LabelHash> reg_;
  CoupledAtoms atoms_plus_, atoms_minus_;
  double comp_ = 0, mut_plus_ = 0, mut_minus_ = 0;
  std::vector<Label> founders_;
  std::vector<long> desc_inf_, desc_K_;
};

}  // namespace detail

using CoupledStop = std::function<bool(double, long, long)>;  // (t, n_inf, n_K)

inline CoupledRun simulate_coupled(const LabeledPopulation& initial, const ModelParams& params,
                                   double horizon, const CoupledStop& stop, std::uint64_t seed,
                                   bool record_snapshots = false) {
  detail::CoupledEngine engine(initial, params);
  CoupledRun run;
  RandomStream rng(seed);
  double t = 0.0;
  if (record_snapshots) run.snapshots.push_back({0.0, engine.materialize()});
  run.reason = StopReason::horizon;
  while (engine.step(t, horizon, rng)) {
    if (record_snapshots) run.snapshots.push_back({t, engine.materialize()});
    if (stop && stop(t, engine.n_inf(), engine.n_K())) {
      run.reason = StopReason::stop_predicate;
      break;
    }
  }
  if (run.reason != StopReason::stop_predicate && engine.n_inf() + engine.n_K() == 0)
    run.reason = StopReason::absorbed;
  run.final = engine.materialize();
  run.founders = engine.founders();
  run.founder_desc_inf = engine.desc_inf();
  run.founder_desc_K = engine.desc_K();
  run.n_inf_plus = engine.n_inf_plus();
  run.n_inf_minus = engine.n_inf_minus();
  run.n_K_plus = engine.n_K_plus();
  run.n_K_minus = engine.n_K_minus();
  run.t_end = t;
  return run;
}

struct GrowthSample {
  std::vector<double> f_K;    // F_K^u(T_K^beta), by founder
  std::vector<double> f_inf;  // estimate of F_inf^u(inf), same order
  bool reached_beta = false;
  bool extinct_K = false;
  bool extinct_inf = false;
  double t_beta = 0.0;
};

struct GrowthOptions {
  long stop_size = 100'000;  // population size at which F_inf(inf) is read off
  double horizon = 1e4;      // natural-time guard if T_beta is never reached
  unsigned jobs = 1;
};

// One coupled run to T_K^beta per replicate; the infinity population is then
// continued alone (same trajectory) until stop_size to read off the
// asymptotic fractions.
inline std::vector<GrowthSample> growth_experiment(const ModelParams& params, double beta,
                                                   const LabeledPopulation& founders,
                                                   std::size_t replicates, std::uint64_t root_seed,
                                                   const GrowthOptions& opts = {}) {
  if (beta <= 0 || beta >= 1) throw ConfigError("beta must lie in (0,1)");
  const double threshold =
      static_cast<double>(params.K) - std::pow(static_cast<double>(params.K), beta);
  std::vector<GrowthSample> out(replicates);
  parallel_replicates(replicates, opts.jobs, [&](std::size_t rep) {
    const std::uint64_t seed = replicate_seed(root_seed, rep);
    detail::CoupledEngine engine(founders, params);
    RandomStream rng(substream_seed(seed, 0));
    double t = 0.0;
    GrowthSample sample;
    while (engine.n_K() < threshold && engine.n_inf() + engine.n_K() > 0) {
      if (!engine.step(t, opts.horizon, rng)) break;
    }
    sample.reached_beta = engine.n_K() >= threshold;
    sample.t_beta = t;
    sample.extinct_K = engine.n_K() == 0;

    const long nK = engine.n_K();
    const auto n_founders = engine.founders().size();
    sample.f_K.resize(n_founders);
    for (std::size_t f = 0; f < n_founders; ++f)
      sample.f_K[f] =
          nK > 0 ? static_cast<double>(engine.desc_K()[f]) / static_cast<double>(nK) : 0.0;

    // Continue only the infinity marginal.
    detail::TypedPop inf_pop = engine.inf_population();
    std::vector<long> desc = engine.desc_inf();
    const BranchingRates limit_rates = BranchingRates::limit(params.family);
    RandomStream rng2(substream_seed(seed, 1));
    double t2 = t;
    detail::run_labeled(inf_pop, desc, t2, limit_rates, 1e30, rng2,
                        [&](double, const detail::TypedPop& p) {
                          return p.total() < opts.stop_size;
                        });
    const long n_inf = inf_pop.total();
    sample.extinct_inf = n_inf == 0;
    sample.f_inf.resize(n_founders);
    for (std::size_t f = 0; f < n_founders; ++f)
      sample.f_inf[f] =
          n_inf > 0 ? static_cast<double>(desc[f]) / static_cast<double>(n_inf) : 0.0;
    out[rep] = std::move(sample);
  });
  return out;
}

}  // namespace lbp
