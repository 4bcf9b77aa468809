#pragma once

#include <algorithm>
#include <cstdint>
#include <utility>
#include <vector>

#include "lbp/errors.hpp"
#include "lbp/rational.hpp"

namespace lbp {

struct LawAtom {
  int count = 0;       // offspring number i >= 0
  Rational mass;       // mu(i) > 0
};

// A finite measure on offspring counts. Masses are exact rationals; doubles
// given by callers are converted exactly, so every identity asserted on a law
// holds in exact arithmetic for the stored masses.
class ReproductionLaw {
 public:
  ReproductionLaw() = default;

  explicit ReproductionLaw(std::vector<LawAtom> atoms) {
    for (auto& a : atoms) {
      if (a.count < 0) throw ConfigError("offspring count must be >= 0");
      if (a.mass < 0) throw ConfigError("law mass must be >= 0");
    }
    std::sort(atoms.begin(), atoms.end(),
              [](const LawAtom& a, const LawAtom& b) { return a.count < b.count; });
    for (const auto& a : atoms) {
      if (a.mass == 0) continue;
      if (!atoms_.empty() && atoms_.back().count == a.count)
        atoms_.back().mass += a.mass;
      else
        atoms_.push_back(a);
    }
    for (const auto& a : atoms_) total_ += a.mass;
    if (total_ <= 0) throw ConfigError("law must have positive total mass");
  }

  static ReproductionLaw from_pairs(std::initializer_list<std::pair<int, Rational>> pairs) {
    std::vector<LawAtom> atoms;
    for (const auto& [i, m] : pairs) atoms.push_back({i, m});
    return ReproductionLaw(std::move(atoms));
  }

  const std::vector<LawAtom>& atoms() const { return atoms_; }

  Rational mass(int i) const {
    for (const auto& a : atoms_)
      if (a.count == i) return a.mass;
    return Rational(0);
  }

  Rational total_mass() const { return total_; }

  // Mass restricted to {1, 2, ...}.
  Rational positive_mass() const { return total_ - mass(0); }

  // mu(. /\ N): the reproduction part, death atom dropped.
  ReproductionLaw restricted_to_positive() const {
    std::vector<LawAtom> atoms;
    for (const auto& a : atoms_)
      if (a.count >= 1) atoms.push_back(a);
    if (atoms.empty()) throw ConfigError("law has no mass on {1,2,...}");
    return ReproductionLaw(std::move(atoms));
  }

  Rational tail_mass(int i) const {  // mu([i, inf))
    Rational t = 0;
    for (const auto& a : atoms_)
      if (a.count >= i) t += a.mass;
    return t;
  }

  int max_count() const { return atoms_.empty() ? 0 : atoms_.back().count; }

  ReproductionLaw with_added_mass(int i, const Rational& extra) const {
    std::vector<LawAtom> atoms = atoms_;
    atoms.push_back({i, extra});
    return ReproductionLaw(std::move(atoms));
  }

  bool operator==(const ReproductionLaw& o) const = default;

 private:
  std::vector<LawAtom> atoms_;  // sorted by count, strictly positive masses
  Rational total_ = 0;
};

// Sum_i (i-1) mu(i): the net per-capita growth rate carried by the law.
inline Rational mean_rate(const ReproductionLaw& law) {
  Rational s = 0;
  for (const auto& a : law.atoms()) s += Rational(a.count - 1) * a.mass;
  return s;
}

// Sum_i (i-1)^ell mu(i) for ell >= 2 (ell = 2 is the reproduction variance).
inline Rational central_moment(const ReproductionLaw& law, int order) {
  if (order < 2) throw ConfigError("central_moment: order must be >= 2");
  Rational s = 0;
  for (const auto& a : law.atoms()) {
    Rational d(a.count - 1);
    Rational p = 1;
    for (int k = 0; k < order; ++k) p *= d;
    s += p * a.mass;
  }
  return s;
}

// Raw moment Sum_i i^ell mu(i), used by the higher-moment growth checks.
inline Rational raw_moment(const ReproductionLaw& law, int order) {
  Rational s = 0;
  for (const auto& a : law.atoms()) {
    Rational p = 1;
    for (int k = 0; k < order; ++k) p *= Rational(a.count);
    s += p * a.mass;
  }
  return s;
}

struct OrderingReport {
  bool tails_ordered = true;       // mu^-([i,inf)) <= mu^+([i,inf)) for all i >= 1
  int first_tail_violation = -1;
  bool deaths_ordered = true;      // mu^+(0) <= mu^-(0)
  bool ok() const { return tails_ordered && deaths_ordered; }
};

inline OrderingReport check_orderings(const ReproductionLaw& minus, const ReproductionLaw& plus) {
  OrderingReport rep;
  const int imax = std::max(minus.max_count(), plus.max_count());
  for (int i = 1; i <= imax; ++i) {
    if (minus.tail_mass(i) > plus.tail_mass(i)) {
      rep.tails_ordered = false;
      rep.first_tail_violation = i;
      break;
    }
  }
  rep.deaths_ordered = plus.mass(0) <= minus.mass(0);
  return rep;
}

// Mass at the phantom atom i = 1 is dynamically inert (one child replaces the
// parent), so padding the lighter restriction there equalises total masses
// without touching mean rates or the tail ordering above i = 1.
inline std::pair<ReproductionLaw, ReproductionLaw> equalize_mass(const ReproductionLaw& minus,
                                                                 const ReproductionLaw& plus) {
  ReproductionLaw m = minus.mass(0) > 0 ? minus.restricted_to_positive() : minus;
  ReproductionLaw p = plus.mass(0) > 0 ? plus.restricted_to_positive() : plus;
  const Rational diff = p.total_mass() - m.total_mass();
  if (diff > 0) m = m.with_added_mass(1, diff);
  if (diff < 0) p = p.with_added_mass(1, -diff);
  return {std::move(m), std::move(p)};
}

}  // namespace lbp
