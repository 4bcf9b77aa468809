#pragma once

#include <algorithm>
#include <vector>

#include "lbp/errors.hpp"
#include "lbp/law_family.hpp"
#include "lbp/rational.hpp"
#include "lbp/reproduction_law.hpp"

namespace lbp {

struct CouplingAtom {
  int i = 0;  // offspring of a minus parent
  int j = 0;  // selective surplus: a plus parent gets i + j offspring
  Rational mass;
};

// The event measure nu_K on N0 x N0 driving the graphical construction:
// the coupled reproduction part nu_hat on N x N0 plus the two death atoms
// (0,0) (common death) and (0,1) (death of the minus type only).
class CouplingMeasure {
 public:
  CouplingMeasure() = default;
  explicit CouplingMeasure(std::vector<CouplingAtom> atoms) {
    std::sort(atoms.begin(), atoms.end(), [](const CouplingAtom& a, const CouplingAtom& b) {
      return a.i != b.i ? a.i < b.i : a.j < b.j;
    });
    for (const auto& a : atoms) {
      if (a.i < 0 || a.j < 0 || a.mass < 0) throw ConfigError("invalid coupling atom");
      if (a.i == 0 && a.j > 1) throw ConfigError("coupling atom (0, j) with j > 1");
      if (a.mass == 0) continue;
      if (!atoms_.empty() && atoms_.back().i == a.i && atoms_.back().j == a.j)
        atoms_.back().mass += a.mass;
      else
        atoms_.push_back(a);
    }
    for (const auto& a : atoms_) total_ += a.mass;
    if (total_ <= 0) throw ConfigError("coupling must have positive total mass");
  }

  const std::vector<CouplingAtom>& atoms() const { return atoms_; }
  const Rational& total_mass() const { return total_; }

  Rational mass(int i, int j) const {
    for (const auto& a : atoms_)
      if (a.i == i && a.j == j) return a.mass;
    return Rational(0);
  }

  // First marginal restricted to i >= 1 (law seen by a minus parent).
  ReproductionLaw minus_marginal() const {
    std::vector<LawAtom> atoms;
    for (const auto& a : atoms_)
      if (a.i >= 1) atoms.push_back({a.i, a.mass});
    return ReproductionLaw(std::move(atoms));
  }

  // Pushforward of (i, j) -> i + j restricted to i >= 1 (law seen by a plus
  // parent at reproduction events).
  ReproductionLaw plus_marginal() const {
    std::vector<LawAtom> atoms;
    for (const auto& a : atoms_)
      if (a.i >= 1) atoms.push_back({a.i + a.j, a.mass});
    return ReproductionLaw(std::move(atoms));
  }

 private:
  std::vector<CouplingAtom> atoms_;
  Rational total_ = 0;
};

// Comonotone (quantile) coupling of two equal-mass laws on N: walk both
// cumulative distributions with a shared level. Under the tail ordering the
// paired quantiles satisfy y- <= y+, so j = y+ - y- is never negative.
inline std::vector<CouplingAtom> quantile_coupling(const ReproductionLaw& lo,
                                                   const ReproductionLaw& hi) {
  if (lo.total_mass() != hi.total_mass())
    throw ConfigError("quantile_coupling: laws must have equal total mass");
  std::vector<CouplingAtom> out;
  const auto& a = lo.atoms();
  const auto& b = hi.atoms();
  std::size_t ka = 0, kb = 0;
  Rational rem_a = a.empty() ? Rational(0) : a[0].mass;
  Rational rem_b = b.empty() ? Rational(0) : b[0].mass;
  while (ka < a.size() && kb < b.size()) {
    const Rational take = std::min(rem_a, rem_b);
    if (take > 0) {
      const int j = b[kb].count - a[ka].count;
      if (j < 0) throw OrderingViolation("quantile coupling needs stochastically ordered laws");
      out.push_back({a[ka].count, j, take});
    }
    rem_a -= take;
    rem_b -= take;
    if (rem_a == 0 && ++ka < a.size()) rem_a = a[ka].mass;
    if (rem_b == 0 && ++kb < b.size()) rem_b = b[kb].mass;
  }
  return out;
}

inline CouplingMeasure build_coupling(const ReproductionLaw& minus_law,
                                      const ReproductionLaw& plus_law) {
  const OrderingReport rep = check_orderings(minus_law, plus_law);
  if (!rep.tails_ordered)
    throw OrderingViolation("tail ordering fails at i = " + std::to_string(rep.first_tail_violation));
  if (!rep.deaths_ordered) throw OrderingViolation("death-rate ordering mu+(0) <= mu-(0) fails");

  auto [nu_minus, nu_plus] = equalize_mass(minus_law, plus_law);
  std::vector<CouplingAtom> atoms = quantile_coupling(nu_minus, nu_plus);

  const Rational common_death = plus_law.mass(0);
  const Rational selective_death = minus_law.mass(0) - plus_law.mass(0);
  if (common_death > 0) atoms.push_back({0, 0, common_death});
  if (selective_death > 0) atoms.push_back({0, 1, selective_death});
  return CouplingMeasure(std::move(atoms));
}

inline CouplingMeasure build_coupling(const ModelParams& params) {
  return build_coupling(params.family.minus(params.K), params.family.plus(params.K));
}

// Sum_{i,j} j nu(i,j); coupling-invariant and equal to the difference of the
// two mean reproduction rates.
inline Rational coupling_selective_mass(const CouplingMeasure& nu) {
  Rational s = 0;
  for (const auto& a : nu.atoms()) s += Rational(a.j) * a.mass;
  return s;
}

// Sum_{i,j} i(i-1) nu(i,j) = v_K^- + m_K^-; feeds the coalescence-rate limit.
inline Rational coupling_pair_mass(const CouplingMeasure& nu) {
  Rational s = 0;
  for (const auto& a : nu.atoms()) s += Rational(a.i) * Rational(a.i - 1) * a.mass;
  return s;
}

struct CouplingCheck {
  bool minus_marginal_ok = false;
  bool plus_marginal_ok = false;
  bool death_atoms_ok = false;
  bool support_monotone = false;  // comonotone support: i+j nondecreasing in i
  bool ok() const { return minus_marginal_ok && plus_marginal_ok && death_atoms_ok && support_monotone; }
};

// Exact verification of the defining identities of nu_K against the laws it
// was built from.
inline CouplingCheck verify_coupling(const CouplingMeasure& nu, const ReproductionLaw& minus_law,
                                     const ReproductionLaw& plus_law) {
  CouplingCheck c;
  auto [nu_minus, nu_plus] = equalize_mass(minus_law, plus_law);
  c.minus_marginal_ok = nu.minus_marginal() == nu_minus;
  c.plus_marginal_ok = nu.plus_marginal() == nu_plus;
  c.death_atoms_ok = nu.mass(0, 0) == plus_law.mass(0) &&
                     nu.mass(0, 1) == minus_law.mass(0) - plus_law.mass(0);
  c.support_monotone = true;
  int last_sum = -1;
  for (const auto& a : nu.atoms()) {
    if (a.i == 0) continue;
    if (a.i + a.j < last_sum) c.support_monotone = false;
    last_sum = a.i + a.j;
  }
  return c;
}

}  // namespace lbp
