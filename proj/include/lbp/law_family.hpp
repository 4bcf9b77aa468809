#pragma once

#include <nlohmann/json.hpp>

#include <cmath>
#include <string>
#include <vector>

#include "lbp/errors.hpp"
#include "lbp/rational.hpp"
#include "lbp/reproduction_law.hpp"

namespace lbp {

using nlohmann::json;

inline Rational rational_from_json(const json& v) {
  if (v.is_string()) return rational_from_string(v.get<std::string>());
  if (v.is_number_integer()) return Rational(BigInt(v.get<long long>()));
  if (v.is_number_float()) return Rational(v.get<double>());
  throw ConfigError("expected number or rational string");
}

inline ReproductionLaw law_from_json(const json& arr) {
  if (!arr.is_array()) throw ConfigError("atoms: expected array of [count, mass]");
  std::vector<LawAtom> atoms;
  for (const auto& e : arr) {
    if (!e.is_array() || e.size() != 2) throw ConfigError("atoms: expected [count, mass] pairs");
    atoms.push_back({e[0].get<int>(), rational_from_json(e[1])});
  }
  return ReproductionLaw(std::move(atoms));
}

inline json law_to_json(const ReproductionLaw& law) {
  json arr = json::array();
  for (const auto& a : law.atoms()) arr.push_back({a.count, rational_to_string(a.mass)});
  return arr;
}

enum class FamilyKind { moran, poisson, table };

// A K-indexed pair of offspring laws together with its limit laws and the
// constants (m, s+, s-, v+, v-) they realise. The constants are derived
// exactly from the stored atoms, so the mean expansion
//   mean_rate(law(K)) = m + s/K        (exactly, no o(1/K) residue)
// holds for every built-in family by construction.
class LawFamily {
 public:
  static LawFamily moran(const Rational& s) {
    if (s < 0) throw ConfigError("moran family needs s >= 0");
    LawFamily f;
    f.kind_ = FamilyKind::moran;
    f.limit_plus_ = f.limit_minus_ = ReproductionLaw({{2, Rational(1)}});
    f.s_plus_ = s;
    f.s_minus_ = 0;
    f.finish();
    return f;
  }

  // Poisson(lambda) weights truncated at i_max and scaled to total mass
  // `rate`; the per-K selective tilt adds s/K at the two-offspring atom.
  static LawFamily truncated_poisson(double rate, double lambda, int i_max,
                                     const Rational& s_plus, const Rational& s_minus) {
    if (rate <= 0 || lambda <= 0 || i_max < 2)
      throw ConfigError("poisson family needs rate > 0, lambda > 0, i_max >= 2");
    std::vector<LawAtom> atoms;
    double w = std::exp(-lambda);
    for (int i = 0; i <= i_max; ++i) {
      if (w > 0) atoms.push_back({i, Rational(rate * w)});
      w *= lambda / static_cast<double>(i + 1);
    }
    ReproductionLaw base{std::move(atoms)};
    LawFamily f;
    f.kind_ = FamilyKind::poisson;
    f.limit_plus_ = f.limit_minus_ = base;
    f.s_plus_ = s_plus;
    f.s_minus_ = s_minus;
    f.rate_ = rate;
    f.lambda_ = lambda;
    f.i_max_ = i_max;
    f.finish();
    if (f.m_ <= 0) throw ConfigError("poisson family is not supercritical (mean rate <= 0)");
    return f;
  }

  // User-supplied limit laws, possibly with different variances; both must
  // share the same mean rate m.
  static LawFamily table(ReproductionLaw limit_plus, ReproductionLaw limit_minus,
                         const Rational& s_plus, const Rational& s_minus) {
    LawFamily f;
    f.kind_ = FamilyKind::table;
    f.limit_plus_ = std::move(limit_plus);
    f.limit_minus_ = std::move(limit_minus);
    f.s_plus_ = s_plus;
    f.s_minus_ = s_minus;
    f.finish();
    if (mean_rate(f.limit_plus_) != mean_rate(f.limit_minus_))
      throw ConfigError("table family: limit laws must share the same mean rate");
    if (f.m_ <= 0) throw ConfigError("table family: mean rate must be positive");
    return f;
  }

  FamilyKind kind() const { return kind_; }

  ReproductionLaw plus(long K) const { return tilt(limit_plus_, s_plus_, K); }
  ReproductionLaw minus(long K) const {
    if (kind_ == FamilyKind::moran) return limit_minus_;  // s_minus = 0
    return tilt(limit_minus_, s_minus_, K);
  }
  const ReproductionLaw& limit_plus() const { return limit_plus_; }
  const ReproductionLaw& limit_minus() const { return limit_minus_; }

  const Rational& m() const { return m_; }
  const Rational& s_plus() const { return s_plus_; }
  const Rational& s_minus() const { return s_minus_; }
  const Rational& v_plus() const { return v_plus_; }
  const Rational& v_minus() const { return v_minus_; }

  static LawFamily from_json(const json& doc) {
    const std::string kind = doc.at("family").get<std::string>();
    if (kind == "moran") return moran(rational_from_json(doc.at("s")));
    if (kind == "poisson")
      return truncated_poisson(doc.value("rate", 1.0), doc.at("lambda").get<double>(),
                               doc.value("i_max", 8),
                               rational_from_json(doc.value("s_plus", json(0.0))),
                               rational_from_json(doc.value("s_minus", json(0.0))));
    if (kind == "table")
      return table(law_from_json(doc.at("atoms_plus")), law_from_json(doc.at("atoms_minus")),
                   rational_from_json(doc.value("s_plus", json(0.0))),
                   rational_from_json(doc.value("s_minus", json(0.0))));
    throw ConfigError("unknown family kind: " + kind);
  }

  json to_json() const {
    json doc;
    switch (kind_) {
      case FamilyKind::moran:
        doc["family"] = "moran";
        doc["s"] = rational_to_string(s_plus_);
        break;
      case FamilyKind::poisson:
        doc["family"] = "poisson";
        doc["rate"] = rate_;
        doc["lambda"] = lambda_;
        doc["i_max"] = i_max_;
        doc["s_plus"] = rational_to_string(s_plus_);
        doc["s_minus"] = rational_to_string(s_minus_);
        break;
      case FamilyKind::table:
        doc["family"] = "table";
        doc["atoms_plus"] = law_to_json(limit_plus_);
        doc["atoms_minus"] = law_to_json(limit_minus_);
        doc["s_plus"] = rational_to_string(s_plus_);
        doc["s_minus"] = rational_to_string(s_minus_);
        break;
    }
    return doc;
  }

 private:
  void finish() {
    m_ = mean_rate(limit_plus_);
    v_plus_ = central_moment(limit_plus_, 2);
    v_minus_ = central_moment(limit_minus_, 2);
  }

  static ReproductionLaw tilt(const ReproductionLaw& base, const Rational& s, long K) {
    if (K < 1) throw ConfigError("carrying capacity K must be >= 1");
    if (s == 0) return base;
    if (base.mass(2) + s / K < 0) throw ConfigError("selective tilt makes the two-offspring mass negative");
    return base.with_added_mass(2, s / K);
  }

  FamilyKind kind_ = FamilyKind::moran;
  ReproductionLaw limit_plus_, limit_minus_;
  Rational s_plus_ = 0, s_minus_ = 0;
  Rational m_ = 0, v_plus_ = 0, v_minus_ = 0;
  double rate_ = 1.0, lambda_ = 1.0;
  int i_max_ = 8;
};

struct FamilyValidationRow {
  long K = 0;
  double plus_error = 0.0;   // |mean(plus(K)) - m - s+/K|
  double minus_error = 0.0;
  double allowed = 0.0;      // c / K^{3/2}
  bool ok = true;
};

struct FamilyValidation {
  std::vector<FamilyValidationRow> rows;
  bool ok = true;
};

// The little-o in the mean expansion is not checkable at a single K; the
// executable form accepts |mean(law(K)) - m - s/K| <= c / K^{3/2}.
inline FamilyValidation validate_family(const LawFamily& f, const std::vector<long>& Ks,
                                        double c = 1.0) {
  FamilyValidation v;
  for (long K : Ks) {
    FamilyValidationRow row;
    row.K = K;
    row.plus_error = std::abs(to_double(mean_rate(f.plus(K)) - f.m() - f.s_plus() / K));
    row.minus_error = std::abs(to_double(mean_rate(f.minus(K)) - f.m() - f.s_minus() / K));
    row.allowed = c / std::pow(static_cast<double>(K), 1.5);
    row.ok = row.plus_error <= row.allowed && row.minus_error <= row.allowed;
    v.ok = v.ok && row.ok;
    v.rows.push_back(row);
  }
  return v;
}

struct ModelParams {
  long K = 1;
  double theta_plus = 0.0;   // mutation + -> - at rate theta_plus / K
  double theta_minus = 0.0;  // mutation - -> + at rate theta_minus / K
  LawFamily family = LawFamily::moran(Rational(1));

  static ModelParams from_json(const json& doc) {
    ModelParams p;
    p.family = LawFamily::from_json(doc);
    p.K = doc.value("K", 1L);
    p.theta_plus = doc.value("theta_plus", 0.0);
    p.theta_minus = doc.value("theta_minus", 0.0);
    if (p.K < 1) throw ConfigError("K must be >= 1");
    if (p.theta_plus < 0 || p.theta_minus < 0) throw ConfigError("mutation rates must be >= 0");
    return p;
  }

  json to_json() const {
    json doc = family.to_json();
    doc["K"] = K;
    doc["theta_plus"] = theta_plus;
    doc["theta_minus"] = theta_minus;
    return doc;
  }
};

}  // namespace lbp
