#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cctype>
#include <cstdint>
#include <string>
#include <string_view>

#include "lbp/errors.hpp"

namespace lbp {

// Exact arithmetic for law masses and lineage-transition probabilities.
// Doubles convert exactly (every finite double is a binary rational), so
// "float fallback" inputs still yield exact downstream identities.
using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

inline double to_double(const Rational& r) { return r.convert_to<double>(); }

// Accepts "p/q", integers ("3", "-2") and plain decimals ("0.125").
inline Rational rational_from_string(std::string_view s) {
  auto bad = [&] { throw ConfigError("cannot parse rational: '" + std::string(s) + "'"); };
  if (s.empty()) bad();
  auto slash = s.find('/');
  if (slash != std::string_view::npos) {
    BigInt p, q;
    try {
      p = BigInt(std::string(s.substr(0, slash)));
      q = BigInt(std::string(s.substr(slash + 1)));
    } catch (...) {
      bad();
    }
    if (q == 0) bad();
    return Rational(p, q);
  }
  auto dot = s.find('.');
  if (dot == std::string_view::npos) {
    try {
      return Rational(BigInt(std::string(s)));
    } catch (...) {
      bad();
    }
  }
  std::string digits(s.substr(0, dot));
  std::string frac(s.substr(dot + 1));
  for (char c : frac)
    if (!std::isdigit(static_cast<unsigned char>(c))) bad();
  BigInt scale = 1;
  for (std::size_t k = 0; k < frac.size(); ++k) scale *= 10;
  bool neg = !digits.empty() && digits[0] == '-';
  BigInt whole;
  try {
    whole = digits.empty() || digits == "-" ? BigInt(0) : BigInt(digits);
  } catch (...) {
    bad();
  }
  BigInt num = whole * scale + (neg ? -BigInt(frac.empty() ? "0" : frac) : BigInt(frac.empty() ? "0" : frac));
  return Rational(num, scale);
}

inline std::string rational_to_string(const Rational& r) {
  std::string n = numerator(r).str();
  if (denominator(r) == 1) return n;
  return n + "/" + denominator(r).str();
}

// C(n, k) as an exact integer; 0 outside the valid range.
inline BigInt binomial(long long n, long long k) {
  if (k < 0 || n < 0 || k > n) return 0;
  if (k > n - k) k = n - k;
  BigInt r = 1;
  for (long long t = 0; t < k; ++t) {
    r *= (n - t);
    r /= (t + 1);
  }
  return r;
}

inline double binomial_d(long long n, long long k) {
  if (k < 0 || n < 0 || k > n) return 0.0;
  if (k > n - k) k = n - k;
  double r = 1.0;
  for (long long t = 0; t < k; ++t) r = r * static_cast<double>(n - t) / static_cast<double>(t + 1);
  return r;
}

}  // namespace lbp
