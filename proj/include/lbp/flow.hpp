#pragma once

#include <array>
#include <cmath>

#include "lbp/errors.hpp"

namespace lbp {

// Deterministic subsystem of the carrying-capacity limit: the radial field
//   F(x) = m (1 - (x+ + x-)) x
// vanishes on the simplex line x+ + x- = 1 and drives every point of
// U = {x : x+ + x- > 0} onto it along a fixed ray, with projection
//   Phi(x) = x / (x+ + x-).

struct PlanePoint {
  double x_plus = 0.0;
  double x_minus = 0.0;
  double norm1() const { return x_plus + x_minus; }
};

inline PlanePoint vector_field(const PlanePoint& x, double m) {
  const double f = m * (1.0 - x.norm1());
  return {f * x.x_plus, f * x.x_minus};
}

inline PlanePoint gamma_projection(const PlanePoint& x) {
  const double n = x.norm1();
  if (n <= 0.0) throw ConfigError("gamma_projection needs x+ + x- > 0");
  return {x.x_plus / n, x.x_minus / n};
}

namespace detail {

// Dormand-Prince 5(4) pair with step-size control.
template <typename F>
PlanePoint rk45(PlanePoint y, double t_end, double tol, F&& f) {
  static constexpr double a21 = 1.0 / 5;
  static constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
  static constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
  static constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                          a54 = -212.0 / 729;
  static constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                          a64 = 49.0 / 176, a65 = -5103.0 / 18656;
  static constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192,
                          b5 = -2187.0 / 6784, b6 = 11.0 / 84;
  static constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920,
                          e5 = -17253.0 / 339200, e6 = 22.0 / 525, e7 = -1.0 / 40;

  auto axpy = [](const PlanePoint& y0, double h, std::initializer_list<std::pair<double, const PlanePoint*>> ks) {
    PlanePoint r = y0;
    for (const auto& [c, k] : ks) {
      r.x_plus += h * c * k->x_plus;
      r.x_minus += h * c * k->x_minus;
    }
    return r;
  };

  double t = 0.0;
  double h = std::min(0.1, t_end > 0 ? t_end : 0.1);
  while (t < t_end) {
    h = std::min(h, t_end - t);
    const PlanePoint k1 = f(y);
    const PlanePoint k2 = f(axpy(y, h, {{a21, &k1}}));
    const PlanePoint k3 = f(axpy(y, h, {{a31, &k1}, {a32, &k2}}));
    const PlanePoint k4 = f(axpy(y, h, {{a41, &k1}, {a42, &k2}, {a43, &k3}}));
    const PlanePoint k5 = f(axpy(y, h, {{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}}));
    const PlanePoint k6 = f(axpy(y, h, {{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}}));
    const PlanePoint y5 = axpy(y, h, {{b1, &k1}, {b3, &k3}, {b4, &k4}, {b5, &k5}, {b6, &k6}});
    const PlanePoint k7 = f(y5);
    const PlanePoint err =
        axpy({0, 0}, h, {{e1, &k1}, {e3, &k3}, {e4, &k4}, {e5, &k5}, {e6, &k6}, {e7, &k7}});
    const double scale = 1.0 + std::max(std::abs(y.x_plus) + std::abs(y.x_minus),
                                        std::abs(y5.x_plus) + std::abs(y5.x_minus));
    const double e = (std::abs(err.x_plus) + std::abs(err.x_minus)) / scale;
    if (e <= tol) {
      t += h;
      y = y5;
    }
    const double factor = e > 0 ? 0.9 * std::pow(tol / e, 0.2) : 5.0;
    h *= std::clamp(factor, 0.2, 5.0);
    if (h < 1e-14) throw ConfigError("flow integrator step size underflow");
  }
  return y;
}

}  // namespace detail

// psi(x0, t): the flow of F, integrated adaptively to local tolerance tol.
inline PlanePoint katzenberger_flow(const PlanePoint& x0, double t, double m = 1.0,
                                    double tol = 1e-10) {
  if (x0.norm1() <= 0.0) throw ConfigError("katzenberger_flow needs x in U (x+ + x- > 0)");
  if (t < 0.0) throw ConfigError("katzenberger_flow needs t >= 0");
  if (t == 0.0) return x0;
  return detail::rk45(x0, t, tol, [m](const PlanePoint& y) { return vector_field(y, m); });
}

}  // namespace lbp
