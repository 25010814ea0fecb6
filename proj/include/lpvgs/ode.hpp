#pragma once

/**
 * @file
 * @brief Adaptive ODE integrators sampled on a fixed output grid.
 *
 * Two schemes are provided:
 *  - rosenbrock23: the L-stable Rosenbrock pair of Shampine and Reichelt
 *    (order 2 with a third order error estimate), suitable for stiff problems.
 *  - dopri5: explicit Dormand-Prince 5(4).
 *
 * Steps are clipped so that every output instant is hit exactly.
 */

#include <Eigen/Dense>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "common.hpp"

namespace lpvgs {

enum class OdeMethod { rosenbrock23, dopri5 };

inline std::string to_string(OdeMethod m) { return m == OdeMethod::rosenbrock23 ? "rosenbrock23" : "dopri5"; }

inline OdeMethod ode_method_from_string(const std::string & s)
{
  if (s == "rosenbrock23") { return OdeMethod::rosenbrock23; }
  if (s == "dopri5") { return OdeMethod::dopri5; }
  throw ConfigError("unknown integrator '" + s + "'");
}

struct OdeOptions
{
  OdeMethod method = OdeMethod::rosenbrock23;
  double rtol      = 1e-8;
  double atol      = 1e-10;
  /// initial step, 0 selects automatically
  double h0 = 0.0;
  /// upper bound on the step, 0 means unbounded
  double h_max              = 0.0;
  std::size_t max_steps     = 20'000'000;
};

struct OdeStats
{
  std::size_t accepted  = 0;
  std::size_t rejected  = 0;
  std::size_t rhs_evals = 0;
  std::size_t jac_evals = 0;
};

/// dx = f(t, x)
using OdeRhs = std::function<void(double, const Vector &, Vector &)>;
/// J = df/dx(t, x); optional
using OdeJacobian = std::function<void(double, const Vector &, Matrix &)>;
/// Called after every accepted step; returning false stops the integration.
using OdeObserver = std::function<bool(double, const Vector &)>;

struct OdeSolution
{
  /// one column per output instant that was reached
  Matrix states;
  /// number of output instants reached (== times.size() unless stopped)
  Index reached = 0;
  bool stopped  = false;
  OdeStats stats;
};

namespace detail {

inline double error_norm(const Vector & err, const Vector & y0, const Vector & y1, double rtol, double atol)
{
  double e = 0.0;
  for (Index i = 0; i < err.size(); ++i) {
    const double sc = atol + rtol * std::max(std::abs(y0(i)), std::abs(y1(i)));
    e               = std::max(e, std::abs(err(i)) / sc);
  }
  return e;
}

inline void fd_jacobian(const OdeRhs & f, double t, const Vector & x, const Vector & fx, Matrix & J, OdeStats & st)
{
  const Index n = x.size();
  J.resize(n, n);
  Vector xp = x, fp(n);
  const double sq = std::sqrt(std::numeric_limits<double>::epsilon());
  for (Index j = 0; j < n; ++j) {
    const double dx = sq * std::max(1e-5, std::abs(x(j)));
    xp(j)           = x(j) + dx;
    f(t, xp, fp);
    ++st.rhs_evals;
    J.col(j) = (fp - fx) / (xp(j) - x(j));
    xp(j)    = x(j);
  }
}

}  // namespace detail

/**
 * @brief Integrate x' = f(t, x) from x0 at times(0), reporting the state at every entry of `times`.
 *
 * @throws IntegrationError on step-size underflow, step budget exhaustion or a non-finite state.
 */
inline OdeSolution solve_ode(const OdeRhs & f, const Vector & x0, const Vector & times, const OdeOptions & opt,
                             const OdeJacobian & jac = {}, const OdeObserver & observer = {})
{
  require_dim(times.size() >= 1, "solve_ode: empty output grid");
  for (Index i = 1; i < times.size(); ++i) {
    require_dim(times(i) > times(i - 1), "solve_ode: output times must be strictly increasing");
  }
  if (!x0.allFinite()) { throw IntegrationError("non-finite initial state", times(0)); }

  const Index n = x0.size();
  OdeSolution sol;
  sol.states.resize(n, times.size());
  sol.states.col(0) = x0;
  sol.reached       = 1;

  double t = times(0);
  Vector y = x0;
  Vector fy(n);
  f(t, y, fy);
  ++sol.stats.rhs_evals;

  const double span = times(times.size() - 1) - times(0);
  double h          = opt.h0;
  if (h <= 0.0 && times.size() > 1) {
    // Hairer's starting step heuristic, simplified
    double d0 = 0.0, d1 = 0.0;
    for (Index i = 0; i < n; ++i) {
      const double sc = opt.atol + opt.rtol * std::abs(y(i));
      d0              = std::max(d0, std::abs(y(i)) / sc);
      d1              = std::max(d1, std::abs(fy(i)) / sc);
    }
    h = (d0 < 1e-5 || d1 < 1e-5) ? 1e-6 : 0.01 * d0 / d1;
    h = std::min(h, 0.01 * span);
    h = std::max(h, 1e-12 * std::max(1.0, std::abs(t)));
  }

  // Shampine-Reichelt constants
  const double d   = 1.0 / (2.0 + std::sqrt(2.0));
  const double e32 = 6.0 + std::sqrt(2.0);

  Matrix J(n, n), W(n, n);
  Vector k1(n), k2(n), k3(n), f1(n), f2(n), ynew(n), err(n), dfdt(n), tmp(n);
  // dopri5 stages
  Vector s2(n), s3(n), s4(n), s5(n), s6(n), s7(n);

  for (Index out = 1; out < times.size(); ++out) {
    const double t_target = times(out);
    while (t < t_target) {
      if (sol.stats.accepted + sol.stats.rejected >= opt.max_steps) {
        throw IntegrationError("step budget exhausted", t);
      }
      if (opt.h_max > 0.0) { h = std::min(h, opt.h_max); }
      const double h_try = h;
      bool hits_target   = false;
      if (t + h >= t_target - 1e-14 * std::max(1.0, std::abs(t_target))) {
        h           = t_target - t;
        hits_target = true;
      }
      if (h <= 1e-14 * std::max(1.0, std::abs(t))) { throw IntegrationError("step size underflow", t); }
      const double t_new = hits_target ? t_target : t + h;

      double enorm = 0.0;
      if (opt.method == OdeMethod::rosenbrock23) {
        if (jac) {
          jac(t, y, J);
          ++sol.stats.jac_evals;
        } else {
          detail::fd_jacobian(f, t, y, fy, J, sol.stats);
        }
        const double dt = std::sqrt(std::numeric_limits<double>::epsilon()) * std::max(1.0, std::abs(t));
        f(t + dt, y, tmp);
        ++sol.stats.rhs_evals;
        dfdt = (tmp - fy) / dt;

        W = -h * d * J;
        W.diagonal().array() += 1.0;
        Eigen::PartialPivLU<Matrix> lu(W);
        k1 = lu.solve(fy + h * d * dfdt);
        f(t + 0.5 * h, y + 0.5 * h * k1, f1);
        k2 = lu.solve(f1 - k1) + k1;
        ynew = y + h * k2;
        f(t_new, ynew, f2);
        k3 = lu.solve(f2 - e32 * (k2 - f1) - 2.0 * (k1 - fy) + h * d * dfdt);
        sol.stats.rhs_evals += 2;
        err   = (h / 6.0) * (k1 - 2.0 * k2 + k3);
        enorm = ynew.allFinite() && err.allFinite() ? detail::error_norm(err, y, ynew, opt.rtol, opt.atol)
                                                    : std::numeric_limits<double>::infinity();
        if (enorm <= 1.0) {
          fy = f2;
        }
      } else {
        // Dormand-Prince 5(4) with FSAL
        constexpr double a21 = 1.0 / 5.0;
        constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
        constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
        constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0,
                         a54 = -212.0 / 729.0;
        constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0,
                         a64 = 49.0 / 176.0, a65 = -5103.0 / 18656.0;
        constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0, b4 = 125.0 / 192.0, b5 = -2187.0 / 6784.0,
                         b6 = 11.0 / 84.0;
        constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0,
                         e5 = -17253.0 / 339200.0, e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
        f(t + 0.2 * h, y + h * a21 * fy, s2);
        f(t + 0.3 * h, y + h * (a31 * fy + a32 * s2), s3);
        f(t + 0.8 * h, y + h * (a41 * fy + a42 * s2 + a43 * s3), s4);
        f(t + 8.0 / 9.0 * h, y + h * (a51 * fy + a52 * s2 + a53 * s3 + a54 * s4), s5);
        f(t_new, y + h * (a61 * fy + a62 * s2 + a63 * s3 + a64 * s4 + a65 * s5), s6);
        ynew = y + h * (b1 * fy + b3 * s3 + b4 * s4 + b5 * s5 + b6 * s6);
        f(t_new, ynew, s7);
        sol.stats.rhs_evals += 6;
        err   = h * (e1 * fy + e3 * s3 + e4 * s4 + e5 * s5 + e6 * s6 + e7 * s7);
        enorm = ynew.allFinite() && err.allFinite() ? detail::error_norm(err, y, ynew, opt.rtol, opt.atol)
                                                    : std::numeric_limits<double>::infinity();
        if (enorm <= 1.0) { fy = s7; }
      }

      const double expo = opt.method == OdeMethod::rosenbrock23 ? 1.0 / 3.0 : 1.0 / 5.0;
      if (enorm <= 1.0) {
        t = t_new;
        y = ynew;
        ++sol.stats.accepted;
        if (observer && !observer(t, y)) {
          sol.stopped = true;
          if (t == t_target) {
            sol.states.col(out) = y;
            sol.reached         = out + 1;
          }
          sol.states.conservativeResize(n, sol.reached);
          return sol;
        }
        const double fac = enorm == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(enorm, -expo), 0.2, 5.0);
        // a step shortened only to land on an output time must not shrink the next one
        h = hits_target ? std::max(h * fac, h_try) : h * fac;
      } else {
        ++sol.stats.rejected;
        if (!std::isfinite(enorm)) {
          h *= 0.1;
        } else {
          h *= std::clamp(0.9 * std::pow(enorm, -expo), 0.1, 0.9);
        }
      }
    }
    sol.states.col(out) = y;
    sol.reached         = out + 1;
  }
  return sol;
}

}  // namespace lpvgs
