#pragma once

/**
 * @file
 * @brief Time integration of full-order and reduced models, test signals and snapshots.
 */

#include <cstdint>
#include <functional>
#include <string>
#include <variant>

#include "common.hpp"
#include "ode.hpp"
#include "pod.hpp"
#include "sdc.hpp"

namespace lpvgs {

enum class SignalKind { zero, step, fading };

/**
 * @brief Open-loop input signal.
 *
 * `fading` returns amplitude * blend(t) where blend falls from 1 at t = 0 to 0
 * at t = t_fade with vanishing derivatives at both ends (smoothstep of the
 * given order), and is identically zero afterwards.
 */
struct SignalSpec
{
  SignalKind kind = SignalKind::zero;
  Vector amplitude;
  double t_fade  = 2.0;
  int smoothness = 1;

  static SignalSpec zero(Index p)
  {
    SignalSpec s;
    s.amplitude = Vector::Zero(p);
    return s;
  }

  static SignalSpec fading(Vector amplitude, double t_fade = 2.0, int smoothness = 1)
  {
    SignalSpec s;
    s.kind       = SignalKind::fading;
    s.amplitude  = std::move(amplitude);
    s.t_fade     = t_fade;
    s.smoothness = smoothness;
    return s;
  }
};

/// 1 - S(s) with S the smoothstep polynomial of the given order (C^order at both ends).
inline double fade_blend(double s, int order)
{
  if (s <= 0.0) { return 1.0; }
  if (s >= 1.0) { return 0.0; }
  switch (order) {
  case 0: return 1.0 - s;
  case 1: return 1.0 - s * s * (3.0 - 2.0 * s);
  case 2: return 1.0 - s * s * s * (s * (6.0 * s - 15.0) + 10.0);
  default: return 1.0 - s * s * s * s * (35.0 + s * (-84.0 + s * (70.0 - 20.0 * s)));
  }
}

inline Vector signal_value(const SignalSpec & sig, double t)
{
  switch (sig.kind) {
  case SignalKind::zero: return Vector::Zero(sig.amplitude.size());
  case SignalKind::step: return sig.amplitude;
  case SignalKind::fading:
    if (sig.t_fade <= 0.0) { return Vector::Zero(sig.amplitude.size()); }
    return sig.amplitude * fade_blend(t / sig.t_fade, sig.smoothness);
  }
  return Vector::Zero(sig.amplitude.size());
}

struct TrajectoryMeta
{
  std::string integrator;
  double rtol        = 0.0;
  double atol        = 0.0;
  std::uint64_t seed = 0;
};

struct Trajectory
{
  Vector times;
  /// one column per instant
  Matrix states;
  Matrix outputs;
  Matrix inputs;
  TrajectoryMeta meta;

  Index size() const noexcept { return times.size(); }
};

/// Feedback input law u = k(t, x).
using InputLaw = std::function<Vector(double, const Vector &)>;

struct IntegrateOptions
{
  OdeMethod method   = OdeMethod::rosenbrock23;
  double rtol        = 1e-8;
  double atol        = 1e-10;
  std::uint64_t seed = 0;
};

inline Vector equispaced(double t0, double t1, Index n_out)
{
  require_dim(n_out >= 2, "need at least two output instants");
  require_dim(t1 > t0, "t1 must exceed t0");
  Vector t = Vector::LinSpaced(n_out, t0, t1);
  t(n_out - 1) = t1;
  return t;
}

namespace detail {

inline InputLaw as_law(const std::variant<SignalSpec, InputLaw> & input)
{
  if (const auto * s = std::get_if<SignalSpec>(&input)) {
    SignalSpec sig = *s;
    return [sig](double t, const Vector &) { return signal_value(sig, t); };
  }
  return std::get<InputLaw>(input);
}

inline Trajectory run(const OdeRhs & f, const OdeJacobian & jac, const Vector & x0, const Vector & times,
                      const IntegrateOptions & o, const Matrix & C, const InputLaw & law)
{
  OdeOptions oo;
  oo.method = o.method;
  oo.rtol   = o.rtol;
  oo.atol   = o.atol;
  const auto sol = solve_ode(f, x0, times, oo, jac);
  Trajectory tr;
  tr.times   = times;
  tr.states  = sol.states;
  tr.outputs.resize(C.rows(), times.size());
  for (Index j = 0; j < times.size(); ++j) { tr.outputs.col(j) = C * tr.states.col(j); }
  const Vector u0 = law(times(0), x0);
  tr.inputs.resize(u0.size(), times.size());
  for (Index j = 0; j < times.size(); ++j) { tr.inputs.col(j) = law(times(j), tr.states.col(j)); }
  tr.meta = {to_string(o.method), o.rtol, o.atol, o.seed};
  return tr;
}

}  // namespace detail

/**
 * @brief Integrate the full-order quadratic system on an equispaced grid of n_out instants.
 */
inline Trajectory integrate(const QuadraticSystem & sys, const Vector & x0,
                            const std::variant<SignalSpec, InputLaw> & input, double t0, double t1, Index n_out,
                            const IntegrateOptions & opts = {})
{
  require_dim(x0.size() == sys.n(), "integrate: x0 dimension mismatch");
  const InputLaw law = detail::as_law(input);
  const bool open_loop = std::holds_alternative<SignalSpec>(input);
  OdeRhs f = [&](double t, const Vector & x, Vector & dx) { dx = quadratic_rhs(sys, x, law(t, x)); };
  OdeJacobian jac;
  if (open_loop) {
    jac = [&](double, const Vector & x, Matrix & J) { J = quadratic_jacobian(sys, x); };
  }
  return detail::run(f, jac, x0, equispaced(t0, t1, n_out), opts, sys.C(), law);
}

/**
 * @brief Integrate the reduced LPV model; the state is the reduced coordinate vector.
 */
inline Trajectory integrate(const AffineLpvModel & model, const Vector & x0,
                            const std::variant<SignalSpec, InputLaw> & input, double t0, double t1, Index n_out,
                            const IntegrateOptions & opts = {})
{
  require_dim(x0.size() == model.k, "integrate: x0 dimension mismatch");
  const InputLaw law = detail::as_law(input);
  const bool open_loop = std::holds_alternative<SignalSpec>(input);
  OdeRhs f = [&](double t, const Vector & x, Vector & dx) { dx = lpv_rhs(model, x, law(t, x)); };
  OdeJacobian jac;
  if (open_loop) {
    jac = [&](double, const Vector & x, Matrix & J) { J = lpv_jacobian(model, x); };
  }
  return detail::run(f, jac, x0, equispaced(t0, t1, n_out), opts, model.Cbar, law);
}

/// Shifted states, one column per instant.
inline Matrix snapshot_matrix(const Trajectory & traj)
{
  require_dim(traj.size() > 0, "snapshot_matrix: empty trajectory");
  return traj.states;
}

}  // namespace lpvgs
