#pragma once

/**
 * @file
 * @brief Closed-loop simulation under the scheduled controller, phase portraits and range metrics.
 */

#include <algorithm>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"
#include "hinf.hpp"
#include "ode.hpp"
#include "pod.hpp"
#include "polytope.hpp"
#include "sdc.hpp"
#include "trajectory.hpp"

namespace lpvgs {

enum class ExitPolicy { hard_error, project };

inline std::string to_string(ExitPolicy p) { return p == ExitPolicy::hard_error ? "hard_error" : "project"; }

inline ExitPolicy exit_policy_from_string(const std::string & s)
{
  if (s == "hard_error") { return ExitPolicy::hard_error; }
  if (s == "project") { return ExitPolicy::project; }
  throw ConfigError("unknown exit policy '" + s + "'");
}

struct ExitEvent
{
  double time      = 0.0;
  /// largest violation seen during the interval
  double magnitude = 0.0;
  /// "error" or "projected"
  std::string action;
};

struct ClosedLoopMetrics
{
  double max_output_norm   = 0.0;
  double final_output_norm = 0.0;
  double max_state_norm    = 0.0;
  double max_input_norm    = 0.0;
  /// earliest time after which ||y|| stays below settle_tol; NaN if it never does
  double settling_time = std::numeric_limits<double>::quiet_NaN();
  double settle_tol    = 1e-2;
};

struct ClosedLoopResult
{
  /// plant state, y = C x and the total plant input u + W_d d
  Trajectory plant_traj;
  /// controller state, u as output and y as input
  Trajectory controller_traj;
  Matrix rho_traj;
  /// barycentric weights actually used, one column per instant
  Matrix lambda_traj;
  std::vector<ExitEvent> exit_events;
  ClosedLoopMetrics metrics;
};

/// Scheduling parameter left W under the hard_error policy.
struct ParameterExit : Error
{
  ParameterExit(double t, double mag, std::shared_ptr<const ClosedLoopResult> res)
      : Error(ErrorClass::parameter_exit,
              "scheduling parameter left the polytope at t = " + std::to_string(t) + " (violation " +
                  std::to_string(mag) + ")"),
        time(t), magnitude(mag), partial(std::move(res))
  {}
  double time;
  double magnitude;
  std::shared_ptr<const ClosedLoopResult> partial;
};

struct ClosedLoopOptions
{
  ExitPolicy exit_policy = ExitPolicy::hard_error;
  IntegrateOptions integration{OdeMethod::rosenbrock23, 1e-6, 1e-9, 0};
  /// membership tolerance for rho in W
  double domain_tol = 1e-9;
  double settle_tol = 1e-2;
};

/// Plant seen by the controller: x' = f(x) + B u, y = C x, rho = S x.
struct ClosedLoopPlant
{
  std::function<Vector(const Vector &)> drift;
  std::function<Matrix(const Vector &)> drift_jacobian;
  Matrix B;
  Matrix C;
  Matrix S;

  Index n() const noexcept { return B.rows(); }
};

/// Full-order plant scheduled by rho = V_r^T x.
inline ClosedLoopPlant make_plant(const QuadraticSystem & sys, const AffineLpvModel & model)
{
  require_dim(model.n() == sys.n(), "make_plant: model and system dimensions differ");
  ClosedLoopPlant p;
  p.drift          = [&sys](const Vector & x) { return quadratic_rhs(sys, x, Vector::Zero(sys.p())); };
  p.drift_jacobian = [&sys](const Vector & x) { return quadratic_jacobian(sys, x); };
  p.B              = sys.B();
  p.C              = sys.C();
  p.S              = model.V_r.transpose();
  return p;
}

/// Reduced plant of another order, scheduled by rho = V_r^T V_k rhobar.
inline ClosedLoopPlant make_plant(const AffineLpvModel & plant, const AffineLpvModel & model)
{
  require_dim(plant.n() == model.n(), "make_plant: models reduce different systems");
  ClosedLoopPlant p;
  p.drift          = [&plant](const Vector & x) { return lpv_rhs(plant, x, Vector::Zero(plant.p())); };
  p.drift_jacobian = [&plant](const Vector & x) { return lpv_jacobian(plant, x); };
  p.B              = plant.Bbar;
  p.C              = plant.Cbar;
  p.S              = model.V_r.transpose() * plant.V_k;
  return p;
}

/// Distance of rho from W in the sense used by `contains` (0 inside).
inline double domain_violation(const ParamPolytope & W, const Vector & rho)
{
  if (W.is_box()) { return box_violation(W, rho); }
  return linf_distance_to_hull(W.vertices, rho).distance;
}

namespace detail {

struct Schedule
{
  Vector lambda;
  double violation = 0.0;
};

inline Schedule schedule_weights(const ParamPolytope & W, const Vector & rho, double tol)
{
  Schedule s;
  s.violation = domain_violation(W, rho);
  s.lambda    = barycentric(W, s.violation > tol ? project_onto(W, rho) : rho, std::max(tol, 1e-9));
  return s;
}

inline Vector controller_output(const ScheduledController & K, const Vector & xk, const Vector & y)
{
  return K.Ck * xk + K.Dk * y;
}

inline void fill_metrics(ClosedLoopResult & res, double settle_tol)
{
  auto & m       = res.metrics;
  m.settle_tol   = settle_tol;
  const Index N  = res.plant_traj.size();
  if (N == 0) { return; }
  const Vector yn = res.plant_traj.outputs.colwise().norm().transpose();
  m.max_output_norm   = yn.maxCoeff();
  m.final_output_norm = yn(N - 1);
  m.max_state_norm    = res.plant_traj.states.colwise().norm().maxCoeff();
  m.max_input_norm    = res.controller_traj.outputs.size() > 0 ? res.controller_traj.outputs.colwise().norm().maxCoeff() : 0.0;
  if (yn(N - 1) <= settle_tol) {
    Index j = N - 1;
    while (j > 0 && yn(j - 1) <= settle_tol) { --j; }
    m.settling_time = res.plant_traj.times(j);
  }
}

}  // namespace detail

/**
 * @brief Simulate plant and scheduled controller on an equispaced grid of n_out instants.
 *
 * The controller starts at rest.  Membership of rho is checked at every
 * accepted step; trial stages outside W are evaluated at the projected point
 * so the right-hand side stays defined.
 *
 * @throws ParameterExit under ExitPolicy::hard_error once rho leaves W.
 */
inline ClosedLoopResult simulate_closed_loop(const ClosedLoopPlant & plant, const ParamPolytope & W,
                                             const VertexControllerSet & ctrl, const SignalSpec & disturbance,
                                             const Vector & x0, double t0, double t1, Index n_out,
                                             const ClosedLoopOptions & opts = {})
{
  const Index n = plant.n(), nk = ctrl.order(), p = plant.B.cols(), q = plant.C.rows();
  require_dim(x0.size() == n, "simulate_closed_loop: x0 dimension mismatch");
  require_dim(W.n_vertices() == ctrl.n_vertices(), "simulate_closed_loop: controller and polytope differ");
  require_dim(plant.S.rows() == W.r && plant.S.cols() == n, "simulate_closed_loop: scheduling map mismatch");
  require_dim(ctrl.Bk[0].cols() == q && ctrl.Ck[0].rows() == p, "simulate_closed_loop: controller I/O mismatch");
  require_dim(disturbance.amplitude.size() == p, "simulate_closed_loop: disturbance must have p entries");

  const double W_d = ctrl.weights.W_d;
  const double tol = opts.domain_tol;

  OdeRhs f = [&](double t, const Vector & z, Vector & dz) {
    const Vector x  = z.head(n);
    const Vector xk = z.tail(nk);
    const Vector y  = plant.C * x;
    const auto s    = detail::schedule_weights(W, plant.S * x, tol);
    const auto K    = scheduled_gain(ctrl, s.lambda);
    const Vector u  = detail::controller_output(K, xk, y);
    dz.resize(n + nk);
    dz.head(n) = plant.drift(x) + plant.B * (u + W_d * signal_value(disturbance, t));
    dz.tail(nk) = K.Ak * xk + K.Bk * y;
  };

  ClosedLoopResult res;
  std::optional<ExitEvent> stop;
  bool outside = false;
  auto watch   = [&](double t, const Vector & z) {
    const double v = domain_violation(W, plant.S * z.head(n));
    if (v <= tol) {
      outside = false;
      return true;
    }
    if (opts.exit_policy == ExitPolicy::hard_error) {
      stop = ExitEvent{t, v, "error"};
      return false;
    }
    if (!outside) {
      res.exit_events.push_back({t, v, "projected"});
      outside = true;
    } else {
      res.exit_events.back().magnitude = std::max(res.exit_events.back().magnitude, v);
    }
    return true;
  };

  Vector z0(n + nk);
  z0.head(n) = x0;
  z0.tail(nk).setZero();
  const Vector times = equispaced(t0, t1, n_out);

  OdeSolution sol;
  if (!watch(t0, z0)) {
    sol.states  = z0;
    sol.reached = 1;
    sol.stopped = true;
  } else {
    OdeOptions oo;
    oo.method = opts.integration.method;
    oo.rtol   = opts.integration.rtol;
    oo.atol   = opts.integration.atol;
    sol       = solve_ode(f, z0, times, oo, {}, watch);
  }

  const Index N = sol.reached;
  const TrajectoryMeta meta{to_string(opts.integration.method), opts.integration.rtol, opts.integration.atol,
                            opts.integration.seed};
  auto & pt  = res.plant_traj;
  auto & ct  = res.controller_traj;
  pt.times   = times.head(N);
  ct.times   = pt.times;
  pt.states  = sol.states.topRows(n).leftCols(N);
  ct.states  = sol.states.bottomRows(nk).leftCols(N);
  pt.outputs.resize(q, N);
  pt.inputs.resize(p, N);
  ct.outputs.resize(p, N);
  ct.inputs.resize(q, N);
  res.rho_traj.resize(W.r, N);
  res.lambda_traj.resize(W.n_vertices(), N);
  for (Index j = 0; j < N; ++j) {
    const Vector x  = pt.states.col(j);
    const Vector y  = plant.C * x;
    res.rho_traj.col(j) = plant.S * x;
    const auto s    = detail::schedule_weights(W, res.rho_traj.col(j), tol);
    res.lambda_traj.col(j) = s.lambda;
    const Vector u  = detail::controller_output(scheduled_gain(ctrl, s.lambda), ct.states.col(j), y);
    pt.outputs.col(j) = y;
    ct.inputs.col(j)  = y;
    ct.outputs.col(j) = u;
    pt.inputs.col(j)  = u + W_d * signal_value(disturbance, pt.times(j));
  }
  pt.meta = meta;
  ct.meta = meta;
  detail::fill_metrics(res, opts.settle_tol);

  if (stop) {
    res.exit_events.push_back(*stop);
    throw ParameterExit(stop->time, stop->magnitude, std::make_shared<const ClosedLoopResult>(std::move(res)));
  }
  return res;
}

/// Full-order plant under the controller synthesized for `model`.
inline ClosedLoopResult simulate_closed_loop(const QuadraticSystem & sys, const AffineLpvModel & model,
                                             const ParamPolytope & W, const VertexControllerSet & ctrl,
                                             const SignalSpec & disturbance, const Vector & x0, double t0,
                                             double t1, Index n_out, const ClosedLoopOptions & opts = {})
{
  return simulate_closed_loop(make_plant(sys, model), W, ctrl, disturbance, x0, t0, t1, n_out, opts);
}

/**
 * @brief Open-loop run of the full plant under W_d * d(t); returns the first
 *        accepted-step time at which ||y|| exceeds `threshold`.
 *
 * A finite-time blow-up counts as an exceedance at the last valid time.
 */
inline std::optional<double> open_loop_exceedance(const QuadraticSystem & sys, const SignalSpec & disturbance,
                                                  double W_d, const Vector & x0, double t0, double t1,
                                                  double threshold, const IntegrateOptions & io = {})
{
  require_dim(x0.size() == sys.n(), "open_loop_exceedance: x0 dimension mismatch");
  std::optional<double> hit;
  if ((sys.C() * x0).norm() > threshold) { return t0; }
  OdeRhs f = [&](double t, const Vector & x, Vector & dx) {
    dx = quadratic_rhs(sys, x, W_d * signal_value(disturbance, t));
  };
  OdeJacobian jac = [&](double, const Vector & x, Matrix & J) { J = quadratic_jacobian(sys, x); };
  OdeObserver obs = [&](double t, const Vector & x) {
    if ((sys.C() * x).norm() > threshold) {
      hit = t;
      return false;
    }
    return true;
  };
  OdeOptions oo;
  oo.method = io.method;
  oo.rtol   = io.rtol;
  oo.atol   = io.atol;
  Vector grid(2);
  grid << t0, t1;
  try {
    solve_ode(f, x0, grid, oo, jac, obs);
  } catch (const IntegrationError & e) {
    return e.last_time;
  }
  return hit;
}

/**
 * @brief (y_a, y_b) at n_points equidistant instants spanning the trajectory,
 *        linearly interpolated between stored samples.  One row per point.
 *
 * @throws IndexError if a or b is not an output index.
 */
inline Matrix phase_portrait(const Trajectory & traj, Index a, Index b, Index n_points = 500)
{
  const Index q = traj.outputs.rows();
  if (a < 0 || b < 0 || a >= q || b >= q) {
    throw IndexError("phase_portrait: output index out of range (q = " + std::to_string(q) + ")");
  }
  require_dim(traj.size() >= 1 && n_points >= 1, "phase_portrait: empty trajectory or point count");
  const Index N = traj.size();
  Matrix P(n_points, 2);
  if (N == 1) {
    P.col(0).setConstant(traj.outputs(a, 0));
    P.col(1).setConstant(traj.outputs(b, 0));
    return P;
  }
  const double t0 = traj.times(0), t1 = traj.times(N - 1);
  Index seg = 0;
  for (Index i = 0; i < n_points; ++i) {
    const double t = n_points == 1 ? t0 : (i == n_points - 1 ? t1 : t0 + (t1 - t0) * double(i) / double(n_points - 1));
    while (seg < N - 2 && traj.times(seg + 1) <= t) { ++seg; }
    const double h = traj.times(seg + 1) - traj.times(seg);
    const double s = std::clamp((t - traj.times(seg)) / h, 0.0, 1.0);
    for (int c = 0; c < 2; ++c) {
      const Index o = c == 0 ? a : b;
      const double ya = traj.outputs(o, seg), yb = traj.outputs(o, seg + 1);
      P(i, c) = s == 0.0 ? ya : (s == 1.0 ? yb : ya + s * (yb - ya));
    }
  }
  return P;
}

struct RangeMetrics
{
  Vector ref_min, ref_max;
  Vector cand_min, cand_max;
  /// candidate range over reference range, per axis
  Vector range_ratio;
  /// largest distance from a candidate bounding-box corner to the reference box
  double corner_distance = 0.0;
};

/// Bounding-box comparison of two point sets (rows are points).
inline RangeMetrics portrait_range_metrics(const Matrix & reference, const Matrix & candidate)
{
  require_dim(reference.rows() > 0 && candidate.rows() > 0, "portrait_range_metrics: empty point set");
  require_dim(reference.cols() == candidate.cols(), "portrait_range_metrics: dimension mismatch");
  RangeMetrics m;
  m.ref_min  = reference.colwise().minCoeff().transpose();
  m.ref_max  = reference.colwise().maxCoeff().transpose();
  m.cand_min = candidate.colwise().minCoeff().transpose();
  m.cand_max = candidate.colwise().maxCoeff().transpose();
  const Index d = reference.cols();
  m.range_ratio.resize(d);
  for (Index i = 0; i < d; ++i) {
    const double rr = m.ref_max(i) - m.ref_min(i);
    const double cr = m.cand_max(i) - m.cand_min(i);
    m.range_ratio(i) = rr > 0.0 ? cr / rr : (cr > 0.0 ? std::numeric_limits<double>::infinity() : 1.0);
  }
  const Matrix corners = detail::gray_code_corners(m.cand_min, m.cand_max);
  for (Index c = 0; c < corners.cols(); ++c) {
    const Vector excess = (corners.col(c) - m.ref_max).cwiseMax(m.ref_min - corners.col(c)).cwiseMax(0.0);
    m.corner_distance   = std::max(m.corner_distance, excess.norm());
  }
  return m;
}

}  // namespace lpvgs
