#pragma once

/**
 * @file
 * @brief Polytopic gain-scheduled H-infinity synthesis with a common Lyapunov pair.
 *
 * Generalized plant at a frozen parameter w (D11 = 0, D22 = 0):
 *
 *   x' = A(w) x + B1 d + B2 u       B1 = [W_d Bbar, 0],      B2 = Bbar
 *   z  = C1 x + D12 u               C1 = [W_y Cbar; 0],      D12 = [0; W_u I]
 *   y  = C2 x + D21 d               C2 = Cbar,               D21 = [0, W_n I]
 *
 * The noise channel (second block of d) exists only when W_n > 0.  With the
 * default weights z = [W_y y; W_u u].
 *
 * Existence of a full-order controller with closed-loop gain below gamma at
 * every vertex, sharing one Lyapunov matrix, is tested through the projected
 * LMIs in (R, S); vertex controllers are then recovered from the
 * bounded-real inequality with the closed-loop Lyapunov matrix fixed.
 */

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <complex>
#include <ctime>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"
#include "errors.hpp"
#include "pod.hpp"
#include "polytope.hpp"
#include "sdp.hpp"

namespace lpvgs {

struct PerformanceWeights
{
  double W_d = 1.0;
  double W_y = 1.0;
  double W_u = 0.1;
  /// measurement-noise weight.  W_n = 0 gives a singular problem whose optimal
  /// gamma is approached only with unbounded controller gains.
  double W_n = 0.01;
};

/// State-space matrices of a linear system.
struct StateSpace
{
  Matrix A, B, C, D;
};

struct GeneralizedPlant
{
  Matrix A, B1, B2, C1, D11, D12, C2, D21;

  Index n() const noexcept { return A.rows(); }
  Index m1() const noexcept { return B1.cols(); }
  Index m2() const noexcept { return B2.cols(); }
  Index p1() const noexcept { return C1.rows(); }
  Index p2() const noexcept { return C2.rows(); }
};

inline GeneralizedPlant generalized_plant(const Matrix & A, const Matrix & Bbar, const Matrix & Cbar,
                                          const PerformanceWeights & w)
{
  const Index k = A.rows(), p = Bbar.cols(), q = Cbar.rows();
  const bool noise = w.W_n > 0.0;
  const Index m1   = p + (noise ? q : 0);
  GeneralizedPlant g;
  g.A  = A;
  g.B1 = Matrix::Zero(k, m1);
  g.B1.leftCols(p) = w.W_d * Bbar;
  g.B2 = Bbar;
  g.C1 = Matrix::Zero(q + p, k);
  g.C1.topRows(q) = w.W_y * Cbar;
  g.D11 = Matrix::Zero(q + p, m1);
  g.D12 = Matrix::Zero(q + p, p);
  g.D12.bottomRows(p) = w.W_u * Matrix::Identity(p, p);
  g.C2  = Cbar;
  g.D21 = Matrix::Zero(q, m1);
  if (noise) { g.D21.rightCols(q) = w.W_n * Matrix::Identity(q, q); }
  return g;
}

/// Orthonormal basis of the null space of M (columns); empty if M has full column rank.
inline Matrix null_space(const Matrix & M, double rel_tol = 1e-10)
{
  Eigen::JacobiSVD<Matrix> svd(M, Eigen::ComputeFullV);
  const Vector & s = svd.singularValues();
  const double tol = rel_tol * (s.size() > 0 ? std::max(s(0), 1.0) : 1.0);
  Index rank       = 0;
  while (rank < s.size() && s(rank) > tol) { ++rank; }
  return svd.matrixV().rightCols(M.cols() - rank);
}

/// Weighted closed loop from d to z for a full-order controller.
inline StateSpace close_loop(const GeneralizedPlant & g, const Matrix & Ak, const Matrix & Bk, const Matrix & Ck,
                             const Matrix & Dk)
{
  const Index n = g.n(), nk = Ak.rows();
  StateSpace cl;
  cl.A.resize(n + nk, n + nk);
  cl.A << g.A + g.B2 * Dk * g.C2, g.B2 * Ck, Bk * g.C2, Ak;
  cl.B.resize(n + nk, g.m1());
  cl.B << g.B1 + g.B2 * Dk * g.D21, Bk * g.D21;
  cl.C.resize(g.p1(), n + nk);
  cl.C << g.C1 + g.D12 * Dk * g.C2, g.D12 * Ck;
  cl.D = g.D11 + g.D12 * Dk * g.D21;
  return cl;
}

/// Bounded-real matrix [A'X + XA, XB, C'; B'X, -gI, D'; C, D, -gI].
inline Matrix bounded_real(const StateSpace & s, const Matrix & X, double gamma)
{
  const Index n = s.A.rows(), m = s.B.cols(), p = s.C.rows();
  Matrix M(n + m + p, n + m + p);
  M.setZero();
  M.topLeftCorner(n, n)   = s.A.transpose() * X + X * s.A;
  M.block(0, n, n, m)     = X * s.B;
  M.block(n, 0, m, n)     = s.B.transpose() * X;
  M.block(0, n + m, n, p) = s.C.transpose();
  M.block(n + m, 0, p, n) = s.C;
  M.block(n, n + m, m, p) = s.D.transpose();
  M.block(n + m, n, p, m) = s.D;
  M.block(n, n, m, m)     = -gamma * Matrix::Identity(m, m);
  M.block(n + m, n + m, p, p) = -gamma * Matrix::Identity(p, p);
  return 0.5 * (M + M.transpose());
}

/**
 * @brief H-infinity norm estimate by dense frequency sampling.
 *
 * Largest singular value of C (jwI - A)^{-1} B + D over n_freq log-spaced
 * frequencies in [w_lo, w_hi] * max(1, spectral radius of A).  Returns +inf if
 * A has an eigenvalue with non-negative real part.
 */
inline double hinf_norm_sampled(const StateSpace & s, Index n_freq = 400, double w_lo = 1e-4, double w_hi = 1e4)
{
  Eigen::EigenSolver<Matrix> es(s.A, false);
  if (s.A.rows() > 0 && es.eigenvalues().real().maxCoeff() >= 0.0) { return std::numeric_limits<double>::infinity(); }
  const double scale = s.A.rows() > 0 ? std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff()) : 1.0;
  using CMatrix      = Eigen::MatrixXcd;
  const CMatrix A    = s.A.cast<std::complex<double>>();
  const CMatrix B    = s.B.cast<std::complex<double>>();
  const CMatrix C    = s.C.cast<std::complex<double>>();
  const CMatrix D    = s.D.cast<std::complex<double>>();
  double best        = 0.0;
  for (Index i = 0; i < n_freq; ++i) {
    const double e = n_freq > 1 ? static_cast<double>(i) / static_cast<double>(n_freq - 1) : 0.0;
    const double w = scale * w_lo * std::pow(w_hi / w_lo, e);
    CMatrix M      = -A;
    M.diagonal().array() += std::complex<double>(0.0, w);
    const CMatrix G = C * M.partialPivLu().solve(B) + D;
    Eigen::JacobiSVD<CMatrix> svd(G);
    if (svd.singularValues().size() > 0) { best = std::max(best, svd.singularValues()(0)); }
  }
  return best;
}

struct SynthesisLogEntry
{
  double gamma      = 0.0;
  bool feasible     = false;
  int iterations    = 0;
  double cpu_seconds = 0.0;
};

struct HinfOptions
{
  /// fixed target level; unset means bisection on gamma
  std::optional<double> gamma;
  double rel_width   = 1e-2;
  double gamma_start = 1.0;
  double gamma_max   = 1e8;
  int max_bisection  = 80;
  /// [R I; I S] > coupling_margin I
  double coupling_margin = 1e-4;
  /// box bound on the entries of R and S
  double lyapunov_bound = 1e4;
  /// box bound on the controller entries during reconstruction
  double controller_bound = 1e6;
  int max_newton = 400;
};

struct VertexControllerSet
{
  ParamPolytope polytope;
  std::vector<Matrix> Ak, Bk, Ck, Dk;
  double gamma = std::numeric_limits<double>::infinity();
  /// closed-loop Lyapunov matrix, 2k x 2k
  Matrix lyapunov;
  Matrix R, S;
  PerformanceWeights weights;
  bool stagnated = false;
  std::vector<SynthesisLogEntry> log;
  double cpu_seconds = 0.0;

  Index n_vertices() const noexcept { return static_cast<Index>(Ak.size()); }
  Index order() const noexcept { return Ak.empty() ? 0 : Ak.front().rows(); }
};

struct ScheduledController
{
  Matrix Ak, Bk, Ck, Dk;
};

/**
 * @brief Convex blend of the vertex controllers.
 *
 * @throws WeightError unless lambda >= -1e-10 entrywise, |sum - 1| <= 1e-10
 *         and the length equals the vertex count.
 */
inline ScheduledController scheduled_gain(const VertexControllerSet & ctrl, const Vector & lambda)
{
  if (lambda.size() != ctrl.n_vertices()) { throw WeightError("scheduled_gain: weight vector has wrong length"); }
  if (!lambda.allFinite() || lambda.minCoeff() < -1e-10 || std::abs(lambda.sum() - 1.0) > 1e-10) {
    throw WeightError("scheduled_gain: weights must be non-negative and sum to one");
  }
  ScheduledController K;
  K.Ak = Matrix::Zero(ctrl.Ak[0].rows(), ctrl.Ak[0].cols());
  K.Bk = Matrix::Zero(ctrl.Bk[0].rows(), ctrl.Bk[0].cols());
  K.Ck = Matrix::Zero(ctrl.Ck[0].rows(), ctrl.Ck[0].cols());
  K.Dk = Matrix::Zero(ctrl.Dk[0].rows(), ctrl.Dk[0].cols());
  for (Index i = 0; i < lambda.size(); ++i) {
    const double l = lambda(i);
    if (l == 0.0) { continue; }
    const auto s = static_cast<std::size_t>(i);
    K.Ak += l * ctrl.Ak[s];
    K.Bk += l * ctrl.Bk[s];
    K.Ck += l * ctrl.Ck[s];
    K.Dk += l * ctrl.Dk[s];
  }
  return K;
}

struct StabilityCertificate
{
  bool ok = false;
  Matrix X;
  /// largest eigenvalue of A_i' X + X A_i over all vertices (negative when ok)
  double max_residual = std::numeric_limits<double>::infinity();
};

/**
 * @brief Common quadratic Lyapunov matrix X > I with A_i' X + X A_i < 0 for all i.
 *
 * `ok` is set only if the a-posteriori eigenvalue check gives
 * max_residual < -residual_margin.
 */
inline StabilityCertificate quadratic_stability_certificate(const std::vector<Matrix> & vertices,
                                                            double residual_margin = 1e-8, double bound = 1e6)
{
  StabilityCertificate cert;
  require_dim(!vertices.empty(), "quadratic_stability_certificate: no vertices");
  const Index n = vertices.front().rows();
  for (const auto & A : vertices) {
    require_dim(A.rows() == n && A.cols() == n, "quadratic_stability_certificate: matrices must be square, same size");
  }
  // dedupe identical vertices
  std::vector<Matrix> uniq;
  for (const auto & A : vertices) {
    bool seen = false;
    for (const auto & U : uniq) { seen = seen || (U - A).cwiseAbs().maxCoeff() == 0.0; }
    if (!seen) { uniq.push_back(A); }
  }
  const double scale = [&] {
    double s = 0.0;
    for (const auto & A : uniq) { s = std::max(s, A.cwiseAbs().maxCoeff()); }
    return std::max(1.0, s);
  }();

  SdpProblem p;
  const SymVar X = p.add_symmetric(n, "X");
  p.bound        = bound;
  p.add_lmi([X](const Vector & x) { return SdpProblem::value(x, X); }, LmiSense::positive, 1.0, "X>I");
  for (const auto & A0 : uniq) {
    const Matrix A = A0 / scale;
    p.add_lmi(
        [A, X](const Vector & x) {
          const Matrix Xv = SdpProblem::value(x, X);
          return Matrix(A.transpose() * Xv + Xv * A);
        },
        LmiSense::negative, 2.0 * residual_margin / scale, "lyapunov");
  }
  SdpOptions o;
  o.max_newton = 600;
  Vector x;
  try {
    const SdpSolution sol = solve_sdp(p, o);
    x                     = sol.x;
    if (sol.status != SdpStatus::feasible) {
      cert.X = SdpProblem::value(sol.x, X);
    }
  } catch (const IterationLimit &) {
    return cert;
  } catch (const NumericalBreakdown &) {
    return cert;
  }
  cert.X            = SdpProblem::value(x, X);
  cert.max_residual = -std::numeric_limits<double>::infinity();
  for (const auto & A : vertices) {
    const Matrix Rm = A.transpose() * cert.X + cert.X * A;
    cert.max_residual =
        std::max(cert.max_residual, Eigen::SelfAdjointEigenSolver<Matrix>(Rm, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff());
  }
  const double xmin = Eigen::SelfAdjointEigenSolver<Matrix>(cert.X, Eigen::EigenvaluesOnly).eigenvalues()(0);
  cert.ok           = xmin > 0.0 && cert.max_residual < -residual_margin;
  return cert;
}

namespace detail {

inline double cpu_now() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

struct RsResult
{
  bool feasible = false;
  bool stalled  = false;
  Matrix R, S;
  int iterations = 0;
};

/// Projected vertex LMIs with common (R, S) at a fixed gamma.
inline RsResult solve_rs(const std::vector<GeneralizedPlant> & plants, double gamma, const HinfOptions & o,
                         bool centre, const std::optional<Vector> & warm)
{
  const GeneralizedPlant & g0 = plants.front();
  const Index n = g0.n(), m1 = g0.m1(), p1 = g0.p1();
  Matrix BD(g0.m2(), n + p1);
  BD << g0.B2.transpose(), g0.D12.transpose();
  Matrix CD(g0.p2(), n + m1);
  CD << g0.C2, g0.D21;
  const Matrix NR = null_space(BD);
  const Matrix NS = null_space(CD);

  SdpProblem p;
  const SymVar R = p.add_symmetric(n, "R");
  const SymVar S = p.add_symmetric(n, "S");
  p.bound        = o.lyapunov_bound;

  for (const auto & g : plants) {
    if (NR.cols() > 0) {
      Matrix T = Matrix::Zero(n + p1 + m1, NR.cols() + m1);
      T.topLeftCorner(n + p1, NR.cols()) = NR;
      T.bottomRightCorner(m1, m1)        = Matrix::Identity(m1, m1);
      p.add_lmi(
          [g, T, R, gamma, n, p1, m1](const Vector & x) {
            const Matrix Rv = SdpProblem::value(x, R);
            Matrix M        = Matrix::Zero(n + p1 + m1, n + p1 + m1);
            M.topLeftCorner(n, n)         = g.A * Rv + Rv * g.A.transpose();
            M.block(0, n, n, p1)          = Rv * g.C1.transpose();
            M.block(n, 0, p1, n)          = g.C1 * Rv;
            M.block(0, n + p1, n, m1)     = g.B1;
            M.block(n + p1, 0, m1, n)     = g.B1.transpose();
            M.block(n, n, p1, p1)         = -gamma * Matrix::Identity(p1, p1);
            M.block(n, n + p1, p1, m1)    = g.D11;
            M.block(n + p1, n, m1, p1)    = g.D11.transpose();
            M.block(n + p1, n + p1, m1, m1) = -gamma * Matrix::Identity(m1, m1);
            return Matrix(T.transpose() * M * T);
          },
          LmiSense::negative, 0.0, "R-vertex");
    }
    if (NS.cols() > 0) {
      Matrix T = Matrix::Zero(n + m1 + p1, NS.cols() + p1);
      T.topLeftCorner(n + m1, NS.cols()) = NS;
      T.bottomRightCorner(p1, p1)        = Matrix::Identity(p1, p1);
      p.add_lmi(
          [g, T, S, gamma, n, p1, m1](const Vector & x) {
            const Matrix Sv = SdpProblem::value(x, S);
            Matrix M        = Matrix::Zero(n + m1 + p1, n + m1 + p1);
            M.topLeftCorner(n, n)         = g.A.transpose() * Sv + Sv * g.A;
            M.block(0, n, n, m1)          = Sv * g.B1;
            M.block(n, 0, m1, n)          = g.B1.transpose() * Sv;
            M.block(0, n + m1, n, p1)     = g.C1.transpose();
            M.block(n + m1, 0, p1, n)     = g.C1;
            M.block(n, n, m1, m1)         = -gamma * Matrix::Identity(m1, m1);
            M.block(n, n + m1, m1, p1)    = g.D11.transpose();
            M.block(n + m1, n, p1, m1)    = g.D11;
            M.block(n + m1, n + m1, p1, p1) = -gamma * Matrix::Identity(p1, p1);
            return Matrix(T.transpose() * M * T);
          },
          LmiSense::negative, 0.0, "S-vertex");
    }
  }
  p.add_lmi(
      [R, S, n](const Vector & x) {
        Matrix M(2 * n, 2 * n);
        M << SdpProblem::value(x, R), Matrix::Identity(n, n), Matrix::Identity(n, n), SdpProblem::value(x, S);
        return M;
      },
      LmiSense::positive, o.coupling_margin, "coupling");

  SdpOptions so;
  so.max_newton       = o.max_newton;
  so.stop_at_feasible = !centre;
  so.gap_tol          = centre ? 1e-3 : 1e-7;
  if (warm && warm->size() == p.n_vars()) { so.x0 = warm; }
  RsResult out;
  try {
    const SdpSolution sol = solve_sdp(p, so);
    out.iterations        = sol.newton_iterations;
    out.feasible          = sol.status == SdpStatus::feasible;
    if (out.feasible) {
      out.R = SdpProblem::value(sol.x, R);
      out.S = SdpProblem::value(sol.x, S);
    }
  } catch (const IterationLimit &) {
    out.stalled    = true;
    out.iterations = o.max_newton;
  }
  return out;
}

inline Vector pack_rs(const Matrix & R, const Matrix & S)
{
  const Index n = R.rows();
  Vector x(n * (n + 1));
  Index c = 0;
  for (const Matrix * M : {&R, &S}) {
    for (Index j = 0; j < n; ++j) {
      for (Index i = 0; i <= j; ++i) { x(c++) = (*M)(i, j); }
    }
  }
  return x;
}

/**
 * Closed-loop Lyapunov matrix [S N; N' X22] whose inverse has leading block R.
 * N M' = I - S R is split by a balanced SVD factorization, which keeps the
 * matrix far better conditioned than the choice M = I.
 */
inline Matrix closed_loop_lyapunov(const Matrix & R, const Matrix & S)
{
  const Index n  = R.rows();
  const Matrix I = Matrix::Identity(n, n);
  Eigen::JacobiSVD<Matrix> svd(I - S * R, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector sq = svd.singularValues().cwiseSqrt();
  const Matrix N  = svd.matrixU() * sq.asDiagonal();
  // X22 = -N' R M^{-T},  M^{-T} = V diag(1/sqrt(sigma))
  const Matrix MinvT = svd.matrixV() * sq.cwiseInverse().asDiagonal();
  Matrix X22         = -N.transpose() * R * MinvT;
  X22                = 0.5 * (X22 + X22.transpose());
  Matrix X(2 * n, 2 * n);
  X << S, N, N.transpose(), X22;
  return 0.5 * (X + X.transpose());
}

struct VertexController
{
  bool ok = false;
  Matrix Ak, Bk, Ck, Dk;
};

/// Minimum-norm controller satisfying the bounded-real LMI with the Lyapunov matrix fixed.
inline VertexController reconstruct_vertex(const GeneralizedPlant & g, const Matrix & X, double gamma,
                                           const HinfOptions & o)
{
  const Index n = g.n(), p = g.m2(), q = g.p2();
  SdpProblem prob;
  const Index base = prob.add_free(n * n + n * q + p * n + p * q, "Omega");
  prob.bound       = o.controller_bound;
  auto unpack      = [n, p, q, base](const Vector & x, Matrix & Ak, Matrix & Bk, Matrix & Ck, Matrix & Dk) {
    Index c = base;
    Ak.resize(n, n);
    Bk.resize(n, q);
    Ck.resize(p, n);
    Dk.resize(p, q);
    for (Matrix * M : {&Ak, &Bk, &Ck, &Dk}) {
      for (Index j = 0; j < M->cols(); ++j) {
        for (Index i = 0; i < M->rows(); ++i) { (*M)(i, j) = x(c++); }
      }
    }
  };
  auto brl = [g, X, gamma, unpack](const Vector & x) {
    Matrix Ak, Bk, Ck, Dk;
    unpack(x, Ak, Bk, Ck, Dk);
    return bounded_real(close_loop(g, Ak, Bk, Ck, Dk), X, gamma);
  };

  VertexController out;
  SdpOptions so;
  so.max_newton       = o.max_newton;
  so.stop_at_feasible = false;
  so.gap_tol          = 1e-4;
  double t_star       = 0.0;
  Vector x0;
  try {
    prob.add_lmi(brl, LmiSense::negative, 0.0, "bounded-real");
    const SdpSolution s1 = solve_sdp(prob, so);
    if (s1.status != SdpStatus::feasible) { return out; }
    t_star = s1.t;
    x0     = s1.x;
  } catch (const IterationLimit &) {
    return out;
  }

  SdpProblem prob2;
  prob2.add_free(prob.n_vars(), "Omega");
  prob2.bound = o.controller_bound;
  prob2.add_lmi(brl, LmiSense::negative, 0.1 * std::abs(t_star), "bounded-real");
  prob2.set_quadratic_objective(Vector::Ones(prob.n_vars()));
  SdpOptions so2;
  so2.max_newton = o.max_newton;
  so2.gap_tol    = 1e-6;
  so2.x0         = x0;
  Vector x       = x0;
  try {
    const SdpSolution s2 = solve_sdp(prob2, so2);
    if (s2.status == SdpStatus::feasible) { x = s2.x; }
  } catch (const IterationLimit &) {
  } catch (const NumericalBreakdown &) {
  }
  unpack(x, out.Ak, out.Bk, out.Ck, out.Dk);
  out.ok = true;
  return out;
}

}  // namespace detail

/**
 * @brief Vertex controllers for the polytopic LPV model over W.
 *
 * With opts.gamma unset, gamma is bisected to relative width opts.rel_width;
 * the returned gamma is the level at which every vertex closed loop passed
 * the bounded-real check with the common Lyapunov matrix.
 *
 * @throws SynthesisInfeasible if the requested (or largest tried) gamma is infeasible.
 */
inline VertexControllerSet synthesize_polytopic_hinf(const AffineLpvModel & model, const ParamPolytope & W,
                                                     const PerformanceWeights & weights = {},
                                                     const HinfOptions & opts = {})
{
  require_dim(W.r == model.r, "synthesize_polytopic_hinf: polytope and model parameter dimensions differ");
  const double cpu0 = detail::cpu_now();
  VertexControllerSet out;
  out.polytope = W;
  out.weights  = weights;

  // unique vertices
  std::vector<Index> map(static_cast<std::size_t>(W.n_vertices()));
  std::vector<Vector> uniq;
  for (Index v = 0; v < W.n_vertices(); ++v) {
    Index found = -1;
    for (std::size_t u = 0; u < uniq.size(); ++u) {
      if ((uniq[u] - W.vertices.col(v)).cwiseAbs().maxCoeff() == 0.0) { found = static_cast<Index>(u); }
    }
    if (found < 0) {
      found = static_cast<Index>(uniq.size());
      uniq.push_back(W.vertices.col(v));
    }
    map[static_cast<std::size_t>(v)] = found;
  }
  std::vector<GeneralizedPlant> plants;
  for (const auto & w : uniq) { plants.push_back(generalized_plant(model.scheduled_A(w), model.Bbar, model.Cbar, weights)); }

  std::optional<Vector> warm;
  auto test = [&](double gamma, bool centre) {
    const double c0 = detail::cpu_now();
    auto res        = detail::solve_rs(plants, gamma, opts, centre, warm);
    out.log.push_back({gamma, res.feasible, res.iterations, detail::cpu_now() - c0});
    if (res.stalled) { out.stagnated = true; }
    return res;
  };

  double lo = 0.0, hi = std::numeric_limits<double>::infinity();
  detail::RsResult best;
  if (opts.gamma) {
    best = test(*opts.gamma, false);
    if (!best.feasible) { throw SynthesisInfeasible("synthesis infeasible at the requested gamma", *opts.gamma); }
    hi = *opts.gamma;
  } else {
    double g = opts.gamma_start;
    auto r   = test(g, false);
    if (r.feasible) {
      hi   = g;
      best = r;
      warm = detail::pack_rs(r.R, r.S);
      for (int it = 0; it < opts.max_bisection; ++it) {
        g *= 0.5;
        auto rr = test(g, false);
        if (!rr.feasible) {
          lo = g;
          break;
        }
        hi   = g;
        best = rr;
        warm = detail::pack_rs(rr.R, rr.S);
        if (g < 1e-12) { break; }
      }
    } else {
      lo = g;
      while (!r.feasible) {
        g *= 2.0;
        if (g > opts.gamma_max) { throw SynthesisInfeasible("no feasible gamma found below gamma_max", lo); }
        r = test(g, false);
        if (!r.feasible) { lo = g; }
      }
      hi   = g;
      best = r;
      warm = detail::pack_rs(r.R, r.S);
    }
    for (int it = 0; it < opts.max_bisection && (hi - lo) > opts.rel_width * hi; ++it) {
      const double mid = 0.5 * (lo + hi);
      auto rr          = test(mid, false);
      if (rr.feasible) {
        hi   = mid;
        best = rr;
        warm = detail::pack_rs(rr.R, rr.S);
      } else {
        lo = mid;
      }
    }
  }

  // recover controllers at the certified level, relaxing gamma if the recovery fails
  for (int attempt = 0; attempt < 6; ++attempt) {
    const double gamma = hi * std::pow(1.0 + opts.rel_width, attempt);
    detail::RsResult rs = best;
    if (attempt > 0) {
      rs = test(gamma, false);
      if (!rs.feasible) { continue; }
    }
    const Matrix X = detail::closed_loop_lyapunov(rs.R, rs.S);
    std::vector<detail::VertexController> vc;
    bool ok = true;
    for (const auto & g : plants) {
      vc.push_back(detail::reconstruct_vertex(g, X, gamma, opts));
      if (!vc.back().ok) {
        ok = false;
        break;
      }
    }
    if (ok) {
      // a-posteriori check of every vertex closed loop
      for (std::size_t u = 0; u < plants.size() && ok; ++u) {
        const Matrix M = bounded_real(close_loop(plants[u], vc[u].Ak, vc[u].Bk, vc[u].Ck, vc[u].Dk), X, gamma);
        ok = Eigen::SelfAdjointEigenSolver<Matrix>(M, Eigen::EigenvaluesOnly).eigenvalues().maxCoeff() < 0.0;
      }
    }
    if (!ok) { continue; }
    out.gamma    = gamma;
    out.R        = rs.R;
    out.S        = rs.S;
    out.lyapunov = X;
    for (Index v = 0; v < W.n_vertices(); ++v) {
      const auto & c = vc[static_cast<std::size_t>(map[static_cast<std::size_t>(v)])];
      out.Ak.push_back(c.Ak);
      out.Bk.push_back(c.Bk);
      out.Ck.push_back(c.Ck);
      out.Dk.push_back(c.Dk);
    }
    out.cpu_seconds = detail::cpu_now() - cpu0;
    return out;
  }
  throw SynthesisInfeasible("controller recovery failed near the certified level", hi);
}

/// Generalized plant frozen at vertex i of the controller's polytope.
inline GeneralizedPlant vertex_plant(const AffineLpvModel & model, const VertexControllerSet & ctrl, Index i)
{
  return generalized_plant(model.scheduled_A(ctrl.polytope.vertices.col(i)), model.Bbar, model.Cbar, ctrl.weights);
}

/// Weighted closed loop frozen at vertex i.
inline StateSpace vertex_closed_loop(const AffineLpvModel & model, const VertexControllerSet & ctrl, Index i)
{
  const auto s = static_cast<std::size_t>(i);
  return close_loop(vertex_plant(model, ctrl, i), ctrl.Ak[s], ctrl.Bk[s], ctrl.Ck[s], ctrl.Dk[s]);
}

/// State matrices of the closed loop at every vertex.
inline std::vector<Matrix> closed_loop_vertices(const AffineLpvModel & model, const VertexControllerSet & ctrl)
{
  std::vector<Matrix> out;
  for (Index i = 0; i < ctrl.n_vertices(); ++i) { out.push_back(vertex_closed_loop(model, ctrl, i).A); }
  return out;
}

}  // namespace lpvgs
