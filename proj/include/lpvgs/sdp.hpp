#pragma once

/**
 * @file
 * @brief Small dense semidefinite programs solved by a log-barrier Newton method.
 *
 * Constraints are affine matrix inequalities F(x) > margin I (or < -margin I).
 * Phase 1 minimizes t subject to F_j(x) + t I > 0 inside the box
 * |x_i| <= bound; a positive lower bound on t from the central-path duality
 * gap certifies infeasibility on that box.  If an objective is set, phase 2
 * minimizes c^T x + 1/2 sum_i d_i x_i^2 from the strictly feasible point.
 *
 * Every accepted solution is re-checked by dense eigensolves.
 */

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "common.hpp"
#include "errors.hpp"

namespace lpvgs {

enum class LmiSense { positive, negative };

/// Symmetric matrix variable stored as its upper triangle, column by column.
struct SymVar
{
  Index offset = 0;
  Index size   = 0;

  Index count() const noexcept { return size * (size + 1) / 2; }
  Index index(Index i, Index j) const noexcept
  {
    if (i > j) { std::swap(i, j); }
    return offset + j * (j + 1) / 2 + i;
  }
};

struct ScalarVar
{
  Index index = 0;
};

/// Affine map from the variable vector to a symmetric matrix.
using AffineMatrixMap = std::function<Matrix(const Vector &)>;

class SdpProblem
{
public:
  struct Block
  {
    std::string label;
    LmiSense sense = LmiSense::positive;
    double margin  = 0.0;
    Index size     = 0;
    /// G(x) = G0 + sum_k x_{idx[k]} Gi[k]; the constraint holds iff G(x) > 0
    Matrix G0;
    std::vector<Index> idx;
    std::vector<Matrix> Gi;
  };

  SymVar add_symmetric(Index size, const std::string & name = {})
  {
    SymVar v{n_vars_, size};
    n_vars_ += v.count();
    names_.push_back(name);
    return v;
  }

  ScalarVar add_scalar(const std::string & name = {})
  {
    names_.push_back(name);
    return ScalarVar{n_vars_++};
  }

  /// Add a block of free (non-symmetric) variables, returned as the first index.
  Index add_free(Index count, const std::string & name = {})
  {
    names_.push_back(name);
    const Index first = n_vars_;
    n_vars_ += count;
    return first;
  }

  Index n_vars() const noexcept { return n_vars_; }

  static Matrix value(const Vector & x, const SymVar & v)
  {
    Matrix M(v.size, v.size);
    for (Index j = 0; j < v.size; ++j) {
      for (Index i = 0; i <= j; ++i) { M(i, j) = M(j, i) = x(v.index(i, j)); }
    }
    return M;
  }

  static double value(const Vector & x, const ScalarVar & s) { return x(s.index); }

  /**
   * @brief Add the constraint map(x) > margin I (positive) or map(x) < -margin I (negative).
   *
   * The map must be affine in x; its coefficients are extracted by evaluating
   * it at zero and at the unit vectors, so all variables must be declared first.
   */
  void add_lmi(const AffineMatrixMap & map, LmiSense sense, double margin = 0.0, const std::string & label = {})
  {
    Vector x     = Vector::Zero(n_vars_);
    Matrix F0    = map(x);
    require_dim(F0.rows() == F0.cols() && F0.rows() > 0, "add_lmi: map must return a square matrix");
    const double sgn = sense == LmiSense::positive ? 1.0 : -1.0;
    Block b;
    b.label  = label;
    b.sense  = sense;
    b.margin = margin;
    b.size   = F0.rows();
    b.G0     = sgn * 0.5 * (F0 + F0.transpose());
    b.G0.diagonal().array() -= margin;
    for (Index i = 0; i < n_vars_; ++i) {
      x(i)           = 1.0;
      const Matrix F = map(x);
      x(i)           = 0.0;
      Matrix Gi      = sgn * 0.5 * ((F - F0) + (F - F0).transpose());
      if (Gi.cwiseAbs().maxCoeff() > 0.0) {
        b.idx.push_back(i);
        b.Gi.push_back(std::move(Gi));
      }
    }
    blocks_.push_back(std::move(b));
  }

  void set_linear_objective(Vector c) { c_ = std::move(c); }
  void set_quadratic_objective(Vector d) { d_ = std::move(d); }
  bool has_objective() const noexcept { return c_.size() > 0 || d_.size() > 0; }

  double objective(const Vector & x) const
  {
    double f = 0.0;
    if (c_.size() > 0) { f += c_.dot(x); }
    if (d_.size() > 0) { f += 0.5 * (d_.array() * x.array().square()).sum(); }
    return f;
  }

  const std::vector<Block> & blocks() const noexcept { return blocks_; }
  const Vector & linear_objective() const noexcept { return c_; }
  const Vector & quadratic_objective() const noexcept { return d_; }

  /// Box bound |x_i| <= bound keeping the feasibility problem bounded.
  double bound = 1e4;

  /// G_j(x) for block j
  Matrix block_value(std::size_t j, const Vector & x) const
  {
    const Block & b = blocks_[j];
    Matrix G        = b.G0;
    for (std::size_t k = 0; k < b.idx.size(); ++k) { G += x(b.idx[k]) * b.Gi[k]; }
    return G;
  }

private:
  Index n_vars_ = 0;
  std::vector<std::string> names_;
  std::vector<Block> blocks_;
  Vector c_;
  Vector d_;
};

enum class SdpStatus { feasible, infeasible };

struct SdpOptions
{
  /// stop phase 1 as soon as a verified strictly feasible point is found
  bool stop_at_feasible = true;
  /// relative duality gap at which a barrier sequence is considered converged
  double gap_tol = 1e-7;
  /// barrier parameter growth per outer iteration
  double barrier_growth = 10.0;
  int max_newton        = 400;
  std::optional<Vector> x0;
};

struct SdpSolution
{
  SdpStatus status = SdpStatus::infeasible;
  Vector x;
  /// phase-1 value: the smallest t with G_j(x) + t I > 0 found (negative when feasible)
  double t = std::numeric_limits<double>::infinity();
  /// certified lower bound on the optimal t (on the bound box)
  double t_lower = -std::numeric_limits<double>::infinity();
  /// minimum eigenvalue of each G_j at x
  std::vector<double> block_min_eig;
  double objective = 0.0;
  int newton_iterations = 0;
  /// the Newton budget ran out after a verified feasible point was found
  bool budget_exhausted = false;
};

namespace detail {

class BarrierSolver
{
public:
  BarrierSolver(const SdpProblem & p, bool phase1) : p_(p), phase1_(phase1), n_(p.n_vars() + (phase1 ? 1 : 0))
  {
    theta_ = 2.0 * static_cast<double>(p.n_vars());
    for (const auto & b : p.blocks()) { theta_ += static_cast<double>(b.size); }
  }

  double theta() const noexcept { return theta_; }

  /// Barrier value; +inf outside the domain.
  double value(const Vector & z, double tau) const
  {
    double phi = 0.0;
    for (std::size_t j = 0; j < p_.blocks().size(); ++j) {
      Eigen::LLT<Matrix> llt(shifted(j, z));
      if (llt.info() != Eigen::Success) { return std::numeric_limits<double>::infinity(); }
      const Matrix & L = llt.matrixLLT();
      for (Index i = 0; i < L.rows(); ++i) {
        if (!(L(i, i) > 0.0)) { return std::numeric_limits<double>::infinity(); }
        phi -= 2.0 * std::log(L(i, i));
      }
    }
    const double B = p_.bound;
    for (Index i = 0; i < p_.n_vars(); ++i) {
      const double a = B - z(i), b = B + z(i);
      if (a <= 0.0 || b <= 0.0) { return std::numeric_limits<double>::infinity(); }
      phi -= std::log(a) + std::log(b);
    }
    return phi + tau * objective(z);
  }

  double objective(const Vector & z) const
  {
    if (phase1_) { return z(n_ - 1); }
    return p_.objective(z);
  }

  /// Gradient and Hessian of the barrier function; false if z is outside the domain.
  bool derivatives(const Vector & z, double tau, Vector & g, Matrix & H) const
  {
    g.setZero(n_);
    H.setZero(n_, n_);
    const Index tidx = n_ - 1;
    for (std::size_t j = 0; j < p_.blocks().size(); ++j) {
      const auto & b = p_.blocks()[j];
      Eigen::LLT<Matrix> llt(shifted(j, z));
      if (llt.info() != Eigen::Success) { return false; }
      const Index s = b.size;
      Matrix Linv   = llt.matrixL().solve(Matrix::Identity(s, s));
      const Index nk = static_cast<Index>(b.idx.size()) + (phase1_ ? 1 : 0);
      Matrix Wv(s * s, nk);
      for (std::size_t k = 0; k < b.idx.size(); ++k) {
        Matrix Wk = Linv * b.Gi[k] * Linv.transpose();
        g(b.idx[k]) -= Wk.trace();
        Wv.col(static_cast<Index>(k)) = Eigen::Map<const Vector>(Wk.data(), s * s);
      }
      if (phase1_) {
        const Matrix Wt = Linv * Linv.transpose();
        g(tidx) -= Wt.trace();
        Wv.col(nk - 1) = Eigen::Map<const Vector>(Wt.data(), s * s);
      }
      const Matrix Hb = Wv.transpose() * Wv;
      for (Index a = 0; a < nk; ++a) {
        const Index ia = (phase1_ && a == nk - 1) ? tidx : b.idx[static_cast<std::size_t>(a)];
        for (Index c = 0; c < nk; ++c) {
          const Index ic = (phase1_ && c == nk - 1) ? tidx : b.idx[static_cast<std::size_t>(c)];
          H(ia, ic) += Hb(a, c);
        }
      }
    }
    const double B = p_.bound;
    for (Index i = 0; i < p_.n_vars(); ++i) {
      const double a = B - z(i), c = B + z(i);
      if (a <= 0.0 || c <= 0.0) { return false; }
      g(i) += 1.0 / a - 1.0 / c;
      H(i, i) += 1.0 / (a * a) + 1.0 / (c * c);
    }
    if (phase1_) {
      g(tidx) += tau;
    } else {
      const Vector & c = p_.linear_objective();
      const Vector & d = p_.quadratic_objective();
      if (c.size() > 0) { g.head(c.size()) += tau * c; }
      if (d.size() > 0) {
        g.head(d.size()) += tau * d.cwiseProduct(z.head(d.size()));
        H.diagonal().head(d.size()) += tau * d;
      }
    }
    return true;
  }

  Matrix shifted(std::size_t j, const Vector & z) const
  {
    Matrix G = p_.block_value(j, z);
    if (phase1_) { G.diagonal().array() += z(n_ - 1); }
    return G;
  }

  /// One damped Newton step. Returns the Newton decrement squared, or -1 if stalled.
  double newton_step(Vector & z, double tau) const
  {
    Vector g;
    Matrix H;
    if (!derivatives(z, tau, g, H)) { throw NumericalBreakdown("solve_sdp: iterate left the barrier domain"); }
    Eigen::LDLT<Matrix> ldlt(H);
    Vector dz = ldlt.solve(-g);
    if (ldlt.info() != Eigen::Success || !dz.allFinite()) {
      Matrix Hr = H;
      Hr.diagonal().array() += 1e-10 * (1.0 + H.diagonal().cwiseAbs().maxCoeff());
      dz = Hr.ldlt().solve(-g);
      if (!dz.allFinite()) { throw NumericalBreakdown("solve_sdp: singular Newton system"); }
    }
    const double dec2 = -g.dot(dz);
    if (!(dec2 > 0.0)) { return 0.0; }
    const double phi0 = value(z, tau);
    double alpha      = 1.0;
    for (int ls = 0; ls < 60; ++ls) {
      const Vector zn  = z + alpha * dz;
      const double phi = value(zn, tau);
      if (phi <= phi0 - 0.25 * alpha * dec2) {
        z = zn;
        return dec2;
      }
      alpha *= 0.5;
    }
    return -1.0;
  }

private:
  const SdpProblem & p_;
  bool phase1_;
  Index n_;
  double theta_ = 0.0;
};

inline double min_eig(const Matrix & G)
{
  Eigen::SelfAdjointEigenSolver<Matrix> es(G, Eigen::EigenvaluesOnly);
  return es.eigenvalues()(0);
}

}  // namespace detail

/// Minimum eigenvalue of every constraint block at x (>= 0 means satisfied with margin).
inline std::vector<double> verify_sdp(const SdpProblem & prob, const Vector & x)
{
  std::vector<double> out;
  for (std::size_t j = 0; j < prob.blocks().size(); ++j) { out.push_back(detail::min_eig(prob.block_value(j, x))); }
  return out;
}

/**
 * @brief Solve the SDP.
 *
 * Returns `feasible` with a verified strictly feasible (and, with an
 * objective, near-optimal) x, or `infeasible` when the phase-1 lower bound on
 * t is positive.
 *
 * If the Newton budget runs out after a verified feasible point is known, that
 * point is returned with `budget_exhausted` set.
 *
 * @throws IterationLimit if neither could be established within the Newton budget.
 * @throws NumericalBreakdown on loss of positive definiteness in the Newton system.
 */
inline SdpSolution solve_sdp(const SdpProblem & prob, const SdpOptions & opts = {})
{
  const Index n = prob.n_vars();
  SdpSolution sol;
  Vector x = opts.x0 ? *opts.x0 : Vector::Zero(n);
  require_dim(x.size() == n, "solve_sdp: x0 dimension mismatch");
  const double B = prob.bound;
  x = x.cwiseMax(-0.9 * B).cwiseMin(0.9 * B);

  // ---------- phase 1
  detail::BarrierSolver p1(prob, true);
  double worst = 0.0;
  for (std::size_t j = 0; j < prob.blocks().size(); ++j) {
    worst = std::max(worst, -detail::min_eig(prob.block_value(j, x)));
  }
  Vector z(n + 1);
  z.head(n) = x;
  z(n)      = worst + 1.0;
  double tau = 1.0 / std::max(1.0, std::abs(z(n)));
  int newton = 0;

  auto verified = [&](const Vector & xv) {
    const auto eig = verify_sdp(prob, xv);
    for (double e : eig) {
      if (!(e > 0.0)) { return false; }
    }
    return true;
  };

  bool feasible   = false;
  bool budget_hit = false;
  for (;;) {
    // centering
    for (;;) {
      if (newton >= opts.max_newton) {
        if (z(n) < 0.0 && verified(z.head(n))) {
          budget_hit = true;
          break;
        }
        throw IterationLimit("solve_sdp: Newton budget exhausted in phase 1 (t = " + std::to_string(z(n)) + ")");
      }
      const double dec2 = p1.newton_step(z, tau);
      ++newton;
      if (opts.stop_at_feasible && z(n) < 0.0 && verified(z.head(n))) {
        feasible = true;
        break;
      }
      if (dec2 >= 0.0 && dec2 < 1e-8) { break; }
      if (dec2 < 0.0) { break; }
    }
    if (budget_hit) {
      feasible = true;
      break;
    }
    if (feasible) { break; }
    const double gap = p1.theta() / tau;
    sol.t            = z(n);
    sol.t_lower      = std::max(sol.t_lower, z(n) - gap);
    if (sol.t_lower > 0.0) {
      sol.status            = SdpStatus::infeasible;
      sol.x                 = z.head(n);
      sol.block_min_eig     = verify_sdp(prob, sol.x);
      sol.newton_iterations = newton;
      return sol;
    }
    if (gap <= opts.gap_tol * std::max(1.0, std::abs(z(n)))) {
      feasible = z(n) < 0.0 && verified(z.head(n));
      if (!feasible) {
        sol.status            = SdpStatus::infeasible;
        sol.x                 = z.head(n);
        sol.block_min_eig     = verify_sdp(prob, sol.x);
        sol.newton_iterations = newton;
        return sol;
      }
      break;
    }
    tau *= opts.barrier_growth;
  }
  x     = z.head(n);
  sol.t = z(n);

  // ---------- phase 2
  if (prob.has_objective()) {
    detail::BarrierSolver p2(prob, false);
    double tau2 = 1.0;
    for (;;) {
      for (;;) {
        if (newton >= opts.max_newton) {
          budget_hit = true;
          break;
        }
        const double dec2 = p2.newton_step(x, tau2);
        ++newton;
        if (dec2 < 1e-8) { break; }
      }
      if (budget_hit || p2.theta() / tau2 <= opts.gap_tol * (1.0 + std::abs(prob.objective(x)))) { break; }
      tau2 *= opts.barrier_growth;
    }
  }

  sol.x             = x;
  sol.block_min_eig = verify_sdp(prob, x);
  sol.objective     = prob.objective(x);
  sol.newton_iterations = newton;
  sol.budget_exhausted  = budget_hit;
  sol.status        = verified(x) ? SdpStatus::feasible : SdpStatus::infeasible;
  if (sol.status == SdpStatus::infeasible) {
    throw NumericalBreakdown("solve_sdp: final iterate failed a-posteriori verification");
  }
  return sol;
}

}  // namespace lpvgs
