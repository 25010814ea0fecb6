#pragma once

/**
 * @file
 * @brief Dense two-phase primal simplex with Bland's rule.
 *
 * Intended for the small feasibility problems that arise in polytope
 * membership (a few rows, up to a few hundred columns).
 */

#include <Eigen/Core>

#include <cmath>
#include <limits>
#include <vector>

#include "common.hpp"

namespace lpvgs {

enum class LpStatus { optimal, infeasible, unbounded, iteration_limit };

struct LpOptions
{
  double pivot_tol       = 1e-11;
  /// phase-1 objective (sum of artificials) above which the problem is infeasible
  double feas_tol        = 1e-9;
  std::size_t max_pivots = 100000;
  /// stop after phase 1 (feasibility only)
  bool phase1_only = false;
};

struct LpResult
{
  LpStatus status = LpStatus::infeasible;
  Vector x;
  double objective = std::numeric_limits<double>::quiet_NaN();
  /// optimal phase-1 value: l1 norm of the residual of the best point found
  double infeasibility = std::numeric_limits<double>::infinity();
};

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Tableau
{
public:
  Tableau(const Matrix & A, const Vector & b) : m_(A.rows()), n_(A.cols()), T_(A.rows() + 1, A.cols() + A.rows() + 1)
  {
    T_.setZero();
    basis_.resize(static_cast<std::size_t>(m_));
    for (Index i = 0; i < m_; ++i) {
      const double s          = b(i) < 0.0 ? -1.0 : 1.0;
      T_.row(i).head(n_)      = s * A.row(i);
      T_(i, n_ + i)           = 1.0;
      T_(i, rhs())            = s * b(i);
      basis_[static_cast<std::size_t>(i)] = n_ + i;
    }
  }

  Index rhs() const { return n_ + m_; }

  /// Load reduced costs for objective c (over all n + m columns) given the current basis.
  void set_objective(const Vector & c_full)
  {
    T_.row(m_).setZero();
    T_.row(m_).head(n_ + m_) = c_full.transpose();
    for (Index i = 0; i < m_; ++i) {
      const double cb = c_full(basis_[static_cast<std::size_t>(i)]);
      if (cb != 0.0) { T_.row(m_) -= cb * T_.row(i); }
    }
  }

  /// Run Bland-rule pivots over columns [0, n_allowed). Returns status.
  LpStatus optimize(Index n_allowed, const LpOptions & opt, std::size_t & pivots)
  {
    for (;;) {
      Index enter = -1;
      for (Index j = 0; j < n_allowed; ++j) {
        if (T_(m_, j) < -opt.pivot_tol) {
          enter = j;
          break;
        }
      }
      if (enter < 0) { return LpStatus::optimal; }
      Index leave       = -1;
      double best_ratio = std::numeric_limits<double>::infinity();
      for (Index i = 0; i < m_; ++i) {
        const double a = T_(i, enter);
        if (a > opt.pivot_tol) {
          const double ratio = T_(i, rhs()) / a;
          if (ratio < best_ratio - 1e-14
              || (ratio <= best_ratio + 1e-14 && leave >= 0
                  && basis_[static_cast<std::size_t>(i)] < basis_[static_cast<std::size_t>(leave)])) {
            best_ratio = std::min(best_ratio, ratio);
            leave      = i;
          }
        }
      }
      if (leave < 0) { return LpStatus::unbounded; }
      pivot(leave, enter);
      if (++pivots >= opt.max_pivots) { return LpStatus::iteration_limit; }
    }
  }

  void pivot(Index row, Index col)
  {
    T_.row(row) /= T_(row, col);
    for (Index i = 0; i <= m_; ++i) {
      if (i != row) {
        const double f = T_(i, col);
        if (f != 0.0) { T_.row(i) -= f * T_.row(row); }
      }
    }
    T_(row, col)                          = 1.0;
    basis_[static_cast<std::size_t>(row)] = col;
  }

  /// Move artificial variables out of the basis where possible.
  void purge_artificials(double tol)
  {
    for (Index i = 0; i < m_; ++i) {
      if (basis_[static_cast<std::size_t>(i)] < n_) { continue; }
      Index best = -1;
      double mag = tol;
      for (Index j = 0; j < n_; ++j) {
        if (std::abs(T_(i, j)) > mag) {
          mag  = std::abs(T_(i, j));
          best = j;
        }
      }
      if (best >= 0) { pivot(i, best); }
    }
  }

  double objective_value() const { return -T_(m_, rhs()); }

  Vector solution() const
  {
    Vector x = Vector::Zero(n_);
    for (Index i = 0; i < m_; ++i) {
      const Index bi = basis_[static_cast<std::size_t>(i)];
      if (bi < n_) { x(bi) = std::max(0.0, T_(i, rhs())); }
    }
    return x;
  }

private:
  Index m_;
  Index n_;
  RowMatrix T_;
  std::vector<Index> basis_;
};

}  // namespace detail

/**
 * @brief min c^T x subject to A x = b, x >= 0.
 */
inline LpResult solve_lp(const Matrix & A, const Vector & b, const Vector & c, const LpOptions & opt = {})
{
  require_dim(A.rows() == b.size() && A.cols() == c.size(), "solve_lp: dimension mismatch");
  const Index m = A.rows(), n = A.cols();
  detail::Tableau tab(A, b);
  std::size_t pivots = 0;

  Vector c1 = Vector::Zero(n + m);
  c1.tail(m).setOnes();
  tab.set_objective(c1);
  LpResult res;
  const LpStatus s1 = tab.optimize(n + m, opt, pivots);
  res.infeasibility = std::max(0.0, tab.objective_value());
  if (s1 == LpStatus::iteration_limit) {
    res.status = s1;
    return res;
  }
  if (res.infeasibility > opt.feas_tol) {
    res.status = LpStatus::infeasible;
    res.x      = tab.solution();
    return res;
  }
  tab.purge_artificials(opt.pivot_tol * 100.0);
  if (opt.phase1_only) {
    res.status    = LpStatus::optimal;
    res.x         = tab.solution();
    res.objective = c.dot(res.x);
    return res;
  }
  Vector c2 = Vector::Zero(n + m);
  c2.head(n) = c;
  tab.set_objective(c2);
  res.status    = tab.optimize(n, opt, pivots);
  res.x         = tab.solution();
  res.objective = c.dot(res.x);
  return res;
}

/**
 * @brief Feasibility of x in conv(columns of P): exists lambda >= 0, sum = 1, P lambda = x.
 *
 * `tol` bounds the l1 norm of the residual accepted as feasible.
 */
inline bool in_convex_hull(const Matrix & P, const Vector & x, double tol = 1e-9, Vector * lambda = nullptr)
{
  require_dim(P.rows() == x.size(), "in_convex_hull: dimension mismatch");
  if (P.cols() == 0) { return false; }
  const Index r = P.rows(), m = P.cols();
  Matrix A(r + 1, m);
  A.topRows(r) = P;
  A.row(r).setOnes();
  Vector b(r + 1);
  b.head(r) = x;
  b(r)      = 1.0;
  LpOptions o;
  o.feas_tol    = tol;
  o.phase1_only = true;
  const LpResult res = solve_lp(A, b, Vector::Zero(m), o);
  if (lambda != nullptr) { *lambda = res.x; }
  return res.status == LpStatus::optimal;
}

struct HullDistance
{
  /// min over the hull of the infinity-norm distance
  double distance = std::numeric_limits<double>::infinity();
  Vector lambda;
};

/// Infinity-norm distance from x to conv(columns of P) by LP.
inline HullDistance linf_distance_to_hull(const Matrix & P, const Vector & x)
{
  require_dim(P.rows() == x.size(), "linf_distance_to_hull: dimension mismatch");
  const Index r = P.rows(), m = P.cols();
  HullDistance out;
  if (m == 0) { return out; }
  // variables [lambda (m), t, s+ (r), s- (r)]
  const Index nv = m + 1 + 2 * r;
  Matrix A       = Matrix::Zero(2 * r + 1, nv);
  Vector b(2 * r + 1);
  A.topLeftCorner(r, m)       = P;
  A.block(0, m, r, 1).setConstant(-1.0);
  A.block(0, m + 1, r, r)     = Matrix::Identity(r, r);
  A.block(r, 0, r, m)         = P;
  A.block(r, m, r, 1).setConstant(1.0);
  A.block(r, m + 1 + r, r, r) = -Matrix::Identity(r, r);
  A.row(2 * r).head(m).setOnes();
  b.head(r)       = x;
  b.segment(r, r) = x;
  b(2 * r)        = 1.0;
  Vector c  = Vector::Zero(nv);
  c(m)      = 1.0;
  LpOptions o;
  o.feas_tol          = 1e-9;
  const LpResult res  = solve_lp(A, b, c, o);
  if (res.status != LpStatus::optimal) {
    // fall back to the best vertex distance
    double best = std::numeric_limits<double>::infinity();
    Index arg   = 0;
    for (Index j = 0; j < m; ++j) {
      const double dj = (P.col(j) - x).lpNorm<Eigen::Infinity>();
      if (dj < best) {
        best = dj;
        arg  = j;
      }
    }
    out.distance    = best;
    out.lambda      = Vector::Zero(m);
    out.lambda(arg) = 1.0;
    return out;
  }
  out.lambda   = res.x.head(m);
  out.distance = (P * out.lambda - x).lpNorm<Eigen::Infinity>();
  return out;
}

}  // namespace lpvgs
