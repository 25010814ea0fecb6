#pragma once

/**
 * @file
 * @brief Nested POD bases and the two-level affine LPV approximation.
 *
 * With POD modes v_1..v_r the quadratic term is approximated as
 *   A(x) x ~ [A_0 + sum_i rho_i L(v_i)] x,  rho = V_r^T x,
 * and the result is Galerkin-projected onto the (larger) nested basis V_k:
 *   d/dt rhobar = [Abar_0 + sum_{i<=r} rhobar_i Abar_i] rhobar + Bbar u,
 *   Abar_i = V_k^T A_i V_k,  A_i = L(v_i).
 */

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <limits>
#include <optional>
#include <vector>

#include "common.hpp"
#include "sdc.hpp"

namespace lpvgs {

struct PodBasis
{
  /// n x k, orthonormal columns ordered by non-increasing singular value
  Matrix V;
  /// all singular values of the snapshot matrix, non-increasing
  Vector singular_values;
  /// set when fewer than the requested modes were numerically available
  bool rank_deficient = false;

  Index k() const noexcept { return V.cols(); }
  Index n() const noexcept { return V.rows(); }

  /// Leading `r` columns; a valid basis by nesting.
  Matrix leading(Index r) const
  {
    require_dim(r >= 0 && r <= k(), "PodBasis::leading: too many columns requested");
    return V.leftCols(r);
  }

  /// Wrap an externally supplied orthonormal basis (e.g. the identity for exact embeddings).
  static PodBasis from_orthonormal(Matrix V, double tol = 1e-10)
  {
    const Matrix G = V.transpose() * V - Matrix::Identity(V.cols(), V.cols());
    if (G.size() > 0 && G.cwiseAbs().maxCoeff() > tol) {
      throw DimensionError("PodBasis::from_orthonormal: columns are not orthonormal");
    }
    PodBasis b;
    b.V               = std::move(V);
    b.singular_values = Vector::Zero(0);
    return b;
  }
};

/**
 * @brief Leading `k` left singular vectors of the snapshot matrix.
 *
 * Sign convention: the largest-magnitude entry of every mode is positive.
 * If the numerical rank is below `k`, the basis of the attained rank is
 * returned with `rank_deficient` set.
 */
inline PodBasis pod_basis(const Matrix & S, Index k)
{
  require_dim(k >= 1 && k <= std::min(S.rows(), S.cols()), "pod_basis: k must satisfy 1 <= k <= min(n, N)");
  Eigen::BDCSVD<Matrix> svd(S, Eigen::ComputeThinU);
  const Vector & sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0.0) { throw RankDeficient("pod_basis: snapshot matrix is zero"); }

  const double thresh = sv(0) * static_cast<double>(std::max(S.rows(), S.cols()))
                        * std::numeric_limits<double>::epsilon();
  Index rank = 0;
  while (rank < sv.size() && sv(rank) > thresh) { ++rank; }

  PodBasis b;
  b.singular_values = sv;
  const Index kk    = std::min(k, rank);
  b.rank_deficient  = kk < k;
  b.V               = svd.matrixU().leftCols(kk);
  for (Index j = 0; j < kk; ++j) {
    Index imax;
    b.V.col(j).cwiseAbs().maxCoeff(&imax);
    if (b.V(imax, j) < 0.0) { b.V.col(j) *= -1.0; }
  }
  return b;
}

/// rho = V^T x
inline Vector encode(const Matrix & V, const Vector & x)
{
  require_dim(x.size() == V.rows(), "encode: dimension mismatch");
  return V.transpose() * x;
}

/// x = V rho
inline Vector decode(const Matrix & V, const Vector & rho)
{
  require_dim(rho.size() == V.cols(), "decode: dimension mismatch");
  return V * rho;
}

/**
 * @brief Reduced affine LPV model of order k with r scheduling parameters.
 */
struct AffineLpvModel
{
  Index r = 0;
  Index k = 0;
  /// Abar[0] .. Abar[r], each k x k
  std::vector<Matrix> Abar;
  Matrix Bbar;
  Matrix Cbar;
  Matrix V_r;
  Matrix V_k;
  /// A_1 .. A_r in full coordinates, kept when n is below the storage cap
  std::optional<std::vector<Matrix>> full_Ai;
  Vector singular_values;

  Index p() const noexcept { return Bbar.cols(); }
  Index q() const noexcept { return Cbar.rows(); }
  Index n() const noexcept { return V_k.rows(); }

  /// Abar_0 + sum_i rho_i Abar_i for a parameter vector of length r
  Matrix scheduled_A(const Vector & rho) const
  {
    require_dim(rho.size() == r, "scheduled_A: parameter dimension mismatch");
    Matrix A = Abar[0];
    for (Index i = 0; i < r; ++i) { A += rho(i) * Abar[static_cast<std::size_t>(i + 1)]; }
    return A;
  }
};

struct LpvBuildOptions
{
  /// store full-order A_i only when n does not exceed this
  Index full_storage_cap = 512;
};

/**
 * @brief Assemble the affine LPV approximation from a nested POD basis.
 *
 * @throws ParameterOrderError if r > k.
 */
inline AffineLpvModel build_affine_lpv(const QuadraticSystem & sys, const PodBasis & basis, Index r, Index k,
                                       const LpvBuildOptions & opts = {})
{
  if (r > k) { throw ParameterOrderError("build_affine_lpv: r must not exceed k"); }
  require_dim(r >= 1 && k <= basis.k(), "build_affine_lpv: need 1 <= r <= k <= basis.k");
  require_dim(basis.n() == sys.n(), "build_affine_lpv: basis and system dimensions differ");

  AffineLpvModel m;
  m.r   = r;
  m.k   = k;
  m.V_k = basis.V.leftCols(k);
  m.V_r = m.V_k.leftCols(r);
  m.singular_values = basis.singular_values;

  m.Abar.reserve(static_cast<std::size_t>(r + 1));
  m.Abar.push_back(m.V_k.transpose() * sys.A0() * m.V_k);
  const bool store = sys.n() <= opts.full_storage_cap;
  if (store) { m.full_Ai.emplace(); }
  for (Index i = 0; i < r; ++i) {
    Matrix Ai = sys.Q().coefficient(m.V_r.col(i));
    m.Abar.push_back(m.V_k.transpose() * Ai * m.V_k);
    if (store) { m.full_Ai->push_back(std::move(Ai)); }
  }
  m.Bbar = m.V_k.transpose() * sys.B();
  m.Cbar = sys.C() * m.V_k;
  return m;
}

/// [Abar_0 + sum_{i<=r} rhobar_i Abar_i] rhobar + Bbar u
inline Vector lpv_rhs(const AffineLpvModel & m, const Vector & rhobar, const Vector & u)
{
  require_dim(rhobar.size() == m.k, "lpv_rhs: state dimension mismatch");
  require_dim(u.size() == m.p(), "lpv_rhs: input dimension mismatch");
  Vector dx = m.Abar[0] * rhobar + m.Bbar * u;
  for (Index i = 0; i < m.r; ++i) {
    dx.noalias() += rhobar(i) * (m.Abar[static_cast<std::size_t>(i + 1)] * rhobar);
  }
  return dx;
}

/// Jacobian of the autonomous part of lpv_rhs.
inline Matrix lpv_jacobian(const AffineLpvModel & m, const Vector & rhobar)
{
  require_dim(rhobar.size() == m.k, "lpv_jacobian: dimension mismatch");
  Matrix J = m.scheduled_A(rhobar.head(m.r));
  for (Index i = 0; i < m.r; ++i) { J.col(i) += m.Abar[static_cast<std::size_t>(i + 1)] * rhobar; }
  return J;
}

}  // namespace lpvgs
