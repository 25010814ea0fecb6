#pragma once

/**
 * @file
 * @brief Scheduling-parameter polytopes: bounding boxes, PCA boxes, hull
 *        vertices, membership, volume, projection and barycentric coordinates.
 *
 * Hull computations never enumerate facets.  Vertex identification and
 * membership are linear programs, general volumes are Monte Carlo estimates.
 */

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "common.hpp"
#include "lp.hpp"

namespace lpvgs {

enum class PolytopeKind { box, pca_box, optimized };

inline std::string to_string(PolytopeKind k)
{
  switch (k) {
  case PolytopeKind::box: return "box";
  case PolytopeKind::pca_box: return "pca_box";
  case PolytopeKind::optimized: return "optimized";
  }
  return "box";
}

inline PolytopeKind polytope_kind_from_string(const std::string & s)
{
  if (s == "box") { return PolytopeKind::box; }
  if (s == "pca_box") { return PolytopeKind::pca_box; }
  if (s == "optimized") { return PolytopeKind::optimized; }
  throw ConfigError("unknown polytope kind '" + s + "'");
}

/**
 * @brief Polytope W in R^r given by its vertices (columns, original rho coordinates).
 *
 * Box kinds additionally carry their bounds in the rotated frame z = U_pc^T rho.
 */
struct ParamPolytope
{
  Index r = 0;
  Matrix vertices;
  PolytopeKind kind = PolytopeKind::box;
  Matrix U_pc;
  Vector box_lo;
  Vector box_hi;
  /// digest of the generating point cloud
  std::string provenance;
  std::uint64_t seed = 0;
  /// optimize_polytope returned the bounding box
  bool fallback = false;
  /// PCA fell back to the identity rotation (zero-variance cloud)
  bool warning = false;

  Index n_vertices() const noexcept { return vertices.cols(); }
  bool is_box() const noexcept { return kind == PolytopeKind::box || kind == PolytopeKind::pca_box; }
};

/// FNV-1a digest of the raw bytes of a point cloud, as hex.
inline std::string cloud_digest(const Matrix & P)
{
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void * data, std::size_t len) {
    const auto * c = static_cast<const unsigned char *>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= c[i];
      h *= 0x100000001b3ULL;
    }
  };
  const std::int64_t dims[2] = {P.rows(), P.cols()};
  feed(dims, sizeof(dims));
  feed(P.data(), static_cast<std::size_t>(P.size()) * sizeof(double));
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace detail {

inline Matrix gray_code_corners(const Vector & lo, const Vector & hi)
{
  const Index r  = lo.size();
  const Index nv = Index(1) << r;
  Matrix Z(r, nv);
  for (Index g = 0; g < nv; ++g) {
    const Index code = g ^ (g >> 1);
    for (Index d = 0; d < r; ++d) { Z(d, g) = ((code >> d) & 1) ? hi(d) : lo(d); }
  }
  return Z;
}

/// Box bounds around the columns of Z, expanded by margin * range (delta on degenerate axes).
inline void box_bounds(const Matrix & Z, double margin, Vector & lo, Vector & hi)
{
  lo                  = Z.rowwise().minCoeff();
  hi                  = Z.rowwise().maxCoeff();
  const Vector range  = hi - lo;
  const double rmax   = range.size() > 0 ? range.maxCoeff() : 0.0;
  const double delta  = std::max(1e-6, 1e-3 * rmax);
  for (Index d = 0; d < lo.size(); ++d) {
    if (range(d) <= 1e-14 * std::max(1.0, std::abs(lo(d)))) {
      lo(d) -= delta;
      hi(d) += delta;
    } else {
      lo(d) -= margin * range(d);
      hi(d) += margin * range(d);
    }
  }
}

inline ParamPolytope make_box(const Matrix & Zframe, double margin, const Matrix & U, PolytopeKind kind)
{
  const Index r = Zframe.rows();
  if (r > 20) { throw DimensionTooLarge("box with 2^" + std::to_string(r) + " vertices is infeasible"); }
  require_dim(Zframe.cols() >= 1, "bounding box needs at least one point");
  ParamPolytope W;
  W.r    = r;
  W.kind = kind;
  W.U_pc = U;
  box_bounds(Zframe, margin, W.box_lo, W.box_hi);
  W.vertices = U * gray_code_corners(W.box_lo, W.box_hi);
  return W;
}

/// Affine map of a cloud onto roughly unit scale, used to condition LPs.
struct CloudScaling
{
  Vector centre;
  Vector scale;

  explicit CloudScaling(const Matrix & P)
  {
    const Vector lo = P.rowwise().minCoeff();
    const Vector hi = P.rowwise().maxCoeff();
    centre          = 0.5 * (lo + hi);
    scale           = (0.5 * (hi - lo)).cwiseMax(1e-300);
    const double s  = scale.maxCoeff();
    for (Index d = 0; d < scale.size(); ++d) {
      if (scale(d) < 1e-12 * s || scale(d) <= 1e-300) { scale(d) = std::max(s, 1.0); }
    }
  }

  Matrix apply(const Matrix & P) const
  {
    return (P.colwise() - centre).array().colwise() / scale.array();
  }
  Vector apply(const Vector & x) const { return (x - centre).cwiseQuotient(scale); }
};

/**
 * @brief Primal active-set method for  min 1/2 l^T H l + g^T l  s.t.  Aeq l = beq, l >= 0.
 *
 * H must be positive definite; `lam` must be feasible on entry.
 */
inline Vector simplex_qp(const Matrix & H, const Vector & g, const Matrix & Aeq, Vector lam)
{
  const Index m = lam.size();
  std::vector<char> fixed(static_cast<std::size_t>(m));
  for (Index i = 0; i < m; ++i) {
    fixed[static_cast<std::size_t>(i)] = lam(i) <= 0.0;
    lam(i)                             = std::max(0.0, lam(i));
  }
  const Index max_iter = 50 * m + 200;
  for (Index it = 0; it < max_iter; ++it) {
    std::vector<Index> F;
    for (Index i = 0; i < m; ++i) {
      if (!fixed[static_cast<std::size_t>(i)]) { F.push_back(i); }
    }
    const Index nf = static_cast<Index>(F.size());
    const Vector grad = H * lam + g;
    Matrix AF(Aeq.rows(), nf);
    Vector gF(nf);
    for (Index a = 0; a < nf; ++a) {
      AF.col(a) = Aeq.col(F[static_cast<std::size_t>(a)]);
      gF(a)     = grad(F[static_cast<std::size_t>(a)]);
    }
    Vector pF = Vector::Zero(nf);
    if (nf > 0) {
      Eigen::JacobiSVD<Matrix> svd(AF, Eigen::ComputeFullV);
      const Vector & s = svd.singularValues();
      const double thr = (s.size() > 0 ? s(0) : 0.0) * 1e-12 * static_cast<double>(std::max(AF.rows(), nf));
      Index rank       = 0;
      while (rank < s.size() && s(rank) > thr) { ++rank; }
      if (rank < nf) {
        const Matrix Z = svd.matrixV().rightCols(nf - rank);
        Matrix HFF(nf, nf);
        for (Index a = 0; a < nf; ++a) {
          for (Index b = 0; b < nf; ++b) {
            HFF(a, b) = H(F[static_cast<std::size_t>(a)], F[static_cast<std::size_t>(b)]);
          }
        }
        const Matrix red = Z.transpose() * HFF * Z;
        pF = -Z * red.ldlt().solve(Z.transpose() * gF);
      }
    }
    const double scale = 1.0 + lam.lpNorm<Eigen::Infinity>();
    if (pF.lpNorm<Eigen::Infinity>() <= 1e-13 * scale) {
      // multipliers of the bound constraints
      Vector mu = Vector::Zero(Aeq.rows());
      if (nf > 0) { mu = AF.transpose().completeOrthogonalDecomposition().solve(gF); }
      const Vector nu = grad - Aeq.transpose() * mu;
      Index worst     = -1;
      double most_neg = -1e-11 * (1.0 + grad.lpNorm<Eigen::Infinity>());
      for (Index i = 0; i < m; ++i) {
        if (fixed[static_cast<std::size_t>(i)] && nu(i) < most_neg) {
          most_neg = nu(i);
          worst    = i;
        }
      }
      if (worst < 0) { return lam; }
      fixed[static_cast<std::size_t>(worst)] = 0;
      continue;
    }
    double alpha   = 1.0;
    Index blocking = -1;
    for (Index a = 0; a < nf; ++a) {
      if (pF(a) < 0.0) {
        const double ratio = -lam(F[static_cast<std::size_t>(a)]) / pF(a);
        if (ratio < alpha) {
          alpha    = ratio;
          blocking = F[static_cast<std::size_t>(a)];
        }
      }
    }
    for (Index a = 0; a < nf; ++a) { lam(F[static_cast<std::size_t>(a)]) += alpha * pF(a); }
    if (blocking >= 0) {
      lam(blocking)                             = 0.0;
      fixed[static_cast<std::size_t>(blocking)] = 1;
    }
  }
  return lam;
}

}  // namespace detail

/**
 * @brief Axis-aligned bounding box, vertices in Gray-code order.
 *
 * @throws DimensionTooLarge for r > 20.
 */
inline ParamPolytope bounding_box(const Matrix & P, double margin = 0.0)
{
  ParamPolytope W = detail::make_box(P, margin, Matrix::Identity(P.rows(), P.rows()), PolytopeKind::box);
  W.provenance    = cloud_digest(P);
  return W;
}

struct PcaBoxResult
{
  ParamPolytope polytope;
  /// A_pc,i = sum_j U_ji A_j
  std::vector<Matrix> A_pc;
};

/**
 * @brief Bounding box in principal-component coordinates of the cloud.
 *
 * U_pc holds the covariance eigenvectors in descending eigenvalue order, each
 * with its largest-magnitude entry positive.  The coefficient matrices are
 * retransformed so that sum_i rho_i A_i = sum_i rho_pc,i A_pc,i with rho_pc = U_pc^T rho.
 */
inline PcaBoxResult pca_box(const Matrix & P, const std::vector<Matrix> & A_list, double margin = 0.0)
{
  const Index r = P.rows();
  require_dim(P.cols() >= 1, "pca_box: empty point cloud");
  require_dim(static_cast<Index>(A_list.size()) == r, "pca_box: need one coefficient matrix per parameter");

  Matrix U = Matrix::Identity(r, r);
  bool zero_variance = true;
  if (P.cols() >= 2) {
    const Matrix centred = P.colwise() - P.rowwise().mean();
    const Matrix cov     = centred * centred.transpose() / static_cast<double>(P.cols() - 1);
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    const Vector & ev = es.eigenvalues();
    if (ev(r - 1) > 1e-300 && ev(r - 1) > 0.0) {
      zero_variance = false;
      for (Index i = 0; i < r; ++i) {
        Vector u = es.eigenvectors().col(r - 1 - i);
        Index imax;
        u.cwiseAbs().maxCoeff(&imax);
        if (u(imax) < 0.0) { u = -u; }
        U.col(i) = u;
      }
    }
  }

  PcaBoxResult out;
  out.polytope            = detail::make_box(U.transpose() * P, margin, U, PolytopeKind::pca_box);
  out.polytope.warning    = zero_variance;
  out.polytope.provenance = cloud_digest(P);
  for (Index i = 0; i < r; ++i) {
    Matrix Ai = Matrix::Zero(A_list[0].rows(), A_list[0].cols());
    for (Index j = 0; j < r; ++j) { Ai += U(j, i) * A_list[static_cast<std::size_t>(j)]; }
    out.A_pc.push_back(std::move(Ai));
  }
  return out;
}

/**
 * @brief Indices of the points that are vertices of conv(P).
 *
 * A point is a vertex iff it is not in the hull of the remaining points.
 * Exact duplicates are collapsed onto their first occurrence.
 */
inline std::vector<Index> hull_vertex_filter(const Matrix & P, double tol = 1e-10)
{
  const Index N = P.cols();
  std::vector<Index> out;
  if (N == 0) { return out; }
  const detail::CloudScaling sc(P);
  const Matrix S = sc.apply(P);

  std::vector<Index> unique;
  for (Index m = 0; m < N; ++m) {
    bool dup = false;
    for (Index u : unique) {
      if ((S.col(u) - S.col(m)).lpNorm<Eigen::Infinity>() <= 1e-13) {
        dup = true;
        break;
      }
    }
    if (!dup) { unique.push_back(m); }
  }
  if (unique.size() == 1) { return unique; }

  Matrix others(S.rows(), static_cast<Index>(unique.size()) - 1);
  for (std::size_t a = 0; a < unique.size(); ++a) {
    Index c = 0;
    for (std::size_t b = 0; b < unique.size(); ++b) {
      if (b != a) { others.col(c++) = S.col(unique[b]); }
    }
    if (!in_convex_hull(others, S.col(unique[a]), tol)) { out.push_back(unique[a]); }
  }
  return out;
}

/// Frame coordinates z = U^T rho and the largest excess over the box bounds (0 inside).
inline double box_violation(const ParamPolytope & W, const Vector & rho)
{
  const Vector z = W.U_pc.transpose() * rho;
  double v       = 0.0;
  for (Index d = 0; d < W.r; ++d) { v = std::max({v, W.box_lo(d) - z(d), z(d) - W.box_hi(d)}); }
  return v;
}

/**
 * @brief Membership: exists lambda in the simplex with ||W lambda - rho||_inf <= tol.
 *
 * Axis-aligned boxes use the closed form, other kinds an LP.
 */
inline bool contains(const ParamPolytope & W, const Vector & rho, double tol = 1e-8)
{
  require_dim(rho.size() == W.r, "contains: dimension mismatch");
  if (W.kind == PolytopeKind::box) { return box_violation(W, rho) <= tol; }
  return linf_distance_to_hull(W.vertices, rho).distance <= tol;
}

struct VolumeEstimate
{
  double estimate  = 0.0;
  double std_error = 0.0;
};

/**
 * @brief Volume of W: exact for boxes, otherwise Monte Carlo hit fraction inside
 *        the bounding box of the vertices times that box's volume.
 */
inline VolumeEstimate polytope_volume(const ParamPolytope & W, Index n_samples = 20000, std::uint64_t seed = 0)
{
  VolumeEstimate v;
  if (W.is_box()) {
    v.estimate = (W.box_hi - W.box_lo).prod();
    return v;
  }
  require_dim(n_samples >= 1000, "polytope_volume: at least 1000 samples required for general polytopes");
  const Vector lo    = W.vertices.rowwise().minCoeff();
  const Vector hi    = W.vertices.rowwise().maxCoeff();
  const double boxv  = (hi - lo).prod();
  if (boxv <= 0.0) { return v; }
  // hull vertices only, in unit coordinates
  const std::vector<Index> hv = hull_vertex_filter(W.vertices);
  Matrix H(W.r, static_cast<Index>(hv.size()));
  for (std::size_t i = 0; i < hv.size(); ++i) { H.col(static_cast<Index>(i)) = W.vertices.col(hv[i]); }
  const detail::CloudScaling sc(H);
  const Matrix Hs = sc.apply(H);

  std::mt19937_64 rng(seed);
  Index hits = 0;
  Vector x(W.r);
  for (Index s = 0; s < n_samples; ++s) {
    for (Index d = 0; d < W.r; ++d) { x(d) = lo(d) + (hi(d) - lo(d)) * uniform01(rng); }
    if (in_convex_hull(Hs, sc.apply(x), 1e-10)) { ++hits; }
  }
  const double p = static_cast<double>(hits) / static_cast<double>(n_samples);
  v.estimate     = p * boxv;
  v.std_error    = boxv * std::sqrt(p * (1.0 - p) / static_cast<double>(n_samples));
  return v;
}

/**
 * @brief Barycentric coordinates of rho in W.
 *
 * Boxes use multilinear weights in their frame.  General polytopes return the
 * minimum-Euclidean-norm weights with W lambda = rho, lambda >= 0, sum = 1.
 *
 * @throws OutsideDomain if rho is farther than tol from W.
 */
inline Vector barycentric(const ParamPolytope & W, const Vector & rho, double tol = 1e-9)
{
  require_dim(rho.size() == W.r, "barycentric: dimension mismatch");
  if (W.is_box()) {
    const double viol = box_violation(W, rho);
    if (viol > tol) { throw OutsideDomain("parameter outside the box polytope", viol); }
    const Vector z = W.U_pc.transpose() * rho;
    Vector s(W.r);
    for (Index d = 0; d < W.r; ++d) {
      const double w = W.box_hi(d) - W.box_lo(d);
      s(d)           = std::clamp((z(d) - W.box_lo(d)) / w, 0.0, 1.0);
    }
    const Index nv = W.n_vertices();
    Vector lam(nv);
    for (Index g = 0; g < nv; ++g) {
      const Index code = g ^ (g >> 1);
      double prod      = 1.0;
      for (Index d = 0; d < W.r; ++d) { prod *= ((code >> d) & 1) ? s(d) : 1.0 - s(d); }
      lam(g) = prod;
    }
    return lam;
  }

  const HullDistance hd = linf_distance_to_hull(W.vertices, rho);
  if (hd.distance > tol) { throw OutsideDomain("parameter outside the polytope", hd.distance); }
  const Index nv = W.n_vertices();
  Matrix Aeq(W.r + 1, nv);
  Aeq.topRows(W.r) = W.vertices;
  Aeq.row(W.r).setOnes();
  Vector lam = detail::simplex_qp(Matrix::Identity(nv, nv), Vector::Zero(nv), Aeq, hd.lambda);

  // exact minimum-norm solve on the support
  std::vector<Index> F;
  for (Index i = 0; i < nv; ++i) {
    if (lam(i) > 0.0) { F.push_back(i); }
  }
  if (!F.empty()) {
    Matrix AF(W.r + 1, static_cast<Index>(F.size()));
    for (std::size_t a = 0; a < F.size(); ++a) { AF.col(static_cast<Index>(a)) = Aeq.col(F[a]); }
    Vector beq(W.r + 1);
    beq.head(W.r) = rho;
    beq(W.r)      = 1.0;
    const Vector lf = AF.completeOrthogonalDecomposition().solve(beq);
    if (lf.minCoeff() >= -1e-12) {
      lam.setZero();
      for (std::size_t a = 0; a < F.size(); ++a) { lam(F[a]) = std::max(0.0, lf(static_cast<Index>(a))); }
    }
  }
  return lam;
}

/// Euclidean projection of rho onto W.
inline Vector project_onto(const ParamPolytope & W, const Vector & rho)
{
  require_dim(rho.size() == W.r, "project_onto: dimension mismatch");
  if (W.is_box()) {
    Vector z = W.U_pc.transpose() * rho;
    for (Index d = 0; d < W.r; ++d) { z(d) = std::clamp(z(d), W.box_lo(d), W.box_hi(d)); }
    return W.U_pc * z;
  }
  const Index nv = W.n_vertices();
  const Matrix & Vs = W.vertices;
  Matrix H        = Vs.transpose() * Vs;
  H.diagonal().array() += 1e-12 * (1.0 + H.diagonal().maxCoeff());
  const Vector g = -Vs.transpose() * rho;
  // start from the nearest vertex
  Index arg = 0;
  (Vs.colwise() - rho).colwise().squaredNorm().minCoeff(&arg);
  Vector lam0 = Vector::Zero(nv);
  lam0(arg)   = 1.0;
  Vector lam  = detail::simplex_qp(H, g, Matrix::Ones(1, nv), lam0);
  lam         = lam.cwiseMax(0.0);
  lam /= lam.sum();
  return W.vertices * lam;
}

}  // namespace lpvgs
