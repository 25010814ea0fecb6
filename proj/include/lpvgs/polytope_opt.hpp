#pragma once

/**
 * @file
 * @brief Genetic search for an enclosing polytope with few vertices and small volume.
 *
 * The data hull V is extended by n_k candidate points; the fitness of a
 * candidate set C is
 *   vol(conv(V u C)) / vol(bbox) + beta * (#vertices of conv(V u C)) / 2^r.
 * Every offspring is repaired by scaling C about its centroid by the smallest
 * factor that makes conv(C) contain the data, so conv(V u C) = conv(C) and
 * containment holds by construction.
 */

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

#include "common.hpp"
#include "lp.hpp"
#include "polytope.hpp"

namespace lpvgs {

struct GaParams
{
  Index population         = 40;
  Index generations        = 200;
  /// Gaussian mutation std-dev as a fraction of the per-axis data range
  double mutation_scale    = 0.05;
  /// weight of the vertex-count term
  double beta              = 1.0;
  double crossover_rate    = 0.9;
  Index tournament         = 3;
  Index elite              = 2;
  /// Monte Carlo samples per fitness evaluation (common random numbers)
  Index volume_samples     = 1000;
  /// samples for the final volume check
  Index final_volume_samples = 20000;
  bool allow_fallback      = true;
  /// margin of the fallback bounding box
  double margin            = 0.0;
};

struct PolytopeOptimization
{
  ParamPolytope polytope;
  VolumeEstimate volume;
  double bbox_volume = 0.0;
  double best_fitness = std::numeric_limits<double>::infinity();
  /// best fitness after every generation
  std::vector<double> history;
};

namespace detail {

/// Smallest s with x in c + s (conv(C) - c) for all columns x of D; +inf if some x is not reachable.
inline double enclosing_scale(const Matrix & C, const Vector & c, const Matrix & D)
{
  const Index r = C.rows(), nk = C.cols();
  Matrix A = Matrix::Zero(r + 1, nk + 1);
  A.topLeftCorner(r, nk) = C.colwise() - c;
  A.row(r).head(nk).setOnes();
  A(r, nk) = -1.0;
  Vector cost = Vector::Zero(nk + 1);
  cost(nk)    = 1.0;
  Vector b(r + 1);
  b(r) = 0.0;
  LpOptions o;
  o.feas_tol = 1e-10;
  double s   = 0.0;
  for (Index j = 0; j < D.cols(); ++j) {
    b.head(r)         = D.col(j) - c;
    const LpResult lp = solve_lp(A, b, cost, o);
    if (lp.status != LpStatus::optimal) { return std::numeric_limits<double>::infinity(); }
    s = std::max(s, lp.x(nk));
  }
  return s;
}

struct GaIndividual
{
  Matrix C;
  double fitness = std::numeric_limits<double>::infinity();
  Index n_vertices = 0;
  double volume_ratio = 0.0;
};

class PolytopeGa
{
public:
  PolytopeGa(const Matrix & data_vertices, Index n_k, const GaParams & prm, std::uint64_t seed)
      : D_(data_vertices), r_(data_vertices.rows()), nk_(n_k), prm_(prm), rng_(seed)
  {
    // common random numbers for every fitness evaluation
    U_.resize(r_, prm_.volume_samples);
    for (Index j = 0; j < U_.cols(); ++j) {
      for (Index d = 0; d < r_; ++d) { U_(d, j) = uniform01(rng_); }
    }
  }

  void repair_and_evaluate(GaIndividual & ind) const
  {
    const Vector c  = ind.C.rowwise().mean();
    const double s  = enclosing_scale(ind.C, c, D_);
    ind.fitness     = std::numeric_limits<double>::infinity();
    if (!std::isfinite(s) || s <= 0.0) { return; }
    ind.C = ((ind.C.colwise() - c) * (s * (1.0 + 1e-7))).colwise() + c;

    const std::vector<Index> hv = hull_vertex_filter(ind.C);
    Matrix H(r_, static_cast<Index>(hv.size()));
    for (std::size_t i = 0; i < hv.size(); ++i) { H.col(static_cast<Index>(i)) = ind.C.col(hv[i]); }
    const Vector lo   = H.rowwise().minCoeff();
    const Vector hi   = H.rowwise().maxCoeff();
    const double boxv = (hi - lo).prod();
    Index hits        = 0;
    Vector x(r_);
    for (Index j = 0; j < U_.cols(); ++j) {
      x = lo + (hi - lo).cwiseProduct(U_.col(j));
      if (in_convex_hull(H, x, 1e-10)) { ++hits; }
    }
    // Laplace estimate of the hit fraction: never zero, so a tighter box always scores better
    const double vol     = boxv * static_cast<double>(hits + 1) / static_cast<double>(U_.cols() + 2);
    // the data bounding box is [-1, 1]^r in scaled coordinates
    ind.volume_ratio     = vol / std::pow(2.0, static_cast<double>(r_));
    ind.n_vertices       = static_cast<Index>(hv.size());
    ind.fitness          = ind.volume_ratio
                  + prm_.beta * static_cast<double>(ind.n_vertices) / std::pow(2.0, static_cast<double>(r_));
  }

  GaIndividual seed_from_data()
  {
    // farthest-point sample of data vertices, jittered
    GaIndividual ind;
    ind.C.resize(r_, nk_);
    std::vector<double> dist(static_cast<std::size_t>(D_.cols()), std::numeric_limits<double>::infinity());
    Index pick = static_cast<Index>(rng_() % static_cast<std::uint64_t>(D_.cols()));
    for (Index a = 0; a < nk_; ++a) {
      ind.C.col(a) = D_.col(pick);
      for (Index j = 0; j < D_.cols(); ++j) {
        dist[static_cast<std::size_t>(j)]
          = std::min(dist[static_cast<std::size_t>(j)], (D_.col(j) - D_.col(pick)).squaredNorm());
      }
      pick = static_cast<Index>(std::max_element(dist.begin(), dist.end()) - dist.begin());
    }
    for (Index a = 0; a < nk_; ++a) {
      for (Index d = 0; d < r_; ++d) { ind.C(d, a) += 0.1 * standard_normal(rng_); }
    }
    return ind;
  }

  GaIndividual seed_random()
  {
    GaIndividual ind;
    ind.C.resize(r_, nk_);
    for (Index a = 0; a < nk_; ++a) {
      for (Index d = 0; d < r_; ++d) { ind.C(d, a) = -1.5 + 3.0 * uniform01(rng_); }
    }
    return ind;
  }

  const GaIndividual & tournament(const std::vector<GaIndividual> & pop)
  {
    Index best = static_cast<Index>(rng_() % pop.size());
    for (Index t = 1; t < prm_.tournament; ++t) {
      const Index c = static_cast<Index>(rng_() % pop.size());
      if (pop[static_cast<std::size_t>(c)].fitness < pop[static_cast<std::size_t>(best)].fitness) { best = c; }
    }
    return pop[static_cast<std::size_t>(best)];
  }

  GaIndividual offspring(const GaIndividual & a, const GaIndividual & b)
  {
    GaIndividual child;
    child.C = a.C;
    if (uniform01(rng_) < prm_.crossover_rate) {
      // BLX-0.25 blend, gene by gene
      for (Index j = 0; j < nk_; ++j) {
        for (Index d = 0; d < r_; ++d) {
          const double w = -0.25 + 1.5 * uniform01(rng_);
          child.C(d, j)  = w * a.C(d, j) + (1.0 - w) * b.C(d, j);
        }
      }
    }
    // data range is 2 in scaled coordinates
    const double sigma = 2.0 * prm_.mutation_scale;
    const double pm    = 1.0 / static_cast<double>(nk_);
    for (Index j = 0; j < nk_; ++j) {
      if (uniform01(rng_) < pm) {
        for (Index d = 0; d < r_; ++d) { child.C(d, j) += sigma * standard_normal(rng_); }
      }
    }
    return child;
  }

  GaIndividual run(std::vector<double> & history)
  {
    std::vector<GaIndividual> pop;
    for (Index i = 0; i < prm_.population; ++i) {
      pop.push_back(i % 2 == 0 ? seed_from_data() : seed_random());
      repair_and_evaluate(pop.back());
    }
    auto by_fitness = [](const GaIndividual & x, const GaIndividual & y) { return x.fitness < y.fitness; };
    for (Index g = 0; g < prm_.generations; ++g) {
      std::stable_sort(pop.begin(), pop.end(), by_fitness);
      history.push_back(pop.front().fitness);
      std::vector<GaIndividual> next(pop.begin(), pop.begin() + std::min<Index>(prm_.elite, prm_.population));
      while (static_cast<Index>(next.size()) < prm_.population) {
        const GaIndividual & pa = tournament(pop);
        const GaIndividual & pb = tournament(pop);
        next.push_back(offspring(pa, pb));
        repair_and_evaluate(next.back());
      }
      pop = std::move(next);
    }
    std::stable_sort(pop.begin(), pop.end(), by_fitness);
    history.push_back(pop.front().fitness);
    return pop.front();
  }

private:
  Matrix D_;
  Index r_;
  Index nk_;
  GaParams prm_;
  std::mt19937_64 rng_;
  Matrix U_;
};

}  // namespace detail

/**
 * @brief Optimized enclosing polytope with n_k candidate vertices.
 *
 * The result underbids the data bounding box: its Monte Carlo volume is below
 * the box volume by more than three standard errors and it has at most 2^r
 * vertices.  Otherwise the bounding box is returned with `fallback` set.
 *
 * @throws OptimizationFailed if no underbidding polytope was found and fallback is disabled.
 */
inline PolytopeOptimization optimize_polytope_report(const Matrix & P, Index n_k, const GaParams & prm = {},
                                                     std::uint64_t seed = 0)
{
  const Index r = P.rows();
  require_dim(P.cols() >= 1 && r >= 1, "optimize_polytope: empty point cloud");
  require_dim(n_k >= 1, "optimize_polytope: n_k must be positive");
  if (r > 20) { throw DimensionTooLarge("optimize_polytope: r too large"); }

  PolytopeOptimization out;
  const ParamPolytope bbox0 = bounding_box(P, 0.0);
  out.bbox_volume           = (bbox0.box_hi - bbox0.box_lo).prod();

  auto fallback = [&](const std::string & why) {
    if (!prm.allow_fallback) { throw OptimizationFailed("optimize_polytope: " + why); }
    out.polytope          = bounding_box(P, prm.margin);
    out.polytope.fallback = true;
    out.polytope.seed     = seed;
    out.volume            = polytope_volume(out.polytope);
    return out;
  };

  const Vector range = P.rowwise().maxCoeff() - P.rowwise().minCoeff();
  if (range.minCoeff() <= 1e-12 * std::max(1.0, range.maxCoeff())) { return fallback("degenerate point cloud"); }

  const detail::CloudScaling sc(P);
  const Matrix S              = sc.apply(P);
  const std::vector<Index> hv = hull_vertex_filter(S);
  Matrix D(r, static_cast<Index>(hv.size()));
  for (std::size_t i = 0; i < hv.size(); ++i) { D.col(static_cast<Index>(i)) = S.col(hv[i]); }

  detail::PolytopeGa ga(D, n_k, prm, derive_seed(seed, "ga"));
  const detail::GaIndividual best = ga.run(out.history);
  out.best_fitness                = best.fitness;
  if (!std::isfinite(best.fitness)) { return fallback("no feasible candidate set"); }

  const std::vector<Index> cv = hull_vertex_filter(best.C);
  Matrix V(r, static_cast<Index>(cv.size()));
  for (std::size_t i = 0; i < cv.size(); ++i) {
    V.col(static_cast<Index>(i)) = best.C.col(cv[i]).cwiseProduct(sc.scale) + sc.centre;
  }
  ParamPolytope W;
  W.r          = r;
  W.kind       = PolytopeKind::optimized;
  W.U_pc       = Matrix::Identity(r, r);
  W.vertices   = std::move(V);
  W.provenance = cloud_digest(P);
  W.seed       = seed;

  for (Index j = 0; j < P.cols(); ++j) {
    if (!contains(W, P.col(j), 1e-8)) { return fallback("candidate polytope misses a data point"); }
  }
  out.volume = polytope_volume(W, std::max<Index>(prm.final_volume_samples, 1000), derive_seed(seed, "volume"));
  const bool fewer_vertices = W.n_vertices() <= (Index(1) << r);
  const bool smaller        = out.volume.estimate + 3.0 * out.volume.std_error < out.bbox_volume;
  if (!(fewer_vertices && smaller)) { return fallback("no polytope underbids the bounding box"); }
  out.polytope = std::move(W);
  return out;
}

/**
 * @brief Three-parameter demo cloud: a spiral on the paraboloid z = x^2 + y^2,
 *        rho(t) = (a cos(w t), a sin(w t), a^2) with a = t / T on [0, T].
 *
 * The bounding box has volume 4; the tightest square pyramid around the
 * paraboloid cap (apex at z = -1) has volume 8/3.
 */
inline Matrix paraboloid_spiral_cloud(Index n_points = 400, double turns = 6.0)
{
  require_dim(n_points >= 2, "paraboloid_spiral_cloud: need at least two points");
  Matrix P(3, n_points);
  const double two_pi = 2.0 * std::acos(-1.0);
  for (Index j = 0; j < n_points; ++j) {
    const double a  = static_cast<double>(j) / static_cast<double>(n_points - 1);
    const double th = two_pi * turns * a;
    P(0, j)         = a * std::cos(th);
    P(1, j)         = a * std::sin(th);
    P(2, j)         = a * a;
  }
  return P;
}

inline ParamPolytope optimize_polytope(const Matrix & P, Index n_k, const GaParams & prm = {}, std::uint64_t seed = 0)
{
  return optimize_polytope_report(P, n_k, prm, seed).polytope;
}

}  // namespace lpvgs
