#include <gtest/gtest.h>

#include <random>
#include <set>

#include "lpvgs/polytope.hpp"

using namespace lpvgs;

namespace {

Matrix random_cloud(std::mt19937_64 & rng, Index r, Index N)
{
  Matrix P(r, N);
  for (Index i = 0; i < P.size(); ++i) { P.data()[i] = standard_normal(rng); }
  return P;
}

Matrix random_rotation(std::mt19937_64 & rng, Index r)
{
  Eigen::HouseholderQR<Matrix> qr(random_cloud(rng, r, r));
  return qr.householderQ();
}

}  // namespace

TEST(Box, VertexCountAndGrayOrder)
{
  std::mt19937_64 rng(1);
  const auto W = bounding_box(random_cloud(rng, 6, 100));
  ASSERT_EQ(W.n_vertices(), 64);
  for (Index g = 1; g < 64; ++g) {
    const Vector d = W.vertices.col(g) - W.vertices.col(g - 1);
    int changed    = 0;
    for (Index i = 0; i < 6; ++i) { changed += std::abs(d(i)) > 0.0 ? 1 : 0; }
    EXPECT_EQ(changed, 1);
  }
  EXPECT_THROW(bounding_box(Matrix::Zero(21, 1)), DimensionTooLarge);
}

TEST(Box, SinglePointUsesDelta)
{
  Vector p(2);
  p << 0.3, -0.2;
  const auto W = bounding_box(p, 0.0);
  EXPECT_NEAR(W.box_hi(0) - W.box_lo(0), 2e-6, 1e-15);
  EXPECT_NEAR(0.5 * (W.box_hi(1) + W.box_lo(1)), -0.2, 1e-15);
}

TEST(Box, MarginAndContainment)
{
  std::mt19937_64 rng(2);
  const Matrix P = random_cloud(rng, 3, 50);
  const auto W   = bounding_box(P, 0.1);
  const Vector range = P.rowwise().maxCoeff() - P.rowwise().minCoeff();
  EXPECT_NEAR(W.box_hi(0) - W.box_lo(0), 1.2 * range(0), 1e-12);
  for (Index j = 0; j < P.cols(); ++j) {
    EXPECT_TRUE(contains(W, P.col(j)));
    EXPECT_TRUE(in_convex_hull(W.vertices, P.col(j), 1e-8));
  }
}

TEST(Box, ContainsClosedFormAndLpAgree)
{
  std::mt19937_64 rng(3);
  const auto W = bounding_box(random_cloud(rng, 3, 30));
  ParamPolytope G = W;
  G.kind          = PolytopeKind::optimized;
  for (int rep = 0; rep < 200; ++rep) {
    Vector x = 2.0 * random_cloud(rng, 3, 1);
    const bool inside = ((x - W.box_lo).array() >= 0).all() && ((W.box_hi - x).array() >= 0).all();
    EXPECT_EQ(contains(W, x), inside);
    EXPECT_EQ(contains(G, x), inside);
  }
  // outside by two tolerances along one axis
  Vector x = 0.5 * (W.box_lo + W.box_hi);
  x(1)     = W.box_hi(1) + 2e-8;
  EXPECT_FALSE(contains(W, x, 1e-8));
  EXPECT_FALSE(contains(G, x, 1e-8));
  for (Index v = 0; v < W.n_vertices(); ++v) { EXPECT_TRUE(contains(G, W.vertices.col(v))); }
}

TEST(Pca, AxisAlignedDataGivesSignedPermutation)
{
  std::mt19937_64 rng(4);
  Matrix P = random_cloud(rng, 3, 400);
  P.row(0) *= 0.5;
  P.row(1) *= 3.0;
  P.row(2) *= 1.5;
  std::vector<Matrix> A(3, Matrix::Zero(2, 2));
  const auto res = pca_box(P, A);
  const Matrix & U = res.polytope.U_pc;
  // empirical covariance of a finite sample is not exactly diagonal; oracle is its eigendecomposition
  const Vector mean = P.rowwise().mean();
  const Matrix Xc   = P.colwise() - mean;
  Eigen::SelfAdjointEigenSolver<Matrix> es(Xc * Xc.transpose() / static_cast<double>(P.cols() - 1));
  for (Index i = 0; i < 3; ++i) {
    const Vector u = es.eigenvectors().col(2 - i);
    EXPECT_NEAR(std::abs(u.dot(U.col(i))), 1.0, 1e-10);
  }
  // dominant axis first: approximately e_2, then e_3, then e_1
  EXPECT_GT(std::abs(U(1, 0)), 0.99);
  EXPECT_GT(std::abs(U(2, 1)), 0.99);
  EXPECT_GT(std::abs(U(0, 2)), 0.99);
  EXPECT_LE((U.transpose() * U - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Pca, ExactlyDiagonalCovarianceGivesPermutedBox)
{
  // four symmetric points per axis: covariance exactly diagonal
  Matrix P(2, 4);
  P << 1, -1, 0, 0, 0, 0, 3, -3;
  std::vector<Matrix> A(2, Matrix::Zero(1, 1));
  const auto res = pca_box(P, A);
  const auto bb  = bounding_box(P);
  EXPECT_NEAR(std::abs(res.polytope.U_pc(1, 0)), 1.0, 1e-14);
  std::set<std::pair<double, double>> a, b;
  for (Index v = 0; v < 4; ++v) {
    a.insert({std::round(res.polytope.vertices(0, v) * 1e9), std::round(res.polytope.vertices(1, v) * 1e9)});
    b.insert({std::round(bb.vertices(0, v) * 1e9), std::round(bb.vertices(1, v) * 1e9)});
  }
  EXPECT_EQ(a, b);
}

TEST(Pca, ReparametrizationIdentity)
{
  std::mt19937_64 rng(5);
  const Index r = 4;
  const Matrix R = random_rotation(rng, r);
  Matrix P       = R * random_cloud(rng, r, 200);
  std::vector<Matrix> A;
  for (Index i = 0; i < r; ++i) { A.push_back(random_cloud(rng, 5, 5)); }
  const auto res = pca_box(P, A);
  for (int rep = 0; rep < 50; ++rep) {
    const Vector rho    = random_cloud(rng, r, 1);
    const Vector rho_pc = res.polytope.U_pc.transpose() * rho;
    Matrix s1 = Matrix::Zero(5, 5), s2 = Matrix::Zero(5, 5);
    for (Index i = 0; i < r; ++i) {
      s1 += rho(i) * A[static_cast<std::size_t>(i)];
      s2 += rho_pc(i) * res.A_pc[static_cast<std::size_t>(i)];
    }
    EXPECT_LE((s1 - s2).cwiseAbs().maxCoeff(), 1e-10);
  }
  // vertices are stored in the original coordinates and contain the data
  for (Index j = 0; j < P.cols(); ++j) { EXPECT_TRUE(contains(res.polytope, P.col(j))); }
  // rotated box is never larger than needed in its own frame
  EXPECT_EQ(res.polytope.n_vertices(), 16);
}

TEST(Pca, ZeroVarianceFallsBackToIdentity)
{
  Matrix P = Vector::Ones(3).replicate(1, 5);
  const auto res = pca_box(P, std::vector<Matrix>(3, Matrix::Identity(2, 2)));
  EXPECT_TRUE(res.polytope.warning);
  EXPECT_EQ((res.polytope.U_pc - Matrix::Identity(3, 3)).norm(), 0.0);
}

TEST(Hull, SquareWithCentre)
{
  Matrix P(2, 5);
  P << 0, 1, 1, 0, 0.5, 0, 0, 1, 1, 0.5;
  const auto idx = hull_vertex_filter(P);
  EXPECT_EQ(idx, (std::vector<Index>{0, 1, 2, 3}));
}

TEST(Hull, SimplexVerticesAllRetained)
{
  Matrix P = Matrix::Zero(3, 4);
  P.rightCols(3) = Matrix::Identity(3, 3);
  EXPECT_EQ(hull_vertex_filter(P).size(), 4u);
}

TEST(Hull, MatchesBruteForceLpOracle)
{
  std::mt19937_64 rng(6);
  const Matrix P = random_cloud(rng, 3, 50);
  const auto idx = hull_vertex_filter(P);
  std::vector<Index> oracle;
  for (Index m = 0; m < 50; ++m) {
    Matrix others(3, 49);
    Index c = 0;
    for (Index j = 0; j < 50; ++j) {
      if (j != m) { others.col(c++) = P.col(j); }
    }
    if (!in_convex_hull(others, P.col(m), 1e-10)) { oracle.push_back(m); }
  }
  EXPECT_EQ(idx, oracle);
}

TEST(Hull, DuplicatesCollapse)
{
  Matrix P(1, 4);
  P << 0, 1, 1, 0.5;
  const auto idx = hull_vertex_filter(P);
  EXPECT_EQ(idx.size(), 2u);
}

TEST(Volume, UnitCubeExact)
{
  Matrix P(3, 2);
  P << 0, 1, 0, 1, 0, 1;
  const auto v = polytope_volume(bounding_box(P));
  EXPECT_EQ(v.estimate, 1.0);
  EXPECT_EQ(v.std_error, 0.0);
}

TEST(Volume, SimplexMonteCarlo)
{
  ParamPolytope W;
  W.r        = 3;
  W.kind     = PolytopeKind::optimized;
  W.U_pc     = Matrix::Identity(3, 3);
  W.vertices = Matrix::Zero(3, 4);
  W.vertices.rightCols(3) = Matrix::Identity(3, 3);
  const auto v = polytope_volume(W, 20000, 17);
  EXPECT_LE(std::abs(v.estimate - 1.0 / 6.0), 3.0 * v.std_error);
  const auto v2 = polytope_volume(W, 20000, 17);
  EXPECT_EQ(v.estimate, v2.estimate);
  EXPECT_THROW(polytope_volume(W, 10), DimensionError);
}

TEST(Volume, BoxThroughMonteCarloPath)
{
  std::mt19937_64 rng(8);
  auto W  = bounding_box(random_cloud(rng, 3, 20));
  const double exact = polytope_volume(W).estimate;
  W.kind  = PolytopeKind::optimized;
  const auto v = polytope_volume(W, 5000, 3);
  EXPECT_LE(std::abs(v.estimate - exact), 3.0 * v.std_error + 1e-12);
}

TEST(Barycentric, BoxVerticesAndCentre)
{
  std::mt19937_64 rng(9);
  for (Index r = 1; r <= 6; ++r) {
    const auto W   = bounding_box(random_cloud(rng, r, 40));
    const Index nv = W.n_vertices();
    for (Index v = 0; v < nv; ++v) {
      const Vector lam = barycentric(W, W.vertices.col(v));
      EXPECT_LE((lam - Vector::Unit(nv, v)).cwiseAbs().maxCoeff(), 1e-12);
    }
    const Vector lam = barycentric(W, 0.5 * (W.box_lo + W.box_hi));
    EXPECT_LE((lam.array() - std::pow(0.5, static_cast<double>(r))).abs().maxCoeff(), 1e-12);
  }
}

TEST(Barycentric, GeneralPolytopeContract)
{
  std::mt19937_64 rng(10);
  ParamPolytope W;
  W.r        = 3;
  W.kind     = PolytopeKind::optimized;
  W.U_pc     = Matrix::Identity(3, 3);
  W.vertices = random_cloud(rng, 3, 9);
  for (int rep = 0; rep < 100; ++rep) {
    Vector w(9);
    for (Index i = 0; i < 9; ++i) { w(i) = uniform01(rng); }
    w /= w.sum();
    const Vector rho = W.vertices * w;
    const Vector lam = barycentric(W, rho);
    EXPECT_GE(lam.minCoeff(), -1e-10);
    EXPECT_LE(std::abs(lam.sum() - 1.0), 1e-10);
    EXPECT_LE((W.vertices * lam - rho).cwiseAbs().maxCoeff(), 1e-8);
    // independent LP oracle agrees on feasibility
    EXPECT_TRUE(in_convex_hull(W.vertices, rho, 1e-9));
    // minimum norm: no feasible perturbation along the null space decreases the norm
    EXPECT_LE(lam.norm(), w.norm() + 1e-9);
  }
}

TEST(Barycentric, MinimumNormOnSquare)
{
  // centre of a square: the unique min-norm weights are uniform
  ParamPolytope W;
  W.r    = 2;
  W.kind = PolytopeKind::optimized;
  W.U_pc = Matrix::Identity(2, 2);
  W.vertices.resize(2, 4);
  W.vertices << 0, 1, 1, 0, 0, 0, 1, 1;
  Vector c(2);
  c << 0.5, 0.5;
  const Vector lam = barycentric(W, c);
  EXPECT_LE((lam.array() - 0.25).abs().maxCoeff(), 1e-12);
}

TEST(Barycentric, OutsideThrowsWithMagnitude)
{
  Matrix P(2, 2);
  P << 0, 1, 0, 1;
  const auto W = bounding_box(P);
  Vector x(2);
  x << 1.5, 0.5;
  try {
    barycentric(W, x);
    FAIL();
  } catch (const OutsideDomain & e) {
    EXPECT_NEAR(e.violation, 0.5, 1e-12);
  }
  ParamPolytope G = W;
  G.kind          = PolytopeKind::optimized;
  EXPECT_THROW(barycentric(G, x), OutsideDomain);
}

TEST(Barycentric, MultilinearIsContinuous)
{
  Matrix P(2, 2);
  P << 0, 1, 0, 1;
  const auto W = bounding_box(P);
  Vector prev_lam;
  for (int i = 0; i <= 1000; ++i) {
    const double t = i / 1000.0;
    Vector x(2);
    x << t, 0.5 + 0.4 * std::sin(6.0 * t);
    const Vector lam = barycentric(W, x);
    if (prev_lam.size() > 0) { EXPECT_LE((lam - prev_lam).cwiseAbs().maxCoeff(), 0.02); }
    prev_lam = lam;
  }
}

TEST(Projection, OntoBoxAndPolytope)
{
  Matrix P(2, 2);
  P << 0, 1, 0, 1;
  const auto W = bounding_box(P);
  Vector x(2);
  x << 2.0, 0.5;
  Vector expect(2);
  expect << 1.0, 0.5;
  EXPECT_LE((project_onto(W, x) - expect).norm(), 1e-12);
  ParamPolytope G = W;
  G.kind          = PolytopeKind::optimized;
  EXPECT_LE((project_onto(G, x) - expect).norm(), 1e-8);
  x << 3.0, 4.0;
  expect << 1.0, 1.0;
  EXPECT_LE((project_onto(G, x) - expect).norm(), 1e-8);
}

TEST(Polytope, KindStrings)
{
  EXPECT_EQ(polytope_kind_from_string("pca_box"), PolytopeKind::pca_box);
  EXPECT_EQ(to_string(PolytopeKind::optimized), "optimized");
  EXPECT_THROW(polytope_kind_from_string("sphere"), ConfigError);
}
