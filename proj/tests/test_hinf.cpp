#include <gtest/gtest.h>

#include <random>

#include "lpvgs/hinf.hpp"
#include "lpvgs/trajectory.hpp"

using namespace lpvgs;

namespace {

AffineLpvModel scalar_model()
{
  AffineLpvModel m;
  m.r    = 1;
  m.k    = 1;
  m.Abar = {Matrix::Constant(1, 1, 1.0), Matrix::Zero(1, 1)};
  m.Bbar = Matrix::Ones(1, 1);
  m.Cbar = Matrix::Ones(1, 1);
  m.V_r  = Matrix::Ones(1, 1);
  m.V_k  = Matrix::Ones(1, 1);
  return m;
}

ParamPolytope single_vertex(const Vector & w)
{
  ParamPolytope W;
  W.r        = w.size();
  W.kind     = PolytopeKind::optimized;
  W.U_pc     = Matrix::Identity(w.size(), w.size());
  W.vertices = w;
  return W;
}

// two-state plant with one scheduling parameter
AffineLpvModel two_state_model()
{
  AffineLpvModel m;
  m.r = 1;
  m.k = 2;
  Matrix A0(2, 2), A1(2, 2);
  A0 << 0.5, 1.0, -1.0, -0.2;
  A1 << 0.0, 0.3, -0.3, 0.1;
  m.Abar = {A0, A1};
  m.Bbar = Matrix(2, 1);
  m.Bbar << 0.0, 1.0;
  m.Cbar = Matrix(1, 2);
  m.Cbar << 1.0, 0.0;
  m.V_r = Matrix::Identity(2, 1);
  m.V_k = Matrix::Identity(2, 2);
  return m;
}

}  // namespace

TEST(Hinf, ScalarPlantMatchesSampledNorm)
{
  // x' = x + u + d, z = (x, 0.1 u), y = x
  const auto m = scalar_model();
  PerformanceWeights w;
  w.W_n           = 0.0;
  const auto ctrl = synthesize_polytopic_hinf(m, single_vertex(Vector::Zero(1)), w);
  ASSERT_EQ(ctrl.n_vertices(), 1);
  const double sampled = hinf_norm_sampled(vertex_closed_loop(m, ctrl, 0));
  EXPECT_LE(sampled, ctrl.gamma * (1.0 + 1e-9));
  EXPECT_LE(ctrl.gamma, 1.1 * sampled);
  EXPECT_FALSE(ctrl.log.empty());
}

TEST(Hinf, TwoStateSingleVertexMatchesSampledNorm)
{
  const auto m    = two_state_model();
  const auto ctrl = synthesize_polytopic_hinf(m, single_vertex(Vector::Constant(1, 0.5)));
  const double sampled = hinf_norm_sampled(vertex_closed_loop(m, ctrl, 0));
  EXPECT_LE(sampled, ctrl.gamma * (1.0 + 1e-9));
  EXPECT_LE(ctrl.gamma, 1.1 * sampled);
}

TEST(Hinf, DegeneratePolytopeReducesToLti)
{
  const auto m = two_state_model();
  ParamPolytope W = single_vertex(Vector::Constant(1, 0.5));
  W.vertices      = Vector::Constant(1, 0.5).replicate(1, 4);
  const auto poly = synthesize_polytopic_hinf(m, W);
  const auto lti  = synthesize_polytopic_hinf(m, single_vertex(Vector::Constant(1, 0.5)));
  ASSERT_EQ(poly.n_vertices(), 4);
  for (Index i = 1; i < 4; ++i) {
    EXPECT_EQ((poly.Ak[static_cast<std::size_t>(i)] - poly.Ak[0]).norm(), 0.0);
    EXPECT_EQ((poly.Dk[static_cast<std::size_t>(i)] - poly.Dk[0]).norm(), 0.0);
  }
  EXPECT_NEAR(poly.gamma, lti.gamma, 1e-6 * lti.gamma);
}

TEST(Hinf, BoxPolytopeUpperBoundsFrozenVertexNorms)
{
  const auto m = two_state_model();
  Matrix P(1, 2);
  P << -1.0, 1.0;
  const auto W    = bounding_box(P);
  const auto ctrl = synthesize_polytopic_hinf(m, W);
  ASSERT_EQ(ctrl.n_vertices(), 2);
  for (Index i = 0; i < 2; ++i) {
    EXPECT_LE(hinf_norm_sampled(vertex_closed_loop(m, ctrl, i)), ctrl.gamma * (1.0 + 1e-9));
  }
  // the stored Lyapunov matrix is positive definite
  EXPECT_GE(Eigen::SelfAdjointEigenSolver<Matrix>(ctrl.lyapunov).eigenvalues()(0), 1e-8);
  const auto cert = quadratic_stability_certificate(closed_loop_vertices(m, ctrl));
  EXPECT_TRUE(cert.ok);
  EXPECT_LT(cert.max_residual, -1e-8);
  // bisection log: every gamma above a feasible one that was tested is feasible
  double min_feasible = std::numeric_limits<double>::infinity();
  for (const auto & e : ctrl.log) {
    if (e.feasible) { min_feasible = std::min(min_feasible, e.gamma); }
  }
  for (const auto & e : ctrl.log) {
    if (e.gamma > min_feasible) { EXPECT_TRUE(e.feasible) << e.gamma; }
  }
}

TEST(Hinf, FixedGammaMonotone)
{
  const auto m = two_state_model();
  const auto W = single_vertex(Vector::Constant(1, 0.0));
  const auto base = synthesize_polytopic_hinf(m, W);
  for (double f : {1.5, 3.0, 10.0}) {
    HinfOptions o;
    o.gamma = f * base.gamma;
    EXPECT_NO_THROW(synthesize_polytopic_hinf(m, W, {}, o)) << f;
  }
  HinfOptions o;
  o.gamma = 0.5 * base.gamma;
  try {
    synthesize_polytopic_hinf(m, W, {}, o);
    FAIL();
  } catch (const SynthesisInfeasible & e) {
    EXPECT_DOUBLE_EQ(e.gamma, 0.5 * base.gamma);
  }
}

TEST(Hinf, ReducedBurgersModel)
{
  const auto s  = make_burgers({{"n", 32}, {"mu", 1.5}, {"convection", 0.05}});
  const auto tr = integrate(s, Vector::Zero(s.n()), SignalSpec::fading(Vector::Ones(2)), 0.0, 5.0, 101);
  const auto basis = pod_basis(snapshot_matrix(tr), 6);
  const auto m  = build_affine_lpv(s, basis, 2, 6);
  Matrix rho(2, tr.size());
  for (Index j = 0; j < tr.size(); ++j) { rho.col(j) = encode(m.V_r, tr.states.col(j)); }
  const auto W    = bounding_box(rho, 0.1);
  const auto ctrl = synthesize_polytopic_hinf(m, W);
  ASSERT_EQ(ctrl.n_vertices(), 4);
  EXPECT_EQ(ctrl.order(), 6);
  for (Index i = 0; i < 4; ++i) {
    EXPECT_LE(hinf_norm_sampled(vertex_closed_loop(m, ctrl, i)), ctrl.gamma * (1.0 + 1e-9));
  }
  const auto cert = quadratic_stability_certificate(closed_loop_vertices(m, ctrl));
  EXPECT_TRUE(cert.ok);
}

TEST(ScheduledGain, BlendContract)
{
  std::mt19937_64 rng(3);
  VertexControllerSet c;
  for (int i = 0; i < 3; ++i) {
    Matrix A(2, 2), B(2, 1), C(1, 2), D(1, 1);
    for (Matrix * M : {&A, &B, &C, &D}) {
      for (Index e = 0; e < M->size(); ++e) { M->data()[e] = standard_normal(rng); }
    }
    c.Ak.push_back(A);
    c.Bk.push_back(B);
    c.Ck.push_back(C);
    c.Dk.push_back(D);
  }
  const auto K1 = scheduled_gain(c, Vector::Unit(3, 1));
  EXPECT_EQ((K1.Ak - c.Ak[1]).norm(), 0.0);
  EXPECT_EQ((K1.Dk - c.Dk[1]).norm(), 0.0);
  Vector mid(3);
  mid << 0.5, 0.0, 0.5;
  const auto Km = scheduled_gain(c, mid);
  EXPECT_LE((Km.Bk - 0.5 * (c.Bk[0] + c.Bk[2])).cwiseAbs().maxCoeff(), 1e-15);
  for (int rep = 0; rep < 50; ++rep) {
    Vector l(3);
    for (Index i = 0; i < 3; ++i) { l(i) = uniform01(rng); }
    l /= l.sum();
    const auto K = scheduled_gain(c, l);
    for (Index e = 0; e < 4; ++e) {
      const double lo = std::min({c.Ak[0].data()[e], c.Ak[1].data()[e], c.Ak[2].data()[e]});
      const double hi = std::max({c.Ak[0].data()[e], c.Ak[1].data()[e], c.Ak[2].data()[e]});
      EXPECT_GE(K.Ak.data()[e], lo - 1e-14);
      EXPECT_LE(K.Ak.data()[e], hi + 1e-14);
    }
  }
  EXPECT_THROW(scheduled_gain(c, Vector::Ones(3)), WeightError);
  EXPECT_THROW(scheduled_gain(c, Vector::Ones(2) / 2.0), WeightError);
  Vector neg(3);
  neg << 1.5, -0.5, 0.0;
  EXPECT_THROW(scheduled_gain(c, neg), WeightError);
}

TEST(QuadraticStability, Examples)
{
  const std::vector<Matrix> stable(3, -Matrix::Identity(3, 3));
  const auto ok = quadratic_stability_certificate(stable);
  EXPECT_TRUE(ok.ok);
  EXPECT_LT(ok.max_residual, -1e-8);
  std::vector<Matrix> bad = stable;
  bad[1](0, 0)            = 0.5;
  const auto no           = quadratic_stability_certificate(bad);
  EXPECT_FALSE(no.ok);
}

TEST(QuadraticStability, SwitchingCounterexample)
{
  // two individually stable matrices without a common quadratic Lyapunov function
  Matrix A1(2, 2), A2(2, 2);
  A1 << -0.1, 1.0, -10.0, -0.1;
  A2 << -0.1, 10.0, -1.0, -0.1;
  EXPECT_FALSE(quadratic_stability_certificate({A1, A2}).ok);
  EXPECT_TRUE(quadratic_stability_certificate({A1}).ok);
}

TEST(HinfNorm, FirstOrderLag)
{
  StateSpace s{-Matrix::Identity(1, 1) * 2.0, Matrix::Ones(1, 1), Matrix::Ones(1, 1), Matrix::Zero(1, 1)};
  EXPECT_NEAR(hinf_norm_sampled(s), 0.5, 1e-6);
  s.A(0, 0) = 1.0;
  EXPECT_TRUE(std::isinf(hinf_norm_sampled(s)));
}

TEST(Hinf, NullSpace)
{
  Matrix M(1, 3);
  M << 1.0, 1.0, 0.0;
  const Matrix N = null_space(M);
  ASSERT_EQ(N.cols(), 2);
  EXPECT_LE((M * N).norm(), 1e-14);
  EXPECT_LE((N.transpose() * N - Matrix::Identity(2, 2)).norm(), 1e-14);
}
