#include <gtest/gtest.h>

#include <random>

#include "lpvgs/trajectory.hpp"

using namespace lpvgs;

TEST(Signal, FadingEndpoints)
{
  const auto sig = SignalSpec::fading(Vector::Ones(1), 2.0, 1);
  EXPECT_EQ(signal_value(sig, 0.0)(0), 1.0);
  EXPECT_EQ(signal_value(sig, 2.0)(0), 0.0);
  EXPECT_EQ(signal_value(sig, 3.0)(0), 0.0);
}

TEST(Signal, FadingIsC1)
{
  for (int order = 1; order <= 3; ++order) {
    const auto sig = SignalSpec::fading(Vector::Ones(1), 2.0, order);
    const double e = 1e-6;
    // one-sided slopes at the fade end and at zero vanish
    EXPECT_NEAR((signal_value(sig, 2.0)(0) - signal_value(sig, 2.0 - e)(0)) / e, 0.0, 1e-5) << order;
    EXPECT_NEAR((signal_value(sig, e)(0) - signal_value(sig, 0.0)(0)) / e, 0.0, 1e-5) << order;
    // monotone decrease inside
    double prev = 1.0;
    for (int i = 1; i <= 100; ++i) {
      const double v = signal_value(sig, 0.02 * i)(0);
      EXPECT_LE(v, prev);
      prev = v;
    }
  }
}

TEST(Signal, ZeroAndStep)
{
  EXPECT_EQ(signal_value(SignalSpec::zero(3), 1.7).norm(), 0.0);
  SignalSpec s;
  s.kind      = SignalKind::step;
  s.amplitude = Vector::Constant(2, 0.5);
  EXPECT_EQ(signal_value(s, 100.0)(1), 0.5);
}

TEST(Integrate, LinearDecay)
{
  QuadraticSystem s("decay", -Matrix::Identity(1, 1), QuadraticTensor(1, {}), Matrix::Zero(1, 1),
                    Matrix::Identity(1, 1), Vector::Zero(1));
  const auto tr = integrate(s, Vector::Ones(1), SignalSpec::zero(1), 0.0, 1.0, 11);
  EXPECT_NEAR(tr.states(0, 10), 0.367879, 1e-6);
}

TEST(Integrate, GridAndShapes)
{
  const auto s  = make_burgers({});
  Vector x0     = Vector::Zero(s.n());
  const auto tr = integrate(s, x0, SignalSpec::fading(Vector::Ones(2)), 0.0, 5.0, 417);
  ASSERT_EQ(tr.size(), 417);
  EXPECT_EQ(tr.states.cols(), 417);
  EXPECT_EQ(tr.outputs.cols(), 417);
  EXPECT_EQ(tr.inputs.cols(), 417);
  EXPECT_EQ(tr.times(416), 5.0);
  for (Index j = 1; j < tr.size(); ++j) { EXPECT_GT(tr.times(j), tr.times(j - 1)); }
  for (Index j = 0; j < tr.size(); ++j) {
    const Vector y = s.C() * tr.states.col(j);
    EXPECT_EQ((y - tr.outputs.col(j)).norm(), 0.0);
  }
  EXPECT_EQ(tr.meta.integrator, "rosenbrock23");
  EXPECT_EQ(snapshot_matrix(tr).cols(), 417);
}

TEST(Integrate, EquilibriumSnapshotsAreZero)
{
  const auto s  = make_burgers({{"mu", 0.3}});
  const auto tr = integrate(s, Vector::Zero(s.n()), SignalSpec::zero(2), 0.0, 1.0, 5);
  EXPECT_EQ(snapshot_matrix(tr).norm(), 0.0);
}

TEST(Integrate, BurgersEnergyDissipation)
{
  std::mt19937_64 rng(42);
  const auto s = make_burgers({{"mu", 0.0}});
  Vector x0(s.n());
  for (Index i = 0; i < s.n(); ++i) { x0(i) = standard_normal(rng); }
  for (auto m : {OdeMethod::rosenbrock23, OdeMethod::dopri5}) {
    IntegrateOptions o;
    o.method      = m;
    const auto tr = integrate(s, x0, SignalSpec::zero(2), 0.0, 2.0, 101, o);
    for (Index j = 1; j < tr.size(); ++j) {
      EXPECT_LE(tr.states.col(j).norm(), tr.states.col(j - 1).norm() * (1.0 + 1e-9));
    }
  }
}

TEST(Integrate, ToleranceConvergence)
{
  const auto s = make_burgers({{"mu", 0.5}});
  Vector x0    = Vector::Zero(s.n());
  IntegrateOptions loose, tight;
  loose.rtol = 1e-6;
  loose.atol = 1e-8;
  tight.rtol = 0.5e-6;
  tight.atol = 0.5e-8;
  const auto a = integrate(s, x0, SignalSpec::fading(Vector::Ones(2)), 0.0, 5.0, 11, loose);
  const auto b = integrate(s, x0, SignalSpec::fading(Vector::Ones(2)), 0.0, 5.0, 11, tight);
  const Vector xa = a.states.col(10), xb = b.states.col(10);
  EXPECT_LT((xa - xb).cwiseAbs().maxCoeff(), 10.0 * (loose.rtol * xa.cwiseAbs().maxCoeff() + loose.atol));
}

TEST(Integrate, FeedbackClosure)
{
  QuadraticSystem s("scalar", Matrix::Identity(1, 1), QuadraticTensor(1, {}), Matrix::Identity(1, 1),
                    Matrix::Identity(1, 1), Vector::Zero(1));
  InputLaw k    = [](double, const Vector & x) { return Vector(-3.0 * x); };
  const auto tr = integrate(s, Vector::Ones(1), k, 0.0, 1.0, 3);
  EXPECT_NEAR(tr.states(0, 2), std::exp(-2.0), 1e-6);
  EXPECT_NEAR(tr.inputs(0, 2), -3.0 * std::exp(-2.0), 3e-6);
}

TEST(Integrate, BadArguments)
{
  const auto s = make_lorenz({});
  EXPECT_THROW(integrate(s, Vector::Zero(2), SignalSpec::zero(1), 0.0, 1.0, 3), DimensionError);
  EXPECT_THROW(integrate(s, Vector::Zero(3), SignalSpec::zero(1), 1.0, 0.0, 3), DimensionError);
  EXPECT_THROW(integrate(s, Vector::Zero(3), SignalSpec::zero(1), 0.0, 1.0, 1), DimensionError);
}
