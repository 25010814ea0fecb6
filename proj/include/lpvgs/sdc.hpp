#pragma once

/**
 * @file
 * @brief Control-affine systems with quadratic nonlinearity in state-dependent
 *        coefficient (SDC) form, plus small benchmark plants.
 *
 * A QuadraticSystem represents
 * \f[
 *   \dot x = A_0 x + Q(x, x) + B u, \qquad y = C x,
 * \f]
 * with \f$ Q(x, x)_i = \sum_{j,l} Q_{ijl} x_j x_l \f$.  The SDC factorization is
 * fixed to \f$ A(x) = A_0 + L(x) \f$, \f$ L(v)_{il} = \sum_j Q_{ijl} v_j \f$, i.e.
 * the first tensor argument is the coefficient argument.
 */

#include <Eigen/Dense>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "common.hpp"

namespace lpvgs {

struct QuadEntry
{
  Index i;  ///< row (equation)
  Index j;  ///< coefficient argument
  Index l;  ///< state argument
  double value;
};

/// Sparse order-3 tensor in coordinate format, sorted by (i, j, l) with duplicates summed.
class QuadraticTensor
{
public:
  QuadraticTensor() = default;

  QuadraticTensor(Index n, std::vector<QuadEntry> entries) : n_(n)
  {
    for (const auto & e : entries) {
      require_dim(e.i >= 0 && e.i < n && e.j >= 0 && e.j < n && e.l >= 0 && e.l < n,
                  "quadratic tensor index out of range");
    }
    std::sort(entries.begin(), entries.end(), [](const QuadEntry & a, const QuadEntry & b) {
      return std::tie(a.i, a.j, a.l) < std::tie(b.i, b.j, b.l);
    });
    for (const auto & e : entries) {
      if (!entries_.empty() && entries_.back().i == e.i && entries_.back().j == e.j
          && entries_.back().l == e.l) {
        entries_.back().value += e.value;
      } else {
        entries_.push_back(e);
      }
    }
  }

  Index dim() const noexcept { return n_; }
  const std::vector<QuadEntry> & entries() const noexcept { return entries_; }
  std::size_t nnz() const noexcept { return entries_.size(); }

  /// out_i = sum_{j,l} Q_ijl a_j b_l
  Vector apply(const Vector & a, const Vector & b) const
  {
    Vector out = Vector::Zero(n_);
    for (const auto & e : entries_) { out(e.i) += e.value * a(e.j) * b(e.l); }
    return out;
  }

  /// L(v)_il = sum_j Q_ijl v_j
  Matrix coefficient(const Vector & v) const
  {
    Matrix L = Matrix::Zero(n_, n_);
    for (const auto & e : entries_) { L(e.i, e.l) += e.value * v(e.j); }
    return L;
  }

  /// M(w)_ij = sum_l Q_ijl w_l, the derivative with respect to the coefficient argument.
  Matrix coefficient_transposed(const Vector & w) const
  {
    Matrix M = Matrix::Zero(n_, n_);
    for (const auto & e : entries_) { M(e.i, e.j) += e.value * w(e.l); }
    return M;
  }

private:
  Index n_ = 0;
  std::vector<QuadEntry> entries_;
};

/**
 * @brief Full-order plant, stored shifted so that the working point is the origin.
 *
 * Immutable after construction.
 */
class QuadraticSystem
{
public:
  QuadraticSystem() = default;

  QuadraticSystem(std::string name, Matrix A0, QuadraticTensor Q, Matrix B, Matrix C, Vector x_ss)
      : name_(std::move(name)), A0_(std::move(A0)), Q_(std::move(Q)), B_(std::move(B)), C_(std::move(C)),
        x_ss_(std::move(x_ss))
  {
    const Index n = A0_.rows();
    require_dim(A0_.cols() == n, "A0 must be square");
    require_dim(Q_.dim() == n, "Q dimension must equal n");
    require_dim(B_.rows() == n, "B must have n rows");
    require_dim(C_.cols() == n, "C must have n columns");
    require_dim(x_ss_.size() == n, "equilibrium must have length n");
  }

  const std::string & name() const noexcept { return name_; }
  Index n() const noexcept { return A0_.rows(); }
  Index p() const noexcept { return B_.cols(); }
  Index q() const noexcept { return C_.rows(); }
  const Matrix & A0() const noexcept { return A0_; }
  const QuadraticTensor & Q() const noexcept { return Q_; }
  const Matrix & B() const noexcept { return B_; }
  const Matrix & C() const noexcept { return C_; }
  const Vector & equilibrium() const noexcept { return x_ss_; }

  std::map<std::string, double> params;

private:
  std::string name_;
  Matrix A0_;
  QuadraticTensor Q_;
  Matrix B_;
  Matrix C_;
  Vector x_ss_;
};

/// A0 x + Q(x, x) + B u
inline Vector quadratic_rhs(const QuadraticSystem & sys, const Vector & x, const Vector & u)
{
  require_dim(x.size() == sys.n(), "quadratic_rhs: state dimension mismatch");
  require_dim(u.size() == sys.p(), "quadratic_rhs: input dimension mismatch");
  Vector dx = sys.A0() * x + sys.B() * u;
  for (const auto & e : sys.Q().entries()) { dx(e.i) += e.value * x(e.j) * x(e.l); }
  return dx;
}

/// A(v) = A0 + L(v)
inline Matrix sdc_coefficient(const QuadraticSystem & sys, const Vector & v)
{
  require_dim(v.size() == sys.n(), "sdc_coefficient: dimension mismatch");
  return sys.A0() + sys.Q().coefficient(v);
}

/// Jacobian of the autonomous part, A0 + L(x) + M(x).
inline Matrix quadratic_jacobian(const QuadraticSystem & sys, const Vector & x)
{
  require_dim(x.size() == sys.n(), "quadratic_jacobian: dimension mismatch");
  return sys.A0() + sys.Q().coefficient(x) + sys.Q().coefficient_transposed(x);
}

namespace detail {

/// Newton iteration for A0 x + Q(x, x) = 0.
inline Vector solve_equilibrium(const Matrix & A0, const QuadraticTensor & Q, Vector x, int max_iter = 50)
{
  for (int it = 0; it < max_iter; ++it) {
    const Vector g = A0 * x + Q.apply(x, x);
    const double scale = std::max(1.0, x.lpNorm<Eigen::Infinity>());
    if (!g.allFinite()) { break; }
    if (g.lpNorm<Eigen::Infinity>() <= 1e-12 * scale) { return x; }
    const Matrix J = A0 + Q.coefficient(x) + Q.coefficient_transposed(x);
    Eigen::FullPivLU<Matrix> lu(J);
    if (!lu.isInvertible()) { break; }
    x -= lu.solve(g);
  }
  throw EquilibriumError("steady-state Newton iteration did not converge");
}

/// Linear part after the substitution x = x_ss + d.
inline Matrix shifted_linear_part(const Matrix & A0, const QuadraticTensor & Q, const Vector & x_ss)
{
  return A0 + Q.coefficient(x_ss) + Q.coefficient_transposed(x_ss);
}

inline double param_or(const std::map<std::string, double> & params, const std::string & key, double dflt)
{
  auto it = params.find(key);
  return it == params.end() ? dflt : it->second;
}

inline void check_known_params(const std::map<std::string, double> & params,
                               std::initializer_list<const char *> known,
                               const std::string & bench)
{
  for (const auto & [k, v] : params) {
    (void)v;
    if (std::none_of(known.begin(), known.end(), [&](const char * s) { return k == s; })) {
      throw ConfigError("benchmark '" + bench + "' has no parameter '" + k + "'");
    }
  }
}

}  // namespace detail

/**
 * @brief Viscous Burgers equation on (0, 1) with homogeneous Dirichlet boundaries.
 *
 *   u_t = nu u_xx - convection * u u_x + mu u + b_1(x) u_1 + b_2(x) u_2
 *
 * The convective term uses the skew-symmetric central discretization
 *   -(convection / 6h) [ (u_{i+1}^2 - u_{i-1}^2) + u_i (u_{i+1} - u_{i-1}) ],
 * which makes the quadratic term energy neutral, so ||x||^2 decays when mu = 0.
 *
 * Parameters (defaults): n = 32, nu = 0.05, mu = 0, convection = 1,
 * act_width = 0.1 (half width of the two parabolic actuator bumps centred at
 * 0.25 and 0.75), obs_width = 0.05, obs_offset = 0.1.
 * Outputs: window averages centred at 0.35, 0.5, 0.65, then the same three
 * windows shifted by obs_offset.
 */
inline QuadraticSystem make_burgers(const std::map<std::string, double> & params)
{
  detail::check_known_params(params, {"n", "nu", "mu", "convection", "act_width", "obs_width", "obs_offset"},
                             "burgers");
  const auto n        = static_cast<Index>(detail::param_or(params, "n", 32));
  const double nu     = detail::param_or(params, "nu", 0.05);
  const double mu     = detail::param_or(params, "mu", 0.0);
  const double conv   = detail::param_or(params, "convection", 1.0);
  const double aw     = detail::param_or(params, "act_width", 0.1);
  const double ow     = detail::param_or(params, "obs_width", 0.05);
  const double offset = detail::param_or(params, "obs_offset", 0.1);
  if (n < 4) { throw ConfigError("burgers: n must be at least 4"); }

  const double h = 1.0 / static_cast<double>(n + 1);
  auto grid      = [h](Index i) { return static_cast<double>(i + 1) * h; };

  Matrix A0 = Matrix::Zero(n, n);
  for (Index i = 0; i < n; ++i) {
    A0(i, i) = -2.0 * nu / (h * h) + mu;
    if (i > 0) { A0(i, i - 1) = nu / (h * h); }
    if (i + 1 < n) { A0(i, i + 1) = nu / (h * h); }
  }

  std::vector<QuadEntry> q;
  const double c = conv / (6.0 * h);
  for (Index i = 0; i < n; ++i) {
    if (i + 1 < n) {
      q.push_back({i, i + 1, i + 1, -c});
      q.push_back({i, i, i + 1, -c});
    }
    if (i > 0) {
      q.push_back({i, i - 1, i - 1, c});
      q.push_back({i, i, i - 1, c});
    }
  }
  QuadraticTensor Q(n, std::move(q));

  Matrix B = Matrix::Zero(n, 2);
  const double centres[2] = {0.25, 0.75};
  for (int k = 0; k < 2; ++k) {
    for (Index i = 0; i < n; ++i) {
      const double s = (grid(i) - centres[k]) / aw;
      B(i, k)        = std::max(0.0, 1.0 - s * s);
    }
  }

  Matrix C = Matrix::Zero(6, n);
  const double obs_centres[3] = {0.35, 0.5, 0.65};
  for (int row = 0; row < 6; ++row) {
    const double centre = obs_centres[row % 3] + (row >= 3 ? offset : 0.0);
    std::vector<Index> members;
    for (Index i = 0; i < n; ++i) {
      if (std::abs(grid(i) - centre) <= ow + 1e-12) { members.push_back(i); }
    }
    if (members.empty()) {
      // window narrower than the grid spacing: use the nearest node
      members.push_back(std::clamp<Index>(static_cast<Index>(std::lround(centre / h)) - 1, 0, n - 1));
    }
    for (Index i : members) { C(row, i) = 1.0 / static_cast<double>(members.size()); }
  }

  const Vector x_ss = detail::solve_equilibrium(A0, Q, Vector::Zero(n));
  QuadraticSystem sys("burgers", detail::shifted_linear_part(A0, Q, x_ss), std::move(Q), std::move(B),
                      std::move(C), x_ss);
  sys.params = {{"n", static_cast<double>(n)}, {"nu", nu}, {"mu", mu}, {"convection", conv},
                {"act_width", aw}, {"obs_width", ow}, {"obs_offset", offset}};
  return sys;
}

/**
 * @brief Lorenz system with actuation on the first state, B = e_1, C = I.
 *
 * Parameters: sigma = 10, rho = 28, beta = 8/3, equilibrium = 0 (origin),
 * +1 or -1 for the two non-trivial fixed points, shift = 1 (set 0 to keep the
 * unshifted coordinates while still recording the equilibrium).
 */
inline QuadraticSystem make_lorenz(const std::map<std::string, double> & params)
{
  detail::check_known_params(params, {"sigma", "rho", "beta", "equilibrium", "shift"}, "lorenz");
  const double sigma = detail::param_or(params, "sigma", 10.0);
  const double rho   = detail::param_or(params, "rho", 28.0);
  const double beta  = detail::param_or(params, "beta", 8.0 / 3.0);
  const double which = detail::param_or(params, "equilibrium", 0.0);
  const bool shift   = detail::param_or(params, "shift", 1.0) != 0.0;

  Matrix A0(3, 3);
  A0 << -sigma, sigma, 0.0, rho, -1.0, 0.0, 0.0, 0.0, -beta;
  // -x z in the second equation, +x y in the third; x is the coefficient argument.
  QuadraticTensor Q(3, {{1, 0, 2, -1.0}, {2, 0, 1, 1.0}});

  Vector guess = Vector::Zero(3);
  if (which != 0.0 && rho > 1.0) {
    const double s = std::sqrt(beta * (rho - 1.0));
    guess << (which > 0 ? s : -s), (which > 0 ? s : -s), rho - 1.0;
    guess *= 1.0 + 1e-3;
  }
  const Vector x_ss = detail::solve_equilibrium(A0, Q, guess);
  Matrix A_lin      = shift ? detail::shifted_linear_part(A0, Q, x_ss) : A0;
  Matrix B          = Matrix::Zero(3, 1);
  B(0, 0)           = 1.0;
  QuadraticSystem sys("lorenz", std::move(A_lin), std::move(Q), std::move(B), Matrix::Identity(3, 3), x_ss);
  sys.params = {{"sigma", sigma}, {"rho", rho}, {"beta", beta}, {"equilibrium", which},
                {"shift", shift ? 1.0 : 0.0}};
  return sys;
}

inline QuadraticSystem make_benchmark(const std::string & name, const std::map<std::string, double> & params = {})
{
  if (name == "burgers") { return make_burgers(params); }
  if (name == "lorenz") { return make_lorenz(params); }
  throw UnknownBenchmark(name);
}

}  // namespace lpvgs
