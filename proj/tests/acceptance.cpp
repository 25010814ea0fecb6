// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.
//
// Usage: lpvgs_acceptance [--work DIR] [--only 1,5,10]

#include <lpvgs/closedloop.hpp>
#include <lpvgs/hinf.hpp>
#include <lpvgs/io/artifacts.hpp>
#include <lpvgs/pipeline.hpp>
#include <lpvgs/polytope_opt.hpp>
#include <lpvgs/sdp.hpp>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

#include <chrono>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

using namespace lpvgs;

namespace {

struct Outcome
{
  bool pass = false;
  std::string detail;
};

class Stopwatch
{
public:
  double seconds() const { return std::chrono::duration<double>(Clock::now() - t0_).count(); }

private:
  using Clock = std::chrono::steady_clock;
  Clock::time_point t0_ = Clock::now();
};

std::string fmt(const char * f, double a)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double max_sym_eig(const Matrix & M)
{
  return Eigen::SelfAdjointEigenSolver<Matrix>(0.5 * (M + M.transpose())).eigenvalues().maxCoeff();
}

double min_sym_eig(const Matrix & M)
{
  return Eigen::SelfAdjointEigenSolver<Matrix>(0.5 * (M + M.transpose())).eigenvalues().minCoeff();
}

Vector random_vec(std::mt19937_64 & rng, Index n, double scale = 1.0)
{
  Vector v(n);
  for (Index i = 0; i < n; ++i) { v(i) = scale * standard_normal(rng); }
  return v;
}

// dense evaluation straight from the tensor entries
Vector dense_rhs(const QuadraticSystem & s, const Vector & x, const Vector & u)
{
  std::vector<Matrix> T(static_cast<std::size_t>(s.n()), Matrix::Zero(s.n(), s.n()));
  for (const auto & e : s.Q().entries()) { T[static_cast<std::size_t>(e.i)](e.j, e.l) += e.value; }
  Vector out = s.A0() * x + s.B() * u;
  for (Index i = 0; i < s.n(); ++i) { out(i) += x.dot(T[static_cast<std::size_t>(i)] * x); }
  return out;
}

/// Frequency-sampled H-infinity norm on 400 log-spaced points in [1e-4, 1e4].
double sampled_hinf(const StateSpace & s)
{
  using C = std::complex<double>;
  const Index n = s.A.rows();
  if (Eigen::EigenSolver<Matrix>(s.A).eigenvalues().real().maxCoeff() >= 0.0) {
    return std::numeric_limits<double>::infinity();
  }
  double best = 0.0;
  for (int i = 0; i < 400; ++i) {
    const double w = std::pow(10.0, -4.0 + 8.0 * i / 399.0);
    Eigen::MatrixXcd M = -s.A.cast<C>();
    M.diagonal().array() += C(0.0, w);
    const Eigen::MatrixXcd G = s.C.cast<C>() * M.partialPivLu().solve(s.B.cast<C>()) + s.D.cast<C>();
    best = std::max(best, Eigen::JacobiSVD<Eigen::MatrixXcd>(G).singularValues()(0));
  }
  (void)n;
  return best;
}

/// Common-Lyapunov residual of X over the given closed loops, or +inf if X is not positive definite.
double lyapunov_margin(const std::vector<Matrix> & Acl, const Matrix & X)
{
  if (X.rows() != Acl.front().rows() || min_sym_eig(X) <= 0.0) { return std::numeric_limits<double>::infinity(); }
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto & A : Acl) { worst = std::max(worst, max_sym_eig(A.transpose() * X + X * A)); }
  return worst;
}

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

Matrix burgers_snapshots(const QuadraticSystem & s)
{
  return snapshot_matrix(integrate(s, Vector::Zero(s.n()), SignalSpec::fading(Vector::Ones(s.p())), 0.0, 5.0, 417));
}

struct Synthesis
{
  std::string label;
  std::vector<Matrix> closed_loops;
  Matrix lyapunov;
};

class Suite
{
public:
  explicit Suite(std::string work) : work_(std::move(work)) {}

  // exact embedding with V = I
  Outcome c1()
  {
    Stopwatch sw;
    const auto s = make_burgers({{"n", 32}, {"mu", 1.5}, {"nu", 0.05}, {"convection", 0.05}});
    const auto m = build_affine_lpv(s, PodBasis::from_orthonormal(Matrix::Identity(32, 32)), 32, 32);
    const auto sig = SignalSpec::fading(Vector::Ones(s.p()));
    const auto a   = integrate(s, Vector::Zero(32), sig, 0.0, 5.0, 417);
    const auto b   = integrate(m, Vector::Zero(32), sig, 0.0, 5.0, 417);
    const double scale = a.states.cwiseAbs().maxCoeff();
    const double rel   = (a.states - b.states).cwiseAbs().maxCoeff() / scale;
    const double t     = sw.seconds();
    return {rel <= 1e-6 && t < 30.0 && a.size() == 417,
            "max rel state error " + fmt("%.2e", rel) + " over 417 instants, " + fmt("%.2f", t) + " s"};
  }

  // SDC consistency on both benchmarks
  Outcome c2()
  {
    std::mt19937_64 rng(2);
    double worst = 0.0, worst_dense = 0.0;
    for (const char * name : {"burgers", "lorenz"}) {
      const auto s = make_benchmark(name);
      for (int rep = 0; rep < 100; ++rep) {
        const Vector x = random_vec(rng, s.n());
        const Vector u = random_vec(rng, s.p());
        const Vector f = quadratic_rhs(s, x, u);
        const double scale = std::max(f.norm(), std::numeric_limits<double>::min());
        worst       = std::max(worst, (f - (sdc_coefficient(s, x) * x + s.B() * u)).norm() / scale);
        worst_dense = std::max(worst_dense, (f - dense_rhs(s, x, u)).norm() / scale);
      }
    }
    return {worst <= 1e-13 && worst_dense <= 1e-13,
            "max rel mismatch " + fmt("%.2e", worst) + " (dense oracle " + fmt("%.2e", worst_dense) + "), 200 pairs"};
  }

  // POD identity
  Outcome c3()
  {
    const Matrix S = burgers_snapshots(make_burgers({}));
    Eigen::SelfAdjointEigenSolver<Matrix> es(S * S.transpose());
    const Vector lam = es.eigenvalues().reverse().cwiseMax(0.0);
    double worst = 0.0, worst_oracle = 0.0, orth = 0.0;
    for (Index k : {2, 4, 8}) {
      const auto b      = pod_basis(S, k);
      const double err  = (S - b.V * (b.V.transpose() * S)).squaredNorm();
      const double tail = b.singular_values.tail(b.singular_values.size() - k).squaredNorm();
      worst             = std::max(worst, std::abs(err - tail) / tail);
      worst_oracle      = std::max(worst_oracle, std::abs(err - lam.tail(lam.size() - k).sum()) / tail);
      orth = std::max(orth, (b.V.transpose() * b.V - Matrix::Identity(k, k)).cwiseAbs().maxCoeff());
    }
    return {worst <= 1e-8 && orth <= 1e-10,
            "k in {2,4,8}: max rel |err - tail| " + fmt("%.2e", worst) + " (Gram oracle " + fmt("%.2e", worst_oracle) +
                "), |V'V - I| " + fmt("%.2e", orth)};
  }

  // PCA reparametrization on a reduced Burgers model
  Outcome c4()
  {
    const auto s = make_burgers({});
    const Matrix S = burgers_snapshots(s);
    const auto m   = build_affine_lpv(s, pod_basis(S, 10), 6, 10);
    const Matrix P = m.V_r.transpose() * S;
    const std::vector<Matrix> A(m.Abar.begin() + 1, m.Abar.end());
    const auto res = pca_box(P, A);
    std::mt19937_64 rng(4);
    double worst = 0.0;
    for (int rep = 0; rep < 50; ++rep) {
      const Vector rho    = random_vec(rng, 6, P.cwiseAbs().maxCoeff());
      const Vector rho_pc = res.polytope.U_pc.transpose() * rho;
      Matrix s1 = Matrix::Zero(10, 10), s2 = Matrix::Zero(10, 10);
      for (std::size_t i = 0; i < 6; ++i) {
        s1 += rho(static_cast<Index>(i)) * A[i];
        s2 += rho_pc(static_cast<Index>(i)) * res.A_pc[i];
      }
      worst = std::max(worst, (s1 - s2).cwiseAbs().maxCoeff());
    }
    return {worst <= 1e-10, "r = 6, k = 10, 50 draws: max entry gap " + fmt("%.2e", worst)};
  }

  // polytope containment, vertex budget, volume domination and fallback
  Outcome c5()
  {
    Stopwatch sw;
    const Matrix P = paraboloid_spiral_cloud();
    const auto res = optimize_polytope_report(P, 5, GaParams{}, 5);
    const double t = sw.seconds();
    const auto & W = res.polytope;
    optimized_demo_ = W;
    Index inside = 0;
    for (Index j = 0; j < P.cols(); ++j) { inside += contains(W, P.col(j)) ? 1 : 0; }
    const bool dominated = res.volume.estimate + 3.0 * res.volume.std_error < res.bbox_volume;

    // adversarial clouds: cube corners, and corners plus a uniform fill
    std::mt19937_64 rng(55);
    bool fallback_ok = true;
    for (int variant = 0; variant < 2; ++variant) {
      Matrix Q(3, variant ? 208 : 8);
      for (Index c = 0; c < 8; ++c) {
        for (Index d = 0; d < 3; ++d) { Q(d, c) = (c >> d) & 1; }
      }
      for (Index c = 8; c < Q.cols(); ++c) {
        for (Index d = 0; d < 3; ++d) { Q(d, c) = uniform01(rng); }
      }
      const auto F = optimize_polytope(Q, 5, GaParams{}, 7);
      bool all_in  = true;
      for (Index j = 0; j < Q.cols(); ++j) { all_in = all_in && contains(F, Q.col(j)); }
      fallback_ok = fallback_ok && F.fallback && F.kind == PolytopeKind::box && F.n_vertices() == 8 && all_in;
    }
    std::ostringstream d;
    d << "demo cloud: " << inside << "/" << P.cols() << " contained, " << W.n_vertices() << " vertices"
      << (W.fallback ? " (fallback)" : "") << ", volume " << fmt("%.4g", res.volume.estimate) << " +- "
      << fmt("%.2g", res.volume.std_error) << " vs box " << fmt("%.4g", res.bbox_volume) << ", " << fmt("%.1f", t)
      << " s; fallback contract " << (fallback_ok ? "holds" : "violated");
    return {inside == P.cols() && !W.fallback && W.n_vertices() <= 7 && dominated && fallback_ok && t < 120.0, d.str()};
  }

  // barycentric contract
  Outcome c6()
  {
    std::mt19937_64 rng(6);
    std::vector<ParamPolytope> polys;
    for (Index r = 1; r <= 6; ++r) {
      const Vector lo = random_vec(rng, r);
      Vector hi       = lo;
      for (Index i = 0; i < r; ++i) { hi(i) += 0.1 + uniform01(rng); }
      Matrix P(r, 2);
      P << lo, hi;
      polys.push_back(bounding_box(P));
    }
    if (!optimized_demo_) { c5(); }
    polys.push_back(*optimized_demo_);
    {
      // optimized polytope in six dimensions around a simplex-shaped cloud
      Matrix P(6, 150);
      for (Index j = 0; j < P.cols(); ++j) {
        Vector w(7);
        for (Index i = 0; i < 7; ++i) { w(i) = -std::log(std::max(uniform01(rng), 1e-300)); }
        w /= w.sum();
        P.col(j) = w.head(6);
      }
      GaParams prm;
      prm.population  = 24;
      prm.generations = 40;
      polys.push_back(optimize_polytope(P, 10, prm, 66));
    }

    double neg = 0.0, sum_gap = 0.0, recon = 0.0, unit_gap = 0.0;
    int points = 0;
    for (const auto & W : polys) {
      const Index nv = W.n_vertices();
      for (int rep = 0; rep < 200; ++rep) {
        Vector rho;
        if (W.kind == PolytopeKind::box) {
          rho = W.box_lo;
          for (Index i = 0; i < W.r; ++i) { rho(i) += uniform01(rng) * (W.box_hi(i) - W.box_lo(i)); }
        } else {
          Vector w(nv);
          for (Index i = 0; i < nv; ++i) { w(i) = -std::log(std::max(uniform01(rng), 1e-300)); }
          rho = W.vertices * (w / w.sum());
        }
        const Vector lam = barycentric(W, rho);
        neg     = std::min(neg, lam.minCoeff());
        sum_gap = std::max(sum_gap, std::abs(lam.sum() - 1.0));
        recon   = std::max(recon, (W.vertices * lam - rho).cwiseAbs().maxCoeff());
        ++points;
      }
      for (Index v = 0; v < nv; ++v) {
        const Vector lam = barycentric(W, W.vertices.col(v));
        unit_gap = std::max(unit_gap, (lam - Vector::Unit(nv, v)).cwiseAbs().maxCoeff());
      }
    }
    std::ostringstream d;
    d << polys.size() << " polytopes (boxes r=1..6, optimized r=3 and r=6" << (polys.back().fallback ? " [fallback]" : "")
      << "), " << points << " points: min lambda " << fmt("%.2e", neg) << ", |sum-1| " << fmt("%.2e", sum_gap)
      << ", |W lambda - rho| " << fmt("%.2e", recon) << ", vertex unit gap " << fmt("%.2e", unit_gap);
    return {neg >= -1e-10 && sum_gap <= 1e-10 && recon <= 1e-8 && unit_gap <= 1e-8, d.str()};
  }

  // Lyapunov LMIs through the SDP solver
  Outcome c7()
  {
    std::mt19937_64 rng(7);
    auto random_with_abscissa = [&](Index n, double shift) {
      Matrix M = Matrix::NullaryExpr(n, n, [&]() { return standard_normal(rng); });
      const double a = Eigen::EigenSolver<Matrix>(M).eigenvalues().real().maxCoeff();
      return Matrix(M - (a - shift) * Matrix::Identity(n, n));
    };
    auto problem = [](const Matrix & A, SymVar & X) {
      SdpProblem p;
      X = p.add_symmetric(A.rows(), "X");
      p.add_lmi([X](const Vector & x) { return SdpProblem::value(x, X); }, LmiSense::positive, 1.0, "X>I");
      p.add_lmi(
          [A, X](const Vector & x) {
            const Matrix Xv = SdpProblem::value(x, X);
            return Matrix(A.transpose() * Xv + Xv * A);
          },
          LmiSense::negative, 0.0, "lyap");
      p.bound = 1e6;
      return p;
    };
    int verified = 0, rejected = 0, false_cert = 0;
    double worst_res = -std::numeric_limits<double>::infinity();
    for (int rep = 0; rep < 20; ++rep) {
      const Index n  = 1 + rep % 10;
      const Matrix A = random_with_abscissa(n, -0.05 - 0.5 * uniform01(rng));
      SymVar X;
      try {
        const auto sol = solve_sdp(problem(A, X));
        if (sol.status == SdpStatus::feasible) {
          const Matrix Xv = SdpProblem::value(sol.x, X);
          const double res = max_sym_eig(A.transpose() * Xv + Xv * A);
          worst_res        = std::max(worst_res, res);
          if (res <= -1e-8 && min_sym_eig(Xv) > 0.0) { ++verified; }
        }
      } catch (const Error &) {
      }
    }
    for (int rep = 0; rep < 20; ++rep) {
      const Index n  = 1 + rep % 10;
      const Matrix A = random_with_abscissa(n, 0.02 + 0.5 * uniform01(rng));
      SymVar X;
      try {
        const auto sol = solve_sdp(problem(A, X));
        if (sol.status == SdpStatus::feasible) {
          ++false_cert;
        } else {
          ++rejected;
        }
      } catch (const IterationLimit &) {
        ++rejected;
      } catch (const NumericalBreakdown &) {
        ++rejected;
      }
    }
    std::ostringstream d;
    d << "stable: " << verified << "/20 verified (worst residual " << fmt("%.2e", worst_res) << "); unstable: " << rejected
      << "/20 rejected, " << false_cert << " false certificates";
    return {verified == 20 && rejected == 20 && false_cert == 0, d.str()};
  }

  // single-vertex synthesis against the sampled norm
  Outcome c8()
  {
    const auto m = two_state_model();
    ParamPolytope W;
    W.r        = 1;
    W.kind     = PolytopeKind::optimized;
    W.U_pc     = Matrix::Identity(1, 1);
    W.vertices = Matrix::Constant(1, 1, 0.5);
    const auto ctrl      = synthesize_polytopic_hinf(m, W);
    const double sampled = sampled_hinf(vertex_closed_loop(m, ctrl, 0));
    synths_.push_back({"two-state single vertex", closed_loop_vertices(m, ctrl), ctrl.lyapunov});
    const double gap = std::abs(ctrl.gamma - sampled) / sampled;
    return {gap <= 0.1, "gamma* " + fmt("%.5g", ctrl.gamma) + ", sampled norm " + fmt("%.5g", sampled) + " (" +
                            fmt("%.1f", 100.0 * gap) + "% apart)"};
  }

  // quadratic stability of every synthesis in this suite
  Outcome c9()
  {
    if (synths_.empty()) { c8(); }
    if (!main_run_) { main_run(); }
    if (!kinds_run_) { kinds_run(); }
    int ok = 0;
    double worst = -std::numeric_limits<double>::infinity();
    std::string bad;
    for (const auto & s : synths_) {
      const double own = lyapunov_margin(s.closed_loops, s.lyapunov);
      double margin    = own;
      if (!(own < -1e-8)) { margin = quadratic_stability_certificate(s.closed_loops).max_residual; }
      worst = std::max(worst, margin);
      if (margin < -1e-8) {
        ++ok;
      } else {
        bad += " " + s.label;
      }
    }
    std::ostringstream d;
    d << ok << "/" << synths_.size() << " syntheses certified, worst margin " << fmt("%.2e", worst);
    if (!bad.empty()) { d << "; failed:" << bad; }
    return {ok == static_cast<int>(synths_.size()) && !synths_.empty(), d.str()};
  }

  // stabilization of the unstable Burgers plant
  Outcome c10()
  {
    if (!main_run_) { main_run(); }
    const Json & m = main_nominal_;
    const bool exceeds = !m["open_loop_exceedance"].is_null() && m["open_loop_exceedance"].get<double>() < 12.0;
    const double ymax  = m["max_output_norm"].get<double>();
    const double yend  = m["final_output_norm"].get<double>();
    const bool no_exit = m["parameter_exit"].is_null() && m["exit_events"].get<int>() == 0;
    std::ostringstream d;
    d << "open loop ";
    if (m["open_loop_exceedance"].is_null()) {
      d << "never exceeds 10";
    } else {
      d << "exceeds 10 at t = " << fmt("%.2f", m["open_loop_exceedance"].get<double>());
    }
    d << "; closed loop (" << main_vertices_ << " vertices, gamma* " << fmt("%.3g", main_gamma_) << ") max |y| "
      << fmt("%.3g", ymax) << ", |y(12)| " << fmt("%.2e", yend) << (no_exit ? "" : ", left the polytope")
      << "; pipeline " << fmt("%.0f", main_seconds_) << " s";
    return {exceeds && ymax <= 1.0 && yend <= 1e-2 && no_exit && main_vertices_ == 8 && main_seconds_ < 300.0,
            d.str()};
  }

  // controller from the r = 3 model on the r = 6 model
  Outcome c11()
  {
    if (!main_run_) { main_run(); }
    const Json & m   = main_cross_;
    const double ymax = m["max_output_norm"].get<double>();
    const int events  = m["exit_events"].get<int>();
    const bool full   = m["samples"].get<int>() == 1201;
    std::ostringstream d;
    d << "reduced plant r = 6, k = 10 under project policy: " << events << " exit events, max |y| " << fmt("%.3g", ymax)
      << ", |y(12)| " << fmt("%.2e", m["final_output_norm"].get<double>());
    return {events == 0 && m["parameter_exit"].is_null() && std::isfinite(ymax) && ymax <= 10.0 && full, d.str()};
  }

  // parameter exit under hard_error
  Outcome c12()
  {
    if (!main_run_) { main_run(); }
    const Json & m = main_exit_;
    if (m["parameter_exit"].is_null()) { return {false, "no parameter exit recorded"}; }
    const double t   = m["parameter_exit"]["time"].get<double>();
    const double mag = m["parameter_exit"]["magnitude"].get<double>();
    const std::string ev =
        io::read_file((std::filesystem::path(work_) / "main" / "closedloop" / "exit" / "events.jsonl").string());
    const bool logged = ev.find("\"action\":\"error\"") != std::string::npos;
    return {std::isfinite(t) && t >= 0.0 && t <= 12.0 && mag > 0.0 && logged,
            "x0 = 10 x last snapshot: ParameterExit at t = " + fmt("%.4g", t) + ", violation " + fmt("%.4g", mag) +
                (logged ? ", logged" : ", not logged")};
  }

  // gamma* vs CPU table over the three polytope kinds
  Outcome c13()
  {
    if (!kinds_run_) { kinds_run(); }
    const auto rows =
        io::parse_csv(io::read_file((std::filesystem::path(work_) / "kinds_a" / "report" / "gamma_cpu.csv").string()));
    std::set<std::string> kinds;
    bool finite = true;
    double box_gamma = std::numeric_limits<double>::infinity(), best = box_gamma;
    bool flagged = false;
    std::ostringstream d;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto & r = rows[i];
      if (r.size() != 5) { return {false, "malformed table row"}; }
      kinds.insert(r[0].text);
      const double g = io::parse_double(r[2].text, 1, 1), cpu = io::parse_double(r[3].text, 1, 1);
      finite = finite && std::isfinite(g) && std::isfinite(cpu) && cpu >= 0.0;
      best   = std::min(best, g);
      if (r[0].text == "box") {
        box_gamma = g;
        flagged   = r[4].text == "box_not_smallest_gamma";
      }
      d << r[0].text << " (" << r[1].text << " vertices) gamma* " << fmt("%.4g", g) << " in " << fmt("%.2f", cpu) << " s; ";
    }
    const bool direction = box_gamma <= best || flagged;
    d << (box_gamma <= best ? "box smallest" : (flagged ? "box not smallest, flagged" : "box not smallest, NOT flagged"));
    return {rows.size() == 4 && kinds.size() == 3 && finite && direction, d.str()};
  }

  // determinism
  Outcome c14()
  {
    if (!kinds_run_) { kinds_run(); }
    const auto a = *load_manifest((std::filesystem::path(work_) / "kinds_a").string());
    const auto b = *load_manifest((std::filesystem::path(work_) / "kinds_b").string());
    if (a.artifacts.size() != b.artifacts.size()) { return {false, "artifact lists differ in length"}; }
    int same = 0, numeric = 0, skipped = 0;
    std::string diff;
    for (std::size_t i = 0; i < a.artifacts.size(); ++i) {
      const auto & x = a.artifacts[i];
      const auto & y = b.artifacts[i];
      if (x.path != y.path) { return {false, "artifact paths differ: " + x.path + " vs " + y.path}; }
      if (!x.deterministic) {
        ++skipped;
        continue;
      }
      ++numeric;
      if (x.sha256 == y.sha256) {
        ++same;
      } else {
        diff += " " + x.path;
      }
    }
    const auto bad_a = verify_manifest((std::filesystem::path(work_) / "kinds_a").string(), a);
    std::ostringstream d;
    d << same << "/" << numeric << " numeric artifacts byte-identical (" << skipped << " timing files excluded)";
    if (!diff.empty()) { d << "; differ:" << diff; }
    if (!bad_a.empty()) { d << "; manifest verification failed"; }
    return {same == numeric && numeric > 0 && bad_a.empty(), d.str()};
  }

private:
  void collect_synths(const std::string & dir, const std::string & tag)
  {
    const auto man = *load_manifest(dir);
    const auto model =
        io::model_from_bundle(io::bundle_from_string(io::read_file((std::filesystem::path(dir) / "model/model.json").string())));
    for (const auto * a : man.of_kind("controller")) {
      const auto ctrl =
          io::controller_from_bundle(io::bundle_from_string(io::read_file((std::filesystem::path(dir) / a->path).string())));
      synths_.push_back({tag + "/" + a->attributes.at("polytope").get<std::string>(), closed_loop_vertices(model, ctrl),
                         ctrl.lyapunov});
    }
  }

  Json scenario_metrics(const std::string & dir, const std::string & name)
  {
    return io::parse_json(io::read_file((std::filesystem::path(dir) / "closedloop" / name / "metrics.json").string()));
  }

  void main_run()
  {
    main_run_ = true;
    PipelineConfig c;
    c.output_dir = (std::filesystem::path(work_) / "main").string();
    std::filesystem::remove_all(c.output_dir);
    ScenarioConfig nominal;
    nominal.open_loop_threshold = 10.0;
    ScenarioConfig cross;
    cross.name        = "cross";
    cross.plant       = "reduced";
    cross.plant_r     = 6;
    cross.exit_policy = "project";
    ScenarioConfig exit;
    exit.name     = "exit";
    exit.x0_scale = 10.0;
    c.scenarios   = {nominal, cross, exit};
    Stopwatch sw;
    const auto rr  = run_pipeline(c, all_stages());
    main_seconds_  = sw.seconds();
    const auto * k = rr.manifest.find("synth/controller_box.json");
    main_gamma_    = k ? k->attributes.at("gamma").get<double>() : NAN;
    main_vertices_ = k ? k->attributes.at("vertices").get<Index>() : 0;
    main_nominal_  = scenario_metrics(c.output_dir, "nominal");
    main_cross_    = scenario_metrics(c.output_dir, "cross");
    main_exit_     = scenario_metrics(c.output_dir, "exit");
    collect_synths(c.output_dir, "burgers-k10-r3");
  }

  PipelineConfig kinds_config(const std::string & sub) const
  {
    PipelineConfig c;
    c.benchmark_params = {{"n", 32}, {"mu", 1.5}, {"nu", 0.05}, {"convection", 0.05}};
    c.snap_n_out       = 201;
    c.k                = 6;
    c.r                = 3;
    c.polytope_kinds   = {"box", "pca_box", "optimized"};
    c.ga.population    = 24;
    c.ga.generations   = 40;
    ScenarioConfig nominal;
    nominal.exit_policy = "project";
    c.scenarios         = {nominal};
    c.output_dir        = (std::filesystem::path(work_) / sub).string();
    return c;
  }

  void kinds_run()
  {
    kinds_run_ = true;
    for (const char * sub : {"kinds_a", "kinds_b"}) {
      const auto c = kinds_config(sub);
      std::filesystem::remove_all(c.output_dir);
      run_pipeline(c, all_stages());
    }
    collect_synths((std::filesystem::path(work_) / "kinds_a").string(), "burgers-k6-r3");
  }

  std::string work_;
  std::optional<ParamPolytope> optimized_demo_;
  std::vector<Synthesis> synths_;
  bool main_run_ = false, kinds_run_ = false;
  double main_seconds_ = 0.0, main_gamma_ = 0.0;
  Index main_vertices_ = 0;
  Json main_nominal_, main_cross_, main_exit_;
};

}  // namespace

int main(int argc, char ** argv)
{
  std::string work = "acceptance-work";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream ss(argv[++i]);
      std::string tok;
      while (std::getline(ss, tok, ',')) { only.insert(std::stoi(tok)); }
    } else {
      std::cerr << "usage: " << argv[0] << " [--work DIR] [--only 1,2,...]\n";
      return 2;
    }
  }
  std::filesystem::create_directories(work);
  Suite suite(work);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"exact embedding", [&] { return suite.c1(); }},
      {"SDC consistency", [&] { return suite.c2(); }},
      {"POD identity", [&] { return suite.c3(); }},
      {"PCA reparametrization", [&] { return suite.c4(); }},
      {"polytope containment and domination", [&] { return suite.c5(); }},
      {"barycentric contract", [&] { return suite.c6(); }},
      {"SDP correctness", [&] { return suite.c7(); }},
      {"LTI synthesis vs sampled norm", [&] { return suite.c8(); }},
      {"quadratic stability certificates", [&] { return suite.c9(); }},
      {"stabilization of unstable Burgers", [&] { return suite.c10(); }},
      {"cross-model robustness", [&] { return suite.c11(); }},
      {"parameter exit", [&] { return suite.c12(); }},
      {"gamma* vs CPU report", [&] { return suite.c13(); }},
      {"determinism", [&] { return suite.c14(); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.count(id)) { continue; }
    Outcome o;
    Stopwatch sw;
    try {
      o = criteria[i].second();
    } catch (const std::exception & e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " [" << (id < 10 ? " " : "") << id << "] " << criteria[i].first << ": "
              << o.detail << " (" << fmt("%.1f", sw.seconds()) << " s)" << std::endl;
  }
  std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed")) << std::endl;
  return failed ? 1 : 0;
}
