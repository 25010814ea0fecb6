#pragma once

/**
 * @file
 * @brief Configuration, staged execution with an artifact manifest, and report generation.
 */

#include <algorithm>
#include <array>
#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "closedloop.hpp"
#include "hinf.hpp"
#include "io/artifacts.hpp"
#include "io/csv.hpp"
#include "io/digest.hpp"
#include "io/json_bundle.hpp"
#include "io/matrix_market.hpp"
#include "io/text.hpp"
#include "pod.hpp"
#include "polytope.hpp"
#include "polytope_opt.hpp"
#include "sdc.hpp"
#include "trajectory.hpp"

namespace lpvgs {

using io::Json;

// ---------------------------------------------------------------------------
// configuration

struct SignalConfig
{
  std::string kind = "fading";
  /// one entry per input channel; a single entry is broadcast
  std::vector<double> amplitude{1.0};
  double t_fade  = 2.0;
  int smoothness = 1;

  SignalSpec to_signal(Index p) const
  {
    SignalSpec s;
    if (kind == "zero") { return SignalSpec::zero(p); }
    if (amplitude.size() != 1 && static_cast<Index>(amplitude.size()) != p) {
      throw DimensionError("signal amplitude has " + std::to_string(amplitude.size()) + " entries, the plant has " +
                           std::to_string(p) + " inputs");
    }
    Vector a(p);
    for (Index i = 0; i < p; ++i) { a(i) = amplitude.size() == 1 ? amplitude[0] : amplitude[static_cast<std::size_t>(i)]; }
    if (kind == "step") {
      s.kind      = SignalKind::step;
      s.amplitude = a;
      return s;
    }
    return SignalSpec::fading(a, t_fade, smoothness);
  }
};

struct ScenarioConfig
{
  std::string name     = "nominal";
  std::string polytope = "box";
  SignalConfig disturbance;
  /// x0 = x0_scale * snapshot column x0_snapshot (negative counts from the end); 0 starts at rest
  double x0_scale   = 0.0;
  long x0_snapshot  = -1;
  double t0         = 0.0;
  double t1         = 12.0;
  Index n_out       = 1201;
  std::string exit_policy = "hard_error";
  /// "full" or "reduced"
  std::string plant = "full";
  /// reduced plant orders; 0 takes the synthesis model's value
  Index plant_r = 0;
  Index plant_k = 0;
  /// also run the open loop and record when ||y|| first exceeds this; 0 skips it
  double open_loop_threshold = 0.0;
};

struct PipelineConfig
{
  std::string benchmark = "burgers";
  std::map<std::string, double> benchmark_params{{"n", 64}, {"mu", 1.5}, {"nu", 0.05}, {"convection", 0.05}};
  std::uint64_t seed = 1;

  // snapshots
  double snap_t0   = 0.0;
  double snap_t1   = 5.0;
  Index snap_n_out = 417;
  SignalConfig snap_input;
  std::string integrator = "rosenbrock23";
  double rtol            = 1e-8;
  double atol            = 1e-10;

  // reduction
  Index k = 10;
  Index r = 3;

  // polytopes
  std::vector<std::string> polytope_kinds{"box"};
  double polytope_margin = 0.1;
  /// vertex budget of the optimized polytope; 0 means r + 2
  Index n_k = 0;
  GaParams ga;
  Index volume_samples = 20000;

  // synthesis
  PerformanceWeights weights;
  std::optional<double> gamma;
  double rel_width       = 1e-2;
  double gamma_start     = 1.0;
  double coupling_margin = 1e-4;
  int max_newton         = 400;

  // closed loop
  std::vector<ScenarioConfig> scenarios{ScenarioConfig{}};
  std::string cl_integrator = "rosenbrock23";
  double cl_rtol            = 1e-6;
  double cl_atol            = 1e-9;

  // report
  std::vector<std::array<Index, 2>> portrait_pairs{{1, 4}, {0, 4}};
  Index portrait_points       = 500;
  std::string report_scenario = "nominal";

  std::string output_dir = "lpvgs-out";
};

namespace detail {

/// Strict object reader: every key must be consumed.
class ObjReader
{
public:
  ObjReader(const Json & j, std::string path) : j_(j), path_(std::move(path))
  {
    if (!j_.is_object()) { throw ConfigError("'" + path_ + "' must be an object"); }
  }

  template<typename T>
  void get(const char * key, T & out)
  {
    if (!j_.contains(key)) { return; }
    seen_.insert(key);
    try {
      out = j_.at(key).get<T>();
    } catch (const Json::exception &) {
      throw ConfigError("'" + path_ + "." + key + "' has the wrong type");
    }
  }

  const Json * sub(const char * key)
  {
    if (!j_.contains(key)) { return nullptr; }
    seen_.insert(key);
    return &j_.at(key);
  }

  void finish() const
  {
    for (const auto & item : j_.items()) {
      if (!seen_.count(item.key())) { throw ConfigError("unknown key '" + path_ + "." + item.key() + "'"); }
    }
  }

private:
  const Json & j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline Json signal_to_json(const SignalConfig & s)
{
  return Json{{"kind", s.kind}, {"amplitude", s.amplitude}, {"t_fade", s.t_fade}, {"smoothness", s.smoothness}};
}

inline SignalConfig signal_from_json(const Json & j, const std::string & path)
{
  SignalConfig s;
  ObjReader rd(j, path);
  rd.get("kind", s.kind);
  rd.get("amplitude", s.amplitude);
  rd.get("t_fade", s.t_fade);
  rd.get("smoothness", s.smoothness);
  rd.finish();
  return s;
}

inline Json ga_to_json(const GaParams & g)
{
  return Json{{"population", g.population},
              {"generations", g.generations},
              {"mutation_scale", g.mutation_scale},
              {"beta", g.beta},
              {"crossover_rate", g.crossover_rate},
              {"tournament", g.tournament},
              {"elite", g.elite},
              {"volume_samples", g.volume_samples},
              {"final_volume_samples", g.final_volume_samples},
              {"allow_fallback", g.allow_fallback}};
}

inline GaParams ga_from_json(const Json & j)
{
  GaParams g;
  ObjReader rd(j, "polytope.ga");
  rd.get("population", g.population);
  rd.get("generations", g.generations);
  rd.get("mutation_scale", g.mutation_scale);
  rd.get("beta", g.beta);
  rd.get("crossover_rate", g.crossover_rate);
  rd.get("tournament", g.tournament);
  rd.get("elite", g.elite);
  rd.get("volume_samples", g.volume_samples);
  rd.get("final_volume_samples", g.final_volume_samples);
  rd.get("allow_fallback", g.allow_fallback);
  rd.finish();
  return g;
}

inline Json scenario_to_json(const ScenarioConfig & s)
{
  return Json{{"name", s.name},
              {"polytope", s.polytope},
              {"disturbance", signal_to_json(s.disturbance)},
              {"x0_scale", s.x0_scale},
              {"x0_snapshot", s.x0_snapshot},
              {"t0", s.t0},
              {"t1", s.t1},
              {"n_out", s.n_out},
              {"exit_policy", s.exit_policy},
              {"plant", s.plant},
              {"plant_r", s.plant_r},
              {"plant_k", s.plant_k},
              {"open_loop_threshold", s.open_loop_threshold}};
}

inline ScenarioConfig scenario_from_json(const Json & j, std::size_t idx)
{
  ScenarioConfig s;
  const std::string path = "closedloop.scenarios[" + std::to_string(idx) + "]";
  ObjReader rd(j, path);
  rd.get("name", s.name);
  rd.get("polytope", s.polytope);
  if (const Json * d = rd.sub("disturbance")) { s.disturbance = signal_from_json(*d, path + ".disturbance"); }
  rd.get("x0_scale", s.x0_scale);
  rd.get("x0_snapshot", s.x0_snapshot);
  rd.get("t0", s.t0);
  rd.get("t1", s.t1);
  rd.get("n_out", s.n_out);
  rd.get("exit_policy", s.exit_policy);
  rd.get("plant", s.plant);
  rd.get("plant_r", s.plant_r);
  rd.get("plant_k", s.plant_k);
  rd.get("open_loop_threshold", s.open_loop_threshold);
  rd.finish();
  return s;
}

}  // namespace detail

inline Json config_to_json(const PipelineConfig & c)
{
  Json scen = Json::array();
  for (const auto & s : c.scenarios) { scen.push_back(detail::scenario_to_json(s)); }
  Json pairs = Json::array();
  for (const auto & p : c.portrait_pairs) { pairs.push_back(Json::array({p[0], p[1]})); }
  return Json{
      {"benchmark", {{"name", c.benchmark}, {"params", c.benchmark_params}}},
      {"seed", c.seed},
      {"snapshots",
       {{"t0", c.snap_t0},
        {"t1", c.snap_t1},
        {"n_out", c.snap_n_out},
        {"input", detail::signal_to_json(c.snap_input)},
        {"integrator", c.integrator},
        {"rtol", c.rtol},
        {"atol", c.atol}}},
      {"reduction", {{"k", c.k}, {"r", c.r}}},
      {"polytope",
       {{"kinds", c.polytope_kinds},
        {"margin", c.polytope_margin},
        {"n_k", c.n_k},
        {"volume_samples", c.volume_samples},
        {"ga", detail::ga_to_json(c.ga)}}},
      {"synthesis",
       {{"weights", io::weights_to_json(c.weights)},
        {"gamma", c.gamma ? Json(*c.gamma) : Json(nullptr)},
        {"rel_width", c.rel_width},
        {"gamma_start", c.gamma_start},
        {"coupling_margin", c.coupling_margin},
        {"max_newton", c.max_newton}}},
      {"closedloop",
       {{"scenarios", std::move(scen)}, {"integrator", c.cl_integrator}, {"rtol", c.cl_rtol}, {"atol", c.cl_atol}}},
      {"report", {{"portrait_pairs", std::move(pairs)}, {"portrait_points", c.portrait_points}, {"scenario", c.report_scenario}}},
      {"output_dir", c.output_dir}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline PipelineConfig config_from_json(const Json & j)
{
  PipelineConfig c;
  detail::ObjReader top(j, "config");
  if (const Json * b = top.sub("benchmark")) {
    detail::ObjReader rd(*b, "benchmark");
    rd.get("name", c.benchmark);
    if (!b->contains("params") && c.benchmark != "burgers") { c.benchmark_params.clear(); }
    rd.get("params", c.benchmark_params);
    rd.finish();
  }
  top.get("seed", c.seed);
  if (const Json * s = top.sub("snapshots")) {
    detail::ObjReader rd(*s, "snapshots");
    rd.get("t0", c.snap_t0);
    rd.get("t1", c.snap_t1);
    rd.get("n_out", c.snap_n_out);
    if (const Json * in = rd.sub("input")) { c.snap_input = detail::signal_from_json(*in, "snapshots.input"); }
    rd.get("integrator", c.integrator);
    rd.get("rtol", c.rtol);
    rd.get("atol", c.atol);
    rd.finish();
  }
  if (const Json * s = top.sub("reduction")) {
    detail::ObjReader rd(*s, "reduction");
    rd.get("k", c.k);
    rd.get("r", c.r);
    rd.finish();
  }
  if (const Json * s = top.sub("polytope")) {
    detail::ObjReader rd(*s, "polytope");
    rd.get("kinds", c.polytope_kinds);
    rd.get("margin", c.polytope_margin);
    rd.get("n_k", c.n_k);
    rd.get("volume_samples", c.volume_samples);
    if (const Json * g = rd.sub("ga")) { c.ga = detail::ga_from_json(*g); }
    rd.finish();
  }
  if (const Json * s = top.sub("synthesis")) {
    detail::ObjReader rd(*s, "synthesis");
    if (const Json * w = rd.sub("weights")) {
      detail::ObjReader wr(*w, "synthesis.weights");
      wr.get("W_d", c.weights.W_d);
      wr.get("W_y", c.weights.W_y);
      wr.get("W_u", c.weights.W_u);
      wr.get("W_n", c.weights.W_n);
      wr.finish();
    }
    if (const Json * g = rd.sub("gamma")) {
      if (g->is_null()) {
        c.gamma.reset();
      } else if (g->is_number()) {
        c.gamma = g->get<double>();
      } else {
        throw ConfigError("'synthesis.gamma' must be a number or null");
      }
    }
    rd.get("rel_width", c.rel_width);
    rd.get("gamma_start", c.gamma_start);
    rd.get("coupling_margin", c.coupling_margin);
    rd.get("max_newton", c.max_newton);
    rd.finish();
  }
  if (const Json * s = top.sub("closedloop")) {
    detail::ObjReader rd(*s, "closedloop");
    if (const Json * sc = rd.sub("scenarios")) {
      if (!sc->is_array()) { throw ConfigError("'closedloop.scenarios' must be an array"); }
      c.scenarios.clear();
      for (std::size_t i = 0; i < sc->size(); ++i) { c.scenarios.push_back(detail::scenario_from_json((*sc)[i], i)); }
    }
    rd.get("integrator", c.cl_integrator);
    rd.get("rtol", c.cl_rtol);
    rd.get("atol", c.cl_atol);
    rd.finish();
  }
  if (const Json * s = top.sub("report")) {
    detail::ObjReader rd(*s, "report");
    rd.get("portrait_pairs", c.portrait_pairs);
    rd.get("portrait_points", c.portrait_points);
    rd.get("scenario", c.report_scenario);
    rd.finish();
  }
  top.get("output_dir", c.output_dir);
  top.finish();
  return c;
}

inline PipelineConfig load_config(const std::string & path) { return config_from_json(io::parse_json(io::read_file(path))); }

/// @throws ConfigError describing the first inconsistency.
inline void validate_config(const PipelineConfig & c)
{
  auto fail = [](const std::string & m) { throw ConfigError(m); };
  if (!(c.r >= 1)) { fail("reduction.r must be at least 1"); }
  if (c.k < c.r) { throw ParameterOrderError("reduction: k must be at least r"); }
  if (c.snap_n_out < 2 || !(c.snap_t1 > c.snap_t0)) { fail("snapshots: need n_out >= 2 and t1 > t0"); }
  ode_method_from_string(c.integrator);
  ode_method_from_string(c.cl_integrator);
  if (!(c.rtol > 0 && c.atol > 0 && c.cl_rtol > 0 && c.cl_atol > 0)) { fail("integrator tolerances must be positive"); }
  auto check_signal = [&](const SignalConfig & s, const std::string & where) {
    if (s.kind != "zero" && s.kind != "step" && s.kind != "fading") { fail(where + ": unknown signal kind '" + s.kind + "'"); }
    if (s.kind != "zero" && s.amplitude.empty()) { fail(where + ": amplitude must not be empty"); }
  };
  check_signal(c.snap_input, "snapshots.input");
  std::set<std::string> kinds;
  for (const auto & k : c.polytope_kinds) {
    polytope_kind_from_string(k);
    if (!kinds.insert(k).second) { fail("polytope.kinds lists '" + k + "' twice"); }
  }
  if (c.polytope_margin < 0) { fail("polytope.margin must be non-negative"); }
  if (c.n_k < 0) { fail("polytope.n_k must be non-negative"); }
  if (!(c.weights.W_d > 0 && c.weights.W_y > 0 && c.weights.W_u > 0 && c.weights.W_n >= 0)) {
    fail("synthesis.weights: W_d, W_y, W_u must be positive and W_n non-negative");
  }
  if (c.gamma && !(*c.gamma > 0)) { fail("synthesis.gamma must be positive"); }
  if (!(c.rel_width > 0 && c.rel_width < 1)) { fail("synthesis.rel_width must lie in (0, 1)"); }
  std::set<std::string> names;
  for (const auto & s : c.scenarios) {
    if (s.name.empty() || s.name.find_first_not_of("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_-") != std::string::npos) {
      fail("scenario name '" + s.name + "' must be non-empty and use only letters, digits, '_' and '-'");
    }
    if (!names.insert(s.name).second) { fail("scenario name '" + s.name + "' is used twice"); }
    if (!kinds.count(s.polytope)) { fail("scenario '" + s.name + "' uses polytope '" + s.polytope + "' which is not built"); }
    exit_policy_from_string(s.exit_policy);
    if (s.plant != "full" && s.plant != "reduced") { fail("scenario '" + s.name + "': plant must be 'full' or 'reduced'"); }
    if (s.plant_r < 0 || s.plant_k < 0) { fail("scenario '" + s.name + "': plant orders must be non-negative"); }
    const Index pr = s.plant_r ? s.plant_r : c.r, pk = s.plant_k ? s.plant_k : c.k;
    if (s.plant == "reduced" && pr > pk) { throw ParameterOrderError("scenario '" + s.name + "': plant_r exceeds plant_k"); }
    if (s.n_out < 2 || !(s.t1 > s.t0)) { fail("scenario '" + s.name + "': need n_out >= 2 and t1 > t0"); }
    check_signal(s.disturbance, "scenario '" + s.name + "' disturbance");
  }
  if (c.portrait_points < 1) { fail("report.portrait_points must be positive"); }
  if (!c.scenarios.empty() && !c.report_scenario.empty() && !names.count(c.report_scenario)) {
    fail("report.scenario '" + c.report_scenario + "' is not a configured scenario");
  }
}

/// Commented template with every default spelled out; parses to PipelineConfig{}.
inline std::string config_template()
{
  return R"(// lpvgs pipeline configuration.  Comments are allowed; omitted keys take the values shown.
{
  "benchmark": {
    // "burgers" (params n, nu, mu, convection, act_width, obs_width, obs_offset)
    // or "lorenz" (params sigma, rho, beta, equilibrium, shift)
    "name": "burgers",
    "params": {"convection": 0.05, "mu": 1.5, "n": 64.0, "nu": 0.05}
  },
  // master seed; every stage derives its own stream from it
  "seed": 1,
  "snapshots": {
    "t0": 0.0,
    "t1": 5.0,
    "n_out": 417,
    // test input: kind zero | step | fading; a single amplitude is broadcast to all inputs
    "input": {"kind": "fading", "amplitude": [1.0], "t_fade": 2.0, "smoothness": 1},
    // rosenbrock23 (stiff) or dopri5
    "integrator": "rosenbrock23",
    "rtol": 1e-08,
    "atol": 1e-10
  },
  // reduced order k and number of scheduling parameters r (k >= r >= 1)
  "reduction": {"k": 10, "r": 3},
  "polytope": {
    // any of box, pca_box, optimized
    "kinds": ["box"],
    // relative enlargement of each polytope around the parameter cloud
    "margin": 0.1,
    // vertex budget of the optimized polytope, 0 means r + 2
    "n_k": 0,
    // Monte Carlo samples for the volume summary of non-box polytopes
    "volume_samples": 20000,
    "ga": {
      "population": 40,
      "generations": 200,
      "mutation_scale": 0.05,
      "beta": 1.0,
      "crossover_rate": 0.9,
      "tournament": 3,
      "elite": 2,
      "volume_samples": 1000,
      "final_volume_samples": 20000,
      "allow_fallback": true
    }
  },
  "synthesis": {
    // disturbance, output, control and measurement-noise weights
    "weights": {"W_d": 1.0, "W_y": 1.0, "W_u": 0.1, "W_n": 0.01},
    // fixed performance level, or null to bisect
    "gamma": null,
    "rel_width": 0.01,
    "gamma_start": 1.0,
    "coupling_margin": 0.0001,
    "max_newton": 400
  },
  "closedloop": {
    "scenarios": [
      {
        "name": "nominal",
        // polytope kind whose controller is used
        "polytope": "box",
        "disturbance": {"kind": "fading", "amplitude": [1.0], "t_fade": 2.0, "smoothness": 1},
        // x0 = x0_scale * snapshot column x0_snapshot (negative counts from the end)
        "x0_scale": 0.0,
        "x0_snapshot": -1,
        "t0": 0.0,
        "t1": 12.0,
        "n_out": 1201,
        // hard_error stops at the first parameter exit, project clips the parameter to the polytope
        "exit_policy": "hard_error",
        // full plant, or a reduced plant of orders plant_r / plant_k (0 keeps the synthesis model's)
        "plant": "full",
        "plant_r": 0,
        "plant_k": 0,
        // also run the open loop and record when ||y|| first exceeds this (0 skips it)
        "open_loop_threshold": 0.0
      }
    ],
    "integrator": "rosenbrock23",
    "rtol": 1e-06,
    "atol": 1e-09
  },
  "report": {
    // output index pairs (0-based) for phase portraits
    "portrait_pairs": [[1, 4], [0, 4]],
    "portrait_points": 500,
    "scenario": "nominal"
  },
  "output_dir": "lpvgs-out"
}
)";
}

// ---------------------------------------------------------------------------
// manifest

struct ArtifactEntry
{
  std::string path;
  std::string stage;
  std::string kind;
  std::string sha256;
  std::size_t bytes = 0;
  /// false for files holding wall-clock or CPU timings
  bool deterministic = true;
  Json attributes    = Json::object();
};

struct Manifest
{
  Json config        = Json::object();
  std::string config_sha256;
  std::uint64_t seed = 0;
  std::vector<std::string> stages_run;
  std::vector<ArtifactEntry> artifacts;

  const ArtifactEntry * find(const std::string & path) const
  {
    for (const auto & a : artifacts) {
      if (a.path == path) { return &a; }
    }
    return nullptr;
  }

  std::vector<const ArtifactEntry *> of_kind(const std::string & kind) const
  {
    std::vector<const ArtifactEntry *> out;
    for (const auto & a : artifacts) {
      if (a.kind == kind) { out.push_back(&a); }
    }
    return out;
  }
};

inline Json manifest_to_json(const Manifest & m)
{
  Json arts = Json::array();
  for (const auto & a : m.artifacts) {
    arts.push_back(Json{{"path", a.path},
                        {"stage", a.stage},
                        {"kind", a.kind},
                        {"sha256", a.sha256},
                        {"bytes", a.bytes},
                        {"deterministic", a.deterministic},
                        {"attributes", a.attributes}});
  }
  return Json{{"format", "lpvgs-manifest"},
              {"version", 1},
              {"config", m.config},
              {"config_sha256", m.config_sha256},
              {"seed", m.seed},
              {"stages_run", m.stages_run},
              {"artifacts", std::move(arts)}};
}

inline Manifest manifest_from_json(const Json & j)
{
  if (!j.is_object() || j.value("format", "") != "lpvgs-manifest") { throw ParseError("not an lpvgs manifest", 1, 1); }
  Manifest m;
  m.config        = j.value("config", Json::object());
  m.config_sha256 = j.value("config_sha256", "");
  m.seed          = j.value("seed", std::uint64_t{0});
  m.stages_run    = j.value("stages_run", std::vector<std::string>{});
  for (const auto & a : j.at("artifacts")) {
    ArtifactEntry e;
    e.path          = a.at("path").get<std::string>();
    e.stage         = a.at("stage").get<std::string>();
    e.kind          = a.value("kind", "");
    e.sha256        = a.at("sha256").get<std::string>();
    e.bytes         = a.value("bytes", std::size_t{0});
    e.deterministic = a.value("deterministic", true);
    e.attributes    = a.value("attributes", Json::object());
    m.artifacts.push_back(std::move(e));
  }
  return m;
}

inline std::string manifest_path(const std::string & dir) { return (std::filesystem::path(dir) / "manifest.json").string(); }

inline std::optional<Manifest> load_manifest(const std::string & dir)
{
  const auto p = manifest_path(dir);
  if (!std::filesystem::exists(p)) { return std::nullopt; }
  return manifest_from_json(io::parse_json(io::read_file(p)));
}

inline void save_manifest(const std::string & dir, const Manifest & m)
{
  io::write_file(manifest_path(dir), manifest_to_json(m).dump(1) + "\n");
}

/// Paths whose file is missing or whose digest differs from the manifest.
inline std::vector<std::string> verify_manifest(const std::string & dir, const Manifest & m)
{
  std::vector<std::string> bad;
  for (const auto & a : m.artifacts) {
    const auto p = std::filesystem::path(dir) / a.path;
    if (!std::filesystem::exists(p) || io::sha256_file(p.string()) != a.sha256) { bad.push_back(a.path); }
  }
  return bad;
}

// ---------------------------------------------------------------------------
// execution

inline const std::vector<std::string> & all_stages()
{
  static const std::vector<std::string> s{"simulate", "pod", "reduce", "polytope", "synth", "closedloop", "report"};
  return s;
}

/// Comma-separated stage list in canonical order; "all" or empty selects every stage.
inline std::vector<std::string> parse_stages(const std::string & spec)
{
  if (spec.empty() || spec == "all") { return all_stages(); }
  std::set<std::string> want;
  std::size_t s = 0;
  while (s <= spec.size()) {
    std::size_t e = spec.find(',', s);
    if (e == std::string::npos) { e = spec.size(); }
    const std::string name = spec.substr(s, e - s);
    if (std::find(all_stages().begin(), all_stages().end(), name) == all_stages().end()) {
      throw ConfigError("unknown stage '" + name + "'");
    }
    want.insert(name);
    s = e + 1;
  }
  std::vector<std::string> out;
  for (const auto & st : all_stages()) {
    if (want.count(st)) { out.push_back(st); }
  }
  return out;
}

/// Thread cap from LPVGS_THREADS, else the hardware concurrency.
inline unsigned thread_cap()
{
  if (const char * e = std::getenv("LPVGS_THREADS"); e && *e) {
    char * end   = nullptr;
    const long v = std::strtol(e, &end, 10);
    if (*end != '\0' || v < 1) { throw ConfigError("LPVGS_THREADS must be a positive integer"); }
    return static_cast<unsigned>(v);
  }
  return std::max(1U, std::thread::hardware_concurrency());
}

/// Runs fn(0 .. count-1) on up to thread_cap() threads; rethrows the lowest-index failure.
template<typename Fn>
void parallel_for(std::size_t count, Fn fn)
{
  const std::size_t nt = std::min<std::size_t>(thread_cap(), count);
  std::vector<std::exception_ptr> errs(count);
  if (nt <= 1) {
    for (std::size_t i = 0; i < count; ++i) {
      try {
        fn(i);
      } catch (...) {
        errs[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < nt; ++t) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errs[i] = std::current_exception();
          }
        }
      });
    }
    for (auto & th : pool) { th.join(); }
  }
  for (auto & e : errs) {
    if (e) { std::rethrow_exception(e); }
  }
}

/// A stage failed; keeps the error class of the cause.
struct StageError : Error
{
  StageError(const std::string & st, const Error & cause)
      : Error(cause.error_class(), "stage '" + st + "': " + cause.what()), stage(st)
  {}
  std::string stage;
};

struct RunResult
{
  Manifest manifest;
  std::vector<std::string> stages;
};

namespace detail {

class ArtifactStore
{
public:
  ArtifactStore(std::string dir, Manifest & m) : dir_(std::move(dir)), m_(m) {}

  const std::string & dir() const noexcept { return dir_; }

  std::string abs(const std::string & rel) const { return (std::filesystem::path(dir_) / rel).string(); }

  void write(const std::string & rel, const std::string & content, const std::string & stage, const std::string & kind,
             bool deterministic = true, Json attributes = Json::object())
  {
    const auto p = std::filesystem::path(dir_) / rel;
    std::filesystem::create_directories(p.parent_path());
    io::write_file(p.string(), content);
    ArtifactEntry e{rel, stage, kind, io::sha256_hex(content), content.size(), deterministic, std::move(attributes)};
    const std::lock_guard<std::mutex> lk(mu_);
    pending_.push_back(std::move(e));
  }

  /// Replace the stage's old entries with what it wrote, keeping paths sorted.
  void commit(const std::string & stage)
  {
    auto & arts = m_.artifacts;
    arts.erase(std::remove_if(arts.begin(), arts.end(), [&](const ArtifactEntry & a) { return a.stage == stage; }),
               arts.end());
    for (auto & e : pending_) { arts.push_back(std::move(e)); }
    pending_.clear();
    std::sort(arts.begin(), arts.end(), [](const ArtifactEntry & a, const ArtifactEntry & b) { return a.path < b.path; });
  }

  /// Content of an upstream artifact after checking presence and digest.
  std::string require(const std::string & stage, const std::string & rel) const
  {
    const ArtifactEntry * e = m_.find(rel);
    const auto p            = abs(rel);
    if (!e || !std::filesystem::exists(p)) { throw StageDependencyError(stage, rel); }
    std::string content = io::read_file(p);
    if (io::sha256_hex(content) != e->sha256) {
      throw StageDependencyError(stage, rel + " (digest mismatch)");
    }
    return content;
  }

private:
  std::string dir_;
  Manifest & m_;
  std::vector<ArtifactEntry> pending_;
  std::mutex mu_;
};

inline std::string polytope_file(const std::string & kind) { return "polytope/" + kind + ".json"; }
inline std::string controller_file(const std::string & kind) { return "synth/controller_" + kind + ".json"; }
inline std::string timing_file(const std::string & kind) { return "synth/timing_" + kind + ".json"; }
inline std::string scenario_dir(const std::string & name) { return "closedloop/" + name + "/"; }

inline Index pod_modes(const PipelineConfig & c)
{
  Index k = c.k;
  for (const auto & s : c.scenarios) {
    if (s.plant == "reduced") { k = std::max(k, s.plant_k ? s.plant_k : c.k); }
  }
  return k;
}

inline Trajectory load_snapshots(const ArtifactStore & st, const std::string & stage)
{
  const std::string csv = st.require(stage, "snapshots/trajectory.csv");
  const Json side       = io::parse_json(st.require(stage, "snapshots/trajectory.json"));
  return io::trajectory_from_csv(csv, side);
}

inline Matrix parameter_cloud(const AffineLpvModel & m, const Trajectory & snaps)
{
  return m.V_r.transpose() * snaps.states;
}

/// Enlarge a general polytope about the centre of its bounding box.
inline void dilate(ParamPolytope & W, double margin)
{
  if (margin <= 0.0) { return; }
  const Vector c = 0.5 * (W.vertices.rowwise().minCoeff() + W.vertices.rowwise().maxCoeff());
  W.vertices     = ((W.vertices.colwise() - c) * (1.0 + 2.0 * margin)).colwise() + c;
}

inline void stage_simulate(const PipelineConfig & c, const QuadraticSystem & sys, ArtifactStore & st, std::ostream * log)
{
  IntegrateOptions opt;
  opt.method = ode_method_from_string(c.integrator);
  opt.rtol   = c.rtol;
  opt.atol   = c.atol;
  opt.seed   = derive_seed(c.seed, "simulate");
  const Trajectory tr =
      integrate(sys, Vector::Zero(sys.n()), c.snap_input.to_signal(sys.p()), c.snap_t0, c.snap_t1, c.snap_n_out, opt);
  st.write("snapshots/trajectory.csv", io::trajectory_to_csv(tr), "simulate", "trajectory");
  st.write("snapshots/trajectory.json", io::trajectory_sidecar(tr).dump(1) + "\n", "simulate", "trajectory_meta");
  if (log) { *log << "[simulate] " << tr.size() << " snapshots of a " << sys.n() << "-state system\n"; }
}

inline void stage_pod(const PipelineConfig & c, ArtifactStore & st, std::ostream * log)
{
  const Trajectory snaps = load_snapshots(st, "pod");
  const PodBasis basis   = pod_basis(snapshot_matrix(snaps), pod_modes(c));
  if (basis.rank_deficient) { throw RankDeficient("pod: snapshot matrix has rank below " + std::to_string(pod_modes(c))); }
  st.write("pod/basis.json", io::bundle_to_string(io::pod_to_bundle(basis)), "pod", "pod_basis",
           true, Json{{"modes", basis.k()}});
  if (log) { *log << "[pod] " << basis.k() << " modes\n"; }
}

inline PodBasis load_basis(const ArtifactStore & st, const std::string & stage)
{
  return io::pod_from_bundle(io::bundle_from_string(st.require(stage, "pod/basis.json")));
}

inline void stage_reduce(const PipelineConfig & c, const QuadraticSystem & sys, ArtifactStore & st, std::ostream * log)
{
  const PodBasis basis     = load_basis(st, "reduce");
  const AffineLpvModel m   = build_affine_lpv(sys, basis, c.r, c.k);
  st.write("model/model.json", io::bundle_to_string(io::model_to_bundle(m)), "reduce", "reduced_model", true,
           Json{{"r", m.r}, {"k", m.k}});
  for (Index i = 0; i <= m.r; ++i) {
    st.write("model/" + io::abar_name(i) + ".mtx", io::to_matrix_market(m.Abar[static_cast<std::size_t>(i)]), "reduce",
             "reduced_matrix");
  }
  st.write("model/Bbar.mtx", io::to_matrix_market(m.Bbar), "reduce", "reduced_input");
  st.write("model/Cbar.mtx", io::to_matrix_market(m.Cbar), "reduce", "reduced_output");
  if (log) { *log << "[reduce] k = " << m.k << ", r = " << m.r << ", " << m.r + 1 << " reduced matrices\n"; }
}

inline AffineLpvModel load_model(const ArtifactStore & st, const std::string & stage)
{
  return io::model_from_bundle(io::bundle_from_string(st.require(stage, "model/model.json")));
}

inline void stage_polytope(const PipelineConfig & c, const QuadraticSystem & sys, ArtifactStore & st, std::ostream * log)
{
  const Trajectory snaps  = load_snapshots(st, "polytope");
  const AffineLpvModel m  = load_model(st, "polytope");
  const Matrix P          = parameter_cloud(m, snaps);
  st.write("polytope/rho_cloud.csv", io::matrix_to_csv(P.transpose()), "polytope", "parameter_cloud");

  for (const auto & kind_name : c.polytope_kinds) {
    const PolytopeKind kind = polytope_kind_from_string(kind_name);
    ParamPolytope W;
    switch (kind) {
    case PolytopeKind::box: W = bounding_box(P, c.polytope_margin); break;
    case PolytopeKind::pca_box: {
      std::vector<Matrix> A_list;
      for (Index i = 0; i < m.r; ++i) { A_list.push_back(m.Abar[static_cast<std::size_t>(i + 1)]); }
      W = pca_box(P, A_list, c.polytope_margin).polytope;
      break;
    }
    case PolytopeKind::optimized: {
      GaParams ga = c.ga;
      ga.margin   = c.polytope_margin;
      const Index nk = c.n_k ? c.n_k : m.r + 2;
      W = optimize_polytope(P, nk, ga, derive_seed(c.seed, "polytope/optimized"));
      if (!W.fallback) { dilate(W, c.polytope_margin); }
      break;
    }
    }
    Index inside = 0;
    for (Index j = 0; j < P.cols(); ++j) { inside += contains(W, P.col(j), 1e-8) ? 1 : 0; }
    const VolumeEstimate vol =
        polytope_volume(W, std::max<Index>(c.volume_samples, 1000), derive_seed(c.seed, "volume/" + kind_name));
    const Json attrs{{"vertices", W.n_vertices()},
                     {"contained_fraction", double(inside) / double(P.cols())},
                     {"volume", vol.estimate},
                     {"volume_std_error", vol.std_error},
                     {"fallback", W.fallback},
                     {"warning", W.warning}};
    st.write(polytope_file(kind_name), io::polytope_to_json(W).dump(1) + "\n", "polytope", "polytope", true, attrs);
    if (log) {
      *log << "[polytope] " << kind_name << ": " << W.n_vertices() << " vertices, volume " << vol.estimate
           << (W.fallback ? " (bounding-box fallback)" : "") << "\n";
    }
  }
  (void)sys;
}

inline void stage_synth(const PipelineConfig & c, ArtifactStore & st, std::ostream * log)
{
  const AffineLpvModel m = load_model(st, "synth");
  HinfOptions ho;
  ho.gamma           = c.gamma;
  ho.rel_width       = c.rel_width;
  ho.gamma_start     = c.gamma_start;
  ho.coupling_margin = c.coupling_margin;
  ho.max_newton      = c.max_newton;
  for (const auto & kind : c.polytope_kinds) {
    const ParamPolytope W = io::polytope_from_json(io::parse_json(st.require("synth", polytope_file(kind))));
    const VertexControllerSet ctrl = synthesize_polytopic_hinf(m, W, c.weights, ho);
    const auto cert                = quadratic_stability_certificate(closed_loop_vertices(m, ctrl));
    st.write(controller_file(kind), io::bundle_to_string(io::controller_to_bundle(ctrl)), "synth", "controller", true,
             Json{{"polytope", kind},
                  {"gamma", ctrl.gamma},
                  {"vertices", ctrl.n_vertices()},
                  {"stagnated", ctrl.stagnated},
                  {"quadratic_stability", cert.ok},
                  {"certificate_residual", cert.max_residual}});
    Json steps = Json::array();
    for (const auto & e : ctrl.log) { steps.push_back(Json{{"gamma", e.gamma}, {"cpu_seconds", e.cpu_seconds}}); }
    st.write(timing_file(kind),
             Json{{"polytope", kind}, {"cpu_seconds", ctrl.cpu_seconds}, {"steps", std::move(steps)}}.dump(1) + "\n",
             "synth", "timing", false);
    if (log) {
      *log << "[synth] " << kind << ": gamma* = " << ctrl.gamma << " on " << ctrl.n_vertices() << " vertices, "
           << ctrl.cpu_seconds << " s CPU" << (cert.ok ? "" : ", quadratic stability NOT certified") << "\n";
    }
  }
}

inline void stage_closedloop(const PipelineConfig & c, const QuadraticSystem & sys, ArtifactStore & st,
                             std::ostream * log)
{
  const AffineLpvModel m = load_model(st, "closedloop");
  const Trajectory snaps = load_snapshots(st, "closedloop");
  std::optional<PodBasis> basis;
  for (const auto & s : c.scenarios) {
    if (s.plant == "reduced" && !basis) { basis = load_basis(st, "closedloop"); }
  }
  std::map<std::string, VertexControllerSet> ctrls;
  for (const auto & s : c.scenarios) {
    if (!ctrls.count(s.polytope)) {
      ctrls[s.polytope] = io::controller_from_bundle(io::bundle_from_string(st.require("closedloop", controller_file(s.polytope))));
    }
  }

  std::vector<std::string> lines(c.scenarios.size());
  parallel_for(c.scenarios.size(), [&](std::size_t si) {
    const ScenarioConfig & s       = c.scenarios[si];
    const VertexControllerSet & K  = ctrls.at(s.polytope);
    const ParamPolytope & W        = K.polytope;
    const SignalSpec dist          = s.disturbance.to_signal(sys.p());

    Vector x0 = Vector::Zero(sys.n());
    if (s.x0_scale != 0.0) {
      const Index N   = snaps.size();
      const Index col = s.x0_snapshot < 0 ? N + s.x0_snapshot : s.x0_snapshot;
      if (col < 0 || col >= N) { throw IndexError("scenario '" + s.name + "': x0_snapshot out of range"); }
      x0 = s.x0_scale * snaps.states.col(col);
    }

    std::optional<AffineLpvModel> plant_model;
    ClosedLoopPlant plant;
    Vector z0 = x0;
    if (s.plant == "reduced") {
      plant_model.emplace(build_affine_lpv(sys, *basis, s.plant_r ? s.plant_r : c.r, s.plant_k ? s.plant_k : c.k));
      plant = make_plant(*plant_model, m);
      z0    = encode(plant_model->V_k, x0);
    } else {
      require_dim(m.n() == sys.n(), "closedloop: model does not reduce the configured system");
      plant = make_plant(sys, m);
    }

    ClosedLoopOptions o;
    o.exit_policy         = exit_policy_from_string(s.exit_policy);
    o.integration.method  = ode_method_from_string(c.cl_integrator);
    o.integration.rtol    = c.cl_rtol;
    o.integration.atol    = c.cl_atol;
    o.integration.seed    = derive_seed(c.seed, "closedloop/" + s.name);

    ClosedLoopResult res;
    Json exit_info = nullptr;
    try {
      res = simulate_closed_loop(plant, W, K, dist, z0, s.t0, s.t1, s.n_out, o);
    } catch (const ParameterExit & e) {
      res       = *e.partial;
      exit_info = Json{{"time", e.time}, {"magnitude", e.magnitude}};
    }

    Json metrics             = io::metrics_to_json(res.metrics);
    metrics["parameter_exit"] = exit_info;
    metrics["exit_events"]    = res.exit_events.size();
    metrics["samples"]        = res.plant_traj.size();
    metrics["plant"]          = s.plant;
    if (s.open_loop_threshold > 0.0 && s.plant == "full") {
      IntegrateOptions io_;
      io_.method = o.integration.method;
      io_.rtol   = c.cl_rtol;
      io_.atol   = c.cl_atol;
      const auto hit = open_loop_exceedance(sys, dist, K.weights.W_d, x0, s.t0, s.t1, s.open_loop_threshold, io_);
      metrics["open_loop_threshold"]  = s.open_loop_threshold;
      metrics["open_loop_exceedance"] = hit ? Json(*hit) : Json(nullptr);
    }

    const std::string d = scenario_dir(s.name);
    st.write(d + "plant.csv", io::trajectory_to_csv(res.plant_traj), "closedloop", "closedloop_plant", true,
             Json{{"scenario", s.name}});
    st.write(d + "plant.json", io::trajectory_sidecar(res.plant_traj).dump(1) + "\n", "closedloop", "trajectory_meta");
    st.write(d + "controller.csv", io::trajectory_to_csv(res.controller_traj, "xk", "u", "y"), "closedloop",
             "closedloop_controller");
    st.write(d + "controller.json", io::trajectory_sidecar(res.controller_traj).dump(1) + "\n", "closedloop",
             "trajectory_meta");
    st.write(d + "rho.csv", io::matrix_to_csv(res.rho_traj.transpose()), "closedloop", "parameter_trajectory");
    st.write(d + "events.jsonl", io::exit_events_jsonl(res.exit_events), "closedloop", "exit_events");
    st.write(d + "metrics.json", metrics.dump(1) + "\n", "closedloop", "closedloop_metrics", true,
             Json{{"scenario", s.name}});

    std::ostringstream line;
    line << "[closedloop] " << s.name << ": max ||y|| = " << res.metrics.max_output_norm
         << ", final ||y|| = " << res.metrics.final_output_norm;
    if (!exit_info.is_null()) { line << ", parameter exit at t = " << exit_info["time"].get<double>(); }
    if (!res.exit_events.empty() && exit_info.is_null()) { line << ", " << res.exit_events.size() << " projected excursions"; }
    lines[si] = line.str();
  });
  if (log) {
    for (const auto & l : lines) { *log << l << "\n"; }
  }
}

}  // namespace detail

struct ReportFiles
{
  std::vector<std::string> written;
  bool box_smallest_gamma = true;
};

/**
 * @brief Report tables from an artifact directory: gamma-vs-CPU per polytope
 *        kind, phase portraits of a closed-loop scenario and a polytope summary.
 *
 * @throws EmptyReport when the manifest lists no synthesis, closed-loop or polytope artifacts.
 */
inline ReportFiles generate_report(const std::string & dir, Manifest & manifest, std::ostream * log = nullptr)
{
  const PipelineConfig cfg = config_from_json(manifest.config);
  detail::ArtifactStore st(dir, manifest);
  ReportFiles out;

  const auto ctrls    = manifest.of_kind("controller");
  const auto plants   = manifest.of_kind("closedloop_plant");
  const auto polys    = manifest.of_kind("polytope");
  if (ctrls.empty() && plants.empty() && polys.empty()) { throw EmptyReport(); }

  auto emit = [&](const std::string & rel, const std::string & content, bool deterministic) {
    st.write(rel, content, "report", "report", deterministic);
    out.written.push_back(rel);
  };

  if (!ctrls.empty()) {
    struct Row
    {
      std::string kind;
      Index vertices;
      double gamma, cpu;
    };
    std::vector<Row> rows;
    for (const auto * a : ctrls) {
      const std::string kind = a->attributes.at("polytope").get<std::string>();
      const Json timing      = io::parse_json(st.require("report", detail::timing_file(kind)));
      st.require("report", a->path);
      rows.push_back({kind, a->attributes.at("vertices").get<Index>(), a->attributes.at("gamma").get<double>(),
                      timing.at("cpu_seconds").get<double>()});
    }
    double best = std::numeric_limits<double>::infinity();
    for (const auto & r : rows) { best = std::min(best, r.gamma); }
    std::string csv = io::csv_row({"polytope", "vertices", "gamma", "cpu_seconds", "note"});
    for (const auto & r : rows) {
      std::string note;
      if (r.kind == "box" && r.gamma > best) {
        note                   = "box_not_smallest_gamma";
        out.box_smallest_gamma = false;
      }
      csv += io::csv_row({r.kind, std::to_string(r.vertices), io::format_double(r.gamma), io::format_double(r.cpu), note});
    }
    emit("report/gamma_cpu.csv", csv, false);
    if (log) { *log << "[report] gamma-vs-CPU table with " << rows.size() << " rows\n"; }
  }

  std::string scen = cfg.report_scenario;
  if (scen.empty() && !cfg.scenarios.empty()) { scen = cfg.scenarios.front().name; }
  const std::string plant_csv = detail::scenario_dir(scen) + "plant.csv";
  if (!scen.empty() && manifest.find(plant_csv)) {
    const Json side     = io::parse_json(st.require("report", detail::scenario_dir(scen) + "plant.json"));
    const Trajectory tr = io::trajectory_from_csv(st.require("report", plant_csv), side);
    for (const auto & pr : cfg.portrait_pairs) {
      const Matrix P = phase_portrait(tr, pr[0], pr[1], cfg.portrait_points);
      const std::string rel = "report/portrait_" + scen + "_y" + std::to_string(pr[0]) + "_y" + std::to_string(pr[1]) + ".csv";
      emit(rel, io::matrix_to_csv(P, {"y" + std::to_string(pr[0]), "y" + std::to_string(pr[1])}), true);
    }
    if (log) { *log << "[report] " << cfg.portrait_pairs.size() << " phase portraits of scenario '" << scen << "'\n"; }
  }

  if (!polys.empty()) {
    std::ostringstream txt;
    txt << "polytope summary (parameter cloud of " << cfg.r << " parameters)\n";
    for (const auto * a : polys) {
      const Json & at = a->attributes;
      txt << "  " << a->path.substr(9, a->path.size() - 14) << ": vertices " << at.at("vertices").get<Index>()
          << ", contained " << io::format_double(100.0 * at.at("contained_fraction").get<double>()) << " %"
          << ", volume " << io::format_double(at.at("volume").get<double>());
      if (at.at("volume_std_error").get<double>() > 0.0) {
        txt << " +/- " << io::format_double(at.at("volume_std_error").get<double>());
      }
      if (at.value("fallback", false)) { txt << ", bounding-box fallback"; }
      txt << "\n";
    }
    emit("report/polytope_summary.txt", txt.str(), true);
  }

  st.commit("report");
  return out;
}

/**
 * @brief Run the selected stages in canonical order, writing artifacts and
 *        manifest.json below the output directory.
 *
 * Stages not selected keep their manifest entries from earlier runs.
 *
 * @throws StageDependencyError if an upstream artifact is missing, StageError for other stage failures.
 */
inline RunResult run_pipeline(const PipelineConfig & cfg, const std::vector<std::string> & stages,
                              std::ostream * log = nullptr)
{
  validate_config(cfg);
  const std::string dir = cfg.output_dir;
  std::filesystem::create_directories(dir);

  RunResult rr;
  rr.stages = stages;
  Manifest & m = rr.manifest;
  if (auto old = load_manifest(dir)) { m = std::move(*old); }
  m.config        = config_to_json(cfg);
  m.config_sha256 = io::sha256_hex(m.config.dump());
  m.seed          = cfg.seed;
  m.stages_run    = stages;

  detail::ArtifactStore st(dir, m);
  std::optional<QuadraticSystem> sys;
  auto system = [&]() -> const QuadraticSystem & {
    if (!sys) { sys.emplace(make_benchmark(cfg.benchmark, cfg.benchmark_params)); }
    return *sys;
  };

  for (const auto & stage : stages) {
    try {
      if (stage == "simulate") {
        detail::stage_simulate(cfg, system(), st, log);
      } else if (stage == "pod") {
        detail::stage_pod(cfg, st, log);
      } else if (stage == "reduce") {
        detail::stage_reduce(cfg, system(), st, log);
      } else if (stage == "polytope") {
        detail::stage_polytope(cfg, system(), st, log);
      } else if (stage == "synth") {
        detail::stage_synth(cfg, st, log);
      } else if (stage == "closedloop") {
        detail::stage_closedloop(cfg, system(), st, log);
      } else if (stage == "report") {
        generate_report(dir, m, log);
        continue;
      } else {
        throw ConfigError("unknown stage '" + stage + "'");
      }
    } catch (const StageDependencyError &) {
      throw;
    } catch (const Error & e) {
      throw StageError(stage, e);
    }
    st.commit(stage);
    save_manifest(dir, m);
  }
  save_manifest(dir, m);
  return rr;
}

}  // namespace lpvgs
