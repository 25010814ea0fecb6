#pragma once

/**
 * @file
 * @brief Serialization of models, polytopes, controllers and trajectories.
 */

#include <string>
#include <vector>

#include "../closedloop.hpp"
#include "../hinf.hpp"
#include "../pod.hpp"
#include "../polytope.hpp"
#include "../trajectory.hpp"
#include "csv.hpp"
#include "json_bundle.hpp"

namespace lpvgs::io {

inline Bundle pod_to_bundle(const PodBasis & b)
{
  Bundle out;
  out.matrices["V"]               = b.V;
  out.matrices["singular_values"] = b.singular_values;
  out.meta["rank_deficient"]      = b.rank_deficient;
  return out;
}

inline PodBasis pod_from_bundle(const Bundle & in)
{
  PodBasis b;
  b.V               = in.at("V");
  b.singular_values = in.at("singular_values").col(0);
  b.rank_deficient  = in.meta.value("rank_deficient", false);
  return b;
}

inline std::string abar_name(Index i) { return "Abar_" + std::to_string(i); }

inline Bundle model_to_bundle(const AffineLpvModel & m)
{
  Bundle out;
  for (Index i = 0; i <= m.r; ++i) { out.matrices[abar_name(i)] = m.Abar[static_cast<std::size_t>(i)]; }
  out.matrices["Bbar"]            = m.Bbar;
  out.matrices["Cbar"]            = m.Cbar;
  out.matrices["V_k"]             = m.V_k;
  out.matrices["singular_values"] = m.singular_values;
  out.meta["r"]                   = m.r;
  out.meta["k"]                   = m.k;
  return out;
}

/// Full-order A_i are not stored; they are rebuilt from the system when needed.
inline AffineLpvModel model_from_bundle(const Bundle & in)
{
  AffineLpvModel m;
  m.r = in.meta.at("r").get<Index>();
  m.k = in.meta.at("k").get<Index>();
  for (Index i = 0; i <= m.r; ++i) { m.Abar.push_back(in.at(abar_name(i))); }
  m.Bbar            = in.at("Bbar");
  m.Cbar            = in.at("Cbar");
  m.V_k             = in.at("V_k");
  m.V_r             = m.V_k.leftCols(m.r);
  m.singular_values = in.at("singular_values").col(0);
  require_dim(m.V_k.cols() == m.k && m.Bbar.rows() == m.k && m.Cbar.cols() == m.k, "model bundle: inconsistent sizes");
  return m;
}

inline Json polytope_to_json(const ParamPolytope & W)
{
  return Json{{"kind", to_string(W.kind)},
              {"r", W.r},
              {"vertices", matrix_to_json(W.vertices)},
              {"U_pc", matrix_to_json(W.U_pc)},
              {"box_lo", vector_to_json(W.box_lo)},
              {"box_hi", vector_to_json(W.box_hi)},
              {"provenance", W.provenance},
              {"seed", W.seed},
              {"fallback", W.fallback},
              {"warning", W.warning}};
}

inline ParamPolytope polytope_from_json(const Json & j)
{
  ParamPolytope W;
  W.kind       = polytope_kind_from_string(j.at("kind").get<std::string>());
  W.r          = j.at("r").get<Index>();
  W.vertices   = matrix_from_json(j.at("vertices"), "vertices");
  W.U_pc       = matrix_from_json(j.at("U_pc"), "U_pc");
  W.box_lo     = vector_from_json(j.at("box_lo"), "box_lo");
  W.box_hi     = vector_from_json(j.at("box_hi"), "box_hi");
  W.provenance = j.value("provenance", "");
  W.seed       = j.value("seed", std::uint64_t{0});
  W.fallback   = j.value("fallback", false);
  W.warning    = j.value("warning", false);
  require_dim(W.vertices.rows() == W.r, "polytope: vertex dimension mismatch");
  return W;
}

inline Json weights_to_json(const PerformanceWeights & w)
{
  return Json{{"W_d", w.W_d}, {"W_y", w.W_y}, {"W_u", w.W_u}, {"W_n", w.W_n}};
}

inline PerformanceWeights weights_from_json(const Json & j)
{
  PerformanceWeights w;
  w.W_d = j.value("W_d", w.W_d);
  w.W_y = j.value("W_y", w.W_y);
  w.W_u = j.value("W_u", w.W_u);
  w.W_n = j.value("W_n", w.W_n);
  return w;
}

/// Controller bundle; CPU timings are left out so the file is reproducible.
inline Bundle controller_to_bundle(const VertexControllerSet & c)
{
  Bundle out;
  for (Index i = 0; i < c.n_vertices(); ++i) {
    const auto s = std::to_string(i);
    const auto u = static_cast<std::size_t>(i);
    out.matrices["Ak_" + s] = c.Ak[u];
    out.matrices["Bk_" + s] = c.Bk[u];
    out.matrices["Ck_" + s] = c.Ck[u];
    out.matrices["Dk_" + s] = c.Dk[u];
  }
  out.matrices["lyapunov"] = c.lyapunov;
  out.matrices["R"]        = c.R;
  out.matrices["S"]        = c.S;
  Json log                 = Json::array();
  for (const auto & e : c.log) {
    log.push_back(Json{{"gamma", e.gamma}, {"feasible", e.feasible}, {"iterations", e.iterations}});
  }
  out.meta = Json{{"gamma", number_to_json(c.gamma)},
                  {"n_vertices", c.n_vertices()},
                  {"stagnated", c.stagnated},
                  {"weights", weights_to_json(c.weights)},
                  {"polytope", polytope_to_json(c.polytope)},
                  {"log", std::move(log)}};
  return out;
}

inline VertexControllerSet controller_from_bundle(const Bundle & in)
{
  VertexControllerSet c;
  const auto nv = in.meta.at("n_vertices").get<Index>();
  for (Index i = 0; i < nv; ++i) {
    const auto s = std::to_string(i);
    c.Ak.push_back(in.at("Ak_" + s));
    c.Bk.push_back(in.at("Bk_" + s));
    c.Ck.push_back(in.at("Ck_" + s));
    c.Dk.push_back(in.at("Dk_" + s));
  }
  c.lyapunov  = in.at("lyapunov");
  c.R         = in.at("R");
  c.S         = in.at("S");
  c.gamma     = number_from_json(in.meta.at("gamma"), "gamma");
  c.stagnated = in.meta.value("stagnated", false);
  c.weights   = weights_from_json(in.meta.at("weights"));
  c.polytope  = polytope_from_json(in.meta.at("polytope"));
  for (const auto & e : in.meta.at("log")) {
    c.log.push_back({e.at("gamma").get<double>(), e.at("feasible").get<bool>(), e.at("iterations").get<int>(), 0.0});
  }
  return c;
}

/// CSV with columns t, x*, y*, u* (one row per instant).
inline std::string trajectory_to_csv(const Trajectory & tr, const std::string & state = "x",
                                     const std::string & output = "y", const std::string & input = "u")
{
  const Index N = tr.size(), n = tr.states.rows(), q = tr.outputs.rows(), p = tr.inputs.rows();
  std::vector<std::string> header{"t"};
  for (Index i = 0; i < n; ++i) { header.push_back(state + std::to_string(i)); }
  for (Index i = 0; i < q; ++i) { header.push_back(output + std::to_string(i)); }
  for (Index i = 0; i < p; ++i) { header.push_back(input + std::to_string(i)); }
  Matrix T(N, 1 + n + q + p);
  T.col(0) = tr.times;
  if (n) { T.middleCols(1, n) = tr.states.transpose(); }
  if (q) { T.middleCols(1 + n, q) = tr.outputs.transpose(); }
  if (p) { T.middleCols(1 + n + q, p) = tr.inputs.transpose(); }
  return matrix_to_csv(T, header);
}

inline Json trajectory_sidecar(const Trajectory & tr)
{
  return Json{{"rows", tr.size()},
              {"n", tr.states.rows()},
              {"q", tr.outputs.rows()},
              {"p", tr.inputs.rows()},
              {"integrator", tr.meta.integrator},
              {"rtol", tr.meta.rtol},
              {"atol", tr.meta.atol},
              {"seed", tr.meta.seed}};
}

inline Trajectory trajectory_from_csv(std::string_view csv, const Json & sidecar)
{
  const Matrix T = matrix_from_csv(csv, true);
  const auto n = sidecar.at("n").get<Index>(), q = sidecar.at("q").get<Index>(), p = sidecar.at("p").get<Index>();
  if (T.cols() != 1 + n + q + p) { throw ParseError("trajectory CSV width disagrees with its sidecar", 1, 1); }
  Trajectory tr;
  tr.times   = T.col(0);
  tr.states  = T.middleCols(1, n).transpose();
  tr.outputs = T.middleCols(1 + n, q).transpose();
  tr.inputs  = T.middleCols(1 + n + q, p).transpose();
  tr.meta    = {sidecar.value("integrator", ""), sidecar.value("rtol", 0.0), sidecar.value("atol", 0.0),
                sidecar.value("seed", std::uint64_t{0})};
  return tr;
}

/// One JSON object per line.
inline std::string exit_events_jsonl(const std::vector<ExitEvent> & events)
{
  std::string out;
  for (const auto & e : events) {
    out += Json{{"time", e.time}, {"magnitude", number_to_json(e.magnitude)}, {"action", e.action}}.dump() + "\n";
  }
  return out;
}

inline Json metrics_to_json(const ClosedLoopMetrics & m)
{
  return Json{{"max_output_norm", number_to_json(m.max_output_norm)},
              {"final_output_norm", number_to_json(m.final_output_norm)},
              {"max_state_norm", number_to_json(m.max_state_norm)},
              {"max_input_norm", number_to_json(m.max_input_norm)},
              {"settling_time", std::isnan(m.settling_time) ? Json(nullptr) : Json(m.settling_time)},
              {"settle_tol", m.settle_tol}};
}

}  // namespace lpvgs::io
