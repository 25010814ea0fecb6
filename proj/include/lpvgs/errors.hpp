#pragma once

/**
 * @file
 * @brief Exception hierarchy shared by all lpvgs modules.
 *
 * Every error carries an ErrorClass so that the command line tool can map it
 * to a distinct process exit code.
 */

#include <cstddef>
#include <stdexcept>
#include <string>

namespace lpvgs {

enum class ErrorClass : int {
  dimension = 10,
  benchmark = 11,
  equilibrium = 12,
  integration = 13,
  rank = 14,
  parameter_order = 15,
  polytope = 16,
  optimization = 17,
  outside_domain = 18,
  sdp = 19,
  synthesis = 20,
  weight = 21,
  parameter_exit = 22,
  index = 23,
  stage_dependency = 24,
  parse = 25,
  empty_report = 26,
  config = 27,
  io = 28,
};

inline const char * to_string(ErrorClass c) noexcept
{
  switch (c) {
  case ErrorClass::dimension: return "DimensionError";
  case ErrorClass::benchmark: return "UnknownBenchmark";
  case ErrorClass::equilibrium: return "EquilibriumError";
  case ErrorClass::integration: return "IntegrationError";
  case ErrorClass::rank: return "RankDeficient";
  case ErrorClass::parameter_order: return "ParameterOrderError";
  case ErrorClass::polytope: return "DimensionTooLarge";
  case ErrorClass::optimization: return "OptimizationFailed";
  case ErrorClass::outside_domain: return "OutsideDomain";
  case ErrorClass::sdp: return "SdpSolverFailure";
  case ErrorClass::synthesis: return "SynthesisInfeasible";
  case ErrorClass::weight: return "WeightError";
  case ErrorClass::parameter_exit: return "ParameterExit";
  case ErrorClass::index: return "IndexError";
  case ErrorClass::stage_dependency: return "StageDependencyError";
  case ErrorClass::parse: return "ParseError";
  case ErrorClass::empty_report: return "EmptyReport";
  case ErrorClass::config: return "ConfigError";
  case ErrorClass::io: return "IoError";
  }
  return "Error";
}

class Error : public std::runtime_error
{
public:
  Error(ErrorClass cls, const std::string & msg) : std::runtime_error(msg), cls_(cls) {}

  ErrorClass error_class() const noexcept { return cls_; }
  int exit_code() const noexcept { return static_cast<int>(cls_); }

private:
  ErrorClass cls_;
};

struct DimensionError : Error
{
  explicit DimensionError(const std::string & m) : Error(ErrorClass::dimension, m) {}
};

struct UnknownBenchmark : Error
{
  explicit UnknownBenchmark(const std::string & name)
      : Error(ErrorClass::benchmark, "unknown benchmark '" + name + "'")
  {}
};

struct EquilibriumError : Error
{
  explicit EquilibriumError(const std::string & m) : Error(ErrorClass::equilibrium, m) {}
};

/// Step-size underflow or non-finite state.  `last_time` is the last accepted time.
struct IntegrationError : Error
{
  IntegrationError(const std::string & m, double t)
      : Error(ErrorClass::integration, m + " (last valid t = " + std::to_string(t) + ")"), last_time(t)
  {}
  double last_time;
};

struct RankDeficient : Error
{
  explicit RankDeficient(const std::string & m) : Error(ErrorClass::rank, m) {}
};

struct ParameterOrderError : Error
{
  explicit ParameterOrderError(const std::string & m) : Error(ErrorClass::parameter_order, m) {}
};

struct DimensionTooLarge : Error
{
  explicit DimensionTooLarge(const std::string & m) : Error(ErrorClass::polytope, m) {}
};

struct OptimizationFailed : Error
{
  explicit OptimizationFailed(const std::string & m) : Error(ErrorClass::optimization, m) {}
};

struct OutsideDomain : Error
{
  OutsideDomain(const std::string & m, double v) : Error(ErrorClass::outside_domain, m), violation(v) {}
  double violation;
};

struct IterationLimit : Error
{
  explicit IterationLimit(const std::string & m) : Error(ErrorClass::sdp, m) {}
};

struct NumericalBreakdown : Error
{
  explicit NumericalBreakdown(const std::string & m) : Error(ErrorClass::sdp, m) {}
};

struct SynthesisInfeasible : Error
{
  explicit SynthesisInfeasible(double g)
      : Error(ErrorClass::synthesis, "synthesis LMIs infeasible at gamma = " + std::to_string(g)), gamma(g)
  {}
  SynthesisInfeasible(const std::string & m, double g)
      : Error(ErrorClass::synthesis, m + " (gamma = " + std::to_string(g) + ")"), gamma(g)
  {}
  double gamma;
};

struct WeightError : Error
{
  explicit WeightError(const std::string & m) : Error(ErrorClass::weight, m) {}
};

struct IndexError : Error
{
  explicit IndexError(const std::string & m) : Error(ErrorClass::index, m) {}
};

struct StageDependencyError : Error
{
  StageDependencyError(const std::string & stage, const std::string & missing)
      : Error(ErrorClass::stage_dependency,
              "stage '" + stage + "' requires missing artifact '" + missing + "'"),
        stage(stage)
  {}
  std::string stage;
};

struct ParseError : Error
{
  ParseError(const std::string & m, std::size_t l, std::size_t c)
      : Error(ErrorClass::parse, m + " at line " + std::to_string(l) + ", column " + std::to_string(c)),
        line(l), column(c)
  {}
  std::size_t line;
  std::size_t column;
};

struct EmptyReport : Error
{
  EmptyReport() : Error(ErrorClass::empty_report, "nothing to report") {}
};

struct ConfigError : Error
{
  explicit ConfigError(const std::string & m) : Error(ErrorClass::config, m) {}
};

struct IoError : Error
{
  explicit IoError(const std::string & m) : Error(ErrorClass::io, m) {}
};

}  // namespace lpvgs
