// lpvgs command line driver: init, run, convert, report.

#include <CLI11.hpp>

#include <lpvgs/io/convert.hpp>
#include <lpvgs/pipeline.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

namespace {

constexpr int kUsageExit    = 2;
constexpr int kInternalExit = 1;

void report_error(const std::string & cls, int code, const std::string & message, lpvgs::Json extra = {})
{
  lpvgs::Json j{{"error", cls}, {"code", code}, {"message", message}};
  if (extra.is_object()) { j.update(extra); }
  std::cerr << j.dump() << std::endl;
}

int cmd_init(const std::string & path, bool force)
{
  if (std::filesystem::exists(path) && !force) {
    throw lpvgs::ConfigError("'" + path + "' already exists; pass --force to overwrite");
  }
  lpvgs::io::write_file(path, lpvgs::config_template());
  std::cout << "wrote configuration template to " << path << "\n";
  return 0;
}

int cmd_run(const std::string & config, const std::string & stages, std::optional<std::uint64_t> seed,
            const std::string & out)
{
  lpvgs::PipelineConfig cfg = config.empty() ? lpvgs::PipelineConfig{} : lpvgs::load_config(config);
  if (seed) { cfg.seed = *seed; }
  if (!out.empty()) { cfg.output_dir = out; }
  const auto selected = lpvgs::parse_stages(stages);
  const auto threads  = lpvgs::thread_cap();
  std::cout << "lpvgs run: stages";
  for (const auto & s : selected) { std::cout << ' ' << s; }
  std::cout << ", " << threads << " thread(s), output " << cfg.output_dir << "\n";

  const auto rr = lpvgs::run_pipeline(cfg, selected, &std::cout);
  std::cout << "manifest: " << (std::filesystem::path(cfg.output_dir) / "manifest.json").string() << " ("
            << rr.manifest.artifacts.size() << " artifacts)\n";
  return 0;
}

int cmd_convert(const std::string & in, const std::string & out, const std::string & from, const std::string & to,
                const std::string & entry)
{
  using namespace lpvgs::io;
  const FileFormat fi = from.empty() ? file_format_from_path(in) : file_format_from_string(from);
  const FileFormat fo = to.empty() ? file_format_from_path(out) : file_format_from_string(to);
  convert(in, fi, out, fo, entry);
  std::cout << "converted " << in << " (" << to_string(fi) << ") -> " << out << " (" << to_string(fo) << ")\n";
  return 0;
}

int cmd_report(const std::string & dir)
{
  auto m = lpvgs::load_manifest(dir);
  if (!m) { throw lpvgs::EmptyReport(); }
  const auto bad = lpvgs::verify_manifest(dir, *m);
  if (!bad.empty()) { throw lpvgs::StageDependencyError("report", bad.front()); }
  const auto files = lpvgs::generate_report(dir, *m, &std::cout);
  lpvgs::save_manifest(dir, *m);
  for (const auto & f : files.written) { std::cout << "  " << f << "\n"; }
  return 0;
}

}  // namespace

int main(int argc, char ** argv)
{
  CLI::App app{"Gain-scheduled controller design from POD-reduced LPV models"};
  app.require_subcommand(1);

  std::string init_path, config, out, report_dir, stages = "all", from, to, entry, in_path, out_path;
  std::optional<std::uint64_t> seed;
  bool force = false;

  auto * init = app.add_subcommand("init", "write a commented configuration template");
  init->add_option("--config", init_path, "template path")->default_val("lpvgs.json");
  init->add_flag("--force", force, "overwrite an existing file");

  auto * run = app.add_subcommand("run", "run pipeline stages");
  run->add_option("--config", config, "configuration file (defaults when omitted)")->check(CLI::ExistingFile);
  run->add_option("--stages", stages, "comma separated stages or 'all'");
  run->add_option("--seed", seed, "override the master seed");
  run->add_option("--out", out, "override the output directory");

  auto * conv = app.add_subcommand("convert", "convert between matrix file formats");
  conv->add_option("input", in_path, "input file")->required()->check(CLI::ExistingFile);
  conv->add_option("output", out_path, "output file")->required();
  conv->add_option("--from", from, "input format: matrix-market, csv, json-bundle");
  conv->add_option("--to", to, "output format: matrix-market, csv, json-bundle");
  conv->add_option("--entry", entry, "matrix name inside a bundle");

  auto * rep = app.add_subcommand("report", "regenerate report tables from an artifact directory");
  rep->add_option("--out", report_dir, "artifact directory")->default_val("lpvgs-out");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp & e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp & e) {
    return app.exit(e);
  } catch (const CLI::ParseError & e) {
    report_error("UsageError", kUsageExit, e.what());
    return kUsageExit;
  }

  try {
    if (*init) { return cmd_init(init_path, force); }
    if (*run) { return cmd_run(config, stages, seed, out); }
    if (*conv) { return cmd_convert(in_path, out_path, from, to, entry); }
    if (*rep) { return cmd_report(report_dir); }
  } catch (const lpvgs::ParseError & e) {
    report_error(lpvgs::to_string(e.error_class()), e.exit_code(), e.what(),
                 {{"line", e.line}, {"column", e.column}});
    return e.exit_code();
  } catch (const lpvgs::StageDependencyError & e) {
    report_error(lpvgs::to_string(e.error_class()), e.exit_code(), e.what(), {{"stage", e.stage}});
    return e.exit_code();
  } catch (const lpvgs::StageError & e) {
    report_error(lpvgs::to_string(e.error_class()), e.exit_code(), e.what(), {{"stage", e.stage}});
    return e.exit_code();
  } catch (const lpvgs::Error & e) {
    report_error(lpvgs::to_string(e.error_class()), e.exit_code(), e.what());
    return e.exit_code();
  } catch (const std::filesystem::filesystem_error & e) {
    const int code = static_cast<int>(lpvgs::ErrorClass::io);
    report_error("IoError", code, e.what());
    return code;
  } catch (const std::exception & e) {
    report_error("InternalError", kInternalExit, e.what());
    return kInternalExit;
  }
  return kUsageExit;
}
