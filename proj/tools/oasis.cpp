// oasis command-line driver: run, fidelity, verify, reference, plot.
//
// Exit codes: 0 success, 1 configuration error, 2 runtime failure.

#include <CLI11.hpp>
#include <fmt/format.h>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "oasis/harness.hpp"
#include "oasis/verify.hpp"

namespace fs = std::filesystem;
using namespace oasis;

namespace {

ExperimentConfig config_from(const std::string& path,
                             const std::vector<std::string>& overrides) {
  ExperimentConfig cfg = path.empty() ? ExperimentConfig{} : load_config(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos)
      throw ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  cfg.validate();
  return cfg;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  return out;
}

int cmd_run(const std::string& config_path,
            const std::vector<std::string>& overrides, std::size_t seed_count,
            const std::string& out_dir) {
  ExperimentConfig cfg = config_from(config_path, overrides);
  if (seed_count > 0) cfg.set("seed_count", std::to_string(seed_count));
  if (!out_dir.empty()) cfg.out_dir = out_dir;

  const auto records = run_experiment(cfg);
  fs::create_directories(cfg.out_dir);
  const fs::path base = fs::path(cfg.out_dir) / cfg.method;
  emit_csv(records, base.string() + ".csv");
  const std::string metric =
      cfg.loss == LossKind::logistic ? "optimality_gap" : "loss";
  emit_svg_plot(records, metric, base.string() + ".svg");
  {
    auto out = open_out(base.string() + ".config");
    out << cfg.to_text();
  }

  bool aborted = false;
  for (const auto& r : records) {
    const RunRow& last = r.rows.back();
    std::cout << fmt::format(
        "seed {:>3}: k={:<6} passes={:<8.4g} loss={:<14.8g} gap={:<12.4g} "
        "acc={:.4f}{}\n",
        r.seed, last.k, last.effective_passes, last.loss, last.optimality_gap,
        last.test_accuracy, r.aborted ? "  ABORTED: " + r.abort_message : "");
    aborted |= r.aborted;
  }
  std::cout << "wrote " << base.string() << ".{csv,svg,config}\n";
  return aborted ? 2 : 0;
}

int cmd_fidelity(std::size_t dim, std::size_t iters, double beta2,
                 std::uint64_t seed, const std::string& out_dir) {
  Rng rng(seed);
  const FidelityResult res = diag_fidelity_experiment(dim, iters, beta2, rng);
  fs::create_directories(out_dir);
  auto errors = open_out(fs::path(out_dir) / "fidelity_errors.csv");
  auto scatter = open_out(fs::path(out_dir) / "fidelity_scatter.csv");
  write_fidelity_csv(errors, scatter, res);
  if (iters > 0)
    std::cout << fmt::format(
        "after {} samples: hutchinson {:.4f}  oasis {:.4f}  adahessian {:.4f}\n",
        iters, res.hutchinson_error.back(), res.oasis_error.back(),
        res.adahessian_error.back());
  std::cout << "wrote " << out_dir << "/fidelity_{errors,scatter}.csv\n";
  return 0;
}

int cmd_verify(const std::string& suite, const std::string& csv_path) {
  if (suite != "all") throw ConfigError("unknown suite '" + suite + "'");
  const TheoryReport report = run_theory_suite();
  report.write_text(std::cout);
  if (!csv_path.empty()) {
    auto out = open_out(csv_path);
    report.write_csv(out);
  }
  return report.all_passed() ? 0 : 2;
}

int cmd_reference(const std::string& config_path,
                  const std::vector<std::string>& overrides) {
  const ExperimentConfig cfg = config_from(config_path, overrides);
  const ProblemInstance inst = build_problem(cfg);
  const ReferenceSolution ref = reference_solve(*inst.objective);
  std::cout << fmt::format("F* = {:.17g}\n||grad F||^2 = {:.3g}\niterations = {}\n"
                           "converged = {}\n",
                           ref.f, ref.grad_norm_sq, ref.iterations,
                           ref.converged ? "yes" : "no");
  std::cout << "w* =";
  for (double v : ref.w) std::cout << ' ' << fmt::format("{:.17g}", v);
  std::cout << '\n';
  return ref.converged ? 0 : 2;
}

int cmd_plot(const std::string& metric, const std::string& in_path,
             const std::string& out_path) {
  std::ifstream in(in_path);
  if (!in) throw std::runtime_error("cannot open " + in_path);
  const auto records = read_csv(in);
  if (!records.empty()) metric_value(records.front().rows.front(), metric);
  emit_svg_plot(records, metric, out_path);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"OASIS optimizer experiments"};
  app.require_subcommand(1);

  std::string config_path, out_dir, suite = "all", csv_path, metric = "gap",
                           in_path, plot_out;
  std::vector<std::string> overrides;
  std::size_t seed_count = 0, dim = 100, iters = 500;
  double beta2 = 0.99;
  std::uint64_t seed = 0;

  auto* run = app.add_subcommand("run", "run an experiment over its seeds");
  run->add_option("--config", config_path, "config file")->required();
  run->add_option("--seed-count", seed_count, "use seeds 0..N-1");
  run->add_option("--out", out_dir, "output directory");
  run->add_option("--set", overrides, "override a config key (key=value)");

  auto* fid = app.add_subcommand("fidelity", "diagonal-estimation fidelity");
  fid->add_option("--dim", dim, "matrix dimension")->check(CLI::Range(2, 100000));
  fid->add_option("--iters", iters, "Hutchinson samples");
  fid->add_option("--beta2", beta2, "EMA decay")->check(CLI::Range(0.0, 0.999999999));
  fid->add_option("--seed", seed, "random seed");
  fid->add_option("--out", out_dir, "output directory");

  auto* ver = app.add_subcommand("verify", "run the theory-check suite");
  ver->add_option("--suite", suite, "suite name (all)");
  ver->add_option("--csv", csv_path, "also write the report as CSV");

  auto* ref = app.add_subcommand("reference", "solve for w* and F*");
  ref->add_option("--config", config_path, "config file")->required();
  ref->add_option("--set", overrides, "override a config key (key=value)");

  auto* plot = app.add_subcommand("plot", "SVG plot from a run CSV");
  plot->add_option("--metric", metric, "CSV column (or 'gap')");
  plot->add_option("--in", in_path, "run CSV")->required();
  plot->add_option("--out", plot_out, "SVG path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*run) return cmd_run(config_path, overrides, seed_count, out_dir);
    if (*fid) return cmd_fidelity(dim, iters, beta2, seed,
                                  out_dir.empty() ? "out" : out_dir);
    if (*ver) return cmd_verify(suite, csv_path);
    if (*ref) return cmd_reference(config_path, overrides);
    if (*plot) return cmd_plot(metric, in_path, plot_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
