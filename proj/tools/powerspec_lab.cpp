// powerspec-lab <command> --config <path> [--out <dir>] [--seed <u64>] [--threads <n>]
//
// Exit status: 0 success, 1 a validation check failed, 2 runtime error.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "powerspec/analysis.hpp"
#include "powerspec/config.hpp"
#include "powerspec/error.hpp"
#include "powerspec/exec.hpp"
#include "powerspec/io.hpp"
#include "powerspec/spectrum_mc.hpp"
#include "powerspec/transfer_operator.hpp"

namespace fs = std::filesystem;
using namespace powerspec;

namespace {

class Stopwatch {
 public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

struct Run {
  RunConfig cfg;
  Observable obs;
  fs::path out;
  Manifest manifest;

  void write(const std::string& name, const std::string& content) {
    write_atomic(out / name, content);
    manifest.outputs.push_back(name);
  }
  void plot(const SpectrumEstimate& est, const std::string& name) {
    if (cfg.output.wants("plot")) {
      emit_plot_data(est, out / name);
      manifest.outputs.push_back(name);
    }
  }
};

BartlettSettings direct_settings(const RunConfig& c) {
  BartlettSettings s;
  s.n_per_segment = c.spectrum.n_per_segment;
  s.segments = c.spectrum.segments;
  s.blocks = c.spectrum.blocks;
  s.seed = c.spectrum.seed;
  s.burn_in = static_cast<std::size_t>(c.spectrum.burn_in);
  s.omega_min = c.spectrum.omega_min;
  return s;
}

InducedSettings induced_settings(const RunConfig& c) {
  InducedSettings s;
  s.n_returns = c.spectrum.n_returns;
  s.segments = c.spectrum.segments;
  s.blocks = c.spectrum.induced_blocks;
  s.seed = c.spectrum.seed;
  s.burn_in = static_cast<std::size_t>(c.spectrum.burn_in);
  s.omega_min = c.spectrum.omega_min;
  return s;
}

SeriesOptions series_options(const RunConfig& c) {
  SeriesOptions o;
  o.tol = c.op.tol;
  o.n_max_terms = c.op.n_max_terms;
  o.omega_min = c.spectrum.omega_min;
  return o;
}

CacheOptions cache_options(const RunConfig& c) {
  CacheOptions o;
  o.taylor_radius = c.op.taylor_radius;
  o.memory_budget = c.op.memory_budget;
  return o;
}

int cmd_spectrum(Run& run) {
  Stopwatch sw;
  const auto grid = run.cfg.spectrum.grid();
  const SpectrumEstimate est = bartlett_spectrum(run.obs, run.cfg.map, grid, direct_settings(run.cfg));
  run.manifest.timings.emplace_back("spectrum", sw.seconds());
  if (run.cfg.output.wants("csv")) {
    run.write("spectrum.csv", spectrum_csv(est));
  }
  run.plot(est, "spectrum.dat");
  run.manifest.results["spectrum.reseeds"] = std::to_string(est.reseeds);
  return 0;
}

int cmd_induced(Run& run) {
  Stopwatch sw;
  const auto grid = run.cfg.spectrum.grid();
  const SpectrumEstimate est = induced_spectrum_mc(run.obs, run.cfg.map, grid, induced_settings(run.cfg));
  run.manifest.timings.emplace_back("induced", sw.seconds());
  if (run.cfg.output.wants("csv")) {
    run.write("induced.csv", spectrum_csv(est));
  }
  run.plot(est, "induced.dat");
  run.manifest.results["induced.r_bar"] = format_number(est.r_bar);
  run.manifest.results["induced.r_bar_stderr"] = format_number(est.r_bar_stderr);
  run.manifest.results["induced.rejected_blocks"] = std::to_string(est.rejected_blocks);
  return 0;
}

int cmd_operator(Run& run) {
  Stopwatch sw;
  const auto& c = run.cfg;
  const TwistedOperatorCache cache = build_cache(c.map, c.op.n_nodes, c.op.r_max, cache_options(c));
  const DensityEstimate density = invariant_density(cache);
  const PreparedObservable prep = prepare_observable(cache, run.obs);
  const RBar rb = r_bar_quadrature(cache, density);
  run.manifest.timings.emplace_back("operator.cache", sw.seconds());
  std::vector<OperatorRow> rows;
  bool truncated = false;
  for (double w : c.spectrum.grid()) {
    const TwistedOperator op(cache, density, w, &prep);
    const SeriesResult sr = induced_spectrum_series(op, series_options(c));
    const SpectralRadius rad = spectral_radius(op);
    truncated = truncated || sr.truncated;
    rows.push_back({w, sr.s_y, sr.terms_used, sr.last_term, sr.tilde_check, rad.value});
  }
  run.manifest.timings.emplace_back("operator", sw.seconds());
  if (c.output.wants("csv")) {
    run.write("operator.csv", operator_csv(rows));
  }
  if (c.output.wants("plot")) {
    SpectrumEstimate est;
    est.estimator = Estimator::operator_series;
    for (const auto& r : rows) {
      est.omegas.push_back(r.omega);
      est.values.push_back(r.s_y / rb.value);
      est.stderrs.push_back(0.0);
    }
    run.plot(est, "operator.dat");
  }
  run.manifest.results["operator.r_bar_quadrature"] = format_number(rb.value);
  run.manifest.results["operator.r_bar_tail_correction"] = format_number(rb.tail_correction);
  run.manifest.results["operator.density_eigenvalue"] = format_number(density.eigenvalue);
  run.manifest.results["operator.tail_mass"] = format_number(cache.tail_mass);
  run.manifest.results["operator.truncated"] = truncated ? "true" : "false";
  if (rb.tail_warning) {
    std::cerr << "warning: gamma >= 0.8, r_bar quadrature is dominated by the truncated tail\n";
  }
  return 0;
}

int cmd_tails(Run& run) {
  Stopwatch sw;
  const auto& c = run.cfg;
  const TailFit fit = tail_exponent_fit(c.map, c.analysis.tail_samples, c.spectrum.seed, c.analysis.tail_segments);
  run.manifest.timings.emplace_back("tails", sw.seconds());
  if (c.output.wants("csv")) {
    run.write("tails.csv", columns_csv({"n", "survival"}, {fit.n, fit.survival}));
  }
  run.manifest.results["tails.slope"] = format_number(fit.slope);
  run.manifest.results["tails.ci_low"] = format_number(fit.ci_low);
  run.manifest.results["tails.ci_high"] = format_number(fit.ci_high);
  run.manifest.results["tails.expected"] = format_number(-1.0 / c.map.gamma);
  return 0;
}

ValidationReport build_report(Run& run) {
  const auto& c = run.cfg;
  ValidationReport report;
  const RegimeInfo regime = regime_info(c.map.gamma, run.obs.eta());
  report.environment["seed"] = std::to_string(c.spectrum.seed);
  report.environment["gamma"] = format_number(c.map.gamma);
  report.environment["regime"] = regime.summable ? "summable" : "nonsummable";
  report.environment["eta"] = format_number(regime.eta);
  report.environment["eta_threshold"] = format_number(regime.eta_threshold);
  report.environment["eta_sufficient"] = regime.eta_sufficient ? "true" : "false";
  report.environment["n_nodes"] = std::to_string(c.op.n_nodes);
  report.environment["r_max"] = std::to_string(c.op.r_max);

  Stopwatch sw;
  const KacResult kac = kac_check(c.map, c.analysis.kac_iterates, c.spectrum.seed);
  // Past gamma = 1/2 the return time has infinite variance and r_bar converges slowly.
  const double kac_tol = c.map.gamma > 0.5 ? 0.03 : 0.01;
  report.add({"kac_identity", "gamma=" + format_number(c.map.gamma) + " n=" + std::to_string(c.analysis.kac_iterates),
              kac.product, 1.0, kac_tol,
              std::abs(kac.product - 1.0) <= kac_tol ? Verdict::pass : Verdict::fail});
  run.manifest.timings.emplace_back("validate.kac", sw.seconds());

  if (c.map.gamma > 0.0) {
    try {
      const TailFit fit =
          tail_exponent_fit(c.map, c.analysis.tail_samples, c.spectrum.seed, c.analysis.tail_segments);
      report.add({"tail_exponent", "gamma=" + format_number(c.map.gamma) + " ci=[" + format_number(fit.ci_low) + "," +
                                       format_number(fit.ci_high) + "]",
                  fit.slope, -1.0 / c.map.gamma, 0.15,
                  std::abs(fit.slope + 1.0 / c.map.gamma) <= 0.15 ? Verdict::pass : Verdict::fail});
    } catch (const InsufficientDataError& e) {
      // Small gamma: long returns are too rare to fit at this sample size.
      report.add({"tail_exponent", e.what(), 0.0, -1.0 / c.map.gamma, 0.15, Verdict::inconclusive});
    }
    run.manifest.timings.emplace_back("validate.tails", sw.seconds());
  }

  CrossSettings cs;
  cs.direct = direct_settings(c);
  cs.induced = induced_settings(c);
  cs.n_nodes = c.op.n_nodes;
  cs.r_max = c.op.r_max;
  cs.series = series_options(c);
  cs.tolerance = c.analysis.tolerance;
  const auto grid = c.spectrum.grid();
  const CrossValidation cv = cross_validate(run.obs, c.map, grid, cs);
  report.merge(cv.report);
  run.manifest.timings.emplace_back("validate.cross", sw.seconds());

  SpectrumEstimate direct;
  for (const auto& row : cv.rows) {
    direct.omegas.push_back(row.omega);
    direct.values.push_back(row.direct);
    direct.stderrs.push_back(row.direct_se);
  }
  const PositivityResult pos = positivity_scan(direct);
  report.add({"positivity_floor", "argmin omega=" + format_number(pos.argmin), pos.floor, 0.0, 0.0,
              pos.positive ? Verdict::pass : Verdict::fail});

  if (!regime.summable) {
    const BlowupTable t = blowup_scan(run.obs, c.map, c.analysis.blowup_omegas, cs.direct);
    for (std::size_t k = 0; k < t.omegas.size(); ++k) {
      report.add({"blowup_scan", "omega=" + format_number(t.omegas[k]) + " stderr=" + format_number(t.stderrs[k]),
                  t.values[k], 0.0, 0.0, Verdict::exploratory});
    }
    report.environment["blowup.increasing_steps"] = std::to_string(t.increasing_steps);
  }
  run.manifest.timings.emplace_back("validate", sw.seconds());
  return report;
}

int cmd_validate(Run& run) {
  const ValidationReport report = build_report(run);
  run.write("report.json", report.to_json());
  run.manifest.results["validate.all_pass"] = report.all_pass() ? "true" : "false";
  return report.all_pass() ? 0 : 1;
}

int cmd_report(Run& run) {
  cmd_spectrum(run);
  cmd_induced(run);
  cmd_operator(run);
  return cmd_validate(run);
}

int resolve_threads(int cli_threads) {
  if (cli_threads > 0) {
    return cli_threads;
  }
  if (const char* env = std::getenv("POWERSPEC_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) {
        return n;
      }
    } catch (const std::exception&) {
    }
    throw ConfigError("POWERSPEC_THREADS must be a positive integer");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Power spectra of LSV intermittent maps by Monte Carlo and transfer operators"};
  std::string command;
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  int threads = 0;
  app.add_option("command", command, "spectrum | induced | operator | validate | tails | report")
      ->required()
      ->check(CLI::IsMember({"spectrum", "induced", "operator", "validate", "tails", "report"}));
  app.add_option("--config", config_path, "configuration file")->required();
  auto* out_opt = app.add_option("--out", out_dir, "output directory (overrides [output] directory)");
  auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides [spectrum] seed)");
  app.add_option("--threads", threads, "worker threads (fallback: POWERSPEC_THREADS)")->check(CLI::PositiveNumber);
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  Stopwatch total;
  Run run;
  if (*out_opt) {
    run.out = out_dir;
  }
  run.manifest.command = command;
  try {
    run.cfg = load_config(config_path);
    if (*seed_opt) {
      run.cfg.spectrum.seed = seed;
      run.cfg.settings["spectrum.seed"] = std::to_string(seed);
    }
    run.out = *out_opt ? fs::path(out_dir) : fs::path(run.cfg.output.directory);
    const int n_threads = resolve_threads(threads);
    if (n_threads > 0) {
      set_thread_count(n_threads);
    }
    run.obs = run.cfg.observable.build();
    run.manifest.seed = run.cfg.spectrum.seed;
    run.manifest.threads = thread_count();
    run.manifest.settings = run.cfg.settings;

    int rc = 0;
    if (command == "spectrum") {
      rc = cmd_spectrum(run);
    } else if (command == "induced") {
      rc = cmd_induced(run);
    } else if (command == "operator") {
      rc = cmd_operator(run);
    } else if (command == "validate") {
      rc = cmd_validate(run);
    } else if (command == "tails") {
      rc = cmd_tails(run);
    } else {
      rc = cmd_report(run);
    }
    run.manifest.timings.emplace_back("total", total.seconds());
    write_atomic(run.out / "manifest.json", run.manifest.to_json());
    return rc;
  } catch (const std::exception& e) {
    std::cerr << "powerspec-lab: " << e.what() << '\n';
    if (!run.out.empty()) {
      // Best effort: record the failure next to whatever was written.
      try {
        run.manifest.results["error"] = e.what();
        run.manifest.timings.emplace_back("total", total.seconds());
        write_atomic(run.out / "manifest.json", run.manifest.to_json());
      } catch (const std::exception&) {
      }
    }
    return 2;
  }
}
