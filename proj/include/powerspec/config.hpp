#pragma once

// Run configuration: INI-style `[section]` headers, `key = value` lines, `#`
// comments. Parsing is strict: unknown sections or keys, duplicates and
// out-of-range values are errors that cite the line number.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "powerspec/dynamics.hpp"
#include "powerspec/observables.hpp"

namespace powerspec {

struct ObservableConfig {
  ObservableKind kind = ObservableKind::cosine_basis;
  double eta = 1.0;
  std::vector<double> coefficients{0.0, 1.0};
  std::string table;  // path of a whitespace-separated value table (tabulated kind)

  Observable build() const;
  std::vector<double> table_values;  // loaded at parse time
};

struct SpectrumConfig {
  int omega_count = 32;
  double omega_min = 0.05;
  double omega_offset = 1.4142135623730951e-3;
  std::vector<double> omegas;  // explicit grid; overrides omega_count when set
  std::int64_t n_per_segment = 1 << 16;
  int segments = 16;
  int blocks = 64;
  std::uint64_t seed = 1;
  std::int64_t burn_in = 10'000;
  std::int64_t n_returns = 1 << 16;
  int induced_blocks = 64;

  std::vector<double> grid() const;
};

struct OperatorConfig {
  int n_nodes = 256;
  int r_max = 10'000;
  double tol = 1e-8;
  int n_max_terms = 2000;
  double taylor_radius = 1e-4;
  std::int64_t memory_budget = 30'000'000;
};

struct OutputConfig {
  std::string directory = "out";
  std::vector<std::string> formats{"csv", "json", "plot"};

  bool wants(const std::string& f) const;
};

struct AnalysisConfig {
  std::int64_t tail_samples = 10'000'000;
  int tail_segments = 32;
  std::int64_t kac_iterates = 10'000'000;
  double tolerance = 0.05;
  std::vector<double> blowup_omegas{0.8, 0.4, 0.2, 0.1};
};

struct RunConfig {
  MapParams map;
  ObservableConfig observable;
  SpectrumConfig spectrum;
  OperatorConfig op;
  OutputConfig output;
  AnalysisConfig analysis;
  // Every key as given, "section.key" -> trimmed value text, for manifests.
  std::map<std::string, std::string> settings;
};

// base_dir resolves relative table paths.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);

}  // namespace powerspec
