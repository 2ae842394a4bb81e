#pragma once

// Deterministic output files. Every file is written to a temporary sibling and
// renamed into place; numbers use %.17g so doubles round-trip exactly.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "powerspec/spectrum_mc.hpp"

namespace powerspec {

inline constexpr const char* kVersion = "1.0.0";

std::string format_number(double x);

void write_atomic(const std::filesystem::path& path, const std::string& content);

// omega,S,stderr,n,segments,estimator
std::string spectrum_csv(const SpectrumEstimate& est);

struct OperatorRow {
  double omega = 0.0;
  double s_y = 0.0;
  int terms = 0;
  double last_term = 0.0;
  double tilde_check = 0.0;
  double spectral_radius = 0.0;
};

// omega,S_Y,terms,last_term,tilde_check,spectral_radius
std::string operator_csv(const std::vector<OperatorRow>& rows);

// Generic CSV from named columns of equal length.
std::string columns_csv(const std::vector<std::string>& names, const std::vector<std::vector<double>>& columns);

// Whitespace-separated omega, value, stderr with one '#' header line.
void emit_plot_data(const SpectrumEstimate& est, const std::filesystem::path& path);

struct Manifest {
  std::string command;
  std::uint64_t seed = 0;
  int threads = 1;
  std::map<std::string, std::string> settings;
  std::map<std::string, std::string> results;
  std::vector<std::string> outputs;
  std::vector<std::pair<std::string, double>> timings;  // seconds; the only nondeterministic fields

  std::string to_json() const;
};

}  // namespace powerspec
