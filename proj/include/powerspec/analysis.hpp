#pragma once

// Post-processing and validation against the structural identities: tail
// exponents, Kac consistency, S = S^Y / r_bar across three routes, positivity
// floors and the exploratory small-frequency scan.

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "powerspec/dynamics.hpp"
#include "powerspec/exec.hpp"
#include "powerspec/observables.hpp"
#include "powerspec/spectrum_mc.hpp"
#include "powerspec/transfer_operator.hpp"

namespace powerspec {

enum class Verdict { pass, fail, inconclusive, exploratory };
std::string to_string(Verdict v);

struct Check {
  std::string name;
  std::string inputs;
  double measured = 0.0;
  double target = 0.0;
  double tolerance = 0.0;
  Verdict verdict = Verdict::fail;

  bool pass() const { return verdict == Verdict::pass; }
};

struct ValidationReport {
  std::vector<Check> checks;
  std::map<std::string, std::string> environment;

  void add(Check c) { checks.push_back(std::move(c)); }
  void merge(const ValidationReport& other);
  // True when no check failed; inconclusive and exploratory rows do not count as failures.
  bool all_pass() const;
  std::string to_json() const;
};

// Regime bookkeeping: summable (gamma < 1/2) versus nonsummable, and the Holder
// threshold (3 gamma - 1)/2 for the supplied eta (recorded, never inferred).
struct RegimeInfo {
  bool summable = true;
  double eta = 0.0;
  double eta_threshold = 0.0;
  bool eta_sufficient = true;
};
RegimeInfo regime_info(double gamma, double eta);

struct TailFit {
  double slope = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::vector<double> n;          // abscissae used in the fit
  std::vector<double> survival;   // pooled empirical P(r > n)
  std::int64_t samples = 0;
  std::int64_t above_min = 0;     // samples with r > n_lo
};

struct TailFitOptions {
  double n_lo = 100.0;
  double n_hi = 10'000.0;
  int points_per_decade = 10;
  std::int64_t min_count = 50;    // a survival point needs this many exceedances to enter the fit
  std::int64_t min_tail = 1000;   // exceedances of n_lo required at all
  int bootstrap = 400;
  std::uint64_t seed = 1;
};

// Least-squares slope of log survival against log n, with a percentile CI from
// resampling whole segments. samples[s] holds the draws of segment s.
TailFit fit_survival_slope(const std::vector<std::vector<double>>& samples, const TailFitOptions& opt = {});

// Return-time tail exponent from n_samples returns split into `segments` orbits.
TailFit tail_exponent_fit(const MapParams& p, std::int64_t n_samples, std::uint64_t seed, int segments = 32,
                          Exec exec = Exec::parallel, TailFitOptions opt = {});

struct KacResult {
  double product = 0.0;     // r_bar * mu(Y)
  double r_bar = 0.0;
  double mu_y = 0.0;
  double std_error = 0.0;   // of the product, from segment spread
};

// r_bar from return times on one set of streams, the occupation of Y from
// independent streams; each over n iterates in total.
KacResult kac_check(const MapParams& p, std::int64_t n, std::uint64_t seed, int segments = 8,
                    Exec exec = Exec::parallel);

struct CrossSettings {
  BartlettSettings direct;
  InducedSettings induced;
  int n_nodes = 256;
  int r_max = 10'000;
  SeriesOptions series;
  double tolerance = 0.05;
};

struct CrossRow {
  double omega = 0.0;
  double direct = 0.0, direct_se = 0.0;
  double induced = 0.0, induced_se = 0.0;   // S^Y_MC / r_bar_MC
  double series = 0.0;                      // S^Y_series / r_bar_quadrature
  double gap_direct_induced = 0.0;
  double gap_direct_series = 0.0;
  double gap_induced_series = 0.0;
  Verdict verdict = Verdict::fail;
};

struct CrossValidation {
  std::vector<CrossRow> rows;
  double r_bar_mc = 0.0;
  double r_bar_quadrature = 0.0;
  ValidationReport report;
};

// Relative gap |a - b| / max(|a|, |b|), zero when both vanish.
double relative_gap(double a, double b);
// Pair verdict: within max(tol relative, 3 combined stderr).
bool pair_agrees(double a, double se_a, double b, double se_b, double tol);

CrossValidation cross_validate(const Observable& obs, const MapParams& p, std::span<const double> omegas,
                               const CrossSettings& s);

struct PositivityResult {
  double floor = 0.0;   // min over the grid of value - 3 stderr
  double argmin = 0.0;
  bool positive = false;
};
PositivityResult positivity_scan(const SpectrumEstimate& est);

struct BlowupTable {
  std::vector<double> omegas;
  std::vector<double> values;
  std::vector<double> stderrs;
  int increasing_steps = 0;   // consecutive pairs where the estimate grows as omega decreases
  bool monotone = false;
};

// gamma >= 1/2 only; omegas strictly decreasing and above 1e-3. No verdict.
BlowupTable blowup_scan(const Observable& obs, const MapParams& p, std::span<const double> omegas,
                        BartlettSettings s);

}  // namespace powerspec
