#pragma once

// Trajectory-based spectral estimation for the LSV map.

#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "powerspec/dynamics.hpp"
#include "powerspec/exec.hpp"
#include "powerspec/observables.hpp"

namespace powerspec {

enum class Estimator { direct_f, induced_F, operator_series };
std::string to_string(Estimator e);

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;
inline constexpr double kDefaultOmegaMin = 0.05;
inline constexpr double kDefaultGridOffset = 1e-3 * std::numbers::sqrt2;

struct SpectrumEstimate {
  std::vector<double> omegas;
  std::vector<double> values;
  std::vector<double> stderrs;
  std::int64_t n_per_segment = 0;
  int segments = 0;
  int blocks = 1;  // Bartlett sub-blocks averaged inside each segment
  Estimator estimator = Estimator::direct_f;
  // Per-segment estimates, segments x omegas.
  std::vector<std::vector<double>> segment_values;
  // Induced estimator only: empirical mean return time and its stderr.
  double r_bar = 0.0;
  double r_bar_stderr = 0.0;
  std::uint64_t rejected_blocks = 0;
  std::uint64_t reseeds = 0;

  std::size_t size() const { return omegas.size(); }
};

// count points evenly spaced inside [omega_min, 2pi - omega_min] (cell
// midpoints), shifted by offset so that no point sits on a rational multiple of pi.
std::vector<double> guarded_grid(int count, double omega_min = kDefaultOmegaMin,
                                 double offset = kDefaultGridOffset);

// Throws GuardBandError if any frequency lies within omega_min of 0 or 2pi.
void check_guard_band(std::span<const double> omegas, double omega_min);

// (1/n) |sum_j e^{ijw} x_j|^2 by a phasor recurrence.
double periodogram_at(std::span<const double> series, double omega);

// Periodogram at every Fourier frequency 2 pi k / n (n a power of two).
std::vector<double> periodogram_grid(std::span<const double> series);

struct BartlettSettings {
  std::int64_t n_per_segment = 1 << 16;
  int segments = 16;
  int blocks = 1;
  std::uint64_t seed = 1;
  std::size_t burn_in = 10'000;
  double omega_min = kDefaultOmegaMin;
  Exec exec = Exec::parallel;
};

// Each segment is an independent orbit (stream = segment index) of
// n_per_segment samples of v, split into `blocks` contiguous sub-blocks whose
// periodograms are averaged. values/stderrs are the mean and standard error
// across segments. v is used as given (no centring).
SpectrumEstimate bartlett_spectrum(const Observable& obs, const MapParams& p, std::span<const double> omegas,
                                   const BartlettSettings& s);

struct AutocorrSequence {
  std::vector<double> rho;
  std::vector<double> stderrs;
  int k_max = 0;
  std::int64_t n = 0;
  double mean = 0.0;
};

// Pooled empirical autocorrelation (1/(n-k)) sum v_j v_{j+k} - vbar^2 over
// independent segments, lag sums by FFT.
AutocorrSequence autocorrelation(const Observable& obs, const MapParams& p, int k_max, std::int64_t n,
                                 std::uint64_t seed, int segments = 8, std::size_t burn_in = 10'000,
                                 Exec exec = Exec::parallel);

struct GreenKubo {
  double value = 0.0;
  bool stabilized = true;
  double last_decade_fraction = 0.0;
};

// rho(0) + 2 sum_{k>=1} rho(k); flags instability when lags in the last
// decade (k > k_max/10) contribute more than 5%.
GreenKubo green_kubo_endpoint(const AutocorrSequence& rho);

struct ScalarEstimate {
  double value = 0.0;
  double std_error = 0.0;
};

// n^{-1} E |sum (v - vbar) o f^j|^2 by Bartlett sub-blocks centred at the pooled mean.
ScalarEstimate direct_variance(const Observable& obs, const MapParams& p, std::int64_t n_per_segment, int segments,
                               int blocks, std::uint64_t seed, std::size_t burn_in = 10'000,
                               Exec exec = Exec::parallel);

struct InducedSettings {
  std::int64_t n_returns = 1 << 14;
  int segments = 16;
  int blocks = 1;
  std::uint64_t seed = 1;
  std::size_t burn_in = 10'000;
  double omega_min = kDefaultOmegaMin;
  Exec exec = Exec::parallel;
};

// Monte Carlo S^Y: per sub-block of m returns, (1/m)|sum_j e^{iw r_j} V_w(F^j y)|^2
// with r_j the cumulative return time; also reports the empirical mean return time.
SpectrumEstimate induced_spectrum_mc(const Observable& obs, const MapParams& p, std::span<const double> omegas,
                                     const InducedSettings& s);

}  // namespace powerspec
