#include "powerspec/spectrum_mc.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>

#include "phasor_bank.hpp"
#include "powerspec/error.hpp"

namespace powerspec {

namespace {

constexpr std::size_t kChunk = 4096;

template <class Body>
void for_segments(Exec exec, int segments, Body&& body) {
  if (exec == Exec::serial) {
    for (int s = 0; s < segments; ++s) {
      body(s);
    }
  } else {
#pragma omp parallel for schedule(dynamic, 1)
    for (int s = 0; s < segments; ++s) {
      body(s);
    }
  }
}

// Mean and standard error over segments, reduced in segment order.
void reduce_segments(SpectrumEstimate& est) {
  const std::size_t nf = est.omegas.size();
  const auto k = static_cast<double>(est.segment_values.size());
  est.values.assign(nf, 0.0);
  est.stderrs.assign(nf, 0.0);
  for (std::size_t f = 0; f < nf; ++f) {
    double sum = 0.0;
    for (const auto& seg : est.segment_values) {
      sum += seg[f];
    }
    const double mean = sum / k;
    double ss = 0.0;
    for (const auto& seg : est.segment_values) {
      ss += (seg[f] - mean) * (seg[f] - mean);
    }
    est.values[f] = mean;
    est.stderrs[f] = k > 1 ? std::sqrt(ss / (k - 1.0) / k) : 0.0;
  }
}

void check_segments(std::int64_t n, int segments, int blocks) {
  if (n < 1 || segments < 1 || blocks < 1) {
    throw DomainError("segment settings must be positive");
  }
  if (n % blocks != 0) {
    throw DomainError("sample count must be divisible by the number of Bartlett blocks");
  }
}

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

template <class T>
using FftwBuffer = std::unique_ptr<T[], FftwFree>;

template <class T>
FftwBuffer<T> fftw_buffer(std::size_t n) {
  auto* p = static_cast<T*>(fftw_malloc(sizeof(T) * n));
  if (p == nullptr) {
    throw Error("fftw_malloc failed");
  }
  return FftwBuffer<T>(p);
}

// FFTW planning is not thread-safe.
fftw_plan plan_r2c(int n, double* in, fftw_complex* out) {
  fftw_plan plan;
#pragma omp critical(powerspec_fftw_plan)
  plan = fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE);
  return plan;
}

fftw_plan plan_c2r(int n, fftw_complex* in, double* out) {
  fftw_plan plan;
#pragma omp critical(powerspec_fftw_plan)
  plan = fftw_plan_dft_c2r_1d(n, in, out, FFTW_ESTIMATE);
  return plan;
}

void destroy_plan(fftw_plan plan) {
#pragma omp critical(powerspec_fftw_plan)
  fftw_destroy_plan(plan);
}

bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace

std::string to_string(Estimator e) {
  switch (e) {
    case Estimator::direct_f:
      return "direct_f";
    case Estimator::induced_F:
      return "induced_F";
    case Estimator::operator_series:
      return "operator_series";
  }
  return "unknown";
}

std::vector<double> guarded_grid(int count, double omega_min, double offset) {
  if (count < 1) {
    throw DomainError("guarded_grid: count must be positive");
  }
  const double width = kTwoPi - 2.0 * omega_min;
  if (!(width > 0.0) || !(std::abs(offset) < 0.5 * width / count)) {
    throw DomainError("guarded_grid: offset must be smaller than half the grid spacing");
  }
  std::vector<double> grid(static_cast<std::size_t>(count));
  for (int k = 0; k < count; ++k) {
    grid[k] = omega_min + width * (k + 0.5) / count + offset;
  }
  return grid;
}

void check_guard_band(std::span<const double> omegas, double omega_min) {
  for (double w : omegas) {
    if (!(w >= omega_min && w <= kTwoPi - omega_min)) {
      throw GuardBandError("frequency " + std::to_string(w) + " lies inside the guard band of width " +
                           std::to_string(omega_min));
    }
  }
}

double periodogram_at(std::span<const double> series, double omega) {
  if (series.empty()) {
    throw DomainError("periodogram_at: empty series");
  }
  const double w[1] = {omega};
  detail::PhasorBank bank(w);
  bank.add(series);
  return bank.power(0);
}

std::vector<double> periodogram_grid(std::span<const double> series) {
  const std::size_t n = series.size();
  if (!is_power_of_two(n)) {
    throw SizeError("periodogram_grid: length must be a power of two");
  }
  auto in = fftw_buffer<double>(n);
  auto out = fftw_buffer<fftw_complex>(n / 2 + 1);
  fftw_plan plan = plan_r2c(static_cast<int>(n), in.get(), out.get());
  std::copy(series.begin(), series.end(), in.get());
  fftw_execute(plan);
  destroy_plan(plan);
  std::vector<double> result(n);
  const auto nd = static_cast<double>(n);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    const double p = (out[k][0] * out[k][0] + out[k][1] * out[k][1]) / nd;
    result[k] = p;
    if (k > 0 && k < n - k) {
      result[n - k] = p;
    }
  }
  return result;
}

SpectrumEstimate bartlett_spectrum(const Observable& obs, const MapParams& p, std::span<const double> omegas,
                                   const BartlettSettings& s) {
  p.validate();
  check_guard_band(omegas, s.omega_min);
  check_segments(s.n_per_segment, s.segments, s.blocks);

  SpectrumEstimate est;
  est.omegas.assign(omegas.begin(), omegas.end());
  est.n_per_segment = s.n_per_segment;
  est.segments = s.segments;
  est.blocks = s.blocks;
  est.estimator = Estimator::direct_f;
  est.segment_values.assign(static_cast<std::size_t>(s.segments), std::vector<double>(omegas.size(), 0.0));
  std::vector<std::uint64_t> reseeds(static_cast<std::size_t>(s.segments), 0);

  const std::int64_t block_len = s.n_per_segment / s.blocks;
  for_segments(s.exec, s.segments, [&](int seg) {
    Orbit orbit(p, s.seed, static_cast<std::uint64_t>(seg));
    orbit.skip(s.burn_in);
    detail::PhasorBank bank(omegas);
    std::vector<double> buf(kChunk);
    auto& out = est.segment_values[static_cast<std::size_t>(seg)];
    for (int b = 0; b < s.blocks; ++b) {
      bank.reset();
      std::int64_t left = block_len;
      while (left > 0) {
        const auto m = static_cast<std::size_t>(std::min<std::int64_t>(left, kChunk));
        for (std::size_t j = 0; j < m; ++j) {
          buf[j] = obs(orbit.next());
        }
        bank.add(std::span<const double>(buf.data(), m));
        left -= static_cast<std::int64_t>(m);
      }
      for (std::size_t k = 0; k < omegas.size(); ++k) {
        out[k] += bank.power(k);
      }
    }
    for (double& v : out) {
      v /= s.blocks;
    }
    reseeds[static_cast<std::size_t>(seg)] = orbit.reseeds();
  });
  reduce_segments(est);
  est.reseeds = std::accumulate(reseeds.begin(), reseeds.end(), std::uint64_t{0});
  return est;
}

AutocorrSequence autocorrelation(const Observable& obs, const MapParams& p, int k_max, std::int64_t n,
                                 std::uint64_t seed, int segments, std::size_t burn_in, Exec exec) {
  p.validate();
  if (segments < 1 || n % segments != 0) {
    throw DomainError("autocorrelation: n must be a positive multiple of the segment count");
  }
  const std::int64_t len = n / segments;
  if (k_max < 0 || 10 * static_cast<std::int64_t>(k_max) >= n || k_max >= len) {
    throw DomainError("autocorrelation: k_max must be below n/10 and the segment length");
  }
  std::size_t fft_len = 1;
  while (fft_len < static_cast<std::size_t>(len + k_max + 1)) {
    fft_len *= 2;
  }
  const auto kk = static_cast<std::size_t>(k_max) + 1;
  std::vector<std::vector<double>> lag_sums(static_cast<std::size_t>(segments), std::vector<double>(kk, 0.0));
  std::vector<double> sums(static_cast<std::size_t>(segments), 0.0);

  for_segments(exec, segments, [&](int seg) {
    Orbit orbit(p, seed, static_cast<std::uint64_t>(seg));
    orbit.skip(burn_in);
    auto real = fftw_buffer<double>(fft_len);
    auto spec = fftw_buffer<fftw_complex>(fft_len / 2 + 1);
    fftw_plan fwd = plan_r2c(static_cast<int>(fft_len), real.get(), spec.get());
    fftw_plan inv = plan_c2r(static_cast<int>(fft_len), spec.get(), real.get());
    double total = 0.0;
    for (std::size_t j = 0; j < fft_len; ++j) {
      if (j < static_cast<std::size_t>(len)) {
        real[j] = obs(orbit.next());
        total += real[j];
      } else {
        real[j] = 0.0;
      }
    }
    fftw_execute(fwd);
    for (std::size_t k = 0; k <= fft_len / 2; ++k) {
      spec[k][0] = spec[k][0] * spec[k][0] + spec[k][1] * spec[k][1];
      spec[k][1] = 0.0;
    }
    fftw_execute(inv);
    destroy_plan(fwd);
    destroy_plan(inv);
    auto& out = lag_sums[static_cast<std::size_t>(seg)];
    for (std::size_t k = 0; k < kk; ++k) {
      out[k] = real[k] / static_cast<double>(fft_len);
    }
    sums[static_cast<std::size_t>(seg)] = total;
  });

  AutocorrSequence res;
  res.k_max = k_max;
  res.n = n;
  res.mean = std::accumulate(sums.begin(), sums.end(), 0.0) / static_cast<double>(n);
  res.rho.assign(kk, 0.0);
  res.stderrs.assign(kk, 0.0);
  const auto segs = static_cast<double>(segments);
  for (std::size_t k = 0; k < kk; ++k) {
    const double pairs = static_cast<double>(len) - static_cast<double>(k);
    double pooled = 0.0;
    std::vector<double> per(static_cast<std::size_t>(segments));
    for (int s = 0; s < segments; ++s) {
      pooled += lag_sums[s][k];
      const double m = sums[s] / static_cast<double>(len);
      per[s] = lag_sums[s][k] / pairs - m * m;
    }
    res.rho[k] = pooled / (pairs * segs) - res.mean * res.mean;
    if (segments > 1) {
      const double m = std::accumulate(per.begin(), per.end(), 0.0) / segs;
      double ss = 0.0;
      for (double x : per) {
        ss += (x - m) * (x - m);
      }
      res.stderrs[k] = std::sqrt(ss / (segs - 1.0) / segs);
    }
  }
  return res;
}

GreenKubo green_kubo_endpoint(const AutocorrSequence& rho) {
  if (rho.rho.empty()) {
    throw DomainError("green_kubo_endpoint: empty autocorrelation");
  }
  GreenKubo gk;
  double tail = 0.0;
  gk.value = rho.rho[0];
  for (std::size_t k = 1; k < rho.rho.size(); ++k) {
    gk.value += 2.0 * rho.rho[k];
    if (10 * k > rho.rho.size() - 1) {
      tail += 2.0 * rho.rho[k];
    }
  }
  gk.last_decade_fraction = gk.value != 0.0 ? std::abs(tail / gk.value) : 0.0;
  gk.stabilized = gk.last_decade_fraction <= 0.05;
  return gk;
}

ScalarEstimate direct_variance(const Observable& obs, const MapParams& p, std::int64_t n_per_segment, int segments,
                               int blocks, std::uint64_t seed, std::size_t burn_in, Exec exec) {
  p.validate();
  check_segments(n_per_segment, segments, blocks);
  const std::int64_t len = n_per_segment / blocks;
  std::vector<std::vector<double>> block_sums(static_cast<std::size_t>(segments),
                                              std::vector<double>(static_cast<std::size_t>(blocks), 0.0));
  for_segments(exec, segments, [&](int seg) {
    Orbit orbit(p, seed, static_cast<std::uint64_t>(seg));
    orbit.skip(burn_in);
    for (int b = 0; b < blocks; ++b) {
      double acc = 0.0;
      for (std::int64_t j = 0; j < len; ++j) {
        acc += obs(orbit.next());
      }
      block_sums[seg][b] = acc;
    }
  });
  double total = 0.0;
  for (const auto& seg : block_sums) {
    total += std::accumulate(seg.begin(), seg.end(), 0.0);
  }
  const double mean = total / (static_cast<double>(n_per_segment) * segments);
  std::vector<double> per(static_cast<std::size_t>(segments), 0.0);
  for (int s = 0; s < segments; ++s) {
    for (double raw : block_sums[s]) {
      const double c = raw - static_cast<double>(len) * mean;
      per[s] += c * c / static_cast<double>(len);
    }
    per[s] /= blocks;
  }
  const auto k = static_cast<double>(segments);
  ScalarEstimate out;
  out.value = std::accumulate(per.begin(), per.end(), 0.0) / k;
  double ss = 0.0;
  for (double x : per) {
    ss += (x - out.value) * (x - out.value);
  }
  out.std_error = segments > 1 ? std::sqrt(ss / (k - 1.0) / k) : 0.0;
  return out;
}

SpectrumEstimate induced_spectrum_mc(const Observable& obs, const MapParams& p, std::span<const double> omegas,
                                     const InducedSettings& s) {
  p.validate();
  check_guard_band(omegas, s.omega_min);
  check_segments(s.n_returns, s.segments, s.blocks);

  SpectrumEstimate est;
  est.omegas.assign(omegas.begin(), omegas.end());
  est.n_per_segment = s.n_returns;
  est.segments = s.segments;
  est.blocks = s.blocks;
  est.estimator = Estimator::induced_F;
  est.segment_values.assign(static_cast<std::size_t>(s.segments), std::vector<double>(omegas.size(), 0.0));
  std::vector<double> seg_rbar(static_cast<std::size_t>(s.segments), 0.0);
  std::vector<std::uint64_t> rejected(static_cast<std::size_t>(s.segments), 0);
  std::vector<std::uint64_t> reseeds(static_cast<std::size_t>(s.segments), 0);

  const std::int64_t per_block = s.n_returns / s.blocks;
  const std::size_t nf = omegas.size();
  for_segments(s.exec, s.segments, [&](int seg) {
    ReturnStream stream(p, s.seed, static_cast<std::uint64_t>(seg), s.burn_in);
    detail::PhasorBank bank(omegas);
    ReturnBlock block;
    std::vector<double> vals;
    auto& out = est.segment_values[static_cast<std::size_t>(seg)];
    std::int64_t steps = 0;
    for (int b = 0; b < s.blocks; ++b) {
      // sum_j e^{i w r_cum} V_w(F^j y) is the plain Fourier sum of the
      // concatenated excursions, so one bank runs through the whole block.
      bank.reset();
      for (std::int64_t j = 0; j < per_block; ++j) {
        stream.next(block, true);
        vals.resize(block.orbit.size());
        for (std::size_t l = 0; l < vals.size(); ++l) {
          vals[l] = obs(block.orbit[l]);
        }
        bank.add(vals);
      }
      steps += static_cast<std::int64_t>(bank.count());
      for (std::size_t k = 0; k < nf; ++k) {
        out[k] += std::norm(bank.sum(k)) / static_cast<double>(per_block);
      }
    }
    for (double& v : out) {
      v /= s.blocks;
    }
    seg_rbar[static_cast<std::size_t>(seg)] = static_cast<double>(steps) / static_cast<double>(s.n_returns);
    rejected[static_cast<std::size_t>(seg)] = stream.rejected();
    reseeds[static_cast<std::size_t>(seg)] = stream.reseeds();
  });
  reduce_segments(est);
  const auto k = static_cast<double>(s.segments);
  est.r_bar = std::accumulate(seg_rbar.begin(), seg_rbar.end(), 0.0) / k;
  double ss = 0.0;
  for (double x : seg_rbar) {
    ss += (x - est.r_bar) * (x - est.r_bar);
  }
  est.r_bar_stderr = s.segments > 1 ? std::sqrt(ss / (k - 1.0) / k) : 0.0;
  est.rejected_blocks = std::accumulate(rejected.begin(), rejected.end(), std::uint64_t{0});
  est.reseeds = std::accumulate(reseeds.begin(), reseeds.end(), std::uint64_t{0});
  return est;
}

}  // namespace powerspec
