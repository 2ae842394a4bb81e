#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "powerspec/error.hpp"
#include "powerspec/rng.hpp"
#include "powerspec/spectrum_mc.hpp"
#include "powerspec/transfer_operator.hpp"

using namespace powerspec;

namespace {

constexpr double kPi = std::numbers::pi;

double direct_periodogram(const std::vector<double>& x, double w) {
  std::complex<double> acc = 0.0;
  for (std::size_t j = 0; j < x.size(); ++j) {
    acc += std::polar(1.0, static_cast<double>(j) * w) * x[j];
  }
  return std::norm(acc) / static_cast<double>(x.size());
}

std::vector<double> random_series(std::size_t n, std::uint64_t seed) {
  Philox4x32 g(seed, 0);
  std::vector<double> x(n);
  for (auto& v : x) {
    v = g.uniform() - 0.3;
  }
  return x;
}

// rho(k) = int_0^1 v(x) v(2^k x mod 1) dx - (int v)^2 by the midpoint rule.
double doubling_rho_quadrature(const Observable& v, int k) {
  const int m = 1 << 20;
  double s = 0.0, mean = 0.0;
  for (int i = 0; i < m; ++i) {
    const double x = (i + 0.5) / m;
    const double fx = std::fmod(std::ldexp(x, k), 1.0);
    s += v(x) * v(fx);
    mean += v(x);
  }
  mean /= m;
  return s / m - mean * mean;
}

double doubling_oracle(double w) { return 0.625 + 0.5 * std::cos(w); }

const Observable kOracleObs = Observable::cosine({0.0, 1.0, 0.5});

double median(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  return x[x.size() / 2];
}

}  // namespace

TEST_SUITE("spectrum_mc") {
  TEST_CASE("periodogram examples") {
    const std::vector<double> c(16, 2.5);
    for (int k = 1; k < 16; ++k) {
      CHECK(periodogram_at(c, 2 * kPi * k / 16) == doctest::Approx(0.0).epsilon(1e-12).scale(1.0));
    }
    CHECK(periodogram_at(c, 0.0) == doctest::Approx(16 * 2.5 * 2.5));
    std::vector<double> s(8);
    for (int j = 0; j < 8; ++j) {
      s[j] = std::cos(2 * kPi * j / 8);
    }
    CHECK(periodogram_at(s, 2 * kPi / 8) == doctest::Approx(2.0));
  }

  TEST_CASE("fft grid agrees with direct sums") {
    const auto x = random_series(1024, 3);
    const auto grid = periodogram_grid(x);
    REQUIRE(grid.size() == 1024);
    for (int k : {1, 17, 256, 511, 900}) {
      const double w = 2 * kPi * k / 1024;
      CHECK(std::abs(grid[k] - direct_periodogram(x, w)) <= 1e-8 * direct_periodogram(x, w));
      CHECK(std::abs(grid[k] - periodogram_at(x, w)) <= 1e-8 * grid[k]);
    }
    std::vector<double> delta(64, 0.0);
    delta[0] = 1.0;
    for (double v : periodogram_grid(delta)) {
      CHECK(v == doctest::Approx(1.0 / 64));
    }
    CHECK_THROWS_AS(periodogram_grid(std::vector<double>(1000, 1.0)), SizeError);
  }

  TEST_CASE("guarded grid") {
    const auto g = guarded_grid(32);
    REQUIRE(g.size() == 32);
    for (std::size_t k = 0; k < g.size(); ++k) {
      CHECK(g[k] > kDefaultOmegaMin);
      CHECK(g[k] < kTwoPi - kDefaultOmegaMin);
      if (k > 0) {
        CHECK(g[k] > g[k - 1]);
      }
    }
    CHECK_THROWS_AS(check_guard_band(std::vector<double>{0.01}, 0.05), GuardBandError);
    CHECK_NOTHROW(check_guard_band(g, 0.05));
  }

  TEST_CASE("doubling oracle by quadrature") {
    CHECK(doubling_rho_quadrature(kOracleObs, 0) == doctest::Approx(0.625).epsilon(1e-9));
    CHECK(doubling_rho_quadrature(kOracleObs, 1) == doctest::Approx(0.25).epsilon(1e-9));
    CHECK(std::abs(doubling_rho_quadrature(kOracleObs, 2)) < 1e-9);
    CHECK(std::abs(doubling_rho_quadrature(kOracleObs, 3)) < 1e-9);
  }

  TEST_CASE("bartlett spectrum on the doubling map") {
    BartlettSettings s;
    s.n_per_segment = 1 << 16;
    s.segments = 16;
    s.blocks = 64;
    s.seed = 2024;
    const std::vector<double> w{kPi / 2, kPi, 2.0};
    const auto est = bartlett_spectrum(kOracleObs, MapParams{0.0}, w, s);
    for (std::size_t k = 0; k < w.size(); ++k) {
      CHECK(est.values[k] >= 0.0);
      CHECK(std::abs(est.values[k] - doubling_oracle(w[k])) <= 4.0 * est.stderrs[k]);
      CHECK(est.stderrs[k] < 0.02);
    }
    const auto zero = bartlett_spectrum(Observable::constant(0.0), MapParams{0.0}, w, s);
    for (std::size_t k = 0; k < w.size(); ++k) {
      CHECK(zero.values[k] == 0.0);
      CHECK(zero.stderrs[k] == 0.0);
    }
    CHECK_THROWS_AS(bartlett_spectrum(kOracleObs, MapParams{0.0}, std::vector<double>{0.01}, s), GuardBandError);
  }

  TEST_CASE("serial and parallel paths agree bitwise") {
    BartlettSettings s;
    s.n_per_segment = 1 << 12;
    s.segments = 6;
    s.blocks = 4;
    s.seed = 5;
    const auto w = guarded_grid(8);
    const auto v = Observable::cosine({0.0, 1.0});
    s.exec = Exec::serial;
    const auto a = bartlett_spectrum(v, MapParams{0.3}, w, s);
    s.exec = Exec::parallel;
    const auto b = bartlett_spectrum(v, MapParams{0.3}, w, s);
    CHECK(a.values == b.values);
    CHECK(a.stderrs == b.stderrs);
    InducedSettings is;
    is.n_returns = 1 << 11;
    is.segments = 5;
    is.blocks = 4;
    is.exec = Exec::serial;
    const auto c = induced_spectrum_mc(v, MapParams{0.3}, w, is);
    is.exec = Exec::parallel;
    const auto d = induced_spectrum_mc(v, MapParams{0.3}, w, is);
    CHECK(c.values == d.values);
    CHECK(c.r_bar == d.r_bar);
  }

  TEST_CASE("per-segment symmetry under w -> 2pi - w") {
    BartlettSettings s;
    s.n_per_segment = 1 << 12;
    s.segments = 4;
    s.blocks = 2;
    const std::vector<double> w{1.1, kTwoPi - 1.1};
    const auto est = bartlett_spectrum(Observable::cosine({0.0, 1.0}), MapParams{0.3}, w, s);
    for (int seg = 0; seg < 4; ++seg) {
      CHECK(est.segment_values[seg][0] == doctest::Approx(est.segment_values[seg][1]).epsilon(1e-10));
    }
  }

  TEST_CASE("quadrupling segments halves the stderr") {
    BartlettSettings s;
    s.n_per_segment = 1 << 12;
    s.blocks = 8;
    s.seed = 77;
    const auto w = guarded_grid(32);
    const auto v = Observable::cosine({0.0, 1.0});
    s.segments = 16;
    const auto a = bartlett_spectrum(v, MapParams{0.3}, w, s);
    s.segments = 64;
    const auto b = bartlett_spectrum(v, MapParams{0.3}, w, s);
    const double ratio = median(b.stderrs) / median(a.stderrs);
    CHECK(ratio > 0.4);
    CHECK(ratio < 0.6);
  }

  TEST_CASE("autocorrelation on the doubling map") {
    const auto rho = autocorrelation(Observable::cosine({0.0, 1.0}), MapParams{0.0}, 10, 1 << 20, 9);
    CHECK(rho.rho[0] == doctest::Approx(0.5).epsilon(0.01));
    for (int k = 1; k <= 10; ++k) {
      CHECK(std::abs(rho.rho[k]) <= 3.0 * rho.stderrs[k] + 1e-12);
      CHECK(std::abs(rho.rho[k]) <= rho.rho[0]);
    }
    const auto gk = green_kubo_endpoint(rho);
    CHECK(gk.value == doctest::Approx(0.5).epsilon(0.03));
    const auto flat = autocorrelation(Observable::constant(2.0), MapParams{0.3}, 10, 1 << 14, 1);
    for (double r : flat.rho) {
      CHECK(std::abs(r) < 1e-12);
    }
    CHECK(std::abs(green_kubo_endpoint(flat).value) < 1e-12);
  }

  TEST_CASE("green-kubo matches the direct variance at gamma = 0.3") {
    const auto v = Observable::cosine({0.0, 1.0});
    const MapParams p{0.3};
    const auto rho = autocorrelation(v, p, 400, 1 << 21, 31, 16);
    const auto gk = green_kubo_endpoint(rho);
    // Standard error of rho(0) + 2 sum rho(k) from the lag standard errors is
    // not independent across k; the spread of per-segment sums is used instead.
    const auto dv = direct_variance(v, p, 1 << 21, 16, 128, 32);
    double se_gk = 0.0;
    for (int k = 0; k <= rho.k_max; ++k) {
      se_gk += (k == 0 ? 1.0 : 2.0) * rho.stderrs[k];
    }
    CHECK(std::abs(gk.value - dv.value) <= 3.0 * std::hypot(se_gk, dv.std_error));
  }

  TEST_CASE("correlation decay exponent at gamma = 0.4") {
    // Fit |rho(k)| on log-spaced lags in [10, 100]; the larger lags of the
    // nominal range sit below the noise floor at unit-test sample sizes.
    const auto rho = autocorrelation(Observable::cosine({0.0, 1.0}), MapParams{0.4}, 100, 1 << 23, 4, 8);
    std::vector<double> x, y;
    for (int k = 10; k <= 100; k = static_cast<int>(std::ceil(k * 1.26))) {
      x.push_back(std::log(static_cast<double>(k)));
      y.push_back(std::log(std::abs(rho.rho[k])));
    }
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      mx += x[i] / n;
      my += y[i] / n;
    }
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      sxy += (x[i] - mx) * (y[i] - my);
      sxx += (x[i] - mx) * (x[i] - mx);
    }
    const double slope = sxy / sxx;
    CHECK(slope == doctest::Approx(-1.5).epsilon(0.4 / 1.5));
  }

  TEST_CASE("induced spectrum") {
    const auto w = std::vector<double>{kPi};
    InducedSettings s;
    s.n_returns = 1 << 15;
    s.segments = 16;
    s.blocks = 32;
    s.seed = 12;
    const auto zero = induced_spectrum_mc(Observable::constant(0.0), MapParams{0.3}, w, s);
    CHECK(zero.values[0] == 0.0);
    const auto v = Observable::cosine({0.0, 1.0});
    const auto est = induced_spectrum_mc(v, MapParams{0.3}, w, s);
    const auto cache = build_cache(MapParams{0.3}, 128, 4000);
    const auto density = invariant_density(cache);
    const auto series = induced_spectrum_series(cache, density, kPi, v);
    CHECK(std::abs(est.values[0] - series.s_y) <= 3.0 * est.stderrs[0]);
    CHECK(est.r_bar == doctest::Approx(series.r_bar_quadrature).epsilon(0.01));
  }
}
