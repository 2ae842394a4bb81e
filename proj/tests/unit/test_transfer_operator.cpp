#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <tuple>

#include <Eigen/Eigenvalues>

#include "powerspec/error.hpp"
#include "powerspec/rng.hpp"
#include "powerspec/spectrum_mc.hpp"
#include "powerspec/transfer_operator.hpp"
#include "powerspec/ulam.hpp"

using namespace powerspec;

namespace {

constexpr double kPi = std::numbers::pi;

struct Fixture {
  TwistedOperatorCache cache;
  DensityEstimate density;
};

const Fixture& fixture(double gamma, int n, int r) {
  static std::vector<std::tuple<double, int, int, std::unique_ptr<Fixture>>> store;
  for (const auto& [g, nn, rr, f] : store) {
    if (g == gamma && nn == n && rr == r) {
      return *f;
    }
  }
  auto f = std::make_unique<Fixture>(Fixture{build_cache(MapParams{gamma}, n, r), {}});
  f->density = invariant_density(f->cache);
  store.emplace_back(gamma, n, r, std::move(f));
  return *std::get<3>(store.back());
}

std::vector<cplx> random_vector(int n, std::uint64_t seed) {
  Philox4x32 g(seed, 0);
  std::vector<cplx> w(static_cast<std::size_t>(n));
  for (auto& x : w) {
    x = cplx(g.uniform() - 0.5, g.uniform() - 0.5);
  }
  return w;
}

double quad_norm(const TwistedOperatorCache& c, const std::vector<cplx>& w) {
  double s = 0.0;
  for (int i = 0; i < c.n_nodes; ++i) {
    s += c.grid.quad_weights()[i] * std::norm(w[i]);
  }
  return std::sqrt(s);
}

// Independent discretisation: barycentric interpolation at every branch, no Taylor tail.
std::vector<cplx> apply_reference(const TwistedOperatorCache& c, const DensityEstimate& d, double omega,
                                  const std::vector<cplx>& w) {
  std::vector<cplx> out(w.size());
  for (int i = 0; i < c.n_nodes; ++i) {
    cplx acc = 0.0;
    for (int n = 1; n <= c.r_max; ++n) {
      const cplx twist = std::polar(1.0, -static_cast<double>(n) * omega);
      acc += twist * d.mu_weight(c, i, n) * c.grid.interpolate<cplx>(w, c.preimage_offset(i, n));
    }
    out[i] = acc;
  }
  return out;
}

}  // namespace

TEST_SUITE("transfer_operator") {
  TEST_CASE("cache structure") {
    const auto& f = fixture(0.5, 64, 2000);
    const auto& c = f.cache;
    const auto [lo, hi] = std::minmax_element(f.density.h.begin(), f.density.h.end());
    // Far branches sit next to 1/2 where h peaks, so the mu-deficit is the
    // Lebesgue tail scaled by max h / min h.
    const double slack = c.tail_mass * *hi / *lo;
    double transferred = 0.0;
    for (int i = 0; i < c.n_nodes; ++i) {
      CHECK(c.chain[c.idx(i, 0)] == c.node(i));
      CHECK(c.preimage(i, 1) == doctest::Approx((c.node(i) + 1.0) / 2.0).epsilon(1e-15));
      CHECK(c.lebesgue_weight(i, 1) == 0.5);
      double leb = 0.0;
      double mu = 0.0;
      for (int n = 1; n <= c.r_max; ++n) {
        leb += c.lebesgue_weight(i, n);
        mu += f.density.mu_weight(c, i, n);
        if (n > 1) {
          REQUIRE(c.chain[c.idx(i, n - 1)] < c.chain[c.idx(i, n - 2)]);
        }
        REQUIRE(c.lebesgue_weight(i, n) > 0.0);
      }
      transferred += c.grid.quad_weights()[i] * leb;
      // P1 = 1 for the mu_Y-normalised operator, up to the truncated branches.
      CHECK(mu <= 1.0 + 1e-10);
      CHECK(mu >= 1.0 - slack - 1e-10);
    }
    // The Lebesgue transfer of 1 keeps the length of Y (1/2) up to the truncated tail.
    CHECK(transferred <= 0.5 + 1e-12);
    CHECK(transferred >= 0.5 - c.tail_length - 1e-12);
    CHECK(c.node(0) == 1.0);
    CHECK(c.node(c.n_nodes - 1) == 0.5);
    CHECK(c.head >= 1);
    CHECK(c.head < c.r_max);
    CHECK_THROWS_AS(build_cache(MapParams{0.5}, 8, 100), DomainError);
    CHECK_THROWS_AS(build_cache(MapParams{0.5}, 32, 4), DomainError);
    CacheOptions small;
    small.memory_budget = 1000;
    CHECK_THROWS_AS(build_cache(MapParams{0.5}, 32, 100, small), SizeError);
  }

  TEST_CASE("invariant density") {
    const auto& d0 = fixture(0.0, 32, 60).density;
    for (double h : d0.h) {
      CHECK(std::abs(h - 2.0) < 1e-6);
    }
    const auto& f = fixture(0.3, 128, 10000);
    CHECK(std::abs(f.density.eigenvalue - 1.0) < 1e-8);
    CHECK(f.density.eig_residual < 1e-10);
    CHECK(*std::min_element(f.density.h.begin(), f.density.h.end()) > 0.0);
    const std::vector<double> one(f.density.h.size(), 1.0);
    CHECK(integrate_mu(f.cache, f.density, one) == doctest::Approx(1.0).epsilon(1e-12));
  }

  TEST_CASE("density is stable under refinement") {
    const auto& a = fixture(0.5, 256, 10000);
    const auto& b = fixture(0.5, 512, 10000);
    double worst = 0.0;
    for (int i = 0; i < a.cache.n_nodes; ++i) {
      const double hb =
          b.cache.grid.interpolate<double>(b.density.h, a.cache.grid.offsets()[i]);
      worst = std::max(worst, std::abs(hb - a.density.h[i]) / a.density.h[i]);
    }
    CHECK(worst < 1e-4);
  }

  TEST_CASE("ulam fallback agrees with collocation to first order") {
    const auto& f = fixture(0.3, 128, 10000);
    const UlamDensity u = ulam_density(MapParams{0.3}, 400, 4000);
    double integral = 0.0;
    for (double h : u.h) {
      integral += h * 0.5 / 400;
    }
    CHECK(integral == doctest::Approx(1.0).epsilon(1e-12));
    double worst = 0.0;
    for (int i = 0; i < f.cache.n_nodes; ++i) {
      worst = std::max(worst, std::abs(u.at(f.cache.node(i)) - f.density.h[i]));
    }
    CHECK(worst < 0.01);
  }

  TEST_CASE("apply_twisted") {
    const auto& f = fixture(0.3, 64, 3000);
    const auto& c = f.cache;
    const auto [lo, hi] = std::minmax_element(f.density.h.begin(), f.density.h.end());
    const std::vector<cplx> ones(static_cast<std::size_t>(c.n_nodes), 1.0);
    for (const cplx x : apply_twisted(c, f.density, 0.0, ones)) {
      CHECK(std::abs(x - 1.0) <= c.tail_mass * *hi / *lo + 1e-10);
    }
    const auto w = random_vector(c.n_nodes, 4);
    std::vector<cplx> wc(w.size());
    std::transform(w.begin(), w.end(), wc.begin(), [](cplx x) { return std::conj(x); });
    const auto a = apply_twisted(c, f.density, 1.3, w);
    const auto b = apply_twisted(c, f.density, kTwoPi - 1.3, wc);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(std::abs(b[i] - std::conj(a[i])) <= 1e-14 * quad_norm(c, a));
    }
    // The Taylor treatment of far branches assumes smooth node data.
    std::vector<cplx> smooth(w.size());
    for (int i = 0; i < c.n_nodes; ++i) {
      const double y = c.node(i);
      smooth[i] = std::polar(1.0, 3.0 * y) + std::cos(5.0 * y);
    }
    const auto s = apply_twisted(c, f.density, 1.3, smooth);
    const auto ref = apply_reference(c, f.density, 1.3, smooth);
    const TwistedOperator op(c, f.density, 1.3);
    const auto m = op.apply(w);
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(std::abs(s[i] - ref[i]) < 1e-10);
      CHECK(std::abs(m[i] - a[i]) < 1e-12);
    }
  }

  TEST_CASE("twisted operator contracts at w = pi") {
    for (int n : {64, 128}) {
      const auto& f = fixture(0.3, n, 4000);
      const TwistedOperator op(f.cache, f.density, kPi);
      auto w = random_vector(n, 8);
      const double start = quad_norm(f.cache, w);
      for (int k = 0; k < 50; ++k) {
        w = op.apply(w);
      }
      CHECK(quad_norm(f.cache, w) < 1e-3 * start);
    }
  }

  TEST_CASE("first application") {
    const auto& f = fixture(0.3, 64, 3000);
    const auto& c = f.cache;
    for (const cplx x : first_application(c, f.density, 1.0, Observable::constant(0.0))) {
      CHECK(x == cplx(0.0));
    }
    // v = 1 at w = pi: only odd branches contribute, each with e^{-in pi} = -1.
    const auto one = first_application(c, f.density, kPi, Observable::constant(1.0));
    for (int i = 0; i < c.n_nodes; ++i) {
      double odd = 0.0;
      for (int n = 1; n <= c.r_max; n += 2) {
        odd += f.density.mu_weight(c, i, n);
      }
      CHECK(std::abs(one[i] + odd) < 1e-12);
    }
    // Forward-orbit oracle for single branches.
    const auto v = Observable::cosine({0.0, 1.0});
    const double omega = 0.9;
    Philox4x32 g(17, 0);
    for (int s = 0; s < 3; ++s) {
      const int i = static_cast<int>(g() % static_cast<std::uint64_t>(c.n_nodes));
      const auto vals = twisted_branch_values(c, i, omega, v);
      for (int n : {1, 2, 7, 40}) {
        double x = c.preimage(i, n);
        cplx sum = 0.0;
        for (int l = 0; l < n; ++l) {
          sum += std::polar(1.0, l * omega) * v(x);
          x = lsv_apply(x, c.params);
        }
        CHECK(std::abs(x - c.node(i)) < 1e-9);
        const cplx expect = std::polar(1.0, -n * omega) * sum;
        CHECK(std::abs(vals[n - 1] - expect) < 1e-10);
      }
    }
    const PreparedObservable prep = prepare_observable(c, v);
    const TwistedOperator op(c, f.density, omega, &prep);
    const auto fa = first_application(c, f.density, omega, v);
    for (int i = 0; i < c.n_nodes; ++i) {
      CHECK(std::abs(op.first_application()[i] - fa[i]) < 1e-13);
    }
  }

  TEST_CASE("spectral radius") {
    const auto& f = fixture(0.3, 64, 3000);
    const auto r0 = spectral_radius(f.cache, f.density, 0.0);
    CHECK(std::abs(r0.value - 1.0) < 1e-6);
    for (double w : {0.7, 2.0, kPi}) {
      const auto a = spectral_radius(f.cache, f.density, w);
      const auto b = spectral_radius(f.cache, f.density, kTwoPi - w);
      CHECK(std::abs(a.value - b.value) < 1e-10);
      CHECK(a.value < 1.0);
      // Dense eigen-solver oracle.
      const TwistedOperator op(f.cache, f.density, w);
      Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(Eigen::MatrixXcd(op.matrix()), false);
      CHECK(a.value == doctest::Approx(es.eigenvalues().cwiseAbs().maxCoeff()).epsilon(1e-8));
    }
  }

  TEST_CASE("spectral radius agrees across resolutions at w = pi") {
    const auto& a = fixture(0.3, 256, 10000);
    const auto& b = fixture(0.3, 512, 10000);
    const double ra = spectral_radius(a.cache, a.density, kPi).value;
    const double rb = spectral_radius(b.cache, b.density, kPi).value;
    CHECK(ra < 1.0);
    CHECK(std::abs(ra - rb) < 1e-3);
  }

  TEST_CASE("serial and parallel assembly agree bitwise") {
    const auto& f = fixture(0.3, 64, 3000);
    const auto v = Observable::cosine({0.0, 1.0});
    const PreparedObservable prep = prepare_observable(f.cache, v);
    const TwistedOperator a(f.cache, f.density, 2.2, &prep, Exec::serial);
    const TwistedOperator b(f.cache, f.density, 2.2, &prep, Exec::parallel);
    CHECK(a.matrix() == b.matrix());
    CHECK(a.mean_square() == b.mean_square());
    CHECK(a.first_application() == b.first_application());
  }

  TEST_CASE("operator series") {
    const auto& f0 = fixture(0.0, 32, 60);
    const auto zero = induced_spectrum_series(f0.cache, f0.density, 1.0, Observable::constant(0.0));
    CHECK(zero.s_y == 0.0);
    CHECK(zero.terms_used == 1);
    const auto oracle = induced_spectrum_series(f0.cache, f0.density, kPi, Observable::cosine({0.0, 1.0, 0.5}));
    CHECK(oracle.r_bar_quadrature == doctest::Approx(2.0).epsilon(1e-6));
    CHECK(std::abs(oracle.s_y / oracle.r_bar_quadrature - 0.125) < 1e-3);

    const auto& f = fixture(0.3, 128, 10000);
    const auto v = Observable::cosine({0.0, 1.0});
    for (double w : {1.0, kPi, 5.0}) {
      const auto s = induced_spectrum_series(f.cache, f.density, w, v);
      CHECK_FALSE(s.truncated);
      CHECK(s.tilde_check < 1e-6);
      CHECK(s.s_y > 0.0);
      // Geometric decay of the tail of the series.
      std::vector<double> ratios;
      for (std::size_t k = s.terms.size() - 10; k < s.terms.size(); ++k) {
        ratios.push_back(std::abs(s.terms[k]) / std::abs(s.terms[k - 1]));
      }
      std::nth_element(ratios.begin(), ratios.begin() + 5, ratios.end());
      CHECK(ratios[5] < 1.0);
      const auto c = induced_spectrum_series(f.cache, f.density, kTwoPi - w, v);
      CHECK(std::abs(c.s_y - s.s_y) <= 1e-10 * s.s_y);
    }
    CHECK_THROWS_AS(induced_spectrum_series(f.cache, f.density, 0.01, v), GuardBandError);
    SeriesOptions shortopt;
    shortopt.n_max_terms = 3;
    CHECK(induced_spectrum_series(f.cache, f.density, 1.0, v, shortopt).truncated);
  }

  TEST_CASE("mean return time by quadrature") {
    CHECK(r_bar_quadrature(fixture(0.0, 32, 60).cache, fixture(0.0, 32, 60).density).value ==
          doctest::Approx(2.0).epsilon(1e-6));
    const auto& a = fixture(0.3, 128, 10000);
    const auto& b = fixture(0.5, 256, 10000);
    const auto ra = r_bar_quadrature(a.cache, a.density);
    const auto rb = r_bar_quadrature(b.cache, b.density);
    CHECK(rb.value > ra.value);
    CHECK_FALSE(rb.tail_warning);
    CHECK(rb.tail_correction > 0.0);
  }
}
