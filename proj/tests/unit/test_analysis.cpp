#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "powerspec/analysis.hpp"
#include "powerspec/error.hpp"
#include "powerspec/rng.hpp"

using namespace powerspec;

namespace {

constexpr double kPi = std::numbers::pi;

CrossSettings small_cross(int scale) {
  CrossSettings s;
  s.direct.n_per_segment = std::int64_t{1} << (10 + 2 * scale);
  s.direct.segments = 16;
  s.direct.blocks = 16;
  s.direct.seed = 100 + static_cast<std::uint64_t>(scale);
  s.induced.n_returns = std::int64_t{1} << (10 + 2 * scale);
  s.induced.segments = 16;
  s.induced.blocks = 16;
  s.induced.seed = 200 + static_cast<std::uint64_t>(scale);
  s.n_nodes = 32 << scale;
  s.r_max = 1000 << scale;
  return s;
}

double median_gap(const CrossValidation& cv) {
  std::vector<double> g;
  for (const auto& r : cv.rows) {
    g.push_back(std::max({r.gap_direct_induced, r.gap_direct_series, r.gap_induced_series}));
  }
  std::sort(g.begin(), g.end());
  return g[g.size() / 2];
}

}  // namespace

TEST_SUITE("analysis") {
  TEST_CASE("survival fitter recovers a planted Pareto exponent") {
    const double alpha = 1.5;
    std::vector<std::vector<double>> samples(32);
    for (std::size_t s = 0; s < samples.size(); ++s) {
      Philox4x32 g(99, s);
      samples[s].resize(200000);
      for (auto& x : samples[s]) {
        x = std::pow(g.uniform(), -1.0 / alpha);
      }
    }
    const TailFit fit = fit_survival_slope(samples);
    CHECK(fit.ci_low <= -alpha);
    CHECK(fit.ci_high >= -alpha);
    CHECK(fit.slope == doctest::Approx(-alpha).epsilon(0.05));
    CHECK(fit.ci_low < fit.slope);
    CHECK(fit.slope < fit.ci_high);
    std::vector<std::vector<double>> thin{{1.0, 2.0, 3.0}};
    CHECK_THROWS_AS(fit_survival_slope(thin), InsufficientDataError);
  }

  TEST_CASE("tail fit preconditions") {
    CHECK_THROWS_AS(tail_exponent_fit(MapParams{0.0}, 1'000'000, 1), RegimeError);
    CHECK_THROWS_AS(tail_exponent_fit(MapParams{0.5}, 1000, 1), DomainError);
    // Returns longer than 100 are astronomically rare at gamma = 0.1.
    CHECK_THROWS_AS(tail_exponent_fit(MapParams{0.1}, 1'000'000, 1), InsufficientDataError);
  }

  TEST_CASE("kac identity on the doubling map") {
    const KacResult k = kac_check(MapParams{0.0}, 2'000'000, 3);
    CHECK(k.product == doctest::Approx(1.0).epsilon(0.01));
    CHECK(k.r_bar == doctest::Approx(2.0).epsilon(0.01));
    CHECK(k.mu_y == doctest::Approx(0.5).epsilon(0.01));
    CHECK_THROWS_AS(kac_check(MapParams{0.0}, 1000, 3), DomainError);
  }

  TEST_CASE("regimes and gaps") {
    const RegimeInfo a = regime_info(0.3, 1.0);
    CHECK(a.summable);
    const RegimeInfo b = regime_info(0.6, 0.3);
    CHECK_FALSE(b.summable);
    CHECK(b.eta_threshold == doctest::Approx(0.4));
    CHECK_FALSE(b.eta_sufficient);
    CHECK(regime_info(0.6, 1.0).eta_sufficient);
    CHECK(relative_gap(0.0, 0.0) == 0.0);
    CHECK(relative_gap(1.0, 0.9) == doctest::Approx(0.1));
    CHECK(pair_agrees(1.0, 0.0, 1.04, 0.0, 0.05));
    CHECK_FALSE(pair_agrees(1.0, 0.0, 1.2, 0.0, 0.05));
    CHECK(pair_agrees(1.0, 0.1, 1.2, 0.0, 0.05));
  }

  TEST_CASE("cross validation on degenerate and oracle inputs") {
    const auto w = guarded_grid(3);
    const auto zero = cross_validate(Observable::constant(0.0), MapParams{0.3}, w, small_cross(1));
    for (const auto& r : zero.rows) {
      CHECK(r.direct == 0.0);
      CHECK(r.induced == 0.0);
      CHECK(r.series == 0.0);
      CHECK(r.verdict == Verdict::pass);
    }
    const auto oracle =
        cross_validate(Observable::cosine({0.0, 1.0, 0.5}), MapParams{0.0}, w, small_cross(2));
    for (const auto& r : oracle.rows) {
      const double s = 0.625 + 0.5 * std::cos(r.omega);
      CHECK(r.series == doctest::Approx(s).epsilon(1e-6));
      CHECK(std::abs(r.direct - s) <= std::max(0.05 * s, 3 * r.direct_se));
      CHECK(std::abs(r.induced - s) <= std::max(0.05 * s, 3 * r.induced_se));
    }
    CHECK(oracle.report.all_pass());
  }

  TEST_CASE("cross validation gaps shrink with resources") {
    const auto w = guarded_grid(5);
    const auto v = Observable::cosine({0.0, 1.0});
    const double g1 = median_gap(cross_validate(v, MapParams{0.3}, w, small_cross(0)));
    const double g2 = median_gap(cross_validate(v, MapParams{0.3}, w, small_cross(1)));
    const double g3 = median_gap(cross_validate(v, MapParams{0.3}, w, small_cross(2)));
    CHECK(g2 <= g1);
    CHECK(g3 <= g2);
  }

  TEST_CASE("positivity floors") {
    SpectrumEstimate e;
    e.omegas = {1.0, 2.0, 3.0};
    e.values = {0.5, 0.3, 0.4};
    e.stderrs = {0.01, 0.02, 0.01};
    const auto p = positivity_scan(e);
    CHECK(p.floor == doctest::Approx(0.24));
    CHECK(p.argmin == 2.0);
    CHECK(p.positive);
    e.values = {0.0, 0.0, 0.0};
    e.stderrs = {0.0, 0.0, 0.0};
    const auto z = positivity_scan(e);
    CHECK(z.floor == 0.0);
    CHECK_FALSE(z.positive);
    CHECK_THROWS_AS(positivity_scan(SpectrumEstimate{}), DomainError);
  }

  TEST_CASE("blow-up scan") {
    BartlettSettings s;
    s.n_per_segment = 1 << 14;
    s.segments = 8;
    s.blocks = 1;
    const std::vector<double> w{0.8, 0.4, 0.2, 0.1};
    CHECK_THROWS_AS(blowup_scan(Observable::cosine({0.0, 1.0}), MapParams{0.3}, w, s), RegimeError);
    CHECK_THROWS_AS(blowup_scan(Observable::cosine({0.0, 1.0}), MapParams{0.6}, std::vector<double>{0.1, 0.4}, s),
                    DomainError);
    const auto z = blowup_scan(Observable::constant(0.0), MapParams{0.6}, w, s);
    for (double v : z.values) {
      CHECK(v == 0.0);
    }
    const auto t = blowup_scan(Observable::cosine({0.0, 1.0}), MapParams{0.6}, w, s);
    CHECK(t.values.size() == 4);
    for (std::size_t k = 0; k < 4; ++k) {
      CHECK(t.values[k] >= 0.0);
      CHECK(t.stderrs[k] >= 0.0);
    }
    CHECK(t.increasing_steps <= 3);
  }

  TEST_CASE("report serialisation") {
    ValidationReport r;
    r.add({"a", "x=1", 1.0, 1.0, 0.01, Verdict::pass});
    r.add({"b", "x=2", 2.0, 0.0, 0.0, Verdict::exploratory});
    r.environment["seed"] = "7";
    CHECK(r.all_pass());
    const std::string j = r.to_json();
    CHECK(j.find("\"verdict\": \"exploratory\"") != std::string::npos);
    CHECK(j.find("\"tolerance\": 0.01") != std::string::npos);
    CHECK(j.find("\"seed\": \"7\"") != std::string::npos);
    r.add({"c", "", 0.0, 1.0, 0.1, Verdict::fail});
    CHECK_FALSE(r.all_pass());
    r.checks.back().verdict = Verdict::inconclusive;
    CHECK(r.all_pass());
  }
}
