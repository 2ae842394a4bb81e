#include "powerspec/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "powerspec/error.hpp"
#include "powerspec/rng.hpp"

namespace powerspec {

namespace {

template <class Body>
void for_segments(Exec exec, int n, Body&& body) {
  if (exec == Exec::serial) {
    for (int s = 0; s < n; ++s) {
      body(s);
    }
  } else {
#pragma omp parallel for schedule(dynamic, 1)
    for (int s = 0; s < n; ++s) {
      body(s);
    }
  }
}

double ols_slope(std::span<const double> x, std::span<const double> y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(std::span<const double> xs) {
  MeanSe out;
  const double n = static_cast<double>(xs.size());
  out.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) {
      ss += (x - out.mean) * (x - out.mean);
    }
    out.se = std::sqrt(ss / (n - 1.0) / n);
  }
  return out;
}

std::string format_inputs(const std::string& label, double omega) {
  std::ostringstream os;
  os.precision(17);
  os << label << " omega=" << omega;
  return os.str();
}

}  // namespace

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::pass:
      return "pass";
    case Verdict::fail:
      return "fail";
    case Verdict::inconclusive:
      return "inconclusive";
    case Verdict::exploratory:
      return "exploratory";
  }
  return "fail";
}

void ValidationReport::merge(const ValidationReport& other) {
  checks.insert(checks.end(), other.checks.begin(), other.checks.end());
  for (const auto& [k, v] : other.environment) {
    environment[k] = v;
  }
}

bool ValidationReport::all_pass() const {
  return std::none_of(checks.begin(), checks.end(), [](const Check& c) { return c.verdict == Verdict::fail; });
}

std::string ValidationReport::to_json() const {
  nlohmann::ordered_json j;
  j["schema"] = "powerspec.report.v1";
  j["all_pass"] = all_pass();
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& c : checks) {
    rows.push_back({{"name", c.name},
                    {"inputs", c.inputs},
                    {"measured", c.measured},
                    {"target", c.target},
                    {"tolerance", c.tolerance},
                    {"pass", c.pass()},
                    {"verdict", to_string(c.verdict)}});
  }
  j["checks"] = rows;
  nlohmann::ordered_json env = nlohmann::ordered_json::object();
  for (const auto& [k, v] : environment) {
    env[k] = v;
  }
  j["environment"] = env;
  return j.dump(2) + "\n";
}

RegimeInfo regime_info(double gamma, double eta) {
  RegimeInfo r;
  r.summable = gamma < 0.5;
  r.eta = eta;
  r.eta_threshold = (3.0 * gamma - 1.0) / 2.0;
  r.eta_sufficient = r.summable || eta > r.eta_threshold;
  return r;
}

TailFit fit_survival_slope(const std::vector<std::vector<double>>& samples, const TailFitOptions& opt) {
  if (samples.empty()) {
    throw InsufficientDataError("fit_survival_slope: no samples");
  }
  if (!(opt.n_lo > 0.0 && opt.n_hi > opt.n_lo && opt.points_per_decade > 0)) {
    throw DomainError("fit_survival_slope: bad fit range");
  }
  std::vector<double> grid;
  const int points =
      static_cast<int>(std::floor(std::log10(opt.n_hi / opt.n_lo) * opt.points_per_decade + 1e-9)) + 1;
  for (int k = 0; k < points; ++k) {
    grid.push_back(opt.n_lo * std::pow(10.0, static_cast<double>(k) / opt.points_per_decade));
  }
  const std::size_t segs = samples.size();
  const std::size_t gk = grid.size();
  // exceed[s][k] = #{x in segment s : x > grid[k]}
  std::vector<std::vector<std::int64_t>> exceed(segs, std::vector<std::int64_t>(gk, 0));
  std::vector<std::int64_t> sizes(segs);
  for (std::size_t s = 0; s < segs; ++s) {
    sizes[s] = static_cast<std::int64_t>(samples[s].size());
    std::vector<std::int64_t> hist(gk + 1, 0);
    for (double x : samples[s]) {
      // number of grid points strictly below x
      const auto k = std::lower_bound(grid.begin(), grid.end(), x) - grid.begin();
      ++hist[static_cast<std::size_t>(k)];
    }
    std::int64_t run = 0;
    for (std::size_t k = gk; k-- > 0;) {
      run += hist[k + 1];
      exceed[s][k] = run;
    }
  }
  TailFit fit;
  fit.samples = std::accumulate(sizes.begin(), sizes.end(), std::int64_t{0});
  std::vector<std::int64_t> pooled(gk, 0);
  for (std::size_t s = 0; s < segs; ++s) {
    for (std::size_t k = 0; k < gk; ++k) {
      pooled[k] += exceed[s][k];
    }
  }
  fit.above_min = pooled[0];
  if (fit.above_min < opt.min_tail) {
    throw InsufficientDataError("fit_survival_slope: only " + std::to_string(fit.above_min) +
                                " samples exceed the lower end of the fit range");
  }
  std::vector<std::size_t> used;
  for (std::size_t k = 0; k < gk; ++k) {
    if (pooled[k] >= opt.min_count) {
      used.push_back(k);
    }
  }
  if (used.size() < 3) {
    throw InsufficientDataError("fit_survival_slope: fewer than 3 populated survival points");
  }
  auto slope_for = [&](const std::vector<std::int64_t>& counts, std::int64_t total) {
    std::vector<double> x, y;
    for (std::size_t k : used) {
      if (counts[k] > 0) {
        x.push_back(std::log(grid[k]));
        y.push_back(std::log(static_cast<double>(counts[k]) / static_cast<double>(total)));
      }
    }
    return x.size() >= 2 ? ols_slope(x, y) : std::numeric_limits<double>::quiet_NaN();
  };
  for (std::size_t k : used) {
    fit.n.push_back(grid[k]);
    fit.survival.push_back(static_cast<double>(pooled[k]) / static_cast<double>(fit.samples));
  }
  fit.slope = slope_for(pooled, fit.samples);

  std::vector<double> boot;
  boot.reserve(static_cast<std::size_t>(opt.bootstrap));
  for (int b = 0; b < opt.bootstrap; ++b) {
    Philox4x32 rng(opt.seed, static_cast<std::uint64_t>(b));
    std::vector<std::int64_t> counts(gk, 0);
    std::int64_t total = 0;
    for (std::size_t s = 0; s < segs; ++s) {
      const std::size_t pick = static_cast<std::size_t>(rng() % segs);
      total += sizes[pick];
      for (std::size_t k = 0; k < gk; ++k) {
        counts[k] += exceed[pick][k];
      }
    }
    const double sl = slope_for(counts, total);
    if (std::isfinite(sl)) {
      boot.push_back(sl);
    }
  }
  if (boot.empty()) {
    fit.ci_low = fit.ci_high = fit.slope;
  } else {
    std::sort(boot.begin(), boot.end());
    auto pct = [&](double q) {
      const double pos = q * static_cast<double>(boot.size() - 1);
      const auto lo = static_cast<std::size_t>(std::floor(pos));
      const auto hi = std::min(lo + 1, boot.size() - 1);
      return boot[lo] + (pos - static_cast<double>(lo)) * (boot[hi] - boot[lo]);
    };
    fit.ci_low = pct(0.025);
    fit.ci_high = pct(0.975);
  }
  return fit;
}

TailFit tail_exponent_fit(const MapParams& p, std::int64_t n_samples, std::uint64_t seed, int segments, Exec exec,
                          TailFitOptions opt) {
  p.validate();
  if (p.gamma == 0.0) {
    throw RegimeError("tail_exponent_fit: gamma = 0 has geometric return-time tails");
  }
  if (n_samples < 1'000'000) {
    throw DomainError("tail_exponent_fit: n_samples must be at least 1e6");
  }
  if (segments < 2) {
    throw DomainError("tail_exponent_fit: need at least 2 segments");
  }
  std::vector<std::vector<double>> samples(static_cast<std::size_t>(segments));
  const std::int64_t per = n_samples / segments;
  for_segments(exec, segments, [&](int s) {
    ReturnStream rs(p, seed, static_cast<std::uint64_t>(s), 10'000);
    auto& out = samples[s];
    out.resize(static_cast<std::size_t>(per));
    for (auto& x : out) {
      x = static_cast<double>(rs.next_return_time());
    }
  });
  opt.seed = seed;
  return fit_survival_slope(samples, opt);
}

KacResult kac_check(const MapParams& p, std::int64_t n, std::uint64_t seed, int segments, Exec exec) {
  p.validate();
  if (n < 1'000'000) {
    throw DomainError("kac_check: n must be at least 1e6");
  }
  const std::int64_t per = n / segments;
  std::vector<double> r_bar(static_cast<std::size_t>(segments));
  std::vector<double> mu(static_cast<std::size_t>(segments));
  for_segments(exec, segments, [&](int s) {
    Orbit orbit(p, seed, 2 * static_cast<std::uint64_t>(s));
    orbit.skip(10'000);
    std::int64_t inside = 0;
    for (std::int64_t j = 0; j < per; ++j) {
      inside += orbit.next() >= kYLower ? 1 : 0;
    }
    mu[s] = static_cast<double>(inside) / static_cast<double>(per);

    ReturnStream rs(p, seed, 2 * static_cast<std::uint64_t>(s) + 1, 10'000);
    std::int64_t steps = 0;
    std::int64_t returns = 0;
    while (steps < per) {
      steps += rs.next_return_time();
      ++returns;
    }
    r_bar[s] = static_cast<double>(steps) / static_cast<double>(returns);
  });
  const MeanSe r = mean_se(r_bar);
  const MeanSe m = mean_se(mu);
  KacResult out;
  out.r_bar = r.mean;
  out.mu_y = m.mean;
  out.product = r.mean * m.mean;
  out.std_error = out.product * std::hypot(r.se / r.mean, m.se / m.mean);
  return out;
}

double relative_gap(double a, double b) {
  const double scale = std::max(std::abs(a), std::abs(b));
  return scale == 0.0 ? 0.0 : std::abs(a - b) / scale;
}

bool pair_agrees(double a, double se_a, double b, double se_b, double tol) {
  const double allowance = std::max(tol * std::max(std::abs(a), std::abs(b)), 3.0 * std::hypot(se_a, se_b));
  return std::abs(a - b) <= allowance;
}

CrossValidation cross_validate(const Observable& obs, const MapParams& p, std::span<const double> omegas,
                               const CrossSettings& s) {
  p.validate();
  check_guard_band(omegas, std::max(s.direct.omega_min, s.series.omega_min));
  const RegimeInfo regime = regime_info(p.gamma, obs.eta());

  const SpectrumEstimate direct = bartlett_spectrum(obs, p, omegas, s.direct);
  const SpectrumEstimate induced = induced_spectrum_mc(obs, p, omegas, s.induced);

  const TwistedOperatorCache cache = build_cache(p, s.n_nodes, s.r_max);
  const DensityEstimate density = invariant_density(cache);
  const PreparedObservable prep = prepare_observable(cache, obs);
  const double r_quad = r_bar_quadrature(cache, density).value;

  CrossValidation out;
  out.r_bar_mc = induced.r_bar;
  out.r_bar_quadrature = r_quad;
  for (std::size_t k = 0; k < omegas.size(); ++k) {
    CrossRow row;
    row.omega = omegas[k];
    row.direct = direct.values[k];
    row.direct_se = direct.stderrs[k];
    const double rb = induced.r_bar;
    row.induced = induced.values[k] / rb;
    row.induced_se = std::hypot(induced.stderrs[k] / rb, induced.values[k] * induced.r_bar_stderr / (rb * rb));
    const TwistedOperator op(cache, density, omegas[k], &prep);
    const SeriesResult sr = induced_spectrum_series(op, s.series);
    row.series = sr.s_y / r_quad;
    row.gap_direct_induced = relative_gap(row.direct, row.induced);
    row.gap_direct_series = relative_gap(row.direct, row.series);
    row.gap_induced_series = relative_gap(row.induced, row.series);
    const bool agree = pair_agrees(row.direct, row.direct_se, row.induced, row.induced_se, s.tolerance) &&
                       pair_agrees(row.direct, row.direct_se, row.series, 0.0, s.tolerance) &&
                       pair_agrees(row.induced, row.induced_se, row.series, 0.0, s.tolerance);
    const double scale = std::max({std::abs(row.direct), std::abs(row.induced), std::abs(row.series)});
    const bool noisy = std::max(row.direct_se, row.induced_se) > s.tolerance * scale;
    if (agree) {
      row.verdict = Verdict::pass;
    } else if (noisy || !regime.summable || sr.truncated) {
      row.verdict = Verdict::inconclusive;
    } else {
      row.verdict = Verdict::fail;
    }
    out.report.add({"route_consistency", format_inputs("gamma=" + std::to_string(p.gamma), omegas[k]),
                    std::max({row.gap_direct_induced, row.gap_direct_series, row.gap_induced_series}), 0.0,
                    s.tolerance, row.verdict});
    out.rows.push_back(row);
  }
  out.report.environment["cross.r_bar_mc"] = std::to_string(induced.r_bar);
  out.report.environment["cross.r_bar_quadrature"] = std::to_string(r_quad);
  out.report.environment["cross.summable_regime"] = regime.summable ? "true" : "false";
  return out;
}

PositivityResult positivity_scan(const SpectrumEstimate& est) {
  if (est.size() == 0) {
    throw DomainError("positivity_scan: empty estimate");
  }
  PositivityResult out;
  out.floor = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < est.size(); ++k) {
    const double f = est.values[k] - 3.0 * est.stderrs[k];
    if (f < out.floor) {
      out.floor = f;
      out.argmin = est.omegas[k];
    }
  }
  out.positive = out.floor > 0.0;
  return out;
}

BlowupTable blowup_scan(const Observable& obs, const MapParams& p, std::span<const double> omegas,
                        BartlettSettings s) {
  p.validate();
  if (p.gamma < 0.5) {
    throw RegimeError("blowup_scan: requires gamma >= 1/2");
  }
  for (std::size_t k = 0; k < omegas.size(); ++k) {
    if (!(omegas[k] > 1e-3 && omegas[k] < std::numbers::pi)) {
      throw DomainError("blowup_scan: frequencies must lie in (1e-3, pi)");
    }
    if (k > 0 && !(omegas[k] < omegas[k - 1])) {
      throw DomainError("blowup_scan: frequencies must decrease");
    }
  }
  s.omega_min = 1e-3;
  const SpectrumEstimate est = bartlett_spectrum(obs, p, omegas, s);
  BlowupTable t;
  t.omegas.assign(omegas.begin(), omegas.end());
  t.values = est.values;
  t.stderrs = est.stderrs;
  for (std::size_t k = 1; k < t.values.size(); ++k) {
    t.increasing_steps += t.values[k] > t.values[k - 1] ? 1 : 0;
  }
  t.monotone = t.values.size() > 1 && t.increasing_steps == static_cast<int>(t.values.size()) - 1;
  return t;
}

}  // namespace powerspec
