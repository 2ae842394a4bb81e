#include "powerspec/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "powerspec/error.hpp"

namespace powerspec {

namespace {

constexpr int kNewtonBudget = 200;

void check_unit(double x, const char* what) {
  if (!std::isfinite(x) || x < 0.0 || x > 1.0) {
    std::ostringstream msg;
    msg << what << ": argument " << x << " outside [0,1]";
    throw DomainError(msg.str());
  }
}

}  // namespace

void MapParams::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    throw DomainError("gamma must lie in [0,1)");
  }
  if (!(newton_tol > 0.0)) {
    throw DomainError("newton_tol must be positive");
  }
  if (r_cap < 2) {
    throw DomainError("r_cap must be at least 2");
  }
}

double lsv_apply(double x, const MapParams& p) {
  check_unit(x, "lsv_apply");
  if (x < kYLower) {
    return std::min(1.0, x * (1.0 + std::pow(2.0, p.gamma) * std::pow(x, p.gamma)));
  }
  return 2.0 * x - 1.0;
}

double lsv_derivative(double x, const MapParams& p) {
  check_unit(x, "lsv_derivative");
  if (x < kYLower) {
    return 1.0 + (1.0 + p.gamma) * std::pow(2.0, p.gamma) * std::pow(x, p.gamma);
  }
  return 2.0;
}

double lsv_left_inverse(double z, const MapParams& p) {
  check_unit(z, "lsv_left_inverse");
  if (z == 0.0) {
    return 0.0;
  }
  if (p.gamma == 0.0) {
    return 0.5 * z;
  }
  const double g = p.gamma;
  const double c = std::pow(2.0, g);
  auto residual = [&](double x) { return x * (1.0 + c * std::pow(x, g)) - z; };

  double lo = 0.0;
  double hi = 0.5;
  double x = std::min(0.5, z / (1.0 + c * std::pow(z, g)));
  for (int it = 0; it < kNewtonBudget; ++it) {
    const double xg = std::pow(x, g);
    const double res = x * (1.0 + c * xg) - z;
    if (res > 0.0) {
      hi = x;
    } else {
      lo = x;
    }
    const double slope = 1.0 + (1.0 + g) * c * xg;
    double next = x - res / slope;
    if (!(next > lo && next < hi)) {
      next = 0.5 * (lo + hi);
    }
    const double step = std::abs(next - x);
    x = next;
    if (step <= 2.0 * std::numeric_limits<double>::epsilon() * x || hi - lo <= std::numeric_limits<double>::min()) {
      break;
    }
  }
  if (std::abs(residual(x)) > p.newton_tol * z) {
    std::ostringstream msg;
    msg << "lsv_left_inverse: residual " << residual(x) << " exceeds tolerance at z=" << z;
    throw ConvergenceError(msg.str());
  }
  return x;
}

BranchTable build_branch_table(const MapParams& p, int n_max) {
  p.validate();
  if (n_max < 2) {
    throw DomainError("build_branch_table: n_max must be at least 2");
  }
  BranchTable t;
  t.gamma = p.gamma;
  t.n_max = n_max;
  t.xi.resize(static_cast<std::size_t>(n_max) + 1);
  t.xi[0] = 1.0;
  t.xi[1] = 0.5;
  for (int n = 1; n < n_max; ++n) {
    t.xi[n + 1] = lsv_left_inverse(t.xi[n], p);
  }
  t.boundaries_in_y.resize(t.xi.size());
  for (std::size_t n = 0; n < t.xi.size(); ++n) {
    t.boundaries_in_y[n] = 0.5 * (t.xi[n] + 1.0);
  }
  t.tail_length = 0.5 * t.xi[n_max];
  return t;
}

int BranchTable::branch_of(double y) const {
  if (!(y >= kYLower && y <= 1.0)) {
    throw DomainError("branch_of: point outside Y");
  }
  if (y >= boundaries_in_y[1]) {
    return 1;
  }
  if (y < boundaries_in_y.back()) {
    return 0;
  }
  // boundaries are decreasing: first index whose boundary is <= y.
  auto it = std::lower_bound(boundaries_in_y.begin(), boundaries_in_y.end(), y, std::greater<double>());
  return static_cast<int>(it - boundaries_in_y.begin());
}

ReturnBlock return_block(double y, const MapParams& p) {
  if (!(y >= kYLower && y <= 1.0)) {
    throw DomainError("return_block: base point outside Y=[1/2,1]");
  }
  ReturnBlock b;
  b.base = y;
  double x = y;
  for (;;) {
    b.orbit.push_back(x);
    b.log_deriv += std::log(lsv_derivative(x, p));
    x = lsv_apply(x, p);
    if (x >= kYLower) {
      break;
    }
    if (static_cast<std::int64_t>(b.orbit.size()) >= p.r_cap) {
      throw CapError("return_block: return time exceeds r_cap");
    }
  }
  b.r = static_cast<std::int64_t>(b.orbit.size());
  return b;
}

Orbit::Orbit(const MapParams& p, std::uint64_t seed, std::uint64_t stream)
    : params_(p), rng_(seed, stream), scale_(std::pow(2.0, p.gamma)), doubling_(p.gamma == 0.0) {
  p.validate();
  if (doubling_) {
    reg_ = rng_();
    x_ = static_cast<double>(reg_ >> 11) * 0x1.0p-53;
  } else {
    x_ = rng_.uniform();
  }
}

void Orbit::skip(std::uint64_t n) {
  for (std::uint64_t i = 0; i < n; ++i) {
    next();
  }
}

std::vector<double> sample_trajectory(std::uint64_t seed, std::size_t n, std::size_t burn_in,
                                      const MapParams& p, std::uint64_t stream) {
  if (n < 1) {
    throw DomainError("sample_trajectory: n must be at least 1");
  }
  Orbit orbit(p, seed, stream);
  orbit.skip(burn_in);
  std::vector<double> out(n);
  for (auto& x : out) {
    x = orbit.next();
  }
  return out;
}

ReturnStream::ReturnStream(const MapParams& p, std::uint64_t seed, std::uint64_t stream, std::size_t burn_in)
    : params_(p), orbit_(p, seed, stream) {
  orbit_.skip(burn_in);
  while (orbit_.current() < kYLower) {
    orbit_.next();
  }
}

std::int64_t ReturnStream::next(ReturnBlock& block, bool record_orbit) {
  for (;;) {
    block.base = orbit_.current();
    block.orbit.clear();
    block.log_deriv = 0.0;
    std::int64_t r = 0;
    double x = block.base;
    bool capped = false;
    do {
      if (record_orbit) {
        block.orbit.push_back(x);
      }
      ++r;
      x = orbit_.next();
      if (r >= params_.r_cap && x < kYLower) {
        capped = true;
        break;
      }
    } while (x < kYLower);
    if (!capped) {
      block.r = r;
      return r;
    }
    ++rejected_;
    while (orbit_.current() < kYLower) {
      orbit_.next();
    }
  }
}

std::int64_t ReturnStream::next_return_time() {
  for (;;) {
    std::int64_t r = 1;
    while (orbit_.next() < kYLower) {
      if (++r > params_.r_cap) {
        break;
      }
    }
    if (r <= params_.r_cap) {
      return r;
    }
    ++rejected_;
    while (orbit_.current() < kYLower) {
      orbit_.next();
    }
  }
}

}  // namespace powerspec
