#include "powerspec/observables.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "powerspec/error.hpp"

namespace powerspec {

namespace {

constexpr int kGridLog2 = 16;
constexpr int kGridSize = 1 << kGridLog2;

}  // namespace

std::string to_string(ObservableKind kind) {
  switch (kind) {
    case ObservableKind::cosine_basis:
      return "cosine_basis";
    case ObservableKind::power_vanishing:
      return "power_vanishing";
    case ObservableKind::constant:
      return "constant";
    case ObservableKind::tabulated:
      return "tabulated";
  }
  return "unknown";
}

ObservableKind observable_kind_from_string(const std::string& name) {
  if (name == "cosine_basis") return ObservableKind::cosine_basis;
  if (name == "power_vanishing") return ObservableKind::power_vanishing;
  if (name == "constant") return ObservableKind::constant;
  if (name == "tabulated") return ObservableKind::tabulated;
  throw DomainError("unknown observable kind '" + name + "'");
}

Observable::Observable(ObservableKind kind, std::vector<double> coeffs, double eta)
    : kind_(kind), coeffs_(std::move(coeffs)), eta_(eta) {
  if (!(eta_ > 0.0 && eta_ <= 1.0)) {
    throw DomainError("observable: eta must lie in (0,1]");
  }
  if (coeffs_.empty()) {
    if (kind_ == ObservableKind::power_vanishing) {
      coeffs_ = {1.0};
    } else {
      throw DomainError("observable: empty coefficient list");
    }
  }
  if (kind_ == ObservableKind::tabulated && coeffs_.size() < 2) {
    throw DomainError("observable: tabulated grid needs at least 2 points");
  }
  for (double c : coeffs_) {
    if (!std::isfinite(c)) {
      throw DomainError("observable: non-finite coefficient");
    }
  }
  sup_norm_ = grid_sup_norm();
}

bool Observable::is_zero() const {
  return std::all_of(coeffs_.begin(), coeffs_.end(), [](double c) { return c == 0.0; });
}

double Observable::eval_cosine(double x) const {
  // Clenshaw recurrence in t = cos(2 pi x): cos(2 pi k x) = T_k(t).
  const double t = std::cos(2.0 * std::numbers::pi * x);
  double b1 = 0.0;
  double b2 = 0.0;
  for (std::size_t k = coeffs_.size(); k-- > 1;) {
    const double b0 = coeffs_[k] + 2.0 * t * b1 - b2;
    b2 = b1;
    b1 = b0;
  }
  return coeffs_[0] + t * b1 - b2;
}

double Observable::eval_table(double x) const {
  const auto cells = static_cast<double>(coeffs_.size() - 1);
  const double s = std::clamp(x, 0.0, 1.0) * cells;
  const auto i = std::min(static_cast<std::size_t>(s), coeffs_.size() - 2);
  const double frac = s - static_cast<double>(i);
  return coeffs_[i] + frac * (coeffs_[i + 1] - coeffs_[i]);
}

double Observable::grid_sup_norm() const {
  double m = 0.0;
  for (int j = 0; j <= kGridSize; ++j) {
    m = std::max(m, std::abs((*this)(static_cast<double>(j) / kGridSize)));
  }
  return m;
}

double Observable::holder_seminorm() const {
  std::vector<double> values(kGridSize + 1);
  for (int j = 0; j <= kGridSize; ++j) {
    values[j] = (*this)(static_cast<double>(j) / kGridSize);
  }
  // Dyadic separations only: O(M log M) instead of all pairs.
  double best = 0.0;
  for (int step = 1; step <= kGridSize; step *= 2) {
    const double d = static_cast<double>(step) / kGridSize;
    const double scale = std::pow(d, eta_);
    for (int j = 0; j + step <= kGridSize; ++j) {
      best = std::max(best, std::abs(values[j + step] - values[j]) / scale);
    }
  }
  return best;
}

InducedValue eval_induced(const Observable& obs, std::span<const double> orbit, double omega) {
  if (!(omega >= 0.0 && omega <= 2.0 * std::numbers::pi)) {
    throw DomainError("eval_induced: omega outside [0, 2pi]");
  }
  InducedValue out;
  out.r = static_cast<std::int64_t>(orbit.size());
  const cplx step = std::polar(1.0, omega);
  cplx phase = 1.0;
  cplx sum = 0.0;
  double best = 0.0;
  for (std::size_t l = 0; l < orbit.size(); ++l) {
    if (l % kPhasorAnchor == 0 && l > 0) {
      phase = std::polar(1.0, std::fmod(static_cast<double>(l) * omega, 2.0 * std::numbers::pi));
    }
    sum += phase * obs(orbit[l]);
    best = std::max(best, std::abs(sum));
    phase *= step;
  }
  out.v_omega = sum;
  out.v_star = best;
  return out;
}

InducedValue eval_induced(const Observable& obs, const ReturnBlock& block, double omega) {
  return eval_induced(obs, std::span<const double>(block.orbit), omega);
}

BoundCheck omega_continuity_bound(const Observable& obs, const ReturnBlock& block, double omega0,
                                  double omega1) {
  const cplx v0 = eval_induced(obs, block, omega0).v_omega;
  const cplx v1 = eval_induced(obs, block, omega1).v_omega;
  const double r = static_cast<double>(block.r);
  return {std::abs(v1 - v0), 2.0 * obs.sup_norm() * r * r * std::abs(omega1 - omega0)};
}

double constant_observable_bound(double omega, double c) {
  if (!(omega > 0.0 && omega < 2.0 * std::numbers::pi)) {
    throw GuardBandError("constant_observable_bound: singular at omega in {0, 2pi}");
  }
  return 2.0 * std::abs(c) / std::abs(1.0 - std::polar(1.0, omega));
}

}  // namespace powerspec
