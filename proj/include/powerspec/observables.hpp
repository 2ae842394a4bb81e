#pragma once

#include <cmath>
#include <complex>
#include <span>
#include <string>
#include <vector>

#include "powerspec/dynamics.hpp"

namespace powerspec {

using cplx = std::complex<double>;

enum class ObservableKind { cosine_basis, power_vanishing, constant, tabulated };

std::string to_string(ObservableKind kind);
ObservableKind observable_kind_from_string(const std::string& name);

// Real observable v : [0,1] -> R.
//
//   cosine_basis     v(x) = sum_k coeffs[k] cos(2 pi k x), k = 0..K
//   power_vanishing  v(x) = coeffs[0] * x^eta   (coeffs defaults to {1})
//   constant         v(x) = coeffs[0]
//   tabulated        linear interpolation of coeffs on a uniform grid of [0,1]
//
// eta is the Holder exponent carried as metadata (and the power for
// power_vanishing).
class Observable {
 public:
  Observable() = default;
  Observable(ObservableKind kind, std::vector<double> coeffs, double eta = 1.0);

  static Observable cosine(std::vector<double> coeffs, double eta = 1.0) {
    return {ObservableKind::cosine_basis, std::move(coeffs), eta};
  }
  static Observable power(double eta, double scale = 1.0) {
    return {ObservableKind::power_vanishing, {scale}, eta};
  }
  static Observable constant(double c) { return {ObservableKind::constant, {c}, 1.0}; }
  static Observable tabulated(std::vector<double> values, double eta = 1.0) {
    return {ObservableKind::tabulated, std::move(values), eta};
  }

  ObservableKind kind() const { return kind_; }
  double eta() const { return eta_; }
  const std::vector<double>& coeffs() const { return coeffs_; }

  double operator()(double x) const {
    switch (kind_) {
      case ObservableKind::cosine_basis:
        return eval_cosine(x);
      case ObservableKind::power_vanishing:
        return coeffs_[0] * std::pow(x, eta_);
      case ObservableKind::constant:
        return coeffs_[0];
      case ObservableKind::tabulated:
        return eval_table(x);
    }
    return 0.0;
  }

  // True when v vanishes identically (all coefficients zero).
  bool is_zero() const;

  // Grid estimates on 2^16 + 1 uniform points; the sup norm is computed once
  // at construction.
  double sup_norm() const { return sup_norm_; }
  double holder_seminorm() const;

 private:
  double eval_cosine(double x) const;
  double eval_table(double x) const;

  ObservableKind kind_ = ObservableKind::constant;
  std::vector<double> coeffs_{0.0};
  double eta_ = 1.0;
  double sup_norm_ = 0.0;

  double grid_sup_norm() const;
};

struct InducedValue {
  cplx v_omega;
  double v_star = 0.0;
  std::int64_t r = 0;
};

// V_w(y) = sum_{l<r} e^{ilw} v(f^l y) over one excursion, with V*_w the
// largest prefix modulus. The phasor is advanced multiplicatively and
// re-anchored to exp(i l w) every 1024 steps.
InducedValue eval_induced(const Observable& obs, const ReturnBlock& block, double omega);
InducedValue eval_induced(const Observable& obs, std::span<const double> orbit, double omega);

struct BoundCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds() const { return lhs <= rhs; }
};

// |V_w1(y) - V_w0(y)| against 2 |v|_inf r^2 |w1 - w0|.
BoundCheck omega_continuity_bound(const Observable& obs, const ReturnBlock& block, double omega0,
                                  double omega1);

// 2|c| / |1 - e^{iw}|; dominates V*_w of the constant observable c on every block.
double constant_observable_bound(double omega, double c);

inline constexpr int kPhasorAnchor = 1024;

}  // namespace powerspec
