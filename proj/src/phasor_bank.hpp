#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "powerspec/observables.hpp"
#include "powerspec/spectrum_mc.hpp"

namespace powerspec::detail {

// Simultaneous single-frequency DFT accumulators, one rotating phasor per
// frequency. Structure-of-arrays so the inner frequency loop vectorises.
class PhasorBank {
 public:
  explicit PhasorBank(std::span<const double> omegas)
      : omegas_(omegas.begin(), omegas.end()),
        step_re_(omegas.size()),
        step_im_(omegas.size()),
        ph_re_(omegas.size()),
        ph_im_(omegas.size()),
        acc_re_(omegas.size()),
        acc_im_(omegas.size()) {
    for (std::size_t k = 0; k < omegas_.size(); ++k) {
      step_re_[k] = std::cos(omegas_[k]);
      step_im_[k] = std::sin(omegas_[k]);
    }
    reset();
  }

  void reset() {
    std::fill(ph_re_.begin(), ph_re_.end(), 1.0);
    std::fill(ph_im_.begin(), ph_im_.end(), 0.0);
    std::fill(acc_re_.begin(), acc_re_.end(), 0.0);
    std::fill(acc_im_.begin(), acc_im_.end(), 0.0);
    count_ = 0;
  }

  void add(std::span<const double> xs) {
    const std::size_t nf = omegas_.size();
    double* __restrict pr = ph_re_.data();
    double* __restrict pi = ph_im_.data();
    double* __restrict ar = acc_re_.data();
    double* __restrict ai = acc_im_.data();
    const double* __restrict sr = step_re_.data();
    const double* __restrict si = step_im_.data();
    std::size_t i = 0;
    while (i < xs.size()) {
      if (count_ > 0 && count_ % kPhasorAnchor == 0) {
        reanchor();
      }
      const std::size_t run = std::min<std::size_t>(xs.size() - i, kPhasorAnchor - count_ % kPhasorAnchor);
      for (std::size_t j = 0; j < run; ++j) {
        const double v = xs[i + j];
        for (std::size_t k = 0; k < nf; ++k) {
          ar[k] += v * pr[k];
          ai[k] += v * pi[k];
          const double t = pr[k] * sr[k] - pi[k] * si[k];
          pi[k] = pr[k] * si[k] + pi[k] * sr[k];
          pr[k] = t;
        }
      }
      count_ += run;
      i += run;
    }
  }

  cplx sum(std::size_t k) const { return {acc_re_[k], acc_im_[k]}; }

  // (1/count) |sum|^2
  double power(std::size_t k) const {
    return (acc_re_[k] * acc_re_[k] + acc_im_[k] * acc_im_[k]) / static_cast<double>(count_);
  }

  std::size_t count() const { return count_; }
  std::size_t size() const { return omegas_.size(); }

 private:
  void reanchor() {
    const double j = static_cast<double>(count_);
    for (std::size_t k = 0; k < omegas_.size(); ++k) {
      const double phase = std::fmod(j * omegas_[k], kTwoPi);
      ph_re_[k] = std::cos(phase);
      ph_im_[k] = std::sin(phase);
    }
  }

  std::vector<double> omegas_;
  std::vector<double> step_re_, step_im_;
  std::vector<double> ph_re_, ph_im_;
  std::vector<double> acc_re_, acc_im_;
  std::size_t count_ = 0;
};

}  // namespace powerspec::detail
