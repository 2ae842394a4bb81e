#pragma once

// Ulam discretisation of the induced transfer operator: a low-order,
// independent check on the collocation density.

#include <vector>

#include "powerspec/dynamics.hpp"

namespace powerspec {

struct UlamDensity {
  std::vector<double> edges;  // bin edges of Y, size bins + 1
  std::vector<double> h;      // density of mu_Y per bin, integral 1
  double lost_mass = 0.0;     // row-sum deficit from truncating at r_max branches (max over bins)
  int iterations = 0;
  double residual = 0.0;

  double at(double y) const;
};

UlamDensity ulam_density(const MapParams& p, int bins, int r_max);

}  // namespace powerspec
