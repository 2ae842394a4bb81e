#include "powerspec/chebyshev.hpp"

#include <cmath>
#include <numbers>

#include "powerspec/error.hpp"

namespace powerspec {

LobattoGrid::LobattoGrid(int n, double len) : len_(len) {
  if (n < 2) {
    throw DomainError("LobattoGrid: need at least 2 nodes");
  }
  const int m = n - 1;
  const double pi = std::numbers::pi;
  offsets_.resize(n);
  bary_.resize(n);
  quad_.resize(n);
  for (int j = 0; j < n; ++j) {
    // (1 + cos t)/2 = cos^2(t/2), evaluated without cancellation near t = pi.
    const double c = std::cos(0.5 * pi * j / m);
    offsets_[j] = len * c * c;
    bary_[j] = (j % 2 == 0 ? 1.0 : -1.0) * ((j == 0 || j == m) ? 0.5 : 1.0);
  }
  // Clenshaw-Curtis weights on [-1,1], scaled to the interval.
  for (int j = 0; j < n; ++j) {
    const double theta = pi * j / m;
    double s = 0.0;
    for (int k = 1; 2 * k <= m; ++k) {
      const double b = (2 * k == m) ? 1.0 : 2.0;
      s += b / (4.0 * k * k - 1.0) * std::cos(2.0 * k * theta);
    }
    const double c = (j == 0 || j == m) ? 1.0 : 2.0;
    quad_[j] = c / m * (1.0 - s) * 0.5 * len;
  }
  // Differentiation rows: D_kj = (b_j/b_k)/(x_k - x_j), D_kk = -sum_{j != k} D_kj.
  std::vector<double> dmat(static_cast<std::size_t>(n) * n, 0.0);
  for (int k = 0; k < n; ++k) {
    double diag = 0.0;
    for (int j = 0; j < n; ++j) {
      if (j == k) continue;
      const double v = (bary_[j] / bary_[k]) / (offsets_[k] - offsets_[j]);
      dmat[static_cast<std::size_t>(k) * n + j] = v;
      diag -= v;
    }
    dmat[static_cast<std::size_t>(k) * n + k] = diag;
  }
  d1_left_.assign(dmat.begin() + static_cast<std::ptrdiff_t>(m) * n, dmat.end());
  d2_left_.assign(n, 0.0);
  for (int k = 0; k < n; ++k) {
    const double dk = d1_left_[k];
    for (int j = 0; j < n; ++j) {
      d2_left_[j] += dk * dmat[static_cast<std::size_t>(k) * n + j];
    }
  }
}

void LobattoGrid::basis_row(double d, std::span<double> row) const {
  const int n = size();
  double den = 0.0;
  for (int j = 0; j < n; ++j) {
    const double diff = d - offsets_[j];
    if (diff == 0.0) {
      for (int i = 0; i < n; ++i) row[i] = 0.0;
      row[j] = 1.0;
      return;
    }
    row[j] = bary_[j] / diff;
    den += row[j];
  }
  const double inv = 1.0 / den;
  for (int j = 0; j < n; ++j) {
    row[j] *= inv;
  }
}

}  // namespace powerspec
