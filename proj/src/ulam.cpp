#include "powerspec/ulam.hpp"

#include <algorithm>
#include <cmath>

#include "powerspec/error.hpp"

namespace powerspec {

double UlamDensity::at(double y) const {
  if (!(y >= edges.front() && y <= edges.back())) {
    throw DomainError("UlamDensity::at: point outside Y");
  }
  const auto it = std::upper_bound(edges.begin(), edges.end(), y);
  const auto k = std::clamp<std::ptrdiff_t>(it - edges.begin() - 1, 0, static_cast<std::ptrdiff_t>(h.size()) - 1);
  return h[static_cast<std::size_t>(k)];
}

UlamDensity ulam_density(const MapParams& p, int bins, int r_max) {
  p.validate();
  if (bins < 2 || r_max < 1) {
    throw DomainError("ulam_density: need at least 2 bins and 1 branch");
  }
  UlamDensity out;
  out.edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int k = 0; k <= bins; ++k) {
    out.edges[k] = 0.5 + 0.5 * static_cast<double>(k) / bins;
  }
  const double width = 0.5 / bins;

  // chains[k][n-1] = z_{n-1} at edge k; branch-n preimage of edge k is (z_{n-1}+1)/2.
  std::vector<std::vector<double>> chains(static_cast<std::size_t>(bins) + 1);
  for (int k = 0; k <= bins; ++k) {
    auto& c = chains[k];
    c.resize(static_cast<std::size_t>(r_max));
    c[0] = out.edges[k];
    for (int n = 1; n < r_max; ++n) {
      c[n] = lsv_left_inverse(c[n - 1], p);
    }
  }

  struct Entry {
    int from;
    int to;
    double w;
  };
  std::vector<Entry> entries;
  std::vector<double> row_sum(static_cast<std::size_t>(bins), 0.0);
  for (int k = 0; k < bins; ++k) {
    for (int n = 0; n < r_max; ++n) {
      // Preimage of bin k under branch n+1, as offsets from 1/2 (exact halving).
      const double lo = 0.5 * chains[k][n];
      const double hi = 0.5 * chains[k + 1][n];
      const int jlo = std::min(bins - 1, static_cast<int>(lo / width));
      const int jhi = std::min(bins - 1, static_cast<int>(hi / width));
      for (int j = jlo; j <= jhi; ++j) {
        const double a = std::max(lo, j * width);
        const double b = std::min(hi, (j + 1) * width);
        if (b > a) {
          const double w = (b - a) / width;
          entries.push_back({j, k, w});
          row_sum[j] += w;
        }
      }
    }
  }
  for (double s : row_sum) {
    out.lost_mass = std::max(out.lost_mass, 1.0 - s);
  }

  std::vector<double> pi(static_cast<std::size_t>(bins), 1.0 / bins);
  std::vector<double> next(pi.size());
  constexpr int kBudget = 20000;
  for (int it = 1; it <= kBudget; ++it) {
    std::fill(next.begin(), next.end(), 0.0);
    for (const auto& e : entries) {
      next[e.to] += pi[e.from] * e.w;
    }
    double total = 0.0;
    for (double x : next) {
      total += x;
    }
    double change = 0.0;
    for (std::size_t k = 0; k < next.size(); ++k) {
      next[k] /= total;
      change = std::max(change, std::abs(next[k] - pi[k]));
    }
    pi.swap(next);
    out.iterations = it;
    out.residual = change * bins;
    if (out.residual < 1e-13) {
      break;
    }
  }
  if (!(out.residual < 1e-9)) {
    throw ConvergenceError("ulam_density: iteration did not converge");
  }
  out.h.resize(pi.size());
  for (std::size_t k = 0; k < pi.size(); ++k) {
    out.h[k] = pi[k] / width;
  }
  return out;
}

}  // namespace powerspec
