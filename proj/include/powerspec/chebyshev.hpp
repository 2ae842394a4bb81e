#pragma once

#include <span>
#include <vector>

namespace powerspec {

// Chebyshev-Lobatto collocation on an interval [a, a + len], with positions
// stored as offsets from the left end a. Node 0 is the right end; node
// n-1 is the left end (offset 0). Keeping offsets avoids cancellation for
// points that accumulate at the left end.
class LobattoGrid {
 public:
  LobattoGrid(int n, double len);

  int size() const { return static_cast<int>(offsets_.size()); }
  double length() const { return len_; }
  const std::vector<double>& offsets() const { return offsets_; }
  const std::vector<double>& quad_weights() const { return quad_; }
  const std::vector<double>& bary_weights() const { return bary_; }

  // Lagrange basis values l_j(a + d) for all j, written to row (size n).
  void basis_row(double d, std::span<double> row) const;

  // Interpolant value at offset d.
  template <class T>
  T interpolate(std::span<const T> values, double d) const {
    T num{};
    double den = 0.0;
    for (int j = 0; j < size(); ++j) {
      const double diff = d - offsets_[j];
      if (diff == 0.0) {
        return values[j];
      }
      const double q = bary_[j] / diff;
      num += q * values[j];
      den += q;
    }
    return num / den;
  }

  // Rows of the first and second differentiation matrices at the left end.
  const std::vector<double>& d1_left() const { return d1_left_; }
  const std::vector<double>& d2_left() const { return d2_left_; }

 private:
  double len_;
  std::vector<double> offsets_;
  std::vector<double> quad_;
  std::vector<double> bary_;
  std::vector<double> d1_left_;
  std::vector<double> d2_left_;
};

}  // namespace powerspec
