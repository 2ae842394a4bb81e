#pragma once

// LSV intermittent map f(x) = x(1 + 2^g x^g) on [0,1/2), 2x - 1 on [1/2,1],
// its first-return structure on Y = [1/2,1], and seeded orbit generation.

#include <cmath>
#include <cstdint>
#include <vector>

#include "powerspec/rng.hpp"

namespace powerspec {

struct MapParams {
  double gamma = 0.5;
  double newton_tol = 1e-13;   // relative residual bound for left-branch inversion
  std::int64_t r_cap = 1'000'000;

  // Throws DomainError unless 0 <= gamma < 1, newton_tol > 0, r_cap >= 2.
  void validate() const;
};

inline constexpr double kYLower = 0.5;

double lsv_apply(double x, const MapParams& p);
double lsv_derivative(double x, const MapParams& p);

// Unique x in [0,1/2] with x(1 + 2^g x^g) = z. Accepts z in [0,1]; z = 1 maps
// to the closure point 1/2 of the left branch.
double lsv_left_inverse(double z, const MapParams& p);

// Countable partition of Y truncated at n_max branches. Index n refers to
// return time n; xi[0] = 1 is a sentinel so branch n is
// [boundaries_in_y[n], boundaries_in_y[n-1]) with boundaries_in_y[n] = (xi[n] + 1)/2.
struct BranchTable {
  double gamma = 0.0;
  std::vector<double> xi;               // xi[1] = 1/2, f(xi[n+1]) = xi[n]
  std::vector<double> boundaries_in_y;  // boundaries_in_y[0] = 1, decreasing toward 1/2
  int n_max = 0;
  double tail_length = 0.0;             // Lebesgue length of the branches beyond n_max

  // Return time of y read off the table; 0 if y lies in the truncated tail.
  int branch_of(double y) const;
};

BranchTable build_branch_table(const MapParams& p, int n_max);

struct ReturnBlock {
  double base = 0.0;
  std::int64_t r = 0;
  std::vector<double> orbit;  // f^l(base), 0 <= l < r
  double log_deriv = 0.0;     // log |F'(base)|
};

// Iterates f from y in Y until the orbit re-enters Y. Throws CapError past r_cap.
ReturnBlock return_block(double y, const MapParams& p);

// Seeded forward orbit of f from a uniform random start.
//
// For gamma = 0 the state is a 64-bit shift register holding the binary
// expansion of x; each step shifts in a fresh random bit, so the orbit is an
// exact doubling-map orbit of a random real rather than the floating-point
// iteration (which reaches 0 after ~53 steps). For gamma > 0 the map is
// iterated in double precision; landing exactly on a fixed point (0 or 1)
// redraws the state and is counted in reseeds().
class Orbit {
 public:
  Orbit(const MapParams& p, std::uint64_t seed, std::uint64_t stream);

  double current() const { return x_; }
  inline double next();
  void skip(std::uint64_t n);
  std::uint64_t reseeds() const { return reseeds_; }

 private:
  MapParams params_;
  Philox4x32 rng_;
  double x_ = 0.0;
  double scale_ = 0.0;   // 2^gamma
  bool doubling_ = false;
  std::uint64_t reg_ = 0;
  std::uint64_t bits_ = 0;
  int bits_left_ = 0;
  std::uint64_t reseeds_ = 0;
};

inline double Orbit::next() {
  if (doubling_) {
    if (bits_left_ == 0) {
      bits_ = rng_();
      bits_left_ = 64;
    }
    reg_ = (reg_ << 1) | (bits_ & 1u);
    bits_ >>= 1;
    --bits_left_;
    x_ = static_cast<double>(reg_ >> 11) * 0x1.0p-53;
    return x_;
  }
  x_ = x_ < kYLower ? x_ * (1.0 + scale_ * std::pow(x_, params_.gamma)) : 2.0 * x_ - 1.0;
  if (x_ == 0.0 || x_ >= 1.0) {
    x_ = rng_.uniform();
    ++reseeds_;
  }
  return x_;
}

// Deterministic given (seed, stream): burn_in iterates are discarded and the
// next n returned.
std::vector<double> sample_trajectory(std::uint64_t seed, std::size_t n, std::size_t burn_in,
                                      const MapParams& p, std::uint64_t stream = 0);

// Successive excursions from Y along one orbit, starting at the first visit
// to Y after burn-in. Blocks longer than r_cap are dropped and counted.
class ReturnStream {
 public:
  ReturnStream(const MapParams& p, std::uint64_t seed, std::uint64_t stream, std::size_t burn_in);

  // Fills block (orbit only if record_orbit) and returns its return time.
  std::int64_t next(ReturnBlock& block, bool record_orbit = true);
  std::int64_t next_return_time();

  std::uint64_t rejected() const { return rejected_; }
  std::uint64_t reseeds() const { return orbit_.reseeds(); }

 private:
  MapParams params_;
  Orbit orbit_;
  std::uint64_t rejected_ = 0;
};

}  // namespace powerspec
