#pragma once

// Collocation discretisation of the twisted transfer operator
//   (P_w u)(y) = sum_n e^{-inw} g(p_n) u(p_n),   p_n = n-th branch preimage of y,
// of the first-return map F on Y = [1/2,1], and evaluation of the induced
// spectrum S^Y(w) by the operator series.
//
// Nodes are Chebyshev-Lobatto points of Y. For every node the backward chain
// z_0 = y, z_k = f_left^{-1}(z_{k-1}) is solved once; the branch-n preimage is
// p_n = (z_{n-1} + 1)/2, its forward orbit is the reversed chain, and the
// Lebesgue weight 1/|F'(p_n)| is a running product. Everything that depends on
// w is a multiply-accumulate over these cached arrays.
//
// Branches whose preimages lie within taylor_radius of 1/2 ("tail" branches)
// are interpolated by a second-order Taylor expansion about 1/2 instead of the
// full barycentric formula; this keeps per-frequency assembly at
// O(N * head * N) with head ~ 10^2 branches.

#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "powerspec/chebyshev.hpp"
#include "powerspec/dynamics.hpp"
#include "powerspec/exec.hpp"
#include "powerspec/observables.hpp"

namespace powerspec {

using OperatorMatrix = Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct CacheOptions {
  double taylor_radius = 1e-4;
  std::int64_t memory_budget = 30'000'000;  // node * branch entries
  Exec exec = Exec::parallel;
};

struct TwistedOperatorCache {
  MapParams params;
  LobattoGrid grid;
  int n_nodes = 0;
  int r_max = 0;
  int head = 0;                   // branches 1..head use full interpolation
  std::vector<double> chain;      // chain[i * r_max + k] = z_k at node i, 0 <= k < r_max
  std::vector<double> lebesgue;   // lebesgue[i * r_max + n - 1] = 1/|F'(p_n)| at node i
  double tail_mass = 0.0;         // max over nodes of the estimated weight beyond r_max
  double tail_length = 0.0;       // Lebesgue length of branches beyond r_max

  double node(int i) const { return 0.5 + grid.offsets()[i]; }
  // p_n - 1/2 at node i, n = 1..r_max.
  double preimage_offset(int i, int n) const { return 0.5 * chain[idx(i, n - 1)]; }
  double preimage(int i, int n) const { return 0.5 + preimage_offset(i, n); }
  double lebesgue_weight(int i, int n) const { return lebesgue[idx(i, n - 1)]; }
  std::size_t idx(int i, int k) const {
    return static_cast<std::size_t>(i) * static_cast<std::size_t>(r_max) + static_cast<std::size_t>(k);
  }
};

TwistedOperatorCache build_cache(const MapParams& p, int n_nodes, int r_max, const CacheOptions& opt = {});

struct DensityEstimate {
  std::vector<double> h;          // d mu_Y / dLeb at the nodes, integral 1
  double eigenvalue = 0.0;        // dominant eigenvalue of the Lebesgue operator
  double eig_residual = 0.0;      // |L h - lambda h|_inf / |h|_inf
  int iterations = 0;
  std::vector<double> mu_weights; // g(p_n) = h(p_n) / (h(y) |F'(p_n)|), same layout as cache.lebesgue

  double mu_weight(const TwistedOperatorCache& c, int i, int n) const { return mu_weights[c.idx(i, n - 1)]; }
};

DensityEstimate invariant_density(const TwistedOperatorCache& cache);

// Samples of v along every cached chain, reused across frequencies.
struct PreparedObservable {
  Observable obs;
  std::vector<double> at_chain;      // v(z_k), same layout as cache.chain
  std::vector<double> at_preimage;   // v(p_n), same layout as cache.lebesgue
};

PreparedObservable prepare_observable(const TwistedOperatorCache& cache, const Observable& obs);

// Matrix-free application of the mu_Y-normalised twisted operator to node values w.
std::vector<cplx> apply_twisted(const TwistedOperatorCache& cache, const DensityEstimate& density, double omega,
                                std::span<const cplx> w);

// (P_w V_w) at the nodes, computed branchwise without interpolating V_w.
std::vector<cplx> first_application(const TwistedOperatorCache& cache, const DensityEstimate& density,
                                    double omega, const Observable& obs);

// e^{-inw} V_w(p_n) for n = 1..r_max at node i, by the prefix recurrence along the chain.
std::vector<cplx> twisted_branch_values(const TwistedOperatorCache& cache, int i, double omega, const Observable& obs);

// e^{-inw} for n = 0..count-1, evaluated on the reduced angle min(w, 2pi - w)
// and conjugated for w > pi, so tables at w and 2pi - w are exact conjugates.
std::vector<cplx> twist_table(double omega, int count);

// P_w assembled as a dense N x N matrix for one frequency, optionally with the
// branchwise data of one observable.
class TwistedOperator {
 public:
  TwistedOperator(const TwistedOperatorCache& cache, const DensityEstimate& density, double omega,
                  const PreparedObservable* obs = nullptr, Exec exec = Exec::parallel);

  double omega() const { return omega_; }
  const OperatorMatrix& matrix() const { return m_; }
  std::vector<cplx> apply(std::span<const cplx> w) const;
  Eigen::VectorXcd apply(const Eigen::VectorXcd& w) const { return m_ * w; }

  // Observable-dependent quantities (require obs at construction).
  const Eigen::VectorXcd& first_application() const { return first_; }
  double mean_square() const { return mean_square_; }   // int |V_w|^2 d mu_Y
  // int phi conj(V_w) d mu_Y for smooth phi given by node values.
  cplx pair_with_conj_v(const Eigen::VectorXcd& phi) const { return pairing_.dot(phi); }

  // L^2(mu_Y) norm of node values by quadrature.
  double mu_norm(const Eigen::VectorXcd& w) const;

  // int |V_w + chi - e^{iwr} chi o F|^2 d mu_Y, branchwise.
  double coboundary_norm(const Eigen::VectorXcd& chi) const;

 private:
  const TwistedOperatorCache* cache_;
  const DensityEstimate* density_;
  const PreparedObservable* obs_;
  double omega_;
  Exec exec_;
  std::vector<cplx> twist_;
  OperatorMatrix m_;
  Eigen::VectorXcd first_;
  Eigen::VectorXcd pairing_;  // conjugated so that pairing_.dot(phi) = sum conj(pairing_) * phi
  double mean_square_ = 0.0;
};

struct SpectralRadius {
  double value = 0.0;
  double growth_ratio = 0.0;  // geometric-mean growth over the last 20 iterations
  int iterations = 0;
  bool converged = false;
};

SpectralRadius spectral_radius(const TwistedOperator& op, int max_iterations = 6000, double tol = 1e-12);
SpectralRadius spectral_radius(const TwistedOperatorCache& cache, const DensityEstimate& density, double omega);

struct SeriesResult {
  double omega = 0.0;
  double s_y = 0.0;
  int terms_used = 0;
  double last_term = 0.0;
  double tilde_check = 0.0;
  double tilde_norm = 0.0;           // int |V~_w|^2 d mu_Y
  double r_bar_quadrature = 0.0;
  bool truncated = false;            // n_max_terms reached without the stopping rule
  std::vector<double> terms;         // term 0 = int |V_w|^2, term n = 2 Re int P^n V conj(V)
};

struct SeriesOptions {
  double tol = 1e-8;
  int n_max_terms = 2000;
  double omega_min = 0.05;
};

SeriesResult induced_spectrum_series(const TwistedOperator& op, const SeriesOptions& opt = {});
SeriesResult induced_spectrum_series(const TwistedOperatorCache& cache, const DensityEstimate& density,
                                     double omega, const Observable& obs, const SeriesOptions& opt = {});

struct RBar {
  double value = 0.0;
  double tail_correction = 0.0;
  bool tail_warning = false;  // gamma >= 0.8: tail dominates the truncated sum
};

RBar r_bar_quadrature(const TwistedOperatorCache& cache, const DensityEstimate& density);

// Integral over Y against mu_Y of a function given at the nodes.
double integrate_mu(const TwistedOperatorCache& cache, const DensityEstimate& density, std::span<const double> f);

}  // namespace powerspec
