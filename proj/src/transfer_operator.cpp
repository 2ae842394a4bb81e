#include "powerspec/transfer_operator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "powerspec/error.hpp"
#include "powerspec/spectrum_mc.hpp"

namespace powerspec {

namespace {

template <class Body>
void for_rows(Exec exec, int n, Body&& body) {
  if (exec == Exec::serial) {
    for (int i = 0; i < n; ++i) {
      body(i);
    }
  } else {
#pragma omp parallel for schedule(dynamic, 4)
    for (int i = 0; i < n; ++i) {
      body(i);
    }
  }
}

double left_derivative(double z, double gamma, double scale) {
  return 1.0 + (1.0 + gamma) * scale * std::pow(z, gamma);
}

// Node values of u and its first two derivatives at y = 1/2, for the
// Taylor treatment of tail branches.
template <class T>
struct LeftJet {
  T value{};
  T d1{};
  T d2{};
};

template <class T>
LeftJet<T> left_jet(const LobattoGrid& grid, std::span<const T> u) {
  LeftJet<T> jet;
  const int n = grid.size();
  jet.value = u[n - 1];
  for (int j = 0; j < n; ++j) {
    jet.d1 += grid.d1_left()[j] * u[j];
    jet.d2 += grid.d2_left()[j] * u[j];
  }
  return jet;
}

// Interpolant of node values u at offset d from 1/2, with the tail rule.
template <class T>
T interp_at(const TwistedOperatorCache& c, std::span<const T> u, const LeftJet<T>& jet, int n, double d,
            std::vector<double>& row) {
  if (n <= c.head) {
    c.grid.basis_row(d, row);
    T acc{};
    for (int j = 0; j < c.n_nodes; ++j) {
      acc += row[j] * u[j];
    }
    return acc;
  }
  return jet.value + d * jet.d1 + 0.5 * d * d * jet.d2;
}

// Adds sum_n coef_n * l(p_n) to out for one node, where coef_n = twist[n] * weights[n - 1]:
// the row of the discretised operator.
template <class Twist>
void assemble_row(const TwistedOperatorCache& c, int i, const double* weights, Twist twist, cplx* out,
                  std::vector<double>& row) {
  const int nn = c.n_nodes;
  for (int n = 1; n <= c.head; ++n) {
    const cplx coef = twist(n) * weights[n - 1];
    c.grid.basis_row(c.preimage_offset(i, n), row);
    for (int j = 0; j < nn; ++j) {
      out[j] += coef * row[j];
    }
  }
  cplx t0 = 0.0, t1 = 0.0, t2 = 0.0;
  for (int n = c.head + 1; n <= c.r_max; ++n) {
    const double d = c.preimage_offset(i, n);
    const cplx coef = twist(n) * weights[n - 1];
    t0 += coef;
    t1 += coef * d;
    t2 += coef * (0.5 * d * d);
  }
  out[nn - 1] += t0;
  for (int j = 0; j < nn; ++j) {
    out[j] += t1 * c.grid.d1_left()[j] + t2 * c.grid.d2_left()[j];
  }
}

void check_omega(double omega) {
  if (!(omega >= 0.0 && omega <= kTwoPi)) {
    throw DomainError("frequency outside [0, 2pi]");
  }
}

}  // namespace

TwistedOperatorCache build_cache(const MapParams& p, int n_nodes, int r_max, const CacheOptions& opt) {
  p.validate();
  if (n_nodes < 16) {
    throw DomainError("build_cache: n_nodes must be at least 16");
  }
  if (r_max < 8) {
    throw DomainError("build_cache: r_max must be at least 8");
  }
  if (static_cast<std::int64_t>(n_nodes) * r_max > opt.memory_budget) {
    throw SizeError("build_cache: n_nodes * r_max exceeds the configured memory budget");
  }
  TwistedOperatorCache c{p, LobattoGrid(n_nodes, 0.5), n_nodes, r_max, 0, {}, {}, 0.0, 0.0};
  c.n_nodes = n_nodes;
  c.r_max = r_max;
  const auto total = static_cast<std::size_t>(n_nodes) * static_cast<std::size_t>(r_max);
  c.chain.assign(total, 0.0);
  c.lebesgue.assign(total, 0.0);
  const double scale = std::pow(2.0, p.gamma);

  for_rows(opt.exec, n_nodes, [&](int i) {
    double* z = c.chain.data() + c.idx(i, 0);
    double* w = c.lebesgue.data() + c.idx(i, 0);
    z[0] = c.node(i);
    w[0] = 0.5;
    for (int k = 1; k < r_max; ++k) {
      z[k] = lsv_left_inverse(z[k - 1], p);
      w[k] = w[k - 1] / left_derivative(z[k], p.gamma, scale);
    }
  });

  c.head = r_max;
  for (int n = 1; n <= r_max; ++n) {
    if (c.preimage_offset(0, n) <= opt.taylor_radius) {
      c.head = std::max(1, n - 1);
      break;
    }
  }
  for (int i = 0; i < n_nodes; ++i) {
    const double last = c.lebesgue_weight(i, r_max);
    const double est = p.gamma > 0.0 ? last * r_max * p.gamma : last;
    c.tail_mass = std::max(c.tail_mass, est);
  }
  c.tail_length = 0.5 * c.chain[c.idx(n_nodes - 1, r_max - 1)];
  return c;
}

double integrate_mu(const TwistedOperatorCache& cache, const DensityEstimate& density, std::span<const double> f) {
  double s = 0.0;
  for (int i = 0; i < cache.n_nodes; ++i) {
    s += cache.grid.quad_weights()[i] * density.h[i] * f[i];
  }
  return s;
}

DensityEstimate invariant_density(const TwistedOperatorCache& cache) {
  const int nn = cache.n_nodes;
  Eigen::MatrixXd lmat(nn, nn);
  {
    OperatorMatrix tmp = OperatorMatrix::Zero(nn, nn);
    for_rows(Exec::parallel, nn, [&](int i) {
      std::vector<double> row(static_cast<std::size_t>(nn));
      assemble_row(cache, i, cache.lebesgue.data() + cache.idx(i, 0), [](int) { return cplx(1.0); },
                   tmp.data() + static_cast<std::ptrdiff_t>(i) * nn, row);
    });
    lmat = tmp.real();
  }
  const Eigen::Map<const Eigen::VectorXd> q(cache.grid.quad_weights().data(), nn);

  DensityEstimate d;
  Eigen::VectorXd h = Eigen::VectorXd::Constant(nn, 2.0);
  h /= q.dot(h);
  constexpr int kBudget = 5000;
  double lambda = 0.0;
  for (int it = 1; it <= kBudget; ++it) {
    Eigen::VectorXd next = lmat * h;
    lambda = q.dot(next) / q.dot(h);
    next /= q.dot(next);
    const double change = (next - h).cwiseAbs().maxCoeff() / next.cwiseAbs().maxCoeff();
    h = next;
    d.iterations = it;
    if (change < 1e-15) {
      break;
    }
  }
  d.eigenvalue = lambda;
  d.eig_residual = (lmat * h - lambda * h).cwiseAbs().maxCoeff() / h.cwiseAbs().maxCoeff();
  if (!(d.eig_residual < 1e-10)) {
    throw ConvergenceError("invariant_density: power iteration did not converge (residual " +
                           std::to_string(d.eig_residual) + ")");
  }
  if (h.minCoeff() <= 0.0) {
    throw ConvergenceError("invariant_density: non-positive density value");
  }
  d.h.assign(h.data(), h.data() + nn);

  // mu_Y weights g = h(p_n) / (h(y) |F'(p_n)|).
  d.mu_weights.assign(cache.lebesgue.size(), 0.0);
  const std::span<const double> hv(d.h);
  const LeftJet<double> jet = left_jet(cache.grid, hv);
  for_rows(Exec::parallel, nn, [&](int i) {
    std::vector<double> row(static_cast<std::size_t>(nn));
    for (int n = 1; n <= cache.r_max; ++n) {
      const double hp = interp_at(cache, hv, jet, n, cache.preimage_offset(i, n), row);
      d.mu_weights[cache.idx(i, n - 1)] = cache.lebesgue_weight(i, n) * hp / d.h[i];
    }
  });
  return d;
}

PreparedObservable prepare_observable(const TwistedOperatorCache& cache, const Observable& obs) {
  PreparedObservable prep{obs, std::vector<double>(cache.chain.size()), std::vector<double>(cache.chain.size())};
  for_rows(Exec::parallel, cache.n_nodes, [&](int i) {
    for (int k = 0; k < cache.r_max; ++k) {
      const std::size_t at = cache.idx(i, k);
      prep.at_chain[at] = obs(cache.chain[at]);
      prep.at_preimage[at] = obs(cache.preimage(i, k + 1));
    }
  });
  return prep;
}

std::vector<cplx> twist_table(double omega, int count) {
  check_omega(omega);
  const bool upper = omega > std::numbers::pi;
  const double theta = upper ? kTwoPi - omega : omega;
  std::vector<cplx> t(static_cast<std::size_t>(count));
  for (int n = 0; n < count; ++n) {
    const double a = std::fmod(static_cast<double>(n) * theta, kTwoPi);
    // e^{-in theta}
    t[n] = cplx(std::cos(a), -std::sin(a));
    if (upper) {
      t[n] = std::conj(t[n]);
    }
  }
  return t;
}

std::vector<cplx> apply_twisted(const TwistedOperatorCache& cache, const DensityEstimate& density, double omega,
                                std::span<const cplx> w) {
  if (static_cast<int>(w.size()) != cache.n_nodes) {
    throw SizeError("apply_twisted: vector length differs from the node count");
  }
  const std::vector<cplx> twist = twist_table(omega, cache.r_max + 1);
  const LeftJet<cplx> jet = left_jet(cache.grid, w);
  std::vector<cplx> out(w.size());
  for_rows(Exec::parallel, cache.n_nodes, [&](int i) {
    std::vector<double> row(static_cast<std::size_t>(cache.n_nodes));
    cplx acc = 0.0;
    for (int n = 1; n <= cache.r_max; ++n) {
      const double d = cache.preimage_offset(i, n);
      if (!(d >= 0.0 && d <= 0.5)) {
        throw DomainError("apply_twisted: preimage outside Y (corrupt cache)");
      }
      acc += twist[n] * density.mu_weight(cache, i, n) * interp_at(cache, w, jet, n, d, row);
    }
    out[i] = acc;
  });
  return out;
}

std::vector<cplx> twisted_branch_values(const TwistedOperatorCache& cache, int i, double omega,
                                        const Observable& obs) {
  if (i < 0 || i >= cache.n_nodes) {
    throw DomainError("twisted_branch_values: node index out of range");
  }
  const std::vector<cplx> twist = twist_table(omega, cache.r_max + 1);
  std::vector<cplx> out(static_cast<std::size_t>(cache.r_max));
  cplx prefix = 0.0;
  for (int n = 1; n <= cache.r_max; ++n) {
    out[n - 1] = twist[n] * obs(cache.preimage(i, n)) + prefix;
    if (n < cache.r_max) {
      prefix += twist[n] * obs(cache.chain[cache.idx(i, n)]);
    }
  }
  return out;
}

std::vector<cplx> first_application(const TwistedOperatorCache& cache, const DensityEstimate& density,
                                    double omega, const Observable& obs) {
  const std::vector<cplx> twist = twist_table(omega, cache.r_max + 1);
  std::vector<cplx> out(static_cast<std::size_t>(cache.n_nodes));
  for_rows(Exec::parallel, cache.n_nodes, [&](int i) {
    // e^{-inw} V_w(p_n) = e^{-inw} v(p_n) + sum_{m=1}^{n-1} e^{-imw} v(z_m)
    cplx prefix = 0.0;
    cplx acc = 0.0;
    for (int n = 1; n <= cache.r_max; ++n) {
      const cplx w = twist[n] * obs(cache.preimage(i, n)) + prefix;
      acc += density.mu_weight(cache, i, n) * w;
      if (n < cache.r_max) {
        prefix += twist[n] * obs(cache.chain[cache.idx(i, n)]);
      }
    }
    out[i] = acc;
  });
  return out;
}

TwistedOperator::TwistedOperator(const TwistedOperatorCache& cache, const DensityEstimate& density, double omega,
                                 const PreparedObservable* obs, Exec exec)
    : cache_(&cache), density_(&density), obs_(obs), omega_(omega), exec_(exec) {
  const int nn = cache.n_nodes;
  twist_ = twist_table(omega, cache.r_max + 1);
  m_ = OperatorMatrix::Zero(nn, nn);
  OperatorMatrix pair_rows;
  std::vector<double> row_mean_square;
  if (obs_ != nullptr) {
    pair_rows = OperatorMatrix::Zero(nn, nn);
    first_ = Eigen::VectorXcd::Zero(nn);
    row_mean_square.assign(static_cast<std::size_t>(nn), 0.0);
  }
  const auto& q = cache.grid.quad_weights();

  for_rows(exec_, nn, [&](int i) {
    std::vector<double> row(static_cast<std::size_t>(nn));
    const double* g = density.mu_weights.data() + cache.idx(i, 0);
    auto twist = [&](int n) { return twist_[n]; };
    assemble_row(cache, i, g, twist, m_.data() + static_cast<std::ptrdiff_t>(i) * nn, row);
    if (obs_ == nullptr) {
      return;
    }
    const double* vz = obs_->at_chain.data() + cache.idx(i, 0);
    const double* vp = obs_->at_preimage.data() + cache.idx(i, 0);
    const double mass = q[i] * density.h[i];
    cplx prefix = 0.0;
    cplx first = 0.0;
    double ms = 0.0;
    cplx t0 = 0.0, t1 = 0.0, t2 = 0.0;
    cplx* prow = pair_rows.data() + static_cast<std::ptrdiff_t>(i) * nn;
    for (int n = 1; n <= cache.r_max; ++n) {
      const cplx w = twist_[n] * vp[n - 1] + prefix;
      first += g[n - 1] * w;
      ms += g[n - 1] * std::norm(w);
      // conj(V(p_n)) = e^{-inw} conj(w)
      const cplx coef = mass * g[n - 1] * twist_[n] * std::conj(w);
      if (n <= cache.head) {
        cache.grid.basis_row(cache.preimage_offset(i, n), row);
        for (int j = 0; j < nn; ++j) {
          prow[j] += coef * row[j];
        }
      } else {
        const double d = cache.preimage_offset(i, n);
        t0 += coef;
        t1 += coef * d;
        t2 += coef * (0.5 * d * d);
      }
      if (n < cache.r_max) {
        prefix += twist_[n] * vz[n];
      }
    }
    prow[nn - 1] += t0;
    for (int j = 0; j < nn; ++j) {
      prow[j] += t1 * cache.grid.d1_left()[j] + t2 * cache.grid.d2_left()[j];
    }
    first_[i] = first;
    row_mean_square[i] = mass * ms;
  });

  if (obs_ != nullptr) {
    Eigen::VectorXcd a = Eigen::VectorXcd::Zero(nn);
    for (int i = 0; i < nn; ++i) {
      a += pair_rows.row(i).transpose();
    }
    pairing_ = a.conjugate();
    mean_square_ = std::accumulate(row_mean_square.begin(), row_mean_square.end(), 0.0);
  }
}

double TwistedOperator::mu_norm(const Eigen::VectorXcd& w) const {
  double s = 0.0;
  for (int i = 0; i < cache_->n_nodes; ++i) {
    s += cache_->grid.quad_weights()[i] * density_->h[i] * std::norm(w[i]);
  }
  return std::sqrt(s);
}

std::vector<cplx> TwistedOperator::apply(std::span<const cplx> w) const {
  const Eigen::Map<const Eigen::VectorXcd> v(w.data(), static_cast<Eigen::Index>(w.size()));
  const Eigen::VectorXcd out = m_ * v;
  return {out.data(), out.data() + out.size()};
}

double TwistedOperator::coboundary_norm(const Eigen::VectorXcd& chi) const {
  if (obs_ == nullptr) {
    throw DomainError("coboundary_norm: operator built without an observable");
  }
  const auto& c = *cache_;
  const int nn = c.n_nodes;
  const std::span<const cplx> chis(chi.data(), static_cast<std::size_t>(nn));
  const LeftJet<cplx> jet = left_jet(c.grid, chis);
  std::vector<double> rows(static_cast<std::size_t>(nn), 0.0);
  for_rows(exec_, nn, [&](int i) {
    std::vector<double> row(static_cast<std::size_t>(nn));
    const double* g = density_->mu_weights.data() + c.idx(i, 0);
    const double* vz = obs_->at_chain.data() + c.idx(i, 0);
    const double* vp = obs_->at_preimage.data() + c.idx(i, 0);
    cplx prefix = 0.0;
    double acc = 0.0;
    for (int n = 1; n <= c.r_max; ++n) {
      const cplx w = twist_[n] * vp[n - 1] + prefix;
      const cplx chi_p = interp_at(c, chis, jet, n, c.preimage_offset(i, n), row);
      // e^{-inw} V~(p_n) = e^{-inw}V(p_n) + e^{-inw} chi(p_n) - chi(y)
      acc += g[n - 1] * std::norm(w + twist_[n] * chi_p - chis[i]);
      if (n < c.r_max) {
        prefix += twist_[n] * vz[n];
      }
    }
    rows[i] = c.grid.quad_weights()[i] * density_->h[i] * acc;
  });
  return std::accumulate(rows.begin(), rows.end(), 0.0);
}

SpectralRadius spectral_radius(const TwistedOperator& op, int max_iterations, double tol) {
  const auto& m = op.matrix();
  const Eigen::Index nn = m.rows();
  Eigen::VectorXcd w(nn);
  for (Eigen::Index j = 0; j < nn; ++j) {
    w[j] = 1.0 + 0.5 * std::cos(3.0 * static_cast<double>(j));
  }
  w.normalize();
  constexpr int kWindow = 20;
  std::vector<double> log_growth;
  log_growth.reserve(static_cast<std::size_t>(max_iterations));
  SpectralRadius out;
  cplx rq_prev = 0.0;
  int stable = 0;
  for (int it = 1; it <= max_iterations; ++it) {
    Eigen::VectorXcd y = m * w;
    const cplx rq = w.dot(y);
    const double norm = y.norm();
    out.iterations = it;
    if (norm == 0.0) {
      out.value = 0.0;
      out.converged = true;
      return out;
    }
    log_growth.push_back(std::log(norm));
    w = y / norm;
    stable = std::abs(rq - rq_prev) <= tol * std::abs(rq) ? stable + 1 : 0;
    rq_prev = rq;
    if (stable >= 3 && it >= kWindow) {
      out.converged = true;
      out.value = std::abs(rq);
      break;
    }
  }
  const std::size_t k = std::min<std::size_t>(kWindow, log_growth.size());
  out.growth_ratio = std::exp(std::accumulate(log_growth.end() - static_cast<std::ptrdiff_t>(k), log_growth.end(), 0.0) /
                              static_cast<double>(k));
  if (!out.converged) {
    // Rayleigh-Ritz on a short Krylov space from the last iterate resolves
    // dominant eigenvalues of equal modulus (e.g. conjugate pairs at w = pi).
    const int dim = static_cast<int>(std::min<Eigen::Index>(24, nn));
    Eigen::MatrixXcd basis(nn, dim + 1);
    Eigen::MatrixXcd hess = Eigen::MatrixXcd::Zero(dim + 1, dim);
    basis.col(0) = w;
    int used = dim;
    for (int j = 0; j < dim; ++j) {
      Eigen::VectorXcd v = m * basis.col(j);
      for (int pass = 0; pass < 2; ++pass) {
        for (int l = 0; l <= j; ++l) {
          const cplx hlj = basis.col(l).dot(v);
          hess(l, j) += hlj;
          v -= hlj * basis.col(l);
        }
      }
      const double beta = v.norm();
      hess(j + 1, j) = beta;
      if (beta < 1e-12 * hess.topLeftCorner(j + 1, j + 1).norm()) {
        used = j + 1;
        break;
      }
      basis.col(j + 1) = v / beta;
    }
    Eigen::ComplexEigenSolver<Eigen::MatrixXcd> es(hess.topLeftCorner(used, used), false);
    out.value = es.eigenvalues().cwiseAbs().maxCoeff();
  }
  return out;
}

SpectralRadius spectral_radius(const TwistedOperatorCache& cache, const DensityEstimate& density, double omega) {
  return spectral_radius(TwistedOperator(cache, density, omega));
}

RBar r_bar_quadrature(const TwistedOperatorCache& cache, const DensityEstimate& density) {
  RBar out;
  const double gamma = cache.params.gamma;
  std::vector<double> per_node(static_cast<std::size_t>(cache.n_nodes), 0.0);
  std::vector<double> tail(static_cast<std::size_t>(cache.n_nodes), 0.0);
  for (int i = 0; i < cache.n_nodes; ++i) {
    double s = 0.0;
    for (int n = 1; n <= cache.r_max; ++n) {
      s += n * density.mu_weight(cache, i, n);
    }
    per_node[i] = s;
    if (gamma > 0.0) {
      // Branch weights decay like n^{-1/gamma - 1}; sum_{n > R} n g_n ~ g_R R^2 gamma / (1 - gamma).
      const double r = cache.r_max;
      tail[i] = density.mu_weight(cache, i, cache.r_max) * r * r * gamma / (1.0 - gamma);
    }
  }
  const double head = integrate_mu(cache, density, per_node);
  out.tail_correction = integrate_mu(cache, density, tail);
  out.value = head + out.tail_correction;
  out.tail_warning = gamma >= 0.8;
  return out;
}

SeriesResult induced_spectrum_series(const TwistedOperator& op, const SeriesOptions& opt) {
  const double omega = op.omega();
  if (!(omega >= opt.omega_min && omega <= kTwoPi - opt.omega_min)) {
    throw GuardBandError("induced_spectrum_series: frequency inside the guard band");
  }
  SeriesResult res;
  res.omega = omega;
  const double term0 = op.mean_square();
  res.terms.push_back(term0);
  res.s_y = term0;
  res.terms_used = 1;
  Eigen::VectorXcd phi = op.first_application();
  Eigen::VectorXcd chi = Eigen::VectorXcd::Zero(phi.size());
  if (term0 == 0.0 && phi.isZero(0.0)) {
    return res;
  }
  int small = 0;
  bool stopped = false;
  for (int n = 1; n < opt.n_max_terms; ++n) {
    const double term = 2.0 * op.pair_with_conj_v(phi).real();
    res.terms.push_back(term);
    res.s_y += term;
    res.last_term = term;
    ++res.terms_used;
    chi += phi;
    // The pairing can be small while P^n V is not; chi (and hence V~) needs
    // the iterate itself to have decayed as well.
    const bool converged_term = std::abs(term) < opt.tol * std::abs(res.s_y);
    const bool converged_iterate = op.mu_norm(phi) <= opt.tol * std::sqrt(std::abs(res.s_y));
    small = converged_term && converged_iterate ? small + 1 : 0;
    if (small >= 3) {
      stopped = true;
      break;
    }
    phi = op.apply(phi);
  }
  res.truncated = !stopped;
  res.tilde_norm = op.coboundary_norm(chi);
  res.tilde_check = res.s_y != 0.0 ? std::abs(res.s_y - res.tilde_norm) / std::abs(res.s_y) : 0.0;
  return res;
}

SeriesResult induced_spectrum_series(const TwistedOperatorCache& cache, const DensityEstimate& density,
                                     double omega, const Observable& obs, const SeriesOptions& opt) {
  const PreparedObservable prep = prepare_observable(cache, obs);
  const TwistedOperator op(cache, density, omega, &prep);
  SeriesResult res = induced_spectrum_series(op, opt);
  res.r_bar_quadrature = r_bar_quadrature(cache, density).value;
  return res;
}

}  // namespace powerspec
