#include "egm/covariance.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <sstream>

#include "egm/model_params.hpp"
#include "egm/quadrature.hpp"
#include "fftw_lock.hpp"

namespace egm {

namespace detail {

std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace detail

namespace {

using detail::fftw_planner_mutex;

double reduce_tau(double tau, double beta_hat) {
  if (is_zero_temperature(beta_hat)) return std::abs(tau);
  double t = std::fmod(tau, beta_hat);
  if (t < 0.0) t += beta_hat;
  return t;
}

}  // namespace

double mode_factor(double lam, double tau, double beta_hat) {
  if (is_zero_temperature(beta_hat)) return std::exp(-std::abs(tau) * lam) / (2.0 * lam);
  const double t = reduce_tau(tau, beta_hat);
  // divide numerator and denominator by e^{beta lam} for stability
  const double num = std::exp(-t * lam) + std::exp(-(beta_hat - t) * lam);
  return num / (2.0 * lam * (-std::expm1(-beta_hat * lam)));
}

CovarianceKernel::CovarianceKernel(Lattice lattice, double a, double J, double beta_hat)
    : lattice_(std::move(lattice)), a_(a), J_(J), beta_hat_(beta_hat) {
  if (!(a_ > 0.0)) throw InvalidParameter("covariance: a must be positive");
  if (!(J_ >= 0.0)) throw InvalidParameter("covariance: J must be nonnegative");
  if (!(beta_hat_ > 0.0)) throw InvalidParameter("covariance: beta_hat must be positive");
  const std::size_t n = lattice_.size();
  if (lattice_.boundary() == Boundary::Periodic) {
    auto modes = dual_modes(lattice_, a_, J_);
    for (auto& m : modes) {
      eps_.push_back(m.eps);
      lam_.push_back(m.lam);
      k_.push_back(m.k);
    }
  } else {
    const auto& dims = lattice_.dims();
    eps_.resize(n);
    lam_.resize(n);
    psi_.assign(n * n, 1.0);
    // mode multi-index q_mu in {1..N_mu}, stored with the same row-major layout
    for (std::size_t m = 0; m < n; ++m) {
      auto q = lattice_.coords(m);
      double eps = a_;
      for (std::size_t mu = 0; mu < dims.size(); ++mu) {
        const double s = std::sin(M_PI * (q[mu] + 1) / (2.0 * (dims[mu] + 1)));
        eps += 4.0 * J_ * s * s;
      }
      eps_[m] = eps;
      lam_[m] = std::sqrt(eps);
      for (std::size_t j = 0; j < n; ++j) {
        auto c = lattice_.coords(j);
        double amp = 1.0;
        for (std::size_t mu = 0; mu < dims.size(); ++mu) {
          const double L = dims[mu] + 1.0;
          amp *= std::sqrt(2.0 / L) * std::sin(M_PI * (q[mu] + 1) * (c[mu] + 1) / L);
        }
        psi_[m * n + j] = amp;
      }
    }
  }
}

bool CovarianceKernel::zero_temperature() const { return is_zero_temperature(beta_hat_); }

double CovarianceKernel::mode_amplitude(std::size_t m, std::size_t site) const {
  if (boundary() == Boundary::Dirichlet) return psi_[m * lattice_.size() + site];
  // real basis is not needed for the periodic box; return the cosine part
  auto c = lattice_.coords(site);
  double phase = 0.0;
  for (std::size_t mu = 0; mu < c.size(); ++mu) phase += k_[m][mu] * c[mu];
  return std::cos(phase) / std::sqrt(static_cast<double>(lattice_.size()));
}

double CovarianceKernel::closed(std::size_t j, std::size_t k, double tau) const {
  const std::size_t n = lattice_.size();
  double sum = 0.0;
  if (boundary() == Boundary::Periodic) {
    auto cj = lattice_.coords(j);
    auto ck = lattice_.coords(k);
    for (std::size_t m = 0; m < n; ++m) {
      double phase = 0.0;
      for (std::size_t mu = 0; mu < cj.size(); ++mu) phase += (cj[mu] - ck[mu]) * k_[m][mu];
      sum += std::cos(phase) * mode_factor(lam_[m], tau, beta_hat_);
    }
    return sum / static_cast<double>(n);
  }
  for (std::size_t m = 0; m < n; ++m)
    sum += psi_[m * n + j] * psi_[m * n + k] * mode_factor(lam_[m], tau, beta_hat_);
  return sum;
}

double CovarianceKernel::matsubara(std::size_t j, std::size_t k, double tau, long n_max) const {
  if (zero_temperature())
    throw InvalidParameter("matsubara: the series needs finite beta_hat; use the closed form");
  if (n_max < 1) throw InvalidParameter("matsubara: n_max must be >= 1");
  const std::size_t n = lattice_.size();
  const double t = reduce_tau(tau, beta_hat_);
  const double w = 2.0 * M_PI / beta_hat_;
  auto temporal = [&](double eps) {
    double acc = 0.0;
    for (long q = n_max; q >= 1; --q) {
      const double om = w * static_cast<double>(q);
      acc += std::cos(om * t) / (om * om + eps);
    }
    return (1.0 / eps + 2.0 * acc) / beta_hat_;
  };
  double sum = 0.0;
  if (boundary() == Boundary::Periodic) {
    auto cj = lattice_.coords(j);
    auto ck = lattice_.coords(k);
    for (std::size_t m = 0; m < n; ++m) {
      double phase = 0.0;
      for (std::size_t mu = 0; mu < cj.size(); ++mu) phase += (cj[mu] - ck[mu]) * k_[m][mu];
      sum += std::cos(phase) * temporal(eps_[m]);
    }
    return sum / static_cast<double>(n);
  }
  for (std::size_t m = 0; m < n; ++m) sum += psi_[m * n + j] * psi_[m * n + k] * temporal(eps_[m]);
  return sum;
}

std::vector<double> CovarianceKernel::closed_fft_row(double tau) const {
  if (boundary() != Boundary::Periodic)
    throw InvalidParameter("closed_fft_row: only periodic boxes are diagonalised by the FFT");
  const std::size_t n = lattice_.size();
  auto* buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
  for (std::size_t m = 0; m < n; ++m) {
    buf[m][0] = mode_factor(lam_[m], tau, beta_hat_) / static_cast<double>(n);
    buf[m][1] = 0.0;
  }
  std::vector<int> dims(lattice_.dims().begin(), lattice_.dims().end());
  fftw_plan plan;
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    plan = fftw_plan_dft(static_cast<int>(dims.size()), dims.data(), buf, buf, FFTW_BACKWARD,
                         FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  std::vector<double> row(n);
  for (std::size_t j = 0; j < n; ++j) row[j] = buf[j][0];
  {
    std::lock_guard<std::mutex> lock(fftw_planner_mutex());
    fftw_destroy_plan(plan);
  }
  fftw_free(buf);
  return row;
}

double CovarianceKernel::integrated_pair(std::size_t i, std::size_t j, int order,
                                         int panels) const {
  if (zero_temperature())
    throw InvalidParameter("integrated_pair: needs finite beta_hat");
  auto rule = composite_gauss_legendre(order, panels, 0.0, beta_hat_);
  double acc = 0.0;
  for (std::size_t q = 0; q < rule.nodes.size(); ++q)
    acc += rule.weights[q] * closed(i, j, rule.nodes[q]);
  return acc;
}

double CovarianceKernel::integrated_sum(int order, int panels) const {
  if (zero_temperature())
    throw InvalidParameter("integrated_sum: needs finite beta_hat");
  if (boundary() != Boundary::Periodic)
    throw InvalidParameter("integrated_sum: defined for periodic boxes");
  auto rule = composite_gauss_legendre(order, panels, 0.0, beta_hat_);
  // sum over j first, then over tau (two independent summation orders would
  // agree; the row comes from the direct mode sum)
  double acc = 0.0;
  const std::size_t n = lattice_.size();
  for (std::size_t q = 0; q < rule.nodes.size(); ++q) {
    double row = 0.0;
    for (std::size_t j = 0; j < n; ++j) row += closed(0, j, rule.nodes[q]);
    acc += rule.weights[q] * row;
  }
  return acc;
}

double integrated_covariance_CG(const CovarianceKernel& kern) {
  if (kern.boundary() != Boundary::Periodic)
    throw InvalidParameter("C_G is defined for the periodic kernel");
  return 1.0 / kern.a();
}

double harmonic_partition_function(const CovarianceKernel& kern, int d) {
  if (kern.zero_temperature())
    throw InvalidParameter("harmonic_partition_function: beta_hat must be finite");
  double acc = 0.0;
  for (std::size_t m = 0; m < kern.mode_count(); ++m) {
    const double x = kern.beta_hat() * std::sqrt(kern.mode_eps(m));
    acc += std::log1p(-std::exp(-x));
  }
  return -static_cast<double>(d) * acc;
}

int slices_for(double beta_hat, int slices_per_unit) {
  if (!std::isfinite(beta_hat)) throw InvalidParameter("slices_for: beta_hat must be finite");
  const int m = static_cast<int>(std::lround(beta_hat * slices_per_unit));
  return std::max(2, m);
}

GridKernel::GridKernel(const CovarianceKernel& kern, int slices) {
  if (slices < 2) throw InvalidParameter("grid kernel needs at least 2 slices");
  if (kern.zero_temperature()) throw InvalidParameter("grid kernel needs finite beta_hat");
  grid_.n_sites = kern.lattice().size();
  grid_.slices = slices;
  grid_.beta_hat = kern.beta_hat();
  const std::size_t n = grid_.n_sites;
  table_.resize(n * n * slices);
  const double dt = grid_.dtau();
  if (kern.boundary() == Boundary::Periodic) {
    // translation invariance: fill from the rows G(0, r; tau)
    std::vector<std::vector<double>> rows(slices);
    for (int i = 0; i < slices; ++i) {
      rows[i].resize(n);
      for (std::size_t r = 0; r < n; ++r) rows[i][r] = kern.closed(0, r, i * dt);
    }
    const auto& lat = kern.lattice();
    for (std::size_t j = 0; j < n; ++j) {
      auto cj = lat.coords(j);
      for (std::size_t k = 0; k < n; ++k) {
        auto ck = lat.coords(k);
        std::vector<int> diff(cj.size());
        for (std::size_t mu = 0; mu < cj.size(); ++mu)
          diff[mu] = ((ck[mu] - cj[mu]) % lat.dims()[mu] + lat.dims()[mu]) % lat.dims()[mu];
        const std::size_t r = lat.index(diff);
        for (int i = 0; i < slices; ++i) table_[(j * n + k) * slices + i] = rows[i][r];
      }
    }
  } else {
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = j; k < n; ++k)
        for (int i = 0; i < slices; ++i) {
          const double v = kern.closed(j, k, i * dt);
          table_[(j * n + k) * slices + i] = v;
          table_[(k * n + j) * slices + i] = v;
        }
  }
}

double GridKernel::operator()(std::size_t p, std::size_t q) const {
  const std::size_t n = grid_.n_sites;
  const int m = grid_.slices;
  const std::size_t j = p / m, k = q / m;
  int di = static_cast<int>(p % m) - static_cast<int>(q % m);
  if (di < 0) di += m;
  return table_[(j * n + k) * m + di];
}

Eigen::MatrixXd GridKernel::matrix(const std::vector<std::size_t>& points) const {
  const auto n = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd out(n, n);
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b <= a; ++b) {
      const double v = (*this)(points[a], points[b]);
      out(a, b) = v;
      out(b, a) = v;
    }
  return out;
}

double p_function(int l, int m, const std::vector<double>& s) {
  if (l == m) return 1.0;
  if (l > m) std::swap(l, m);
  double prod = 1.0;
  for (int i = l; i < m; ++i) prod *= s.at(static_cast<std::size_t>(i));
  return prod;
}

InterpolatedCovariance::InterpolatedCovariance(const GridKernel& base,
                                               std::vector<std::vector<std::size_t>> rods,
                                               std::vector<double> s)
    : base_(&base), rods_(std::move(rods)), s_(std::move(s)) {
  if (s_.size() != rods_.size())
    throw InvalidParameter("interpolated covariance: need one s per listed rod");
  for (double v : s_)
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidParameter("interpolation parameters must lie in [0,1]");
  block_.assign(base.grid().size(), static_cast<int>(rods_.size()));
  for (std::size_t r = 0; r < rods_.size(); ++r)
    for (std::size_t p : rods_[r]) {
      if (block_.at(p) != static_cast<int>(rods_.size()))
        throw InvalidParameter("interpolated covariance: rods must be disjoint");
      block_[p] = static_cast<int>(r);
    }
}

double InterpolatedCovariance::operator()(std::size_t p, std::size_t q) const {
  return (*base_)(p, q) * p_function(block_[p], block_[q], s_);
}

Eigen::MatrixXd InterpolatedCovariance::matrix(const std::vector<std::size_t>& points) const {
  Eigen::MatrixXd out = base_->matrix(points);
  const auto n = static_cast<Eigen::Index>(points.size());
  for (Eigen::Index a = 0; a < n; ++a)
    for (Eigen::Index b = 0; b < n; ++b)
      out(a, b) *= p_function(block_[points[a]], block_[points[b]], s_);
  return out;
}

std::vector<BlockTerm> convex_decomposition(const std::vector<double>& s) {
  const std::size_t n = s.size();
  if (n > 12) {
    std::ostringstream os;
    os << "convex_decomposition: " << n << " interpolation parameters exceed the cap of 12";
    throw InvalidParameter(os.str());
  }
  std::vector<BlockTerm> terms;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    // bit i set: link i is cut (weight 1 - s_i)
    double w = 1.0;
    for (std::size_t i = 0; i < n; ++i) w *= (mask >> i & 1u) ? 1.0 - s[i] : s[i];
    if (w == 0.0) continue;
    BlockTerm t;
    t.weight = w;
    t.groups.push_back({0});
    for (std::size_t i = 0; i < n; ++i) {
      if (mask >> i & 1u) t.groups.push_back({});
      t.groups.back().push_back(static_cast<int>(i + 1));
    }
    terms.push_back(std::move(t));
  }
  return terms;
}

double reconstruct_from_decomposition(const std::vector<BlockTerm>& terms,
                                      const InterpolatedCovariance& ic, std::size_t p,
                                      std::size_t q) {
  const int bp = ic.block_of(p), bq = ic.block_of(q);
  double acc = 0.0;
  for (const auto& t : terms) {
    for (const auto& g : t.groups) {
      const bool has_p = std::find(g.begin(), g.end(), bp) != g.end();
      const bool has_q = std::find(g.begin(), g.end(), bq) != g.end();
      if (has_p && has_q) {
        acc += t.weight;
        break;
      }
    }
  }
  return acc * ic.base()(p, q);
}

}  // namespace egm
