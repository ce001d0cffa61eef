#include "egm/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>
#include <sstream>

#include "egm/model_params.hpp"

namespace egm {

Lattice::Lattice(int nu, std::vector<int> dims, Boundary boundary)
    : nu_(nu), dims_(std::move(dims)), boundary_(boundary) {
  if (nu_ < 1 || static_cast<int>(dims_.size()) != nu_)
    throw InvalidParameter("lattice: dims must have nu entries");
  for (int n : dims_) {
    if (n < 2 || n % 2 != 0)
      throw InvalidParameter("lattice: every side N_mu must be even (N_mu/2 in N), got " +
                             std::to_string(n));
  }
  size_ = std::accumulate(dims_.begin(), dims_.end(), std::size_t{1},
                          [](std::size_t acc, int n) { return acc * static_cast<std::size_t>(n); });
}

std::vector<int> Lattice::coords(std::size_t site) const {
  std::vector<int> c(dims_.size());
  for (std::size_t mu = dims_.size(); mu-- > 0;) {
    c[mu] = static_cast<int>(site % dims_[mu]);
    site /= dims_[mu];
  }
  return c;
}

std::size_t Lattice::index(const std::vector<int>& c) const {
  std::size_t flat = 0;
  for (std::size_t mu = 0; mu < dims_.size(); ++mu) flat = flat * dims_[mu] + c[mu];
  return flat;
}

std::vector<std::size_t> Lattice::neighbors(std::size_t site) const {
  std::vector<std::size_t> out;
  auto c = coords(site);
  for (std::size_t mu = 0; mu < dims_.size(); ++mu) {
    for (int step : {-1, +1}) {
      auto nb = c;
      nb[mu] += step;
      if (boundary_ == Boundary::Periodic) {
        nb[mu] = (nb[mu] + dims_[mu]) % dims_[mu];
      } else if (nb[mu] < 0 || nb[mu] >= dims_[mu]) {
        continue;
      }
      out.push_back(index(nb));
    }
  }
  return out;
}

int Lattice::outside_neighbor_count(std::size_t site) const {
  if (boundary_ == Boundary::Periodic) return 0;
  auto c = coords(site);
  int count = 0;
  for (std::size_t mu = 0; mu < dims_.size(); ++mu) {
    if (c[mu] == 0) ++count;
    if (c[mu] == dims_[mu] - 1) ++count;
  }
  return count;
}

std::vector<std::size_t> Lattice::boundary_sites() const {
  std::vector<std::size_t> out;
  for (std::size_t s = 0; s < size_; ++s)
    if (outside_neighbor_count(s) > 0) out.push_back(s);
  return out;
}

std::size_t Lattice::center() const {
  std::vector<int> c(dims_.size());
  for (std::size_t mu = 0; mu < dims_.size(); ++mu) c[mu] = dims_[mu] / 2;
  return index(c);
}

double dispersion(const std::vector<double>& k, double a, double J) {
  double eps = a;
  for (double km : k) {
    const double s = std::sin(0.5 * km);
    eps += 4.0 * J * s * s;
  }
  return eps;
}

std::vector<DualMode> dual_modes(const Lattice& lat, double a, double J) {
  if (lat.boundary() != Boundary::Periodic)
    throw InvalidParameter("dual_modes: Dirichlet boxes use sine modes, not plane waves");
  std::vector<DualMode> modes(lat.size());
  const auto& dims = lat.dims();
  for (std::size_t flat = 0; flat < lat.size(); ++flat) {
    auto c = lat.coords(flat);
    DualMode& dm = modes[flat];
    dm.k.resize(dims.size());
    dm.n.resize(dims.size());
    for (std::size_t mu = 0; mu < dims.size(); ++mu) {
      // map residue c in [0, N) onto the window {-N/2 + 1, ..., N/2}
      int n = c[mu] > dims[mu] / 2 ? c[mu] - dims[mu] : c[mu];
      dm.n[mu] = n;
      dm.k[mu] = 2.0 * M_PI * n / dims[mu];
    }
    dm.eps = dispersion(dm.k, a, J);
    dm.lam = std::sqrt(dm.eps);
  }
  return modes;
}

int torus_distance(const Lattice& lat, std::size_t i, std::size_t j) {
  auto ci = lat.coords(i);
  auto cj = lat.coords(j);
  int dist = 0;
  for (std::size_t mu = 0; mu < ci.size(); ++mu) {
    int dx = std::abs(ci[mu] - cj[mu]);
    if (lat.boundary() == Boundary::Periodic) dx = std::min(dx, lat.dims()[mu] - dx);
    dist += dx;
  }
  return dist;
}

std::size_t RodPartition::rod_of(std::size_t site, double tau) const {
  if (mode == RodMode::HighTemperature) return site;
  int t = static_cast<int>(std::floor(tau));
  t = std::clamp(t, 0, rods_per_site - 1);
  return site * rods_per_site + t;
}

std::size_t RodPartition::rod_of_slice(std::size_t site, int slice, int slices) const {
  if (mode == RodMode::HighTemperature) return site;
  const double tau = beta_hat * slice / slices;
  // slices sit exactly on unit boundaries when slices_per_unit is an integer;
  // the small shift keeps rounding from pushing tau = k onto rod k - 1
  return rod_of(site, tau + 1e-9);
}

RodPartition rod_partition(const Lattice& lat, double beta_hat, RodMode mode) {
  RodPartition rp;
  rp.mode = mode;
  rp.n_sites = lat.size();
  rp.beta_hat = beta_hat;
  if (!(beta_hat > 0.0) || !std::isfinite(beta_hat))
    throw InvalidParameter("rod_partition: beta_hat must be positive and finite");
  if (mode == RodMode::LowTemperature) {
    const double r = std::round(beta_hat);
    if (std::abs(r - beta_hat) > 1e-12 || r < 1.0) {
      std::ostringstream os;
      os << "rod_partition: low temperature rods need an integer beta_hat, got " << beta_hat;
      throw InvalidParameter(os.str());
    }
    rp.rods_per_site = static_cast<int>(r);
  } else {
    rp.rods_per_site = 1;
  }
  rp.rods.reserve(lat.size() * rp.rods_per_site);
  for (std::size_t s = 0; s < lat.size(); ++s)
    for (int t = 0; t < rp.rods_per_site; ++t) rp.rods.push_back(Rod{s, t});
  return rp;
}

}  // namespace egm
