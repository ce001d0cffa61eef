#pragma once

#include <cstddef>
#include <vector>

namespace egm {

enum class Boundary { Periodic, Dirichlet };

/// Cubic box of side lengths `dims` in `nu` dimensions. Sites are stored
/// row-major with coordinates x_mu in [0, N_mu); for periodic boxes this is
/// the torus Z^nu / (N_1 Z x ... x N_nu Z).
class Lattice {
 public:
  Lattice(int nu, std::vector<int> dims, Boundary boundary = Boundary::Periodic);

  int nu() const { return nu_; }
  const std::vector<int>& dims() const { return dims_; }
  Boundary boundary() const { return boundary_; }
  std::size_t size() const { return size_; }

  std::vector<int> coords(std::size_t site) const;
  std::size_t index(const std::vector<int>& coords) const;

  /// Nearest neighbours inside the box (periodic wraparound when periodic;
  /// a neighbour reached through both directions of a length-2 side is
  /// listed twice, matching the doubled bond of the N = 2 torus).
  std::vector<std::size_t> neighbors(std::size_t site) const;

  /// Number of outside neighbours of a site (always 0 for periodic boxes).
  int outside_neighbor_count(std::size_t site) const;

  /// Sites with at least one neighbour outside the box.
  std::vector<std::size_t> boundary_sites() const;

  /// Center site (coordinate N_mu / 2 along every axis).
  std::size_t center() const;

 private:
  int nu_;
  std::vector<int> dims_;
  Boundary boundary_;
  std::size_t size_;
};

/// One plane-wave mode of the periodic box with its dispersion value.
struct DualMode {
  std::vector<double> k;
  std::vector<int> n;  // integer labels, k = 2 pi n / N
  double eps = 0.0;
  double lam = 0.0;  // sqrt(eps)
};

/// a + 4 J sum_mu sin^2(k_mu / 2).
double dispersion(const std::vector<double>& k, double a, double J);

/// All |Lambda| modes with n_mu in {-N_mu/2 + 1, ..., N_mu/2}, ordered like
/// the site enumeration (row-major over n mod N). Throws for Dirichlet boxes.
std::vector<DualMode> dual_modes(const Lattice& lat, double a, double J);

/// Graph distance: torus distance for periodic boxes, Manhattan distance for
/// Dirichlet boxes.
int torus_distance(const Lattice& lat, std::size_t i, std::size_t j);

enum class RodMode { LowTemperature, HighTemperature };

/// A space-time cell: one site times one unit of imaginary time (low
/// temperature) or one site times the whole circle (high temperature).
struct Rod {
  std::size_t site = 0;
  int time_index = 0;
};

struct RodPartition {
  RodMode mode = RodMode::LowTemperature;
  std::size_t n_sites = 0;
  int rods_per_site = 1;
  double beta_hat = 1.0;
  std::vector<Rod> rods;

  /// Rod index containing (site, tau) with tau in [0, beta_hat).
  std::size_t rod_of(std::size_t site, double tau) const;
  /// Rod index of a grid point (site, slice) on an M-slice time grid.
  std::size_t rod_of_slice(std::size_t site, int slice, int slices) const;
};

/// Low temperature mode requires an integer beta_hat and cuts each time circle
/// into unit intervals; high temperature mode uses one rod per site.
RodPartition rod_partition(const Lattice& lat, double beta_hat, RodMode mode);

}  // namespace egm
