#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "egm/model_params.hpp"

namespace egm {

/// Everything a run reads from the flat key = value file. Unknown keys are
/// rejected. Schema (defaults in brackets):
///   m [1] a [1] b [0.5] delta [1] J [0.25] beta [2, or "inf"] h [empty, comma list]
///   d [1] nu [1] dims [2, comma list]
///   c [1]                    constant of the partition-function ratio bound
///   boundary [periodic]      periodic | dirichlet
///   slices_per_unit [8] matsubara_cutoff [50000] samples [100000] batches [50]
///   seed [1] threads [1] backend [reweight]  reweight | mcmc
///   order [3] mode [lowT]    lowT | highT
///   cluster_backend [quadrature]  quadrature | mc
///   hermite_nodes [20] s_nodes [8] cluster_slices_per_rod [1]
///   observable [phi[0,0]*phi[0,0]]
///   out [.]
struct RunConfig {
  ModelParams model;
  double c = 1.0;
  std::string boundary = "periodic";
  int slices_per_unit = 8;
  long matsubara_cutoff = 50000;
  std::size_t samples = 100000;
  int batches = 50;
  std::uint64_t seed = 1;
  int threads = 1;
  std::string backend = "reweight";
  int order = 3;
  std::string mode = "lowT";
  std::string cluster_backend = "quadrature";
  int hermite_nodes = 20;
  int s_nodes = 8;
  int cluster_slices_per_rod = 1;
  std::string observable = "phi[0,0]*phi[0,0]";
  std::string out = ".";

  /// Sets one key from its text value; throws InvalidParameter on unknown
  /// keys or malformed values.
  void set(const std::string& key, const std::string& value);
  /// Model invariants plus the knob ranges.
  void validate() const;
  nlohmann::ordered_json to_json() const;
};

RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::string& path);

/// Version string recorded in every manifest.
const char* code_version();

}  // namespace egm
