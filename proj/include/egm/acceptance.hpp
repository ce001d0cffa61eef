#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace egm {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
  double budget = 0.0;  // seconds; exceeding it fails the criterion
};

struct AcceptanceOptions {
  std::uint64_t seed = 20240601;
  int threads = 1;
  std::vector<int> only;  // empty: all twelve
};

/// The twelve acceptance checks on their pinned desk-scale instances.
CriterionResult run_criterion(int id, const AcceptanceOptions& opts);
std::vector<CriterionResult> run_acceptance(const AcceptanceOptions& opts);

/// "[PASS] 07 newton-leibniz  (12.3 s / 60 s)  detail"
std::string format_result(const CriterionResult& r);

}  // namespace egm
