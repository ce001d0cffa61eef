// One line per acceptance criterion; exit status is the number of failures.
#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <string>

#include "egm/acceptance.hpp"

int main(int argc, char** argv) {
  egm::AcceptanceOptions opts;
  for (int i = 1; i < argc; ++i) opts.only.push_back(std::atoi(argv[i]));
  int failures = 0;
  for (int id = 1; id <= 12; ++id) {
    if (!opts.only.empty() && std::find(opts.only.begin(), opts.only.end(), id) == opts.only.end()) continue;
    const auto r = egm::run_criterion(id, opts);
    std::printf("%s\n", egm::format_result(r).c_str());
    std::fflush(stdout);
    failures += r.pass ? 0 : 1;
  }
  return failures;
}
