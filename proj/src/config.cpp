#include "egm/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#ifndef EGM_VERSION
#define EGM_VERSION "0.0.0"
#endif

namespace egm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const std::string& what) {
  throw InvalidParameter("config: key '" + key + "' = '" + value + "': " + what);
}

double to_double(const std::string& key, const std::string& v) {
  if (v == "inf" || v == "infinity") return std::numeric_limits<double>::infinity();
  std::size_t pos = 0;
  double x = 0.0;
  try {
    x = std::stod(v, &pos);
  } catch (const std::exception&) {
    bad(key, v, "not a number");
  }
  if (pos != v.size()) bad(key, v, "not a number");
  return x;
}

long long to_int(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  long long x = 0;
  try {
    x = std::stoll(v, &pos);
  } catch (const std::exception&) {
    bad(key, v, "not an integer");
  }
  if (pos != v.size()) bad(key, v, "not an integer");
  return x;
}

template <class T, class F>
std::vector<T> to_list(const std::string& key, const std::string& v, F conv) {
  std::vector<T> out;
  if (trim(v).empty()) return out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(static_cast<T>(conv(key, trim(item))));
  return out;
}

void one_of(const std::string& key, const std::string& v, std::initializer_list<const char*> allowed) {
  for (const char* a : allowed)
    if (v == a) return;
  std::string list;
  for (const char* a : allowed) list += std::string(list.empty() ? "" : ", ") + a;
  bad(key, v, "expected one of " + list);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  auto& p = model;
  if (key == "m") p.m = to_double(key, v);
  else if (key == "a") p.a = to_double(key, v);
  else if (key == "b") p.b = to_double(key, v);
  else if (key == "delta") p.delta = to_double(key, v);
  else if (key == "J") p.J = to_double(key, v);
  else if (key == "beta") p.beta = to_double(key, v);
  else if (key == "h") p.h = to_list<double>(key, v, to_double);
  else if (key == "d") p.d = static_cast<int>(to_int(key, v));
  else if (key == "nu") p.nu = static_cast<int>(to_int(key, v));
  else if (key == "dims") p.dims = to_list<int>(key, v, to_int);
  else if (key == "c") c = to_double(key, v);
  else if (key == "boundary") {
    one_of(key, v, {"periodic", "dirichlet"});
    boundary = v;
  } else if (key == "slices_per_unit") slices_per_unit = static_cast<int>(to_int(key, v));
  else if (key == "matsubara_cutoff") matsubara_cutoff = static_cast<long>(to_int(key, v));
  else if (key == "samples") {
    const auto n = to_int(key, v);
    if (n < 1) bad(key, v, "must be positive");
    samples = static_cast<std::size_t>(n);
  } else if (key == "batches") batches = static_cast<int>(to_int(key, v));
  else if (key == "seed") {
    const auto n = to_int(key, v);
    if (n < 0) bad(key, v, "must be non-negative");
    seed = static_cast<std::uint64_t>(n);
  } else if (key == "threads") threads = static_cast<int>(to_int(key, v));
  else if (key == "backend") {
    one_of(key, v, {"reweight", "mcmc"});
    backend = v;
  } else if (key == "order") order = static_cast<int>(to_int(key, v));
  else if (key == "mode") {
    one_of(key, v, {"lowT", "highT"});
    mode = v;
  } else if (key == "cluster_backend") {
    one_of(key, v, {"quadrature", "mc"});
    cluster_backend = v;
  } else if (key == "hermite_nodes") hermite_nodes = static_cast<int>(to_int(key, v));
  else if (key == "s_nodes") s_nodes = static_cast<int>(to_int(key, v));
  else if (key == "cluster_slices_per_rod") cluster_slices_per_rod = static_cast<int>(to_int(key, v));
  else if (key == "observable") observable = v;
  else if (key == "out") out = v;
  else throw InvalidParameter("config: unknown key '" + key + "'");
}

void RunConfig::validate() const {
  model.validate();
  if (!(c >= 0.0) || !std::isfinite(c)) throw InvalidParameter("config: c must be finite and >= 0");
  if (slices_per_unit < 1) throw InvalidParameter("config: slices_per_unit must be >= 1");
  if (matsubara_cutoff < 1) throw InvalidParameter("config: matsubara_cutoff must be >= 1");
  if (batches < 2) throw InvalidParameter("config: batches must be >= 2");
  if (samples < static_cast<std::size_t>(batches)) throw InvalidParameter("config: samples must be >= batches");
  if (threads < 1) throw InvalidParameter("config: threads must be >= 1");
  if (order < 1) throw InvalidParameter("config: order must be >= 1");
  if (cluster_slices_per_rod < 1) throw InvalidParameter("config: cluster_slices_per_rod must be >= 1");
  if (hermite_nodes < 1 || s_nodes < 1) throw InvalidParameter("config: quadrature node counts must be >= 1");
}

nlohmann::ordered_json RunConfig::to_json() const {
  nlohmann::ordered_json j;
  j["m"] = model.m;
  j["a"] = model.a;
  j["b"] = model.b;
  j["delta"] = model.delta;
  j["J"] = model.J;
  if (is_zero_temperature(model.beta))
    j["beta"] = "inf";
  else
    j["beta"] = model.beta;
  j["h"] = model.h;
  j["d"] = model.d;
  j["nu"] = model.nu;
  j["dims"] = model.dims;
  j["c"] = c;
  j["boundary"] = boundary;
  j["slices_per_unit"] = slices_per_unit;
  j["matsubara_cutoff"] = matsubara_cutoff;
  j["samples"] = samples;
  j["batches"] = batches;
  j["seed"] = seed;
  j["threads"] = threads;
  j["backend"] = backend;
  j["order"] = order;
  j["mode"] = mode;
  j["cluster_backend"] = cluster_backend;
  j["hermite_nodes"] = hermite_nodes;
  j["s_nodes"] = s_nodes;
  j["cluster_slices_per_rod"] = cluster_slices_per_rod;
  j["observable"] = observable;
  j["out"] = out;
  return j;
}

RunConfig parse_config(std::istream& in) {
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw InvalidParameter("config: line " + std::to_string(lineno) + " is not of the form key = value");
    cfg.set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidParameter("config: cannot open '" + path + "'");
  return parse_config(in);
}

const char* code_version() { return EGM_VERSION; }

}  // namespace egm
