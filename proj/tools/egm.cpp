// egm: command-line front end. Every run writes <subcommand>.<ext> and
// <subcommand>.manifest.json into the output directory and echoes the result
// to stdout. Errors go to stderr as JSON with a nonzero exit status.
#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "egm/acceptance.hpp"
#include "egm/cluster.hpp"
#include "egm/config.hpp"
#include "egm/covariance.hpp"
#include "egm/lattice.hpp"
#include "egm/model_params.hpp"
#include "egm/oracle.hpp"
#include "egm/potential.hpp"
#include "egm/sampler.hpp"

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

struct Globals {
  std::string config;
  std::string out;
  long long seed = -1;
  int threads = 0;
  std::vector<std::string> sets;
};

// Per-subcommand flags that are plain config keys; empty means not given.
using Overrides = std::vector<std::pair<std::string, std::string>>;

egm::RunConfig build_config(const Globals& g, const Overrides& ov) {
  egm::RunConfig cfg = g.config.empty() ? egm::RunConfig{} : egm::load_config(g.config);
  for (const auto& kv : g.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw egm::InvalidParameter("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  for (const auto& [k, v] : ov)
    if (!v.empty()) cfg.set(k, v);
  if (!g.out.empty()) cfg.out = g.out;
  if (g.seed >= 0) cfg.set("seed", std::to_string(g.seed));
  if (g.threads > 0) cfg.threads = g.threads;
  cfg.validate();
  return cfg;
}

std::vector<double> parse_doubles(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t pos = 0;
    double x = 0.0;
    try {
      x = std::stod(item, &pos);
    } catch (const std::exception&) {
      throw egm::InvalidParameter("not a number list: '" + text + "'");
    }
    if (pos != item.size()) throw egm::InvalidParameter("not a number list: '" + text + "'");
    v.push_back(x);
  }
  if (v.empty()) throw egm::InvalidParameter("empty number list");
  return v;
}

std::vector<int> parse_ints(const std::string& text) {
  std::vector<int> v;
  for (double x : parse_doubles(text)) {
    if (x != static_cast<int>(x)) throw egm::InvalidParameter("not an integer list: '" + text + "'");
    v.push_back(static_cast<int>(x));
  }
  return v;
}

std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void emit(const egm::RunConfig& cfg, const std::string& sub, const std::string& ext,
          const std::string& body, const json& arguments) {
  fs::create_directories(cfg.out);
  const fs::path result = fs::path(cfg.out) / (sub + "." + ext);
  {
    std::ofstream f(result, std::ios::binary);
    f << body;
  }
  json m;
  m["subcommand"] = sub;
  m["code_version"] = egm::code_version();
  m["seed"] = cfg.seed;
  m["arguments"] = arguments;
  m["config"] = cfg.to_json();
  m["result"] = result.filename().string();
  std::ofstream f(fs::path(cfg.out) / (sub + ".manifest.json"), std::ios::binary);
  f << m.dump(2) << "\n";
  std::cout << body;
}

void emit_json(const egm::RunConfig& cfg, const std::string& sub, const json& j, const json& arguments) {
  emit(cfg, sub, "json", j.dump(2) + "\n", arguments);
}

egm::Lattice make_lattice(const egm::RunConfig& cfg, bool force_dirichlet = false) {
  const auto b = force_dirichlet || cfg.boundary == "dirichlet" ? egm::Boundary::Dirichlet
                                                                : egm::Boundary::Periodic;
  return egm::Lattice(cfg.model.nu, cfg.model.dims, b);
}

egm::SamplerSettings sampler_settings(const egm::RunConfig& cfg) {
  egm::SamplerSettings s;
  s.samples = cfg.samples;
  s.seed = cfg.seed;
  s.backend = cfg.backend == "mcmc" ? egm::Backend::MCMC : egm::Backend::Reweight;
  s.batches = cfg.batches;
  s.threads = cfg.threads;
  return s;
}

json estimate_json(const egm::EstimatorResult& r) {
  json j;
  j["mean"] = r.mean;
  j["stderr"] = r.stderr_;
  j["n"] = r.n_samples;
  j["ess"] = r.effective_sample_size;
  j["seed"] = r.seed;
  if (!r.warnings.empty()) j["warnings"] = r.warnings;
  return j;
}

double finite_beta_hat(const egm::RescaledParams& r) {
  if (!std::isfinite(r.beta_hat))
    throw egm::InvalidParameter("this subcommand needs a finite beta (grid sampling)");
  return r.beta_hat;
}

// --- subcommands ------------------------------------------------------------------

void cmd_thresholds(const egm::RunConfig& cfg) {
  const auto t = egm::compute_thresholds(cfg.model, cfg.c);
  json j;
  j["m_star"] = t.m_star;
  j["beta_star"] = t.beta_star;
  j["m_star_h"] = t.m_star_h;
  j["epsilon_m"] = t.epsilon_m;
  j["C_G"] = t.C_G;
  j["c"] = t.c;
  emit_json(cfg, "thresholds", j, json::object());
}

void cmd_covariance(const egm::RunConfig& cfg, const std::string& tau_grid) {
  const auto r = egm::rescale(cfg.model);
  const egm::CovarianceKernel kern(make_lattice(cfg), cfg.model.a, cfg.model.J, r.beta_hat);
  const auto taus = parse_doubles(tau_grid);
  std::ostringstream os;
  os << "j,tau,G_matsubara,G_closed,abs_diff\n";
  for (std::size_t j = 0; j < kern.lattice().size(); ++j)
    for (double tau : taus) {
      const double gm = kern.matsubara(0, j, tau, cfg.matsubara_cutoff);
      const double gc = kern.closed(0, j, tau);
      os << j << "," << format_double(tau) << "," << format_double(gm) << "," << format_double(gc)
         << "," << format_double(std::abs(gm - gc)) << "\n";
    }
  emit(cfg, "covariance", "csv", os.str(), json{{"tau_grid", tau_grid}});
}

void cmd_sample(const egm::RunConfig& cfg, const std::string& bc_text) {
  const auto r = egm::rescale(cfg.model);
  const double bh = finite_beta_hat(r);
  const bool dirichlet = bc_text != "periodic";
  const egm::CovarianceKernel kern(make_lattice(cfg, dirichlet), cfg.model.a, cfg.model.J, bh);
  egm::MeasureSpec spec;
  spec.kern = &kern;
  spec.slices = egm::slices_for(bh, cfg.slices_per_unit);
  spec.d = cfg.model.d;
  spec.pot = {r.b_m, r.delta_m, cfg.model.d};
  spec.h_hat = r.h_hat;
  if (bc_text == "periodic") {
    if (cfg.boundary == "dirichlet")
      throw egm::InvalidParameter("--bc periodic needs boundary = periodic");
    spec.bc = egm::BoundaryCondition::periodic();
  } else if (bc_text == "zero") {
    spec.bc = egm::BoundaryCondition::zero();
  } else if (bc_text.rfind("tempered:", 0) == 0) {
    spec.bc = egm::read_tempered_csv(bc_text.substr(9), kern.lattice(), spec.slices, spec.d, bh);
    egm::check_tempered(spec.bc, kern.lattice(), cfg.model.a, 0.5 * std::sqrt(cfg.model.a));
  } else {
    throw egm::InvalidParameter("--bc must be periodic, zero or tempered:FILE, got '" + bc_text + "'");
  }
  const auto obs = egm::Observable::parse(cfg.observable);
  const auto res = egm::expectation([&obs](const egm::FieldConfiguration& phi) { return obs(phi); },
                                    spec, sampler_settings(cfg));
  emit_json(cfg, "sample", estimate_json(res), json{{"bc", bc_text}, {"slices", spec.slices}});
}

json tree_json(const egm::Tree& t) {
  json j;
  j["eta"] = t.to_string();
  std::vector<int> inc = t.incidence(), ex = t.s_exponents();
  j["incidence"] = std::vector<int>(inc.begin() + 1, inc.end());
  j["s_exponents"] = ex.size() > 1 ? std::vector<int>(ex.begin() + 1, ex.end()) : std::vector<int>{};
  return j;
}

json estimate_json(const egm::ClusterEstimate& e) {
  json j;
  j["value"] = e.value;
  j["stderr"] = e.stderr_;
  if (!e.warnings.empty()) j["warnings"] = e.warnings;
  return j;
}

void cmd_cluster(const egm::RunConfig& cfg, const std::string& check) {
  json out;
  out["check"] = check;
  if (check == "trees") {
    for (int n = 1; n <= cfg.order; ++n) {
      json level;
      level["n"] = n;
      json trees = json::array();
      for (const auto& t : egm::enumerate_trees(n)) trees.push_back(tree_json(t));
      level["count"] = trees.size();
      level["trees"] = trees;
      out["orders"].push_back(level);
    }
    emit_json(cfg, "cluster", out, json{{"check", check}});
    return;
  }
  if (check == "bf") {
    for (int n = 1; n <= cfg.order; ++n) {
      const auto r = egm::battle_federbush_sum(n);
      json row;
      row["n"] = n;
      row["sum"] = r.sum.str();
      row["bound"] = r.bound.str();
      row["within"] = r.within;
      row["ratio"] = r.ratio;
      row["plain_sum"] = r.plain_sum.str();
      row["plain_within_e_n"] = r.plain_within;
      out["orders"].push_back(row);
    }
    emit_json(cfg, "cluster", out, json{{"check", check}});
    return;
  }
  if (check != "newton-leibniz" && check != "residuals")
    throw egm::InvalidParameter("--check must be trees, bf, newton-leibniz or residuals");
  if (cfg.model.d != 1) throw egm::InvalidParameter("cluster engine supports d = 1 only");
  const auto r = egm::rescale(cfg.model);
  const double bh = finite_beta_hat(r);
  if (cfg.boundary != "periodic") throw egm::InvalidParameter("cluster engine needs a periodic box");
  const egm::CovarianceKernel kern(make_lattice(cfg), cfg.model.a, cfg.model.J, bh);
  const auto mode = cfg.mode == "highT" ? egm::RodMode::HighTemperature : egm::RodMode::LowTemperature;
  const egm::ClusterGrid grid(kern, mode, cfg.cluster_slices_per_rod);
  const auto a = egm::PointMonomial::from_observable(egm::Observable::parse(cfg.observable), grid);
  const egm::PotentialParams pot{r.b_m, r.delta_m, 1};
  egm::ClusterSettings st;
  st.backend = cfg.cluster_backend == "mc" ? egm::ClusterBackend::MonteCarlo : egm::ClusterBackend::Quadrature;
  st.s_nodes = cfg.s_nodes;
  st.hermite_nodes = cfg.hermite_nodes;
  st.samples = cfg.samples;
  st.batches = cfg.batches;
  st.seed = cfg.seed;
  st.threads = cfg.threads;
  out["points"] = grid.n_points();
  out["rods"] = grid.rod_count();
  if (check == "newton-leibniz") {
    st.backend = egm::ClusterBackend::MonteCarlo;
    const auto nl = egm::newton_leibniz_check(a, grid, pot, st);
    out["total"] = {{"value", nl.total}, {"stderr", nl.total_err}};
    out["finite_difference"] = {{"value", nl.fd}, {"stderr", nl.fd_err}};
    out["integration_by_parts"] = {{"value", nl.ibp}, {"stderr", nl.ibp_err}};
    out["first_term"] = nl.first_term;
    out["direct"] = nl.direct;
    out["z_T"] = nl.z_t;
  } else {
    const auto rep = egm::truncated_expansion(a, cfg.order, grid, pot, st);
    for (std::size_t i = 0; i < rep.orders.size(); ++i) {
      json row;
      row["n"] = rep.orders[i].n;
      row["contribution"] = estimate_json(rep.orders[i].value);
      row["sequences"] = rep.orders[i].sequences;
      row["partial_sum"] = rep.partial_sums[i];
      row["residual"] = rep.residuals[i];
      row["residual_stderr"] = rep.residual_errors[i];
      out["orders"].push_back(row);
    }
    out["direct"] = estimate_json(rep.direct);
  }
  emit_json(cfg, "cluster", out, json{{"check", check}});
}

void cmd_oracle(const egm::RunConfig& cfg, int sites, int grid, double extent, const std::string& tau_grid) {
  if (sites != 1 && sites != 2) throw egm::InvalidParameter("--sites must be 1 or 2");
  if (cfg.model.d != 1) throw egm::InvalidParameter("spectral oracle supports d = 1 only");
  const auto r = egm::rescale(cfg.model);
  const double bh = finite_beta_hat(r);
  egm::OracleParams p;
  p.a = cfg.model.a;
  p.J = sites == 1 ? 0.0 : cfg.model.J;
  p.b_m = r.b_m;
  p.delta_m = r.delta_m;
  p.sites = sites;
  p.grid = grid;
  p.extent = extent;
  const egm::GridHamiltonian H(p);
  std::ostringstream os;
  os << "tau,correlation\n";
  for (double tau : parse_doubles(tau_grid))
    os << format_double(tau) << "," << format_double(egm::thermal_correlation(H, bh, tau)) << "\n";
  emit(cfg, "oracle", "csv", os.str(),
       json{{"sites", sites}, {"grid", grid}, {"extent", extent}, {"tau_grid", tau_grid}});
}

void cmd_uniqueness(const egm::RunConfig& cfg, double xi, double eta, const std::string& sizes, double tau0) {
  const auto r = egm::rescale(cfg.model);
  const auto rows = egm::uniqueness_gap(xi, eta, parse_ints(sizes), cfg.model.a, cfg.model.J, r.b_m,
                                        r.delta_m, finite_beta_hat(r), cfg.slices_per_unit, tau0,
                                        sampler_settings(cfg));
  json out;
  out["xi"] = xi;
  out["eta"] = eta;
  out["tau0"] = tau0;
  for (const auto& row : rows) {
    json j;
    j["N"] = row.n;
    j["distance_to_boundary"] = row.distance_to_boundary;
    j["gaussian_part"] = row.gaussian_part;
    j["gap"] = estimate_json(row.gap);
    out["rows"].push_back(j);
  }
  emit_json(cfg, "uniqueness", out, json{{"xi", xi}, {"eta", eta}, {"sizes", sizes}, {"tau0", tau0}});
}

void cmd_order_param(const egm::RunConfig& cfg, const std::string& h_list, const std::string& sizes) {
  const auto& p = cfg.model;
  if (!std::isfinite(p.beta)) throw egm::InvalidParameter("order-param needs a finite beta");
  const auto rows = egm::order_parameter(parse_doubles(h_list), parse_ints(sizes), p.m, p.a, p.b, p.delta,
                                         p.J, p.beta, cfg.slices_per_unit, sampler_settings(cfg));
  json out;
  for (const auto& row : rows) {
    json j;
    j["sites"] = row.sites;
    j["h"] = row.h;
    j["sigma"] = estimate_json(row.sigma);
    out["rows"].push_back(j);
  }
  emit_json(cfg, "order-param", out, json{{"field", h_list}, {"sizes", sizes}});
}

int cmd_verify(const egm::RunConfig& cfg, const std::vector<int>& only, bool seed_given) {
  egm::AcceptanceOptions opts;
  if (seed_given) opts.seed = cfg.seed;
  opts.threads = cfg.threads;
  json out;
  int failures = 0;
  for (int id = 1; id <= 12; ++id) {
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto r = egm::run_criterion(id, opts);
    std::cout << egm::format_result(r) << std::endl;
    json j;
    j["id"] = r.id;
    j["name"] = r.name;
    j["pass"] = r.pass;
    j["detail"] = r.detail;
    out["criteria"].push_back(j);
    failures += r.pass ? 0 : 1;
  }
  out["failures"] = failures;
  fs::create_directories(cfg.out);
  std::ofstream(fs::path(cfg.out) / "verify.json", std::ios::binary) << out.dump(2) << "\n";
  json m;
  m["subcommand"] = "verify";
  m["code_version"] = egm::code_version();
  m["seed"] = opts.seed;
  m["arguments"] = json{{"only", only}};
  m["config"] = cfg.to_json();
  m["result"] = "verify.json";
  std::ofstream(fs::path(cfg.out) / "verify.manifest.json", std::ios::binary) << m.dump(2) << "\n";
  return failures == 0 ? 0 : 1;
}

int cmd_verify_potential(const egm::RunConfig& cfg, int n_max, double lo, double hi, double step) {
  const auto r = egm::rescale(cfg.model);
  const egm::PotentialParams pot{r.b_m, r.delta_m, 1};
  const auto grid = egm::uniform_grid(lo, hi, step);
  json out;
  out["b_m"] = r.b_m;
  out["delta_m"] = r.delta_m;
  bool all = true;
  std::printf("%-4s %-24s %-24s %s\n", "n", "worst ratio (X^(n))", "worst ratio (e^X)^(n)", "result");
  for (int n = 0; n <= n_max; ++n) {
    const auto c = egm::derivative_bound_check(n, grid, pot);
    all = all && c.pass;
    std::printf("%-4d %-24.6g %-24.6g %s\n", n, c.worst_ratio_prototype, c.worst_ratio_exponential,
                c.pass ? "PASS" : "FAIL");
    json row;
    row["n"] = n;
    row["worst_ratio_prototype"] = c.worst_ratio_prototype;
    row["worst_ratio_exponential"] = c.worst_ratio_exponential;
    row["pass"] = c.pass;
    for (const auto& v : c.first_violations)
      row["violations"].push_back({{"bound", v.which}, {"n", v.n}, {"x", v.x}, {"lhs", v.lhs}, {"rhs", v.rhs}});
    out["rows"].push_back(row);
  }
  out["pass"] = all;
  fs::create_directories(cfg.out);
  std::ofstream(fs::path(cfg.out) / "verify-potential.json", std::ios::binary) << out.dump(2) << "\n";
  json m;
  m["subcommand"] = "verify potential";
  m["code_version"] = egm::code_version();
  m["seed"] = cfg.seed;
  m["arguments"] = json{{"n_max", n_max}, {"lo", lo}, {"hi", hi}, {"step", step}};
  m["config"] = cfg.to_json();
  m["result"] = "verify-potential.json";
  std::ofstream(fs::path(cfg.out) / "verify-potential.manifest.json", std::ios::binary) << m.dump(2) << "\n";
  return all ? 0 : 1;
}

int fail(const std::string& type, const std::string& message, int code) {
  json e;
  e["error"] = {{"type", type}, {"message", message}};
  std::cerr << e.dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Euclidean Gibbs measure simulator and verifier"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config, "flat key = value config file");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--seed", g.seed, "random seed");
  app.add_option("--threads", g.threads, "worker threads");
  app.add_option("--set", g.sets, "override a config key (key=value), repeatable");

  Overrides ov;
  auto key_flag = [&ov](CLI::App* sub, const std::string& flag, const std::string& key, const std::string& help) {
    ov.emplace_back(key, "");
    const std::size_t slot = ov.size() - 1;
    sub->add_option_function<std::string>(flag, [&ov, slot](const std::string& v) { ov[slot].second = v; }, help);
  };

  auto* thr = app.add_subcommand("thresholds", "closed-form thresholds as JSON");

  auto* cov = app.add_subcommand("covariance", "Matsubara vs closed covariance as CSV");
  std::string cov_taus = "0,0.25,0.5,1";
  cov->add_option("--tau-grid", cov_taus, "comma list of tau values");
  key_flag(cov, "--n-max", "matsubara_cutoff", "Matsubara cutoff");
  key_flag(cov, "--nu", "nu", "lattice dimension");
  key_flag(cov, "--dims", "dims", "box sides, comma list");
  key_flag(cov, "--boundary", "boundary", "periodic | dirichlet");

  auto* smp = app.add_subcommand("sample", "expectation of an observable under the Gibbs measure");
  std::string bc = "periodic";
  smp->add_option("--bc", bc, "periodic | zero | tempered:FILE");
  key_flag(smp, "--samples", "samples", "sample count");
  key_flag(smp, "--slices-per-unit", "slices_per_unit", "time slices per unit of beta_hat");
  key_flag(smp, "--backend", "backend", "reweight | mcmc");
  key_flag(smp, "--observable", "observable", "product of phi[j,tau,alpha] factors");
  key_flag(smp, "--nu", "nu", "lattice dimension");
  key_flag(smp, "--dims", "dims", "box sides, comma list");
  key_flag(smp, "--boundary", "boundary", "periodic | dirichlet");

  auto* clu = app.add_subcommand("cluster", "cluster expansion checks as JSON");
  std::string check = "residuals";
  clu->add_option("--check", check, "trees | bf | newton-leibniz | residuals");
  key_flag(clu, "--order", "order", "maximal order");
  key_flag(clu, "--mode", "mode", "lowT | highT");
  key_flag(clu, "--observable", "observable", "product of phi[j,tau] factors");
  key_flag(clu, "--backend", "cluster_backend", "quadrature | mc");

  auto* orc = app.add_subcommand("oracle", "spectral-oracle imaginary-time correlation as CSV");
  int sites = 1, grid = 512;
  double extent = 8.0;
  std::string orc_taus = "0,0.5,1";
  orc->add_option("--sites", sites, "1 or 2");
  orc->add_option("--grid", grid, "grid points per site");
  orc->add_option("--extent", extent, "grid covers [-extent, extent]");
  orc->add_option("--tau-grid", orc_taus, "comma list of tau values");

  auto* uni = app.add_subcommand("uniqueness", "boundary-condition gap on Dirichlet chains");
  double xi = 1.0, eta = 0.0, tau0 = 0.0;
  std::string uni_sizes = "8,16,32";
  uni->add_option("--xi", xi, "outside configuration of the first measure");
  uni->add_option("--eta", eta, "outside configuration of the second measure");
  uni->add_option("--sizes", uni_sizes, "chain lengths, comma list");
  uni->add_option("--tau0", tau0, "time of the observed field");
  key_flag(uni, "--samples", "samples", "sample count");

  auto* ord = app.add_subcommand("order-param", "order parameter sigma(Lambda, h)");
  std::string h_list = "-0.1,0,0.1", ord_sizes = "16";
  ord->add_option("--field", h_list, "field strengths h, comma list");
  ord->add_option("--sizes", ord_sizes, "chain lengths, comma list");
  key_flag(ord, "--samples", "samples", "sample count");

  auto* ver = app.add_subcommand("verify", "acceptance table (or `verify potential`)");
  std::vector<int> only;
  ver->add_option("--only", only, "criterion ids to run");
  auto* vpot = ver->add_subcommand("potential", "derivative-bound table");
  int n_max = 10;
  double lo = -5.0, hi = 5.0, step = 0.01;
  vpot->add_option("--n-max", n_max, "largest derivative order");
  vpot->add_option("--lo", lo, "grid start");
  vpot->add_option("--hi", hi, "grid end");
  vpot->add_option("--step", step, "grid step");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail("usage", e.what(), 2);
  }

  try {
    const auto cfg = build_config(g, ov);
    if (*thr) cmd_thresholds(cfg);
    else if (*cov) cmd_covariance(cfg, cov_taus);
    else if (*smp) cmd_sample(cfg, bc);
    else if (*clu) cmd_cluster(cfg, check);
    else if (*orc) cmd_oracle(cfg, sites, grid, extent, orc_taus);
    else if (*uni) cmd_uniqueness(cfg, xi, eta, uni_sizes, tau0);
    else if (*ord) cmd_order_param(cfg, h_list, ord_sizes);
    else if (*vpot) return cmd_verify_potential(cfg, n_max, lo, hi, step);
    else if (*ver) return cmd_verify(cfg, only, g.seed >= 0);
  } catch (const egm::InvalidParameter& e) {
    return fail("invalid_parameter", e.what(), 2);
  } catch (const egm::OracleConvergenceError& e) {
    return fail("oracle_convergence", e.what(), 3);
  } catch (const std::exception& e) {
    return fail("runtime", e.what(), 1);
  }
  return 0;
}
