#include "egm/sampler.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <regex>
#include <sstream>

#include "egm/model_params.hpp"
#include "fftw_lock.hpp"
#include "parallel.hpp"

namespace egm {

// --- field and boundary data ------------------------------------------------------

FieldConfiguration::FieldConfiguration(std::size_t n_sites_, int slices_, int d_, double beta_hat_)
    : n_sites(n_sites_), slices(slices_), d(d_), beta_hat(beta_hat_),
      values(n_sites_ * static_cast<std::size_t>(slices_) * d_, 0.0) {}

int FieldConfiguration::slice_of(double tau) const {
  const double x = tau / dtau();
  const double k = std::round(x);
  if (std::abs(x - k) > 1e-6) {
    std::ostringstream os;
    os << "tau = " << tau << " is not a grid time (dtau = " << dtau() << ")";
    throw InvalidParameter(os.str());
  }
  const long s = static_cast<long>(k) % slices;
  return static_cast<int>(s < 0 ? s + slices : s);
}

BoundaryCondition BoundaryCondition::zero() {
  BoundaryCondition bc;
  bc.kind = BoundaryKind::Zero;
  return bc;
}

BoundaryCondition BoundaryCondition::tempered_constant(const Lattice& lat, int slices, int d,
                                                       double beta_hat, double value) {
  BoundaryCondition bc;
  bc.kind = BoundaryKind::Tempered;
  bc.xi = FieldConfiguration(lat.size(), slices, d, beta_hat);
  for (auto l : lat.boundary_sites())
    for (int i = 0; i < slices; ++i) bc.xi.at(l, i, 0) = value;
  return bc;
}

BoundaryCondition read_tempered_csv(const std::string& path, const Lattice& lat, int slices, int d,
                                    double beta_hat) {
  std::ifstream in(path);
  if (!in) throw InvalidParameter("cannot open tempered boundary file " + path);
  BoundaryCondition bc;
  bc.kind = BoundaryKind::Tempered;
  bc.xi = FieldConfiguration(lat.size(), slices, d, beta_hat);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    long site, slice, comp;
    double v;
    if (!(row >> site >> slice >> comp >> v)) {
      if (lineno == 1) continue;  // header
      throw InvalidParameter(path + ": malformed row " + std::to_string(lineno));
    }
    if (site < 0 || site >= static_cast<long>(lat.size()) || slice < 0 || slice >= slices || comp < 0 ||
        comp >= d)
      throw InvalidParameter(path + ": index out of range on row " + std::to_string(lineno));
    bc.xi.at(site, static_cast<int>(slice), static_cast<int>(comp)) = v;
  }
  return bc;
}

double tempered_weighted_norm(const BoundaryCondition& bc, const Lattice& lat, double rho) {
  if (bc.kind != BoundaryKind::Tempered) return 0.0;
  const auto c = lat.coords(lat.center());
  double acc = 0.0;
  for (auto l : lat.boundary_sites()) {
    auto x = lat.coords(l);
    double r2 = 0.0;
    for (std::size_t mu = 0; mu < x.size(); ++mu) r2 += double(x[mu] - c[mu]) * (x[mu] - c[mu]);
    double norm2 = 0.0;
    for (int alpha = 0; alpha < bc.xi.d; ++alpha)
      for (int i = 0; i < bc.xi.slices; ++i) norm2 += bc.xi.at(l, i, alpha) * bc.xi.at(l, i, alpha);
    acc += std::exp(-rho * std::sqrt(r2)) * std::sqrt(norm2 * bc.xi.dtau());
  }
  return acc;
}

void check_tempered(const BoundaryCondition& bc, const Lattice& lat, double a, double rho) {
  if (bc.kind != BoundaryKind::Tempered) return;
  if (!(rho >= 0.0 && rho < std::sqrt(a)))
    throw InvalidParameter("tempered boundary: need 0 <= rho < sqrt(a)");
  if (lat.boundary() != Boundary::Dirichlet)
    throw InvalidParameter("tempered boundary data needs a box with an outside (dirichlet boundary)");
  const double v = tempered_weighted_norm(bc, lat, rho);
  if (!std::isfinite(v)) throw InvalidParameter("tempered boundary: weighted norm is not finite");
}

// --- exact Gaussian sampler --------------------------------------------------------

struct GaussianFieldSampler::FftState {
  fftw_complex* buf = nullptr;
  fftw_plan plan = nullptr;
  std::size_t len = 0;
};

GaussianFieldSampler::GaussianFieldSampler(const CovarianceKernel& kern, int slices, int d)
    : kern_(&kern), slices_(slices), d_(d), n_sites_(kern.lattice().size()), fft_(new FftState) {
  if (slices < 2) throw InvalidParameter("sampler: need at least 2 slices");
  if (d < 1) throw InvalidParameter("sampler: d must be positive");
  if (kern.zero_temperature()) throw InvalidParameter("sampler: needs finite beta_hat");
  const double dt = kern.beta_hat() / slices;
  const std::size_t n = n_sites_;
  const bool periodic = kern.boundary() == Boundary::Periodic;
  fft_->len = periodic ? n * slices : static_cast<std::size_t>(slices);
  fft_->buf = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * fft_->len));
  std::vector<int> dims;
  if (periodic) dims.assign(kern.lattice().dims().begin(), kern.lattice().dims().end());
  dims.push_back(slices);
  fftw_plan fwd;
  {
    std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
    fwd = fftw_plan_dft(static_cast<int>(dims.size()), dims.data(), fft_->buf, fft_->buf, FFTW_FORWARD,
                        FFTW_ESTIMATE);
    fft_->plan = fftw_plan_dft(static_cast<int>(dims.size()), dims.data(), fft_->buf, fft_->buf,
                               FFTW_BACKWARD, FFTW_ESTIMATE);
  }
  double scale = 0.0;
  if (periodic) {
    for (std::size_t r = 0; r < n; ++r)
      for (int i = 0; i < slices; ++i) {
        fft_->buf[r * slices + i][0] = kern.closed(0, r, i * dt);
        fft_->buf[r * slices + i][1] = 0.0;
      }
    fftw_execute(fwd);
    weights_.resize(fft_->len);
    for (std::size_t q = 0; q < fft_->len; ++q) weights_[q] = fft_->buf[q][0];
  } else {
    weights_.resize(n * slices);
    psi_.resize(n * n);
    for (std::size_t m = 0; m < n; ++m) {
      const double lam = std::sqrt(kern.mode_eps(m));
      for (int i = 0; i < slices; ++i) {
        fft_->buf[i][0] = mode_factor(lam, i * dt, kern.beta_hat());
        fft_->buf[i][1] = 0.0;
      }
      fftw_execute(fwd);
      for (int i = 0; i < slices; ++i) weights_[m * slices + i] = fft_->buf[i][0];
      for (std::size_t j = 0; j < n; ++j) psi_[m * n + j] = kern.mode_amplitude(m, j);
    }
  }
  {
    std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(fwd);
  }
  min_weight_ = *std::min_element(weights_.begin(), weights_.end());
  for (double w : weights_) scale = std::max(scale, std::abs(w));
  if (min_weight_ < -1e-10 * scale) {
    std::ostringstream os;
    os << "sampler: negative spectral weight " << min_weight_ << " (kernel is not positive semidefinite)";
    throw std::runtime_error(os.str());
  }
  for (double& w : weights_) w = std::max(w, 0.0);
}

GaussianFieldSampler::~GaussianFieldSampler() {
  if (!fft_) return;
  std::lock_guard<std::mutex> lock(detail::fftw_planner_mutex());
  if (fft_->plan) fftw_destroy_plan(fft_->plan);
  if (fft_->buf) fftw_free(fft_->buf);
}

void GaussianFieldSampler::transform_component(std::mt19937_64& rng, double* re, double* im) {
  std::normal_distribution<double> normal;
  const std::size_t n = n_sites_;
  const std::size_t M = static_cast<std::size_t>(slices_);
  if (kern_->boundary() == Boundary::Periodic) {
    const double inv = 1.0 / static_cast<double>(fft_->len);
    for (std::size_t q = 0; q < fft_->len; ++q) {
      const double s = std::sqrt(weights_[q] * inv);
      fft_->buf[q][0] = s * normal(rng);
      fft_->buf[q][1] = s * normal(rng);
    }
    fftw_execute(fft_->plan);
    for (std::size_t q = 0; q < fft_->len; ++q) {
      re[q] = fft_->buf[q][0];
      im[q] = fft_->buf[q][1];
    }
    return;
  }
  std::fill(re, re + n * M, 0.0);
  std::fill(im, im + n * M, 0.0);
  const double inv = 1.0 / static_cast<double>(M);
  for (std::size_t m = 0; m < n; ++m) {
    for (std::size_t i = 0; i < M; ++i) {
      const double s = std::sqrt(weights_[m * M + i] * inv);
      fft_->buf[i][0] = s * normal(rng);
      fft_->buf[i][1] = s * normal(rng);
    }
    fftw_execute(fft_->plan);
    for (std::size_t j = 0; j < n; ++j) {
      const double a = psi_[m * n + j];
      double* rj = re + j * M;
      double* ij = im + j * M;
      for (std::size_t i = 0; i < M; ++i) {
        rj[i] += a * fft_->buf[i][0];
        ij[i] += a * fft_->buf[i][1];
      }
    }
  }
}

void GaussianFieldSampler::draw(std::mt19937_64& rng, FieldConfiguration& out) {
  if (out.n_sites != n_sites_ || out.slices != slices_ || out.d != d_)
    out = FieldConfiguration(n_sites_, slices_, d_, kern_->beta_hat());
  if (has_spare_) {
    out.values = spare_.values;
    has_spare_ = false;
    return;
  }
  if (spare_.n_sites != n_sites_) spare_ = FieldConfiguration(n_sites_, slices_, d_, kern_->beta_hat());
  const std::size_t block = n_sites_ * static_cast<std::size_t>(slices_);
  for (int alpha = 0; alpha < d_; ++alpha)
    transform_component(rng, out.values.data() + alpha * block, spare_.values.data() + alpha * block);
  has_spare_ = true;
}

FieldConfiguration GaussianFieldSampler::draw(std::mt19937_64& rng) {
  FieldConfiguration f;
  draw(rng, f);
  return f;
}

// --- action ---------------------------------------------------------------------------

double nonlinear_action(const FieldConfiguration& phi, const MeasureSpec& spec) {
  if (spec.nonlinear_action) return spec.nonlinear_action(phi) + spec.action_constant;
  const auto& p = spec.pot;
  if (p.b_m == 0.0) return spec.action_constant;
  const std::size_t block = phi.n_sites * static_cast<std::size_t>(phi.slices);
  double acc = 0.0;
  if (phi.d == 1) {
    for (std::size_t q = 0; q < block; ++q) acc += std::exp(-0.5 * p.delta_m * phi.values[q] * phi.values[q]);
  } else {
    for (std::size_t q = 0; q < block; ++q) {
      double r2 = 0.0;
      for (int alpha = 0; alpha < phi.d; ++alpha) {
        const double v = phi.values[alpha * block + q];
        r2 += v * v;
      }
      acc += std::exp(-0.5 * p.delta_m * r2);
    }
  }
  return p.b_m * phi.dtau() * acc + spec.action_constant;
}

FieldConfiguration linear_source(const MeasureSpec& spec) {
  const auto& lat = spec.kern->lattice();
  FieldConfiguration g(lat.size(), spec.slices, spec.d, spec.kern->beta_hat());
  const double dt = g.dtau();
  for (int alpha = 0; alpha < spec.d && alpha < static_cast<int>(spec.h_hat.size()); ++alpha)
    for (std::size_t j = 0; j < lat.size(); ++j)
      for (int i = 0; i < spec.slices; ++i) g.at(j, i, alpha) -= dt * spec.h_hat[alpha];
  if (spec.bc.kind == BoundaryKind::Tempered) {
    const double J = spec.kern->J();
    for (auto l : lat.boundary_sites()) {
      const int cnt = lat.outside_neighbor_count(l);
      for (int alpha = 0; alpha < spec.d; ++alpha)
        for (int i = 0; i < spec.slices; ++i) g.at(l, i, alpha) += 0.5 * J * dt * cnt * spec.bc.xi.at(l, i, alpha);
    }
  }
  return g;
}

double action_integral(const FieldConfiguration& phi, const MeasureSpec& spec) {
  const auto g = linear_source(spec);
  double lin = 0.0;
  for (std::size_t q = 0; q < phi.values.size(); ++q) lin += g.values[q] * phi.values[q];
  return nonlinear_action(phi, spec) - lin;
}

FieldConfiguration gaussian_mean(const MeasureSpec& spec) {
  const auto g = linear_source(spec);
  FieldConfiguration m(g.n_sites, g.slices, g.d, g.beta_hat);
  bool any = false;
  for (double v : g.values) any = any || v != 0.0;
  if (!any) return m;
  GridKernel gk(*spec.kern, spec.slices);
  const std::size_t block = g.n_sites * static_cast<std::size_t>(g.slices);
  for (int alpha = 0; alpha < g.d; ++alpha) {
    const double* ga = g.values.data() + alpha * block;
    double* ma = m.values.data() + alpha * block;
    std::vector<std::size_t> support;
    for (std::size_t q = 0; q < block; ++q)
      if (ga[q] != 0.0) support.push_back(q);
    for (std::size_t p = 0; p < block; ++p) {
      double acc = 0.0;
      for (auto q : support) acc += gk(p, q) * ga[q];
      ma[p] = acc;
    }
  }
  return m;
}

// --- observables ------------------------------------------------------------------------

Observable Observable::parse(const std::string& text) {
  static const std::regex factor_re(
      R"(^\s*phi\s*\[\s*(\d+)\s*,\s*([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?\d+)?)\s*(?:,\s*(\d+)\s*)?\]\s*$)");
  static const std::regex number_re(R"(^\s*([-+]?[0-9]*\.?[0-9]+(?:[eE][-+]?\d+)?)\s*$)");
  Observable obs;
  std::stringstream ss(text);
  std::string tok;
  bool any = false;
  while (std::getline(ss, tok, '*')) {
    std::smatch m;
    if (std::regex_match(tok, m, factor_re)) {
      FieldFactor f;
      f.site = std::stoul(m[1]);
      f.tau = std::stod(m[2]);
      f.alpha = m[3].matched ? std::stoi(m[3]) : 0;
      obs.factors.push_back(f);
      any = true;
    } else if (std::regex_match(tok, m, number_re)) {
      obs.coefficient *= std::stod(m[1]);
    } else {
      throw InvalidParameter("observable: cannot parse factor '" + tok + "'");
    }
  }
  if (!any) throw InvalidParameter("observable: expected at least one phi[j,tau,alpha] factor");
  return obs;
}

std::string Observable::to_string() const {
  std::ostringstream os;
  if (coefficient != 1.0) os << coefficient << "*";
  for (std::size_t i = 0; i < factors.size(); ++i) {
    if (i) os << "*";
    os << "phi[" << factors[i].site << "," << factors[i].tau << "," << factors[i].alpha << "]";
  }
  return os.str();
}

double Observable::operator()(const FieldConfiguration& phi) const {
  double v = coefficient;
  for (const auto& f : factors) {
    if (f.site >= phi.n_sites || f.alpha >= phi.d) throw InvalidParameter("observable: index out of range");
    v *= phi.at(f.site, phi.slice_of(f.tau), f.alpha);
  }
  return v;
}

double Observable::time_averaged(const FieldConfiguration& phi) const {
  std::vector<int> base;
  for (const auto& f : factors) {
    if (f.site >= phi.n_sites || f.alpha >= phi.d) throw InvalidParameter("observable: index out of range");
    base.push_back(phi.slice_of(f.tau));
  }
  double acc = 0.0;
  for (int s = 0; s < phi.slices; ++s) {
    double v = 1.0;
    for (std::size_t k = 0; k < factors.size(); ++k) v *= phi.at(factors[k].site, base[k] + s, factors[k].alpha);
    acc += v;
  }
  return coefficient * acc / phi.slices;
}

// --- ensembles and estimators -----------------------------------------------------------

namespace {

std::mt19937_64 stream_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x5eedu};
  return std::mt19937_64(seq);
}

double sample_sd(const std::vector<double>& x) {
  const double mu = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
  double s = 0.0;
  for (double v : x) s += (v - mu) * (v - mu);
  return std::sqrt(s / (x.size() - 1));
}

}  // namespace

Ensemble run_ensemble(const MeasureSpec& spec, const SamplerSettings& st,
                      const std::vector<FieldFunction>& observables) {
  if (!spec.kern) throw InvalidParameter("measure: missing kernel");
  if (st.batches < 2) throw InvalidParameter("estimator: need at least 2 batches");
  if (st.samples < static_cast<std::size_t>(st.batches))
    throw InvalidParameter("estimator: fewer samples than batches");
  if (spec.bc.kind == BoundaryKind::Tempered && spec.kern->boundary() != Boundary::Dirichlet)
    throw InvalidParameter("tempered boundary data needs a dirichlet kernel");
  if (spec.bc.kind == BoundaryKind::Zero && spec.kern->boundary() != Boundary::Dirichlet)
    throw InvalidParameter("zero boundary conditions need a dirichlet kernel");
  if (spec.bc.kind == BoundaryKind::Periodic && spec.kern->boundary() != Boundary::Periodic)
    throw InvalidParameter("periodic boundary conditions need a periodic kernel");
  if (!(st.pcn_rho >= 0.0 && st.pcn_rho < 1.0)) throw InvalidParameter("pcn_rho must lie in [0,1)");

  Ensemble e;
  e.n_obs = observables.size();
  e.batches = st.batches;
  e.seed = st.seed;
  e.backend = st.backend;
  e.batch_begin.resize(st.batches + 1);
  for (int b = 0; b <= st.batches; ++b) e.batch_begin[b] = st.samples * b / st.batches;
  e.log_w.assign(st.samples, 0.0);
  e.values.assign(st.samples * e.n_obs, 0.0);
  const FieldConfiguration mean = gaussian_mean(spec);
  std::vector<double> accepted(st.batches, 0.0);

  detail::parallel_for(st.batches, st.threads, [&](int b) {
    GaussianFieldSampler sampler(*spec.kern, spec.slices, spec.d);
    auto rng = stream_rng(st.seed, static_cast<std::uint64_t>(b));
    FieldConfiguration psi, phi = mean;
    const std::size_t lo = e.batch_begin[b], hi = e.batch_begin[b + 1];
    if (st.backend == Backend::Reweight) {
      for (std::size_t s = lo; s < hi; ++s) {
        sampler.draw(rng, psi);
        for (std::size_t q = 0; q < phi.values.size(); ++q) phi.values[q] = mean.values[q] + psi.values[q];
        e.log_w[s] = -nonlinear_action(phi, spec);
        for (std::size_t k = 0; k < e.n_obs; ++k) e.values[s * e.n_obs + k] = observables[k](phi);
      }
      return;
    }
    // preconditioned Crank-Nicolson around the Gaussian mean
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const double rho = st.pcn_rho, mix = std::sqrt(1.0 - rho * rho);
    sampler.draw(rng, psi);
    std::vector<double> dev = psi.values;  // phi - mean
    for (std::size_t q = 0; q < phi.values.size(); ++q) phi.values[q] = mean.values[q] + dev[q];
    double S = nonlinear_action(phi, spec);
    FieldConfiguration prop = phi;
    std::size_t acc = 0;
    for (std::size_t step = 0; step < st.burn_in + (hi - lo); ++step) {
      sampler.draw(rng, psi);
      for (std::size_t q = 0; q < prop.values.size(); ++q)
        prop.values[q] = mean.values[q] + rho * dev[q] + mix * psi.values[q];
      const double S_new = nonlinear_action(prop, spec);
      if (std::log(unif(rng)) < S - S_new) {
        std::swap(phi.values, prop.values);
        for (std::size_t q = 0; q < dev.size(); ++q) dev[q] = phi.values[q] - mean.values[q];
        S = S_new;
        if (step >= st.burn_in) ++acc;
      }
      if (step < st.burn_in) continue;
      const std::size_t s = lo + (step - st.burn_in);
      for (std::size_t k = 0; k < e.n_obs; ++k) e.values[s * e.n_obs + k] = observables[k](phi);
    }
    accepted[b] = static_cast<double>(acc) / static_cast<double>(hi - lo);
  });
  if (st.backend == Backend::MCMC)
    e.acceptance = std::accumulate(accepted.begin(), accepted.end(), 0.0) / st.batches;
  return e;
}

double integrated_autocorrelation_time(const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (n < 4) return 1.0;
  const double mu = std::accumulate(x.begin(), x.end(), 0.0) / n;
  auto acov = [&](std::size_t k) {
    double s = 0.0;
    for (std::size_t i = 0; i + k < n; ++i) s += (x[i] - mu) * (x[i + k] - mu);
    return s / n;
  };
  const double c0 = acov(0);
  if (c0 <= 0.0) return 1.0;
  double tau = -1.0;
  for (std::size_t m = 0; 2 * m + 1 < n; ++m) {
    const double gamma = (acov(2 * m) + acov(2 * m + 1)) / c0;
    if (gamma <= 0.0) break;
    tau += 2.0 * gamma;
  }
  return std::max(tau, 1e-3);
}

namespace {

struct BatchSums {
  std::vector<double> W;               // per batch sum of weights
  std::vector<std::vector<double>> S;  // per batch, per observable sum of w A
  double W2 = 0.0;                     // sum of squared weights
};

BatchSums batch_sums(const Ensemble& e) {
  BatchSums bs;
  bs.W.assign(e.batches, 0.0);
  bs.S.assign(e.batches, std::vector<double>(e.n_obs, 0.0));
  const double lmax = *std::max_element(e.log_w.begin(), e.log_w.end());
  for (int b = 0; b < e.batches; ++b)
    for (std::size_t s = e.batch_begin[b]; s < e.batch_begin[b + 1]; ++s) {
      const double w = std::exp(e.log_w[s] - lmax);
      bs.W[b] += w;
      bs.W2 += w * w;
      for (std::size_t k = 0; k < e.n_obs; ++k) bs.S[b][k] += w * e.values[s * e.n_obs + k];
    }
  return bs;
}

void warn_low_ess(EstimatorResult& r) {
  if (r.effective_sample_size < 100.0) {
    std::ostringstream os;
    os << "effective sample size " << r.effective_sample_size << " is below 100";
    r.warnings.push_back(os.str());
  }
}

}  // namespace

EstimatorResult estimate(const Ensemble& e, std::size_t k) {
  if (k >= e.n_obs) throw InvalidParameter("estimate: observable index out of range");
  EstimatorResult r;
  r.n_samples = e.size();
  r.seed = e.seed;
  if (e.backend == Backend::Reweight) {
    auto bs = batch_sums(e);
    double W = 0.0, S = 0.0;
    std::vector<double> ratios(e.batches);
    for (int b = 0; b < e.batches; ++b) {
      W += bs.W[b];
      S += bs.S[b][k];
      ratios[b] = bs.S[b][k] / bs.W[b];
    }
    r.mean = S / W;
    r.stderr_ = sample_sd(ratios) / std::sqrt(static_cast<double>(e.batches));
    r.effective_sample_size = W * W / bs.W2;
  } else {
    std::vector<double> chain;
    double total = 0.0;
    for (std::size_t s = 0; s < e.size(); ++s) total += e.values[s * e.n_obs + k];
    r.mean = total / e.size();
    // autocorrelation averaged over chains, about the pooled mean
    double var = 0.0;
    for (std::size_t s = 0; s < e.size(); ++s) {
      const double v = e.values[s * e.n_obs + k] - r.mean;
      var += v * v;
    }
    var /= e.size();
    double tau_sum = 0.0;
    for (int b = 0; b < e.batches; ++b) {
      chain.clear();
      for (std::size_t s = e.batch_begin[b]; s < e.batch_begin[b + 1]; ++s) chain.push_back(e.values[s * e.n_obs + k]);
      tau_sum += integrated_autocorrelation_time(chain);
    }
    const double tau = tau_sum / e.batches;
    r.stderr_ = std::sqrt(var * tau / e.size());
    r.effective_sample_size = e.size() / tau;
  }
  warn_low_ess(r);
  return r;
}

EstimatorResult jackknife(const Ensemble& e, const std::function<double(const std::vector<double>&)>& f) {
  auto bs = batch_sums(e);
  const int B = e.batches;
  double W = 0.0;
  std::vector<double> S(e.n_obs, 0.0);
  for (int b = 0; b < B; ++b) {
    W += bs.W[b];
    for (std::size_t k = 0; k < e.n_obs; ++k) S[k] += bs.S[b][k];
  }
  std::vector<double> means(e.n_obs);
  for (std::size_t k = 0; k < e.n_obs; ++k) means[k] = S[k] / W;
  EstimatorResult r;
  r.mean = f(means);
  r.n_samples = e.size();
  r.seed = e.seed;
  r.effective_sample_size = W * W / bs.W2;
  std::vector<double> loo(B);
  for (int b = 0; b < B; ++b) {
    std::vector<double> m(e.n_obs);
    for (std::size_t k = 0; k < e.n_obs; ++k) m[k] = (S[k] - bs.S[b][k]) / (W - bs.W[b]);
    loo[b] = f(m);
  }
  const double mu = std::accumulate(loo.begin(), loo.end(), 0.0) / B;
  double ss = 0.0;
  for (double v : loo) ss += (v - mu) * (v - mu);
  r.stderr_ = std::sqrt(ss * (B - 1) / B);
  warn_low_ess(r);
  return r;
}

EstimatorResult merge(const std::vector<EstimatorResult>& parts) {
  if (parts.empty()) throw InvalidParameter("merge: nothing to merge");
  EstimatorResult r;
  double n = 0.0, mean = 0.0, var = 0.0;
  for (const auto& p : parts) {
    const double w = static_cast<double>(p.n_samples);
    n += w;
    mean += w * p.mean;
    var += w * w * p.stderr_ * p.stderr_;
    r.effective_sample_size += p.effective_sample_size;
    r.warnings.insert(r.warnings.end(), p.warnings.begin(), p.warnings.end());
  }
  r.mean = mean / n;
  r.stderr_ = std::sqrt(var) / n;
  r.n_samples = static_cast<std::size_t>(n);
  r.seed = parts.front().seed;
  return r;
}

EstimatorResult expectation(const FieldFunction& observable, const MeasureSpec& spec,
                            const SamplerSettings& settings) {
  auto e = run_ensemble(spec, settings, {observable});
  return estimate(e, 0);
}

EstimatorResult truncated_two_point(const FieldFactor& x, const FieldFactor& y, const MeasureSpec& spec,
                                    const SamplerSettings& settings) {
  Observable ox{{x}, 1.0}, oy{{y}, 1.0}, oxy{{x, y}, 1.0};
  auto e = run_ensemble(spec, settings,
                        {[ox](const FieldConfiguration& f) { return ox(f); },
                         [oy](const FieldConfiguration& f) { return oy(f); },
                         [oxy](const FieldConfiguration& f) { return oxy(f); }});
  return jackknife(e, [](const std::vector<double>& m) { return m[2] - m[0] * m[1]; });
}

// --- clustering ---------------------------------------------------------------------------

ClusteringFit clustering_fit(const std::vector<int>& distances, const std::vector<double>& values,
                             const std::vector<double>& errors) {
  const std::size_t n = distances.size();
  if (n < 2 || values.size() != n || errors.size() != n)
    throw InvalidParameter("clustering_fit: need at least two distances with values and errors");
  ClusteringFit fit;
  fit.distances = distances;
  fit.values = values;
  fit.errors = errors;
  std::vector<double> y(n), w(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(values[i] > 2.0 * errors[i])) {
      std::ostringstream os;
      os << "clustering_fit: K at distance " << distances[i] << " is " << values[i]
         << ", within 2 standard errors (" << errors[i] << ") of zero";
      throw InvalidParameter(os.str());
    }
    y[i] = std::log(values[i]);
    const double sy = errors[i] / values[i];
    w[i] = sy > 0.0 ? 1.0 / (sy * sy) : 1.0;
  }
  bool exact = std::all_of(errors.begin(), errors.end(), [](double e) { return e == 0.0; });
  if (exact) std::fill(w.begin(), w.end(), 1.0);
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = distances[i];
    sw += w[i];
    sx += w[i] * x;
    sy += w[i] * y[i];
    sxx += w[i] * x * x;
    sxy += w[i] * x * y[i];
  }
  const double det = sw * sxx - sx * sx;
  const double slope = (sw * sxy - sx * sy) / det;
  fit.intercept = (sy - slope * sx) / sw;
  fit.rate = -slope;
  fit.rate_stderr = exact ? 0.0 : std::sqrt(sw / det);
  for (std::size_t i = 0; i < n; ++i) fit.residuals.push_back(y[i] - (fit.intercept + slope * distances[i]));
  return fit;
}

CorrelationProfile integrated_correlation_profile(const MeasureSpec& spec, const SamplerSettings& settings,
                                                  int max_dist) {
  const auto& lat = spec.kern->lattice();
  if (lat.nu() != 1 || lat.boundary() != Boundary::Periodic)
    throw InvalidParameter("correlation profile: needs a periodic chain");
  const int N = lat.dims()[0];
  if (N < 2 * max_dist) throw InvalidParameter("correlation profile: chain too short for max_dist");
  const int M = spec.slices;
  // observables: the space-time mean and Y_r = dtau/(N M) sum_j Phi_j Phi_{j+r}
  std::vector<FieldFunction> obs;
  obs.push_back([N, M](const FieldConfiguration& f) {
    double s = 0.0;
    for (int q = 0; q < N * M; ++q) s += f.values[q];
    return s / (N * M);
  });
  for (int r = 0; r <= max_dist; ++r)
    obs.push_back([N, M, r](const FieldConfiguration& f) {
      std::vector<double> Phi(N, 0.0);
      for (int j = 0; j < N; ++j)
        for (int i = 0; i < M; ++i) Phi[j] += f.values[j * M + i];
      double s = 0.0;
      for (int j = 0; j < N; ++j) s += Phi[j] * Phi[(j + r) % N];
      return f.dtau() * s / (double(N) * M);
    });
  auto e = run_ensemble(spec, settings, obs);
  CorrelationProfile prof;
  const double beta = spec.kern->beta_hat();
  for (int r = 0; r <= max_dist; ++r) {
    auto res = jackknife(e, [r, beta](const std::vector<double>& m) { return m[1 + r] - beta * m[0] * m[0]; });
    prof.distances.push_back(r);
    prof.values.push_back(res.mean);
    prof.errors.push_back(res.stderr_);
    prof.ess = res.effective_sample_size;
  }
  return prof;
}

CorrelationProfile harmonic_correlation_profile(const GridKernel& g, int max_dist) {
  CorrelationProfile prof;
  const auto& grid = g.grid();
  for (int r = 0; r <= max_dist; ++r) {
    double s = 0.0;
    for (int i = 0; i < grid.slices; ++i) s += g(grid.point(0, i), grid.point(r, 0));
    prof.distances.push_back(r);
    prof.values.push_back(grid.dtau() * s);
    prof.errors.push_back(0.0);
  }
  return prof;
}

// --- order parameter -------------------------------------------------------------------

std::vector<OrderParameterRow> order_parameter(const std::vector<double>& h_values,
                                               const std::vector<int>& chain_lengths, double m, double a,
                                               double b, double delta, double J, double beta,
                                               int slices_per_unit, const SamplerSettings& settings) {
  std::vector<OrderParameterRow> rows;
  std::uint64_t row_index = 0;
  for (int N : chain_lengths)
    for (double h : h_values) {
      ModelParams p;
      p.m = m;
      p.a = a;
      p.b = b;
      p.delta = delta;
      p.J = J;
      p.beta = beta;
      p.d = 1;
      p.nu = 1;
      p.dims = {N};
      p.h = {h};
      p.validate();
      const auto r = rescale(p);
      CovarianceKernel kern(Lattice(1, {N}), a, J, r.beta_hat);
      MeasureSpec spec;
      spec.kern = &kern;
      spec.slices = slices_for(r.beta_hat, slices_per_unit);
      spec.pot = {r.b_m, r.delta_m, 1};
      spec.h_hat = r.h_hat;
      const double alpha = r.alpha;
      SamplerSettings st = settings;
      st.seed = settings.seed + 1000003ULL * row_index++;
      auto res = expectation(
          [alpha](const FieldConfiguration& f) {
            double s = 0.0;
            for (double v : f.values) s += v;
            return alpha * s / static_cast<double>(f.values.size());
          },
          spec, st);
      rows.push_back({static_cast<std::size_t>(N), h, res});
    }
  return rows;
}

// --- uniqueness gap ----------------------------------------------------------------------

std::vector<UniquenessRow> uniqueness_gap(double xi, double eta, const std::vector<int>& chain_lengths,
                                          double a, double J, double b_m, double delta_m, double beta_hat,
                                          int slices_per_unit, double tau0, const SamplerSettings& settings) {
  std::vector<UniquenessRow> rows;
  std::uint64_t row_index = 0;
  for (int N : chain_lengths) {
    Lattice lat(1, {N}, Boundary::Dirichlet);
    CovarianceKernel kern(lat, a, J, beta_hat);
    const int M = slices_for(beta_hat, slices_per_unit);
    MeasureSpec sx, se;
    sx.kern = se.kern = &kern;
    sx.slices = se.slices = M;
    sx.pot = se.pot = {b_m, delta_m, 1};
    sx.bc = BoundaryCondition::tempered_constant(lat, M, 1, beta_hat, xi);
    se.bc = BoundaryCondition::tempered_constant(lat, M, 1, beta_hat, eta);
    check_tempered(sx.bc, lat, a, 0.5 * std::sqrt(a));
    check_tempered(se.bc, lat, a, 0.5 * std::sqrt(a));
    const auto mx = gaussian_mean(sx), me = gaussian_mean(se);
    const std::size_t l0 = lat.center();
    FieldConfiguration probe(lat.size(), M, 1, beta_hat);
    (void)probe.slice_of(tau0);  // validates tau0

    // common random numbers: one Gaussian draw feeds both measures; the
    // measured quantity is the time average of phi_{l0}, an unbiased
    // stand-in for phi_{l0}(tau0) because both measures are stationary in time
    SamplerSettings st = settings;
    st.seed = settings.seed + 7919ULL * row_index++;
    Ensemble e;
    e.n_obs = 4;
    e.batches = st.batches;
    e.seed = st.seed;
    e.batch_begin.resize(st.batches + 1);
    for (int b = 0; b <= st.batches; ++b) e.batch_begin[b] = st.samples * b / st.batches;
    e.log_w.assign(st.samples, 0.0);
    e.values.assign(st.samples * 4, 0.0);
    detail::parallel_for(st.batches, st.threads, [&](int b) {
      GaussianFieldSampler sampler(kern, M, 1);
      auto rng = stream_rng(st.seed, static_cast<std::uint64_t>(b));
      FieldConfiguration psi, fx = mx, fe = me;
      for (std::size_t s = e.batch_begin[b]; s < e.batch_begin[b + 1]; ++s) {
        sampler.draw(rng, psi);
        for (std::size_t q = 0; q < psi.values.size(); ++q) {
          fx.values[q] = mx.values[q] + psi.values[q];
          fe.values[q] = me.values[q] + psi.values[q];
        }
        const double wx = std::exp(-nonlinear_action(fx, sx));
        const double we = std::exp(-nonlinear_action(fe, se));
        double ax = 0.0, ae = 0.0;
        for (int i = 0; i < M; ++i) {
          ax += fx.at(l0, i);
          ae += fe.at(l0, i);
        }
        ax /= M;
        ae /= M;
        double* v = &e.values[s * 4];
        v[0] = wx;
        v[1] = wx * ax;
        v[2] = we;
        v[3] = we * ae;
      }
    });
    UniquenessRow row;
    row.n = N;
    row.distance_to_boundary = std::min<int>(static_cast<int>(l0) + 1, N - static_cast<int>(l0));
    row.gaussian_part = mx.at(l0, 0) - me.at(l0, 0);
    row.gap = jackknife(e, [](const std::vector<double>& m) { return m[1] / m[0] - m[3] / m[2]; });
    rows.push_back(row);
  }
  return rows;
}

// --- doubled measure ---------------------------------------------------------------------

EstimatorResult doubled_measure_correlation(const FieldFactor& x, const FieldFactor& y,
                                            const FieldConfiguration& y_field, const CovarianceKernel& kern,
                                            int slices, const PotentialParams& pot,
                                            const SamplerSettings& settings) {
  if (y_field.n_sites != kern.lattice().size() || y_field.slices != slices || y_field.d != pot.d)
    throw InvalidParameter("doubled measure: y field does not match the grid");
  MeasureSpec spec;
  spec.kern = &kern;
  spec.slices = slices;
  spec.d = pot.d;
  spec.pot = pot;
  spec.bc = kern.boundary() == Boundary::Periodic ? BoundaryCondition::periodic() : BoundaryCondition::zero();
  spec.nonlinear_action = [y_field, pot](const FieldConfiguration& f) {
    const std::size_t block = f.n_sites * static_cast<std::size_t>(f.slices);
    double acc = 0.0;
    for (std::size_t q = 0; q < block; ++q) {
      double plus = 0.0, minus = 0.0;
      for (int alpha = 0; alpha < f.d; ++alpha) {
        const double a = f.values[alpha * block + q], b = y_field.values[alpha * block + q];
        plus += (a + b) * (a + b);
        minus += (a - b) * (a - b);
      }
      acc += std::exp(-0.25 * pot.delta_m * plus) + std::exp(-0.25 * pot.delta_m * minus);
    }
    return pot.b_m * f.dtau() * acc;
  };
  Observable o{{x, y}, 1.0};
  return expectation([o](const FieldConfiguration& f) { return o(f); }, spec, settings);
}

}  // namespace egm
