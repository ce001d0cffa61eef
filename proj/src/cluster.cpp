#include "egm/cluster.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "egm/model_params.hpp"
#include "egm/quadrature.hpp"
#include "parallel.hpp"

namespace egm {

// --- trees -------------------------------------------------------------------------

std::vector<int> Tree::incidence() const {
  std::vector<int> d(n + 1, 0);
  for (int l = 2; l <= n; ++l) ++d[eta[l]];
  return d;
}

std::vector<int> Tree::derivative_counts() const {
  auto d = incidence();
  std::vector<int> nk(n + 1, 0);
  for (int k = 1; k <= n; ++k) nk[k] = k == 1 ? d[1] : d[k] + 1;
  return nk;
}

std::vector<int> Tree::branch_indices() const {
  std::vector<int> b(n + 1, 0);
  for (int k = 2; k <= n; ++k) {
    b[k] = 1;
    for (int l = 2; l < k; ++l)
      if (eta[l] == eta[k]) ++b[k];
  }
  return b;
}

std::vector<int> Tree::s_exponents() const {
  std::vector<int> e(std::max(n, 1), 0);
  for (int m = 2; m <= n; ++m)
    for (int i = eta[m]; i <= m - 2; ++i) ++e[i];
  return e;
}

std::string Tree::to_string() const {
  std::ostringstream os;
  os << "[";
  for (int l = 2; l <= n; ++l) os << (l > 2 ? "," : "") << eta[l];
  os << "]";
  return os.str();
}

std::vector<Tree> enumerate_trees(int n) {
  if (n < 1 || n > 8) throw InvalidParameter("enumerate_trees: need 1 <= n <= 8");
  std::vector<Tree> out;
  Tree t;
  t.n = n;
  t.eta.assign(n + 1, 0);
  std::function<void(int)> rec = [&](int l) {
    if (l > n) {
      out.push_back(t);
      return;
    }
    for (int p = 1; p < l; ++p) {
      t.eta[l] = p;
      rec(l + 1);
    }
  };
  rec(2);
  return out;
}

double f_factor(const Tree& t, const std::vector<double>& s) {
  if (static_cast<int>(s.size()) < t.n - 1) throw InvalidParameter("f_factor: need n - 1 parameters");
  for (double v : s)
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidParameter("f_factor: parameters must lie in [0,1]");
  const auto e = t.s_exponents();
  double f = 1.0;
  for (int i = 1; i <= t.n - 1; ++i) f *= std::pow(s[i - 1], e[i]);
  return f;
}

BattleFederbushReport battle_federbush_sum(int n) {
  if (n < 1 || n > 7) throw InvalidParameter("battle_federbush_sum: need 1 <= n <= 7");
  BattleFederbushReport r;
  r.n = n;
  r.sum = 0;
  r.plain_sum = 0;
  for (const auto& t : enumerate_trees(n)) {
    Rational integral = 1;
    const auto e = t.s_exponents();
    for (int i = 1; i <= n - 1; ++i) integral /= (e[i] + 1);
    Rational fact = 1;
    const auto d = t.incidence();
    for (int p = 1; p <= n; ++p)
      for (int k = 2; k <= d[p]; ++k) fact *= k;
    r.sum += fact * integral;
    r.plain_sum += integral;
  }
  r.bound = 1;
  Rational e_low(2718281828, 1000000000), e_pow = 1;
  for (int i = 0; i < n; ++i) {
    r.bound *= 4;
    e_pow *= e_low;
  }
  r.within = r.sum <= r.bound;
  r.plain_within = r.plain_sum <= e_pow;
  r.ratio = static_cast<double>(r.sum / r.bound);
  return r;
}

// --- grid -----------------------------------------------------------------------------

ClusterGrid::ClusterGrid(const CovarianceKernel& kern, RodMode mode, int slices_per_rod)
    : kern_(&kern), rods_(rod_partition(kern.lattice(), kern.beta_hat(), mode)) {
  if (kern.boundary() != Boundary::Periodic) throw InvalidParameter("cluster grid: needs a periodic box");
  if (slices_per_rod < 1) throw InvalidParameter("cluster grid: need at least one slice per rod");
  slices_ = rods_.rods_per_site * slices_per_rod;
  dtau_ = kern.beta_hat() / slices_;
  const std::size_t n = kern.lattice().size();
  n_points_ = n * slices_;
  rod_points_.assign(rods_.rods.size(), {});
  point_rod_.resize(n_points_);
  for (std::size_t j = 0; j < n; ++j)
    for (int i = 0; i < slices_; ++i) {
      const std::size_t r = j * rods_.rods_per_site + i / slices_per_rod;
      point_rod_[j * slices_ + i] = r;
      rod_points_[r].push_back(j * slices_ + i);
    }
  table_.resize(n * n * slices_);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t k = 0; k < n; ++k)
      for (int di = 0; di < slices_; ++di) table_[(j * n + k) * slices_ + di] = kern.closed(j, k, di * dtau_);
}

std::size_t ClusterGrid::point(std::size_t site, int slice) const {
  const int s = ((slice % slices_) + slices_) % slices_;
  return site * slices_ + s;
}

std::size_t ClusterGrid::point_at(std::size_t site, double tau) const {
  if (site >= kern_->lattice().size()) throw InvalidParameter("cluster grid: site out of range");
  const double x = tau / dtau_;
  const double k = std::round(x);
  if (std::abs(x - k) > 1e-6) {
    std::ostringstream os;
    os << "tau = " << tau << " is not a grid time (dtau = " << dtau_ << ")";
    throw InvalidParameter(os.str());
  }
  return point(site, static_cast<int>(k));
}

Eigen::MatrixXd ClusterGrid::matrix(const std::vector<std::size_t>& points) const {
  const auto m = static_cast<Eigen::Index>(points.size());
  Eigen::MatrixXd out(m, m);
  for (Eigen::Index a = 0; a < m; ++a)
    for (Eigen::Index b = 0; b < m; ++b) out(a, b) = cov(points[a], points[b]);
  return out;
}

double ClusterGrid::cov(std::size_t p, std::size_t q) const {
  const std::size_t n = kern_->lattice().size();
  const std::size_t j = p / slices_, k = q / slices_;
  int di = static_cast<int>(p % slices_) - static_cast<int>(q % slices_);
  if (di < 0) di += slices_;
  return table_[(j * n + k) * slices_ + di];
}

PointMonomial PointMonomial::from_observable(const Observable& o, const ClusterGrid& g) {
  PointMonomial m;
  m.coefficient = o.coefficient;
  std::map<std::size_t, int> pw;
  for (const auto& f : o.factors) {
    if (f.alpha != 0) throw InvalidParameter("cluster engine: only d = 1 observables are supported");
    ++pw[g.point_at(f.site, f.tau)];
  }
  m.powers.assign(pw.begin(), pw.end());
  return m;
}

double PointMonomial::operator()(const std::vector<double>& phi) const {
  double v = coefficient;
  for (const auto& [p, a] : powers)
    for (int i = 0; i < a; ++i) v *= phi[p];
  return v;
}

// --- cluster state ----------------------------------------------------------------------

ClusterState::ClusterState(const ClusterGrid& g, const PointMonomial& a) : g_(&g) {
  std::vector<std::size_t> rods;
  for (const auto& [p, pw] : a.powers) rods.push_back(g.rod_of_point(p));
  std::sort(rods.begin(), rods.end());
  rods.erase(std::unique(rods.begin(), rods.end()), rods.end());
  if (rods.empty()) throw InvalidParameter("cluster state: observable has no field factor");
  *this = ClusterState(g, rods);
}

ClusterState::ClusterState(const ClusterGrid& g, std::vector<std::size_t> y1_rods)
    : g_(&g), y1_rods_(std::move(y1_rods)), in_x_(g.rod_count(), 0) {
  if (y1_rods_.empty()) throw InvalidParameter("cluster state: Y_1 must hold at least one rod");
  std::vector<std::size_t> pts;
  for (auto r : y1_rods_) {
    if (r >= g.rod_count()) throw InvalidParameter("cluster state: rod out of range");
    if (in_x_[r]) throw InvalidParameter("cluster state: repeated rod in Y_1");
    in_x_[r] = 1;
    pts.insert(pts.end(), g.rod_points(r).begin(), g.rod_points(r).end());
  }
  std::sort(pts.begin(), pts.end());
  blocks_.push_back(std::move(pts));
}

void ClusterState::push(std::size_t rod) {
  if (rod >= g_->rod_count()) throw InvalidParameter("cluster state: rod out of range");
  if (in_x_[rod]) throw InvalidParameter("cluster state: rod already lies in X_n");
  in_x_[rod] = 1;
  seq_.push_back(rod);
  blocks_.push_back(g_->rod_points(rod));
}

std::vector<std::size_t> ClusterState::x_points() const {
  std::vector<std::size_t> out;
  for (const auto& b : blocks_) out.insert(out.end(), b.begin(), b.end());
  return out;
}

std::vector<std::size_t> ClusterState::complement_rods() const {
  std::vector<std::size_t> out;
  for (std::size_t r = 0; r < g_->rod_count(); ++r)
    if (!in_x_[r]) out.push_back(r);
  return out;
}

std::vector<std::size_t> ClusterState::complement_points() const {
  std::vector<std::size_t> out;
  for (auto r : complement_rods()) out.insert(out.end(), g_->rod_points(r).begin(), g_->rod_points(r).end());
  return out;
}

// --- symbolic expansion -------------------------------------------------------------------

TermList delta_apply(const TermList& terms, const std::vector<std::size_t>& block_p,
                     const std::vector<std::size_t>& block_q, const ClusterGrid& g, int max_derivatives) {
  std::map<std::vector<std::pair<std::size_t, int>>, double> merged;
  for (const auto& t : terms) {
    int total = 2;
    for (const auto& o : t.orders) total += o.second;
    if (total > max_derivatives) {
      std::ostringstream os;
      os << "delta_apply: " << total << " derivatives exceed the supported cap of " << max_derivatives;
      throw InvalidParameter(os.str());
    }
    for (auto x : block_p)
      for (auto y : block_q) {
        auto orders = t.orders;
        for (auto pt : {x, y}) {
          auto it = std::lower_bound(orders.begin(), orders.end(), std::make_pair(pt, 0),
                                     [](const auto& u, const auto& v) { return u.first < v.first; });
          if (it != orders.end() && it->first == pt)
            ++it->second;
          else
            orders.insert(it, {pt, 1});
        }
        merged[orders] += t.coefficient * g.cov(x, y);
      }
  }
  TermList out;
  out.reserve(merged.size());
  for (auto& [orders, c] : merged) out.push_back({c, orders});
  return out;
}

TermList tree_terms(const Tree& t, const ClusterState& st, const ClusterGrid& g) {
  if (t.n != st.order()) throw InvalidParameter("tree_terms: tree order differs from the rod sequence length");
  const int cap = g.mode() == RodMode::LowTemperature ? 3 : 4;
  if (t.n > cap) {
    std::ostringstream os;
    os << "cluster expansion: order " << t.n << " exceeds the supported cap " << cap << " in this mode";
    throw InvalidParameter(os.str());
  }
  TermList terms{{1.0, {}}};
  for (int l = 2; l <= t.n; ++l)
    terms = delta_apply(terms, st.blocks()[t.eta[l] - 1], st.blocks()[l - 1], g, 2 * (cap - 1));
  return terms;
}

void local_factor_derivatives(double x, int a, int k_max, const PotentialParams& pot, double dtau,
                              double* out) {
  if (k_max > 8 || k_max < 0) throw InvalidParameter("local factor: derivative order must lie in 0..8");
  double D[9], u[10];
  const double sd = std::sqrt(pot.delta_m);
  const double y = sd * x;
  const double E = std::exp(-0.5 * pot.delta_m * x * x);
  // u[j] = dtau X^{(j)}, X = -b_m e^{-delta x^2/2} = -b_m (-sqrt(delta))^j He_j(y) e^{-y^2/2}
  double he_prev = 1.0, he = y, sign_pow = -sd;
  for (int j = 1; j <= k_max; ++j) {
    u[j] = -dtau * pot.b_m * sign_pow * he * E;
    const double next = y * he - j * he_prev;
    he_prev = he;
    he = next;
    sign_pow *= -sd;
  }
  D[0] = 1.0;
  for (int m = 1; m <= k_max; ++m) {
    double acc = 0.0, binom = 1.0;
    for (int k = 0; k <= m - 1; ++k) {
      acc += binom * u[k + 1] * D[m - 1 - k];
      binom = binom * (m - 1 - k) / (k + 1);
    }
    D[m] = acc;
  }
  for (int k = 0; k <= k_max; ++k) {
    double acc = 0.0, binom = 1.0, falling = 1.0;
    for (int j = 0; j <= std::min(k, a); ++j) {
      acc += binom * falling * std::pow(x, a - j) * D[k - j];
      binom = binom * (k - j) / (j + 1);
      falling *= (a - j);
    }
    out[k] = acc;
  }
}

namespace {

/// Precompiled evaluator of a term list against a monomial; not thread safe.
class TermEvaluator {
 public:
  TermEvaluator(const TermList& terms, const PointMonomial& a, const PotentialParams& pot, double dtau)
      : pot_(pot), dtau_(dtau), coefficient_(a.coefficient) {
    std::map<std::size_t, std::size_t> local;
    auto slot = [&](std::size_t p) {
      auto it = local.find(p);
      if (it != local.end()) return it->second;
      const std::size_t id = points_.size();
      local[p] = id;
      points_.push_back(p);
      power_.push_back(0);
      kmax_.push_back(0);
      return id;
    };
    for (const auto& [p, pw] : a.powers) power_[slot(p)] = pw;
    for (const auto& t : terms) {
      Compiled c;
      c.coefficient = t.coefficient;
      std::vector<char> touched(points_.size(), 0);
      for (const auto& [p, k] : t.orders) {
        const std::size_t id = slot(p);
        touched.resize(points_.size(), 0);
        touched[id] = 1;
        kmax_[id] = std::max(kmax_[id], k);
        c.factors.push_back({id, k});
      }
      touched.resize(points_.size(), 0);
      for (const auto& [p, pw] : a.powers) {
        const std::size_t id = local[p];
        if (!touched[id]) c.factors.push_back({id, 0});
      }
      compiled_.push_back(std::move(c));
    }
    h_.assign(points_.size() * 9, 0.0);
  }

  double operator()(const std::vector<double>& phi) {
    for (std::size_t i = 0; i < points_.size(); ++i)
      local_factor_derivatives(phi[points_[i]], power_[i], kmax_[i], pot_, dtau_, &h_[i * 9]);
    double acc = 0.0;
    for (const auto& c : compiled_) {
      double v = c.coefficient;
      for (const auto& [id, k] : c.factors) v *= h_[id * 9 + k];
      acc += v;
    }
    return coefficient_ * acc;
  }

 private:
  struct Compiled {
    double coefficient = 1.0;
    std::vector<std::pair<std::size_t, int>> factors;
  };
  PotentialParams pot_;
  double dtau_;
  double coefficient_;
  std::vector<std::size_t> points_;
  std::vector<int> power_;
  std::vector<int> kmax_;
  std::vector<Compiled> compiled_;
  std::vector<double> h_;
};

double potential_sum(const std::vector<double>& phi, const std::vector<std::size_t>& points,
                     const PotentialParams& pot, double dtau) {
  if (pot.b_m == 0.0) return 0.0;
  double acc = 0.0;
  for (auto p : points) acc += std::exp(-0.5 * pot.delta_m * phi[p] * phi[p]);
  return pot.b_m * dtau * acc;
}

std::mt19937_64 item_rng(std::uint64_t seed, const std::vector<std::uint64_t>& key) {
  std::vector<std::uint32_t> words{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                                   0xc1u};
  for (auto k : key) {
    words.push_back(static_cast<std::uint32_t>(k));
    words.push_back(static_cast<std::uint32_t>(k >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return std::mt19937_64(seq);
}

struct SNode {
  std::vector<double> s;
  double weight = 1.0;
};

std::vector<SNode> s_grid(int dims, int nodes) {
  std::vector<SNode> out;
  if (dims == 0) return {SNode{}};
  const auto rule = gauss_legendre(nodes, 0.0, 1.0);
  std::vector<int> idx(dims, 0);
  while (true) {
    SNode nd;
    for (int k = 0; k < dims; ++k) {
      nd.s.push_back(rule.nodes[idx[k]]);
      nd.weight *= rule.weights[idx[k]];
    }
    out.push_back(std::move(nd));
    int k = 0;
    for (; k < dims; ++k) {
      if (++idx[k] < nodes) break;
      idx[k] = 0;
    }
    if (k == dims) break;
  }
  return out;
}

Eigen::MatrixXd psd_root(const Eigen::MatrixXd& C) {
  Eigen::LLT<Eigen::MatrixXd> llt(C);
  if (llt.info() == Eigen::Success) return llt.matrixL();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
  Eigen::MatrixXd r = es.eigenvectors();
  for (Eigen::Index k = 0; k < C.rows(); ++k) r.col(k) *= std::sqrt(std::max(es.eigenvalues()[k], 0.0));
  return r;
}

double mean_of(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); }

double stderr_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - mu) * (x - mu);
  return std::sqrt(s / (v.size() - 1) / v.size());
}

void check_mc(const ClusterSettings& st) {
  if (st.batches < 2) throw InvalidParameter("cluster Monte Carlo: need at least 2 batches");
  if (st.samples < static_cast<std::size_t>(st.batches))
    throw InvalidParameter("cluster Monte Carlo: fewer samples than batches");
}

/// K for every tree of one rod sequence (shared samples / quadrature nodes).
std::vector<ClusterEstimate> cluster_terms_for_state(const std::vector<Tree>& trees, const ClusterState& st,
                                                     const PointMonomial& a, const ClusterGrid& g,
                                                     const PotentialParams& pot, const ClusterSettings& settings) {
  const int n = st.order();
  std::vector<TermEvaluator> evals;
  for (const auto& t : trees) evals.emplace_back(tree_terms(t, st, g), a, pot, g.dtau());
  const auto nodes = s_grid(n - 1, settings.s_nodes);
  std::vector<std::vector<double>> node_w(trees.size());
  for (std::size_t k = 0; k < trees.size(); ++k)
    for (const auto& nd : nodes) node_w[k].push_back(nd.weight * f_factor(trees[k], nd.s));
  InterpolatedGaussian ig(g, st.blocks());
  const auto& pts = ig.points();
  std::vector<ClusterEstimate> out(trees.size());

  if (settings.backend == ClusterBackend::Quadrature) {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      std::vector<double> acc(trees.size(), 0.0);
      quadrature_expectation(ig.covariance(nodes[i].s), pts, g.n_points(), settings.hermite_nodes,
                             settings.max_quadrature_nodes, [&](double w, const std::vector<double>& phi) {
                               const double ew = w * std::exp(-potential_sum(phi, pts, pot, g.dtau()));
                               for (std::size_t k = 0; k < trees.size(); ++k) acc[k] += ew * evals[k](phi);
                             });
      for (std::size_t k = 0; k < trees.size(); ++k) out[k].value += node_w[k][i] * acc[k];
    }
    return out;
  }

  check_mc(settings);
  std::vector<std::uint64_t> key{static_cast<std::uint64_t>(n)};
  for (auto r : st.y1_rods()) key.push_back(r);
  key.push_back(0xffffu);
  for (auto r : st.sequence()) key.push_back(r);
  const int B = settings.batches;
  std::vector<std::vector<double>> batch_val(trees.size(), std::vector<double>(B, 0.0));
  std::vector<double> z(ig.normals()), x(ig.dim()), phi(g.n_points(), 0.0);
  std::normal_distribution<double> normal;
  for (int b = 0; b < B; ++b) {
    auto bkey = key;
    bkey.push_back(static_cast<std::uint64_t>(b));
    auto rng = item_rng(settings.seed, bkey);
    const std::size_t lo = settings.samples * b / B, hi = settings.samples * (b + 1) / B;
    for (std::size_t s = lo; s < hi; ++s) {
      for (auto& v : z) v = normal(rng);
      for (std::size_t i = 0; i < nodes.size(); ++i) {
        ig.combine(nodes[i].s, z.data(), x.data());
        for (std::size_t q = 0; q < pts.size(); ++q) phi[pts[q]] = x[q];
        const double ew = std::exp(-potential_sum(phi, pts, pot, g.dtau()));
        for (std::size_t k = 0; k < trees.size(); ++k) batch_val[k][b] += node_w[k][i] * ew * evals[k](phi);
      }
    }
    for (std::size_t k = 0; k < trees.size(); ++k) batch_val[k][b] /= static_cast<double>(hi - lo);
  }
  for (std::size_t k = 0; k < trees.size(); ++k) {
    out[k].value = mean_of(batch_val[k]);
    out[k].stderr_ = stderr_of(batch_val[k]);
  }
  return out;
}

}  // namespace

double evaluate_terms(const TermList& terms, const PointMonomial& a, const std::vector<double>& phi,
                      const PotentialParams& pot, double dtau) {
  TermEvaluator ev(terms, a, pot, dtau);
  return ev(phi);
}

// --- interpolated Gaussian ------------------------------------------------------------------

InterpolatedGaussian::InterpolatedGaussian(const ClusterGrid& g, std::vector<std::vector<std::size_t>> blocks)
    : g_(&g), blocks_(std::move(blocks)) {
  const std::size_t n = blocks_.size();
  if (n == 0) throw InvalidParameter("interpolated gaussian: no blocks");
  if (n > 13) throw InvalidParameter("interpolated gaussian: too many blocks");
  for (const auto& b : blocks_) {
    block_start_.push_back(points_.size());
    points_.insert(points_.end(), b.begin(), b.end());
  }
  block_start_.push_back(points_.size());
  roots_.resize(n * n);
  for (std::size_t f = 0; f < n; ++f)
    for (std::size_t l = f; l < n; ++l) {
      std::vector<std::size_t> pts(points_.begin() + block_start_[f], points_.begin() + block_start_[l + 1]);
      roots_[f * n + l] = psd_root(g.matrix(pts));
    }
  for (unsigned mask = 0; mask < (1u << (n - 1)); ++mask) {
    MaskTerm t;
    t.mask = mask;
    std::size_t first = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const bool cut_after = i + 1 == n || (mask >> i & 1u);
      if (!cut_after) continue;
      Group gr;
      gr.offset = block_start_[first];
      gr.size = block_start_[i + 1] - block_start_[first];
      gr.z_offset = n_normals_;
      gr.root = &roots_[first * n + i];
      n_normals_ += gr.size;
      t.groups.push_back(gr);
      first = i + 1;
    }
    terms_.push_back(std::move(t));
  }
}

void InterpolatedGaussian::combine(const std::vector<double>& s, const double* z, double* phi) const {
  const std::size_t n = blocks_.size();
  if (s.size() + 1 < n) throw InvalidParameter("interpolated gaussian: need n - 1 parameters");
  std::fill(phi, phi + points_.size(), 0.0);
  for (const auto& t : terms_) {
    double lam = 1.0;
    for (std::size_t i = 0; i + 1 < n; ++i) lam *= (t.mask >> i & 1u) ? 1.0 - s[i] : s[i];
    if (lam <= 0.0) continue;
    const double sq = std::sqrt(lam);
    for (const auto& gr : t.groups) {
      Eigen::Map<Eigen::VectorXd> out(phi + gr.offset, static_cast<Eigen::Index>(gr.size));
      Eigen::Map<const Eigen::VectorXd> zz(z + gr.z_offset, static_cast<Eigen::Index>(gr.size));
      out.noalias() += sq * ((*gr.root) * zz);
    }
  }
}

Eigen::MatrixXd InterpolatedGaussian::covariance(const std::vector<double>& s) const {
  const auto m = static_cast<Eigen::Index>(points_.size());
  std::vector<int> blk(points_.size());
  for (std::size_t b = 0; b < blocks_.size(); ++b)
    for (std::size_t q = block_start_[b]; q < block_start_[b + 1]; ++q) blk[q] = static_cast<int>(b);
  Eigen::MatrixXd C(m, m);
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < m; ++j)
      C(i, j) = g_->cov(points_[i], points_[j]) * p_function(blk[i], blk[j], s);
  return C;
}

// --- estimates ------------------------------------------------------------------------------

ClusterEstimate cluster_term(const Tree& t, const ClusterState& st, const PointMonomial& a, const ClusterGrid& g,
                             const PotentialParams& pot, const ClusterSettings& settings) {
  return cluster_terms_for_state({t}, st, a, g, pot, settings).front();
}

namespace {

std::vector<std::size_t> all_points(const ClusterGrid& g) {
  std::vector<std::size_t> p(g.n_points());
  std::iota(p.begin(), p.end(), 0);
  return p;
}

// Common-random-number Monte Carlo over the full grid; f accumulates into
// per-sample values. Returns per-batch means of each value.
template <class F>
std::vector<std::vector<double>> full_grid_batches(const ClusterGrid& g, const ClusterSettings& st,
                                                   std::uint64_t tag, std::size_t n_values, F f) {
  check_mc(st);
  const auto pts = all_points(g);
  const Eigen::MatrixXd L = psd_root(g.matrix(pts));
  const int B = st.batches;
  std::vector<std::vector<double>> out(n_values, std::vector<double>(B, 0.0));
  Eigen::VectorXd z(pts.size()), x(pts.size());
  std::vector<double> phi(pts.size()), vals(n_values);
  std::normal_distribution<double> normal;
  for (int b = 0; b < B; ++b) {
    auto rng = item_rng(st.seed, {tag, static_cast<std::uint64_t>(b)});
    const std::size_t lo = st.samples * b / B, hi = st.samples * (b + 1) / B;
    for (std::size_t s = lo; s < hi; ++s) {
      for (Eigen::Index k = 0; k < z.size(); ++k) z[k] = normal(rng);
      x.noalias() = L * z;
      for (std::size_t k = 0; k < pts.size(); ++k) phi[k] = x[k];
      f(phi, vals);
      for (std::size_t k = 0; k < n_values; ++k) out[k][b] += vals[k];
    }
    for (std::size_t k = 0; k < n_values; ++k) out[k][b] /= static_cast<double>(hi - lo);
  }
  return out;
}

// ratio of means with delete-one-batch jackknife error
ClusterEstimate ratio_jackknife(const std::vector<double>& num, const std::vector<double>& den) {
  const std::size_t B = num.size();
  const double sn = std::accumulate(num.begin(), num.end(), 0.0);
  const double sd = std::accumulate(den.begin(), den.end(), 0.0);
  ClusterEstimate r;
  r.value = sn / sd;
  std::vector<double> loo(B);
  for (std::size_t b = 0; b < B; ++b) loo[b] = (sn - num[b]) / (sd - den[b]);
  const double mu = mean_of(loo);
  double ss = 0.0;
  for (double v : loo) ss += (v - mu) * (v - mu);
  r.stderr_ = std::sqrt(ss * (B - 1) / B);
  return r;
}

}  // namespace

ClusterEstimate ratio_F(const std::vector<std::size_t>& complement_points, const ClusterGrid& g,
                        const PotentialParams& pot, const ClusterSettings& settings) {
  const auto pts = all_points(g);
  if (settings.backend == ClusterBackend::Quadrature) {
    double num = 0.0, den = 0.0;
    quadrature_expectation(g.matrix(pts), pts, g.n_points(), settings.hermite_nodes, settings.max_quadrature_nodes,
                           [&](double w, const std::vector<double>& phi) {
                             num += w * std::exp(-potential_sum(phi, complement_points, pot, g.dtau()));
                             den += w * std::exp(-potential_sum(phi, pts, pot, g.dtau()));
                           });
    return {num / den, 0.0, {}};
  }
  std::uint64_t tag = 0xF0000000ull;
  for (auto p : complement_points) tag = tag * 1000003ull + p + 1;
  auto v = full_grid_batches(g, settings, tag, 2, [&](const std::vector<double>& phi, std::vector<double>& out) {
    out[0] = std::exp(-potential_sum(phi, complement_points, pot, g.dtau()));
    out[1] = std::exp(-potential_sum(phi, pts, pot, g.dtau()));
  });
  return ratio_jackknife(v[0], v[1]);
}

ClusterEstimate direct_expectation(const PointMonomial& a, const ClusterGrid& g, const PotentialParams& pot,
                                   const ClusterSettings& settings) {
  const auto pts = all_points(g);
  if (settings.backend == ClusterBackend::Quadrature) {
    double num = 0.0, den = 0.0;
    quadrature_expectation(g.matrix(pts), pts, g.n_points(), settings.hermite_nodes, settings.max_quadrature_nodes,
                           [&](double w, const std::vector<double>& phi) {
                             const double ew = w * std::exp(-potential_sum(phi, pts, pot, g.dtau()));
                             num += ew * a(phi);
                             den += ew;
                           });
    return {num / den, 0.0, {}};
  }
  if (g.slices() >= 2) {
    MeasureSpec spec;
    spec.kern = &g.kernel();
    spec.slices = g.slices();
    spec.pot = pot;
    SamplerSettings ss;
    ss.samples = settings.samples;
    ss.batches = settings.batches;
    ss.seed = settings.seed;
    ss.threads = settings.threads;
    auto r = expectation([&a](const FieldConfiguration& f) { return a(f.values); }, spec, ss);
    return {r.mean, r.stderr_, r.warnings};
  }
  auto v = full_grid_batches(g, settings, 0xD1u, 2, [&](const std::vector<double>& phi, std::vector<double>& out) {
    out[1] = std::exp(-potential_sum(phi, pts, pot, g.dtau()));
    out[0] = out[1] * a(phi);
  });
  return ratio_jackknife(v[0], v[1]);
}

ExpansionReport truncated_expansion(const PointMonomial& a, int n_max, const ClusterGrid& g,
                                    const PotentialParams& pot, const ClusterSettings& settings) {
  if (n_max < 1) throw InvalidParameter("truncated_expansion: n_max must be at least 1");
  const ClusterState base(g, a);
  const auto free_rods = base.complement_rods();
  if (n_max > static_cast<int>(free_rods.size()) + 1)
    throw InvalidParameter("truncated_expansion: n_max exceeds the number of rods outside X_1 plus one");
  const int cap = g.mode() == RodMode::LowTemperature ? 3 : 4;
  if (n_max > cap) {
    std::ostringstream os;
    os << "truncated_expansion: order " << n_max << " exceeds the supported cap " << cap << " in this mode";
    throw InvalidParameter(os.str());
  }
  ExpansionReport rep;
  std::map<std::vector<std::size_t>, ClusterEstimate> f_cache;
  auto F_of = [&](const ClusterState& st) {
    auto key = st.complement_rods();
    auto it = f_cache.find(key);
    if (it != f_cache.end()) return it->second;
    auto v = ratio_F(st.complement_points(), g, pot, settings);
    f_cache[key] = v;
    return v;
  };
  double partial = 0.0, var_partial = 0.0;
  for (int n = 1; n <= n_max; ++n) {
    // ordered sequences of distinct free rods of length n - 1
    std::vector<std::vector<std::size_t>> seqs;
    std::vector<std::size_t> cur;
    std::vector<char> used(free_rods.size(), 0);
    std::function<void()> rec = [&]() {
      if (static_cast<int>(cur.size()) == n - 1) {
        seqs.push_back(cur);
        return;
      }
      for (std::size_t i = 0; i < free_rods.size(); ++i) {
        if (used[i]) continue;
        used[i] = 1;
        cur.push_back(free_rods[i]);
        rec();
        cur.pop_back();
        used[i] = 0;
      }
    };
    rec();
    const auto trees = enumerate_trees(n);
    std::vector<ClusterEstimate> k_of(seqs.size());
    ClusterSettings inner = settings;
    inner.threads = 1;
    detail::parallel_for(static_cast<int>(seqs.size()), settings.threads, [&](int i) {
      ClusterState st = base;
      for (auto r : seqs[i]) st.push(r);
      auto ks = cluster_terms_for_state(trees, st, a, g, pot, inner);
      ClusterEstimate sum;
      // trees share samples: their errors add linearly at worst
      for (const auto& k : ks) {
        sum.value += k.value;
        sum.stderr_ += k.stderr_;
      }
      k_of[i] = sum;
    });
    // group by X_n (F is shared by permutations of the same rod set)
    std::map<std::vector<std::size_t>, std::pair<double, double>> by_set;  // sum K, sum var K
    std::map<std::vector<std::size_t>, ClusterState> states;
    for (std::size_t i = 0; i < seqs.size(); ++i) {
      ClusterState st = base;
      for (auto r : seqs[i]) st.push(r);
      auto key = st.complement_rods();
      by_set[key].first += k_of[i].value;
      by_set[key].second += k_of[i].stderr_ * k_of[i].stderr_;
      states.emplace(key, st);
    }
    OrderContribution oc;
    oc.n = n;
    oc.sequences = seqs.size();
    double var = 0.0;
    for (const auto& [key, kv] : by_set) {
      const auto F = F_of(states.at(key));
      oc.value.value += kv.first * F.value;
      var += F.value * F.value * kv.second + kv.first * kv.first * F.stderr_ * F.stderr_;
    }
    oc.value.stderr_ = std::sqrt(var);
    partial += oc.value.value;
    var_partial += var;
    rep.orders.push_back(oc);
    rep.partial_sums.push_back(partial);
  }
  rep.direct = direct_expectation(a, g, pot, settings);
  for (std::size_t i = 0; i < rep.partial_sums.size(); ++i) {
    double v = rep.direct.stderr_ * rep.direct.stderr_;
    for (std::size_t j = 0; j <= i; ++j) v += rep.orders[j].value.stderr_ * rep.orders[j].value.stderr_;
    rep.residuals.push_back(rep.direct.value - rep.partial_sums[i]);
    rep.residual_errors.push_back(std::sqrt(v));
  }
  return rep;
}

NewtonLeibnizReport newton_leibniz_check(const PointMonomial& a, const ClusterGrid& g, const PotentialParams& pot,
                                         const ClusterSettings& settings, double fd_step) {
  check_mc(settings);
  const ClusterState st(g, a);
  const auto xc = st.complement_points();
  if (xc.empty()) throw InvalidParameter("newton-leibniz check: X_1 covers the whole box");
  InterpolatedGaussian ig(g, {st.blocks()[0], xc});
  const auto& pts = ig.points();
  const auto nodes = s_grid(1, settings.s_nodes);
  const TermList ibp_terms = delta_apply({{1.0, {}}}, st.blocks()[0], xc, g);
  const int B = settings.batches;
  std::normal_distribution<double> normal;

  auto run = [&](std::uint64_t tag, std::size_t n_values, auto per_sample) {
    std::vector<std::vector<double>> out(n_values, std::vector<double>(B, 0.0));
    std::vector<double> z(ig.normals()), vals(n_values);
    for (int b = 0; b < B; ++b) {
      auto rng = item_rng(settings.seed, {0x4e4cu, tag, static_cast<std::uint64_t>(b)});
      const std::size_t lo = settings.samples * b / B, hi = settings.samples * (b + 1) / B;
      for (std::size_t s = lo; s < hi; ++s) {
        for (auto& v : z) v = normal(rng);
        per_sample(z, vals);
        for (std::size_t k = 0; k < n_values; ++k) out[k][b] += vals[k];
      }
      for (std::size_t k = 0; k < n_values; ++k) out[k][b] /= static_cast<double>(hi - lo);
    }
    return out;
  };
  std::vector<double> x(ig.dim()), phi(g.n_points(), 0.0);
  auto field_at = [&](double s, const std::vector<double>& z) {
    ig.combine({s}, z.data(), x.data());
    for (std::size_t q = 0; q < pts.size(); ++q) phi[pts[q]] = x[q];
  };
  auto U_sample = [&](double s, const std::vector<double>& z) {
    field_at(s, z);
    return a(phi) * std::exp(-potential_sum(phi, pts, pot, g.dtau()));
  };

  NewtonLeibnizReport rep;
  auto v1 = run(1, 4, [&](const std::vector<double>& z, std::vector<double>& out) {
    const double u1 = U_sample(1.0, z);
    const double w1 = std::exp(-potential_sum(phi, pts, pot, g.dtau()));
    const double u0 = U_sample(0.0, z);
    out[0] = u1 - u0;
    out[1] = w1;
    out[2] = u0;
    out[3] = u1;
  });
  rep.total = mean_of(v1[0]);
  rep.total_err = stderr_of(v1[0]);
  rep.z_t = mean_of(v1[1]);
  rep.first_term = mean_of(v1[2]) / rep.z_t;
  rep.direct = mean_of(v1[3]) / rep.z_t;

  auto v2 = run(2, 1, [&](const std::vector<double>& z, std::vector<double>& out) {
    double acc = 0.0;
    for (const auto& nd : nodes) {
      const double s = nd.s[0];
      acc += nd.weight * (U_sample(s + fd_step, z) - U_sample(s - fd_step, z)) / (2.0 * fd_step);
    }
    out[0] = acc;
  });
  rep.fd = mean_of(v2[0]);
  rep.fd_err = stderr_of(v2[0]);

  TermEvaluator ev(ibp_terms, a, pot, g.dtau());
  auto v3 = run(3, 1, [&](const std::vector<double>& z, std::vector<double>& out) {
    double acc = 0.0;
    for (const auto& nd : nodes) {
      field_at(nd.s[0], z);
      acc += nd.weight * ev(phi) * std::exp(-potential_sum(phi, pts, pot, g.dtau()));
    }
    out[0] = acc;
  });
  rep.ibp = mean_of(v3[0]);
  rep.ibp_err = stderr_of(v3[0]);
  return rep;
}

}  // namespace egm
