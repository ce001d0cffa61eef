#include "egm/potential.hpp"

#include <cmath>
#include <stdexcept>

#include "egm/model_params.hpp"
#include "egm/quadrature.hpp"

namespace egm {

namespace {

double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

}  // namespace

double potential(std::span<const double> q, double b, double delta) {
  return b * std::exp(-0.5 * delta * squared_norm(q));
}

double rescaled_potential(std::span<const double> x, const PotentialParams& p) {
  return p.b_m * std::exp(-0.5 * p.delta_m * squared_norm(x));
}

RepresentationCheck gaussian_representation_check(std::span<const double> q, double b,
                                                  double delta, int nodes) {
  const int d = static_cast<int>(q.size());
  if (d < 1 || d > 3) throw InvalidParameter("gaussian_representation_check: need 1 <= d <= 3");
  const auto rule = gauss_hermite_normal(nodes);
  const double sd = std::sqrt(delta);
  // the imaginary part cancels by symmetry of the nodes; accumulate the cosine
  double acc = 0.0;
  std::vector<int> idx(d, 0);
  const long total = static_cast<long>(std::pow(nodes, d));
  for (long flat = 0; flat < total; ++flat) {
    long rem = flat;
    double w = 1.0, phase = 0.0;
    for (int a = 0; a < d; ++a) {
      const int i = static_cast<int>(rem % nodes);
      rem /= nodes;
      w *= rule.weights[i];
      phase += rule.nodes[i] * q[a];
    }
    acc += w * std::cos(sd * phase);
  }
  RepresentationCheck r;
  r.lhs = b * acc;
  r.rhs = potential(q, b, delta);
  r.abs_diff = std::abs(r.lhs - r.rhs);
  return r;
}

std::vector<double> derivatives_upto(double x, int n_max, const PotentialParams& p) {
  if (n_max > 30) throw InvalidParameter("nth_derivative: order above 30 is not supported");
  if (n_max < 0) throw InvalidParameter("nth_derivative: order must be nonnegative");
  const double dm = p.delta_m;
  const double quarter = std::exp(-0.25 * dm * x * x);
  std::vector<double> I(n_max + 1);
  I[0] = -p.b_m * quarter;  // e^{dm x^2/4} X
  if (n_max >= 1) I[1] = p.b_m * dm * x * quarter;
  for (int n = 2; n <= n_max; ++n) I[n] = -dm * x * I[n - 1] - (n - 1) * dm * I[n - 2];
  for (double& v : I) v *= quarter;
  return I;
}

double nth_derivative(double x, int n, const PotentialParams& p) {
  return derivatives_upto(x, n, p).back();
}

double nth_derivative_hermite(double x, int n, const PotentialParams& p) {
  if (n < 0 || n > 30) throw InvalidParameter("nth_derivative_hermite: 0 <= n <= 30");
  // integer coefficient table of He_n
  std::vector<std::vector<long long>> he{{1}, {0, 1}};
  for (int k = 1; k < n; ++k) {
    std::vector<long long> next(k + 2, 0);
    for (int i = 0; i <= k; ++i) next[i + 1] += he[k][i];
    for (int i = 0; i < static_cast<int>(he[k - 1].size()); ++i) next[i] -= k * he[k - 1][i];
    he.push_back(std::move(next));
  }
  const double y = std::sqrt(p.delta_m) * x;
  double val = 0.0;
  const auto& c = he[n];
  for (int i = static_cast<int>(c.size()) - 1; i >= 0; --i) val = val * y + static_cast<double>(c[i]);
  const double sign_pow = std::pow(-std::sqrt(p.delta_m), n);
  return -p.b_m * sign_pow * val * std::exp(-0.5 * p.delta_m * x * x);
}

std::vector<double> exp_derivative_ratios(double x, int n_max, const PotentialParams& p,
                                          double scale) {
  auto g = derivatives_upto(x, n_max, p);
  for (double& v : g) v *= scale;
  std::vector<double> D(n_max + 1, 0.0);
  D[0] = 1.0;
  for (int n = 1; n <= n_max; ++n) {
    double acc = 0.0;
    for (int k = 0; k <= n - 1; ++k) acc += binomial(n - 1, k) * g[k + 1] * D[n - 1 - k];
    D[n] = acc;
  }
  return D;
}

BoundCheckResult derivative_bound_check(int n_max, const std::vector<double>& grid,
                                        const PotentialParams& p) {
  if (!(p.b_m < 1.0)) throw InvalidParameter("derivative bounds are asserted only for b_m < 1");
  BoundCheckResult res;
  bool proto_seen = false, exp_seen = false;
  for (double x : grid) {
    const auto X = derivatives_upto(x, n_max, p);
    const double eX = std::exp(X[0]);
    const auto D = exp_derivative_ratios(x, n_max, p);
    const double env = std::exp(-0.25 * p.delta_m * x * x);
    double fact = 1.0;
    for (int n = 0; n <= n_max; ++n) {
      if (n > 0) fact *= n;
      const double scale = std::pow(2.0, n) * std::pow(p.delta_m, 0.5 * n) * p.b_m * env;
      const double rhs_proto = scale * std::sqrt(fact);
      const double lhs_proto = std::abs(X[n]);
      if (rhs_proto > 0.0) res.worst_ratio_prototype = std::max(res.worst_ratio_prototype, lhs_proto / rhs_proto);
      if (lhs_proto > rhs_proto * (1.0 + 1e-12) + 1e-300 && !proto_seen) {
        res.pass = false;
        proto_seen = true;
        res.first_violations.push_back({n, x, lhs_proto, rhs_proto, "prototype"});
      }
      if (n == 0) continue;
      const double rhs_exp = scale * fact;
      const double lhs_exp = std::abs(D[n] * eX);
      if (rhs_exp > 0.0) res.worst_ratio_exponential = std::max(res.worst_ratio_exponential, lhs_exp / rhs_exp);
      if (lhs_exp > rhs_exp * (1.0 + 1e-12) + 1e-300 && !exp_seen) {
        res.pass = false;
        exp_seen = true;
        res.first_violations.push_back({n, x, lhs_exp, rhs_exp, "exponential"});
      }
    }
  }
  return res;
}

double auxiliary_potential(std::span<const double> x, std::span<const double> y,
                           const PotentialParams& p) {
  if (x.size() != y.size()) throw InvalidParameter("auxiliary_potential: dimension mismatch");
  double plus = 0.0, minus = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    plus += (x[i] + y[i]) * (x[i] + y[i]);
    minus += (x[i] - y[i]) * (x[i] - y[i]);
  }
  return p.b_m * (std::exp(-0.25 * p.delta_m * plus) + std::exp(-0.25 * p.delta_m * minus));
}

std::vector<double> uniform_grid(double lo, double hi, double step) {
  std::vector<double> g;
  const long n = std::lround((hi - lo) / step);
  g.reserve(n + 1);
  for (long i = 0; i <= n; ++i) g.push_back(lo + i * step);
  return g;
}

}  // namespace egm
