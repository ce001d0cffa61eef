#include "egm/model_params.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

namespace egm {

namespace {

void require_positive(double v, const char* name) {
  if (!(v > 0.0) || !std::isfinite(v)) {
    std::ostringstream os;
    os << name << " must be positive and finite, got " << v;
    throw InvalidParameter(os.str());
  }
}

// 64 b sqrt(a) C_G e^c, the common base of all thresholds.
double threshold_base(double b, double a, double C_G, double c) {
  return 64.0 * b * std::sqrt(a) * C_G * std::exp(c);
}

}  // namespace

void ModelParams::validate() const {
  require_positive(m, "m");
  require_positive(a, "a");
  require_positive(J, "J");
  if (!(b >= 0.0)) throw InvalidParameter("b must be nonnegative");
  if (!(delta >= 0.0)) throw InvalidParameter("delta must be nonnegative");
  if (!(beta > 0.0)) throw InvalidParameter("beta must be positive (or inf)");
  if (d < 1) throw InvalidParameter("d must be a positive integer");
  if (nu < 1) throw InvalidParameter("nu must be a positive integer");
  if (static_cast<int>(dims.size()) != nu) {
    std::ostringstream os;
    os << "dims has " << dims.size() << " entries but nu = " << nu;
    throw InvalidParameter(os.str());
  }
  for (int n : dims) {
    if (n < 2 || n % 2 != 0) {
      std::ostringstream os;
      os << "box side N = " << n
         << " violates the evenness rule: every N_mu must be even with "
            "N_mu/2 a positive integer (periodic identification q_{j+N} = q_j)";
      throw InvalidParameter(os.str());
    }
  }
  if (!h.empty() && static_cast<int>(h.size()) != d) {
    std::ostringstream os;
    os << "field h has " << h.size() << " components but d = " << d;
    throw InvalidParameter(os.str());
  }
}

double ModelParams::field_norm() const {
  double s = 0.0;
  for (double x : h) s += x * x;
  return std::sqrt(s);
}

double ModelParams::field_component(int alpha) const {
  return h.empty() ? 0.0 : h.at(static_cast<std::size_t>(alpha));
}

std::size_t ModelParams::site_count() const {
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                         [](std::size_t acc, int n) { return acc * static_cast<std::size_t>(n); });
}

RescaledParams rescale(const ModelParams& p) {
  require_positive(p.m, "m");
  RescaledParams r;
  const double sqrt_m = std::sqrt(p.m);
  r.alpha = std::pow(p.m, -0.25);
  r.b_m = p.b * sqrt_m;
  r.delta_m = p.delta / sqrt_m;
  r.beta_hat = is_zero_temperature(p.beta) ? kInfiniteBeta : p.beta / sqrt_m;
  r.h_hat.resize(p.h.size());
  for (std::size_t i = 0; i < p.h.size(); ++i) r.h_hat[i] = r.alpha * p.h[i];

  // Tr B = sum over dual modes of sqrt(eps(k)); C_m = (d/2) Tr B.
  double trace_b = 0.0;
  if (static_cast<int>(p.dims.size()) == p.nu && p.nu >= 1) {
    std::vector<int> idx(p.dims.size(), 0);
    const std::size_t total = p.site_count();
    for (std::size_t flat = 0; flat < total; ++flat) {
      std::size_t rem = flat;
      double eps = p.a;
      for (std::size_t mu = p.dims.size(); mu-- > 0;) {
        const int n = p.dims[mu];
        const double k = 2.0 * M_PI * static_cast<double>(rem % n) / n;
        rem /= n;
        const double s = std::sin(0.5 * k);
        eps += 4.0 * p.J * s * s;
      }
      trace_b += std::sqrt(eps);
    }
  }
  r.C_m = 0.5 * p.d * trace_b;
  return r;
}

ModelParams unscale(const RescaledParams& r, const ModelParams& shape) {
  ModelParams p = shape;
  const double sqrt_m = std::sqrt(shape.m);
  p.b = r.b_m / sqrt_m;
  p.delta = r.delta_m * sqrt_m;
  p.beta = is_zero_temperature(r.beta_hat) ? kInfiniteBeta : r.beta_hat * sqrt_m;
  p.h.resize(r.h_hat.size());
  for (std::size_t i = 0; i < r.h_hat.size(); ++i) p.h[i] = r.h_hat[i] / r.alpha;
  return p;
}

double mass_threshold(double b, double a, double C_G, double c, int d) {
  require_positive(b, "b");
  require_positive(a, "a");
  require_positive(C_G, "C_G");
  if (d < 1) throw InvalidParameter("d must be >= 1");
  return std::pow(threshold_base(b, a, C_G, c), -8.0 / d);
}

double epsilon_of_m(double b, double a, double C_G, double m, int d) {
  if (b < 0.0 || a <= 0.0 || C_G <= 0.0 || m < 0.0 || d < 1)
    throw InvalidParameter("epsilon_of_m requires b, m >= 0 and a, C_G, d > 0");
  return 64.0 * b * std::sqrt(a) * C_G * std::pow(m, d / 8.0);
}

double field_threshold(double m_star, double h_norm, double C_G, double c) {
  require_positive(m_star, "m_star");
  if (!(h_norm >= 0.0)) throw InvalidParameter("h_norm must be nonnegative");
  const double x = h_norm * C_G * std::exp(c + 1.0);
  if (x <= 1.0) return m_star;  // second branch is >= m_star (unbounded at x = 0)
  return std::min(m_star, m_star * std::pow(x, -4.0));
}

double beta_threshold(double b, double a, double C_G, double c, int d) {
  require_positive(b, "b");
  require_positive(a, "a");
  require_positive(C_G, "C_G");
  if (d < 1) throw InvalidParameter("d must be >= 1");
  return std::pow(threshold_base(b, a, C_G, c), -2.0 / d);
}

ThresholdReport compute_thresholds(const ModelParams& p, double c) {
  ThresholdReport t;
  t.c = c;
  t.C_G = 1.0 / p.a;
  t.m_star = mass_threshold(p.b, p.a, t.C_G, c, p.d);
  t.beta_star = beta_threshold(p.b, p.a, t.C_G, c, p.d);
  t.m_star_h = field_threshold(t.m_star, p.field_norm(), t.C_G, c);
  t.epsilon_m = epsilon_of_m(p.b, p.a, t.C_G, p.m, p.d);
  return t;
}

}  // namespace egm
