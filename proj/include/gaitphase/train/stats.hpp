#pragma once

// Paired two-sided t-test with the p-value integrated numerically.

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>

namespace gaitphase {

// Student t density with nu degrees of freedom.
inline double student_t_pdf(double x, double nu) {
  const double log_norm = std::lgamma((nu + 1.0) / 2.0) - std::lgamma(nu / 2.0) - 0.5 * std::log(nu * std::numbers::pi);
  return std::exp(log_norm - (nu + 1.0) / 2.0 * std::log1p(x * x / nu));
}

namespace detail {

inline double simpson(double fa, double fm, double fb, double a, double b) { return (b - a) / 6.0 * (fa + 4.0 * fm + fb); }

inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm,
                               double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
  const double flm = f(lm), frm = f(rm);
  const double left = simpson(fa, flm, fm, a, m), right = simpson(fm, frm, fb, m, b);
  const double delta = left + right - whole;
  if (depth <= 0 || std::fabs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return adaptive_simpson(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) +
         adaptive_simpson(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1);
}

}  // namespace detail

// Integral of f over [a, b] by adaptive Simpson to absolute tolerance `tol`.
inline double integrate(const std::function<double(double)>& f, double a, double b, double tol = 1e-8) {
  const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
  return detail::adaptive_simpson(f, a, b, fa, fm, fb, detail::simpson(fa, fm, fb, a, b), tol, 50);
}

// P(|T| >= |t|). The upper tail [|t|, inf) is mapped onto u in [0, 1) with
// x = |t| + u / (1 - u). At u = 1 the integrand tends to 1/pi for nu = 1
// and to 0 for larger nu.
inline double t_two_sided_p(double t, double nu) {
  if (!(nu > 0.0)) throw std::invalid_argument("t-test: degrees of freedom must be positive");
  const double a = std::fabs(t);
  auto g = [&](double u) {
    if (u >= 1.0) return nu == 1.0 ? 1.0 / std::numbers::pi : 0.0;
    const double w = 1.0 - u;
    return student_t_pdf(a + u / w, nu) / (w * w);
  };
  const double tail = integrate(g, 0.0, 1.0, 0.5e-8);
  return std::clamp(2.0 * tail, 0.0, 1.0);
}

inline std::string significance_stars(double p) {
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "ns";
}

struct TTestReport {
  std::size_t n = 0;
  double mean_diff = 0.0;
  double t = 0.0;
  std::size_t df = 0;
  double p = 1.0;
  std::string stars = "ns";
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TTestReport, n, mean_diff, t, df, p, stars)

// Differences d = a - b; t = mean(d) / (sd(d) / sqrt(n)) with the n-1 sd.
inline TTestReport paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw std::invalid_argument("paired_t_test: length mismatch");
  if (a.size() < 3) throw std::invalid_argument("paired_t_test: need at least 3 pairs");
  const std::size_t n = a.size();
  double mean = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double e = a[i] - b[i] - mean;
    ss += e * e;
  }
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (!(sd > 0.0)) throw std::invalid_argument("paired_t_test: differences have zero variance");
  TTestReport r;
  r.n = n;
  r.mean_diff = mean;
  r.df = n - 1;
  r.t = mean / (sd / std::sqrt(static_cast<double>(n)));
  r.p = t_two_sided_p(r.t, static_cast<double>(r.df));
  r.stars = significance_stars(r.p);
  return r;
}

}  // namespace gaitphase
