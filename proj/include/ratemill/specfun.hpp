#pragma once

// Special functions used by the statistics and validation modules: normal
// CDF/quantile, regularized incomplete beta (for Student-t tails), chi-square
// survival with 1 df, and stable binomial tail probabilities.

#include <cmath>
#include <limits>
#include <stdexcept>

namespace ratemill {

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x * 0.7071067811865475244); }
inline double norm_sf(double x) { return 0.5 * std::erfc(x * 0.7071067811865475244); }

// Acklam's rational approximation to the normal quantile, |rel err| < 1.2e-9.
inline double norm_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("norm_quantile: p outside (0,1)");
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
  const double plow = 0.02425, phigh = 1 - plow;
  double q, r;
  if (p < plow) {
    q = std::sqrt(-2 * std::log(p));
    return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  if (p > phigh) {
    q = std::sqrt(-2 * std::log(1 - p));
    return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
           ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  }
  q = p - 0.5;
  r = q * q;
  return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
         (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
}

namespace detail {

// Continued fraction for the incomplete beta function (Lentz's method).
inline double betacf(double a, double b, double x) {
  const int max_iter = 300;
  const double eps = 3e-15, fpmin = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < fpmin) d = fpmin;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= max_iter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = 1.0 + aa / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < eps) break;
  }
  return h;
}

}  // namespace detail

// Regularized incomplete beta I_x(a, b).
inline double betainc(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double ln_beta =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_beta);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::betacf(a, b, x) / a;
  return 1.0 - front * detail::betacf(b, a, 1.0 - x) / b;
}

// P(T >= t) for Student-t with df degrees of freedom.
inline double student_t_sf(double t, double df) {
  if (std::isinf(t)) return t > 0 ? 0.0 : 1.0;
  const double p_two = betainc(df / 2.0, 0.5, df / (df + t * t));  // 2 * P(T >= |t|)
  return t >= 0.0 ? 0.5 * p_two : 1.0 - 0.5 * p_two;
}

// P(X >= x) for chi-square with 1 df.
inline double chi2_sf_1df(double x) {
  if (x <= 0.0) return 1.0;
  return std::erfc(std::sqrt(x / 2.0));
}

inline double binom_log_pmf(long k, long n, double p) {
  const double lc = std::lgamma(double(n) + 1.0) - std::lgamma(double(k) + 1.0) -
                    std::lgamma(double(n - k) + 1.0);
  double lp = 0.0;
  if (k > 0) lp += double(k) * std::log(p);
  if (n - k > 0) lp += double(n - k) * std::log1p(-p);
  return lc + lp;
}

// P(X >= k) for X ~ Binomial(n, p), summed in linear space after a log-space
// start so tiny tails stay accurate.
inline double binom_sf_inclusive(long k, long n, double p) {
  if (k <= 0) return 1.0;
  if (k > n) return 0.0;
  if (k == n) return std::pow(p, double(n));
  double term = std::exp(binom_log_pmf(k, n, p));
  double total = term;
  const double odds = p / (1.0 - p);
  for (long i = k; i < n; ++i) {
    term *= odds * double(n - i) / double(i + 1);
    total += term;
    if (term < total * 1e-18 && double(i) > double(n) * p) break;
  }
  return total > 1.0 ? 1.0 : total;
}

// P(X <= k) for X ~ Binomial(n, p).
inline double binom_cdf(long k, long n, double p) {
  if (k < 0) return 0.0;
  if (k >= n) return 1.0;
  if (k == 0) return std::pow(1.0 - p, double(n));
  // Sum whichever tail is shorter.
  if (double(k) < double(n) * p) {
    double term = std::exp(binom_log_pmf(k, n, p));
    double total = term;
    const double inv_odds = (1.0 - p) / p;
    for (long i = k; i > 0; --i) {
      term *= inv_odds * double(i) / double(n - i + 1);
      total += term;
      if (term < total * 1e-18) break;
    }
    return total > 1.0 ? 1.0 : total;
  }
  return 1.0 - binom_sf_inclusive(k + 1, n, p);
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace ratemill
