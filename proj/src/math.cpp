#include "pdpnet/math.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace pdpnet {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

double log_add(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  double hi = std::max(a, b), lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

double log_rising(double x, std::uint64_t n) {
  if (n == 0) return 0.0;
  if (x <= 0.0) throw NumericalError("log_rising requires x > 0");
  if (n < 16) {
    double s = 0.0;
    for (std::uint64_t i = 0; i < n; ++i) s += std::log(x + double(i));
    return s;
  }
  return std::lgamma(x + double(n)) - std::lgamma(x);
}

double log_rising_step(double b, double a, std::uint64_t T) {
  if (T == 0) return 0.0;
  if (a == 0.0) {
    if (b <= 0.0) throw NumericalError("log_rising_step requires b > 0 when a == 0");
    return double(T) * std::log(b);
  }
  if (T < 16 || b <= 0.0) {
    double s = 0.0;
    for (std::uint64_t i = 0; i < T; ++i) {
      double term = b + a * double(i);
      if (term <= 0.0) throw NumericalError("log_rising_step: nonpositive factor");
      s += std::log(term);
    }
    return s;
  }
  return double(T) * std::log(a) + std::lgamma(b / a + double(T)) - std::lgamma(b / a);
}

StirlingCache::StirlingCache(double discount) : a_(discount) {
  if (discount < 0.0 || discount >= 1.0)
    throw ValidationError("StirlingCache: discount must lie in [0, 1)");
  rows_.push_back({0.0});  // S^0_0 = 1
}

void StirlingCache::grow(std::uint64_t n) {
  // Memory guard: the triangular table is quadratic in the largest count.
  if (n > 60000) throw NumericalError("StirlingCache: count exceeds supported range");
  while (rows_.size() <= n) {
    std::uint64_t m = rows_.size();  // building row m from row m-1
    const std::vector<double>& prev = rows_[m - 1];
    std::vector<double> row(m + 1, kNegInf);
    for (std::uint64_t t = 1; t <= m; ++t) {
      double from_new = (t - 1 < prev.size()) ? prev[t - 1] : kNegInf;
      double from_join = kNegInf;
      if (t < prev.size() && prev[t] != kNegInf) {
        double coef = double(m - 1) - a_ * double(t);
        if (coef > 0.0) from_join = std::log(coef) + prev[t];
      }
      row[t] = log_add(from_new, from_join);
    }
    rows_.push_back(std::move(row));
  }
}

double StirlingCache::log_s(std::uint64_t n, std::uint64_t t) {
  if (t > n) return kNegInf;
  if (n == 0) return t == 0 ? 0.0 : kNegInf;
  if (t == 0) return kNegInf;
  grow(n);
  return rows_[n][t];
}

double StirlingCache::removal_probability(std::uint64_t n, std::uint64_t t) {
  if (n == 0 || t == 0 || t > n) throw ValidationError("removal_probability: invalid (n, t)");
  if (n == 1) return 1.0;
  double num = log_s(n - 1, t - 1);
  if (num == kNegInf) return 0.0;
  return std::exp(num - log_s(n, t));
}

namespace {

// Lower incomplete gamma by series, upper by continued fraction.
double gamma_p_series(double s, double x) {
  double sum = 1.0 / s, term = sum;
  for (int k = 1; k < 500; ++k) {
    term *= x / (s + k);
    sum += term;
    if (std::fabs(term) < std::fabs(sum) * 1e-15) break;
  }
  return sum * std::exp(-x + s * std::log(x) - std::lgamma(s));
}

double gamma_q_contfrac(double s, double x) {
  // Lentz's algorithm for the continued fraction of Q(s, x).
  const double tiny = 1e-300;
  double b = x + 1.0 - s, c = 1.0 / tiny, d = 1.0 / b, h = d;
  for (int i = 1; i < 500; ++i) {
    double an = -double(i) * (double(i) - s);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < tiny) d = tiny;
    c = b + an / c;
    if (std::fabs(c) < tiny) c = tiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-15) break;
  }
  return std::exp(-x + s * std::log(x) - std::lgamma(s)) * h;
}

}  // namespace

double regularized_gamma_p(double s, double x) {
  if (x < 0.0 || s <= 0.0) throw NumericalError("regularized_gamma_p: bad arguments");
  if (x == 0.0) return 0.0;
  if (x < s + 1.0) return gamma_p_series(s, x);
  return 1.0 - gamma_q_contfrac(s, x);
}

double chi_square_tail(double stat, int dof) {
  if (stat <= 0.0) return 1.0;
  return 1.0 - regularized_gamma_p(0.5 * dof, 0.5 * stat);
}

double normal_tail(double z) {
  return 0.5 * std::erfc(z / std::sqrt(2.0));
}

}  // namespace pdpnet
