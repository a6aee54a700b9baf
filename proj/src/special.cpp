#include "wizs/special.hpp"

#include <cmath>
#include <limits>

namespace wizs {

namespace {

constexpr double kAsymptoticStart = 6.0;

// -sum B_2k / (2k x^2k), k = 1..7
double digamma_tail(double x) {
  const double r2 = 1 / (x * x);
  return r2 * (-1.0 / 12 +
               r2 * (1.0 / 120 +
                     r2 * (-1.0 / 252 +
                           r2 * (1.0 / 240 +
                                 r2 * (-1.0 / 132 + r2 * (691.0 / 32760 + r2 * (-1.0 / 12)))))));
}

}  // namespace

double digamma(double x) {
  if (!(x > 0) || std::isinf(x)) {
    return std::isinf(x) && x > 0 ? std::numeric_limits<double>::infinity()
                                   : std::numeric_limits<double>::quiet_NaN();
  }
  double result = 0;
  while (x < kAsymptoticStart) {
    result -= 1 / x;
    x += 1;
  }
  return result + std::log(x) - 0.5 / x + digamma_tail(x);
}

double digamma_difference(double x, double h) {
  if (!(x > 0) || !(h >= 0) || std::isinf(x) || std::isinf(h)) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  if (x < 10) return digamma(x + h) - digamma(x);
  // Subtract the asymptotic expansions term by term so nothing cancels.
  const double y = x + h;
  return std::log1p(h / x) + 0.5 * h / (x * y) + (digamma_tail(y) - digamma_tail(x));
}

double trigamma(double x) {
  if (!(x > 0) || std::isinf(x)) {
    return std::isinf(x) && x > 0 ? 0.0 : std::numeric_limits<double>::quiet_NaN();
  }
  double result = 0;
  while (x < kAsymptoticStart) {
    result += 1 / (x * x);
    x += 1;
  }
  const double r = 1 / x;
  const double r2 = r * r;
  // 1/x + 1/(2x^2) + sum B_2k / x^(2k+1), k = 1..7
  const double series =
      r * r2 *
      (1.0 / 6 +
       r2 * (-1.0 / 30 +
             r2 * (1.0 / 42 +
                   r2 * (-1.0 / 30 + r2 * (5.0 / 66 + r2 * (-691.0 / 2730 + r2 * (7.0 / 6)))))));
  return result + r + 0.5 * r2 + series;
}

}  // namespace wizs
