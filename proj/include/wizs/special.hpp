#pragma once

namespace wizs {

// Polygamma functions for x > 0, via upward recurrence to x >= 6 and the
// asymptotic series. Absolute error below 1e-12 for x >= 6 before recurrence;
// NaN for x <= 0 or NaN input.
double digamma(double x);
double trigamma(double x);

// digamma(x + h) - digamma(x) for x > 0, h >= 0, without the cancellation of
// the naive difference when x is large.
double digamma_difference(double x, double h);

}  // namespace wizs
