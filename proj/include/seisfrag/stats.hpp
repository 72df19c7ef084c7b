#pragma once

#include <span>
#include <vector>

namespace seisfrag::stats {

double normal_pdf(double x);
double normal_cdf(double x);
// Upper tail 1 - Phi(x), accurate for large positive x.
double normal_sf(double x);
// log Phi(x), finite far into the lower tail.
double log_normal_cdf(double x);

double mean(std::span<const double> xs);
// Sample standard deviation (n - 1 denominator). Requires n >= 2.
double stddev(std::span<const double> xs);

// Empirical quantile with linear interpolation between order statistics
// (the "type 7" definition). Copies and sorts its input.
double quantile(std::span<const double> xs, double p);
double median(std::span<const double> xs);

// Quantile of an already sorted sequence.
double quantile_sorted(std::span<const double> sorted, double p);

double log_sum_exp(std::span<const double> xs);

// Sample covariance of two equally sized sequences (n - 1 denominator).
double covariance(std::span<const double> xs, std::span<const double> ys);

// n points spaced uniformly in log between lo and hi (inclusive).
std::vector<double> log_space(double lo, double hi, std::size_t n);

}  // namespace seisfrag::stats
