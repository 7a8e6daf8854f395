#pragma once

#include <span>

namespace qiv::stats {

double chi_square_sf(double statistic, double df);
double normal_quantile(double p);
// Two-sided p-value of a standard normal statistic.
double normal_two_sided_p(double z);

double mean(std::span<const double> v);
// Sample standard deviation (n - 1 denominator).
double stddev(std::span<const double> v);

}  // namespace qiv::stats
