#pragma once

#include <span>
#include <vector>

namespace altboot {

/// softmax(scores / temperature), computed with the max-shift.
std::vector<double> softmax(std::span<const double> scores, double temperature = 1.0);

/// log(sum(exp(x))) with the max-shift.
double log_sum_exp(std::span<const double> values);

double dot(std::span<const double> a, std::span<const double> b);

}  // namespace altboot
