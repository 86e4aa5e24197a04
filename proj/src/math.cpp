#include "altboot/math.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "altboot/error.hpp"

namespace altboot {

std::vector<double> softmax(std::span<const double> scores, double temperature) {
  if (!(temperature > 0.0)) throw ConfigError("softmax: temperature must be > 0");
  std::vector<double> out(scores.size());
  if (scores.empty()) return out;
  const double hi = *std::max_element(scores.begin(), scores.end());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    out[i] = std::exp((scores[i] - hi) / temperature);
    total += out[i];
  }
  for (auto& p : out) p /= total;
  return out;
}

double log_sum_exp(std::span<const double> values) {
  if (values.empty()) return -std::numeric_limits<double>::infinity();
  const double hi = *std::max_element(values.begin(), values.end());
  double total = 0.0;
  for (double v : values) total += std::exp(v - hi);
  return hi + std::log(total);
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw DataError("dot: dimension mismatch (" + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()) + ")");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace altboot
