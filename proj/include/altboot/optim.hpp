#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace altboot {

enum class OptimizerKind { Sgd, Adam };

std::string to_string(OptimizerKind kind);
OptimizerKind optimizer_from_string(const std::string& name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Gradient for a row-structured table: row id -> dense row gradient.
/// Ordered so that updates are applied in a fixed order.
using RowGrad = std::map<std::uint32_t, std::vector<double>>;

/// Plain SGD or lazy Adam over one flat parameter array viewed as rows of
/// width `row_width`. Rows absent from a gradient are left untouched, and
/// their moments are not decayed. Bias correction uses the global step.
template <class T>
class RowOptimizer {
 public:
  RowOptimizer(OptimizerConfig cfg, std::size_t param_count)
      : cfg_(cfg) {
    if (cfg_.kind == OptimizerKind::Adam) {
      m_.assign(param_count, 0.0f);
      v_.assign(param_count, 0.0f);
    }
  }

  /// Call once per optimisation step, before the update() calls of that step.
  void next_step() { ++step_; }
  std::uint64_t step() const { return step_; }

  void update_rows(std::span<T> params, std::size_t row_width, const RowGrad& grad) {
    for (const auto& [row, g] : grad) update(params, row * row_width, g);
  }

  void update(std::span<T> params, std::size_t offset, std::span<const double> grad) {
    const double lr = cfg_.learning_rate;
    if (cfg_.kind == OptimizerKind::Sgd) {
      for (std::size_t i = 0; i < grad.size(); ++i) {
        params[offset + i] = static_cast<T>(params[offset + i] - lr * grad[i]);
      }
      return;
    }
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (std::size_t i = 0; i < grad.size(); ++i) {
      const std::size_t j = offset + i;
      const double m = cfg_.beta1 * m_[j] + (1.0 - cfg_.beta1) * grad[i];
      const double v = cfg_.beta2 * v_[j] + (1.0 - cfg_.beta2) * grad[i] * grad[i];
      m_[j] = static_cast<float>(m);
      v_[j] = static_cast<float>(v);
      params[j] = static_cast<T>(params[j] - lr * (m / c1) / (std::sqrt(v / c2) + cfg_.epsilon));
    }
  }

 private:
  OptimizerConfig cfg_;
  std::uint64_t step_ = 0;
  std::vector<float> m_;
  std::vector<float> v_;
};

}  // namespace altboot
