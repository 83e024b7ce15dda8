#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "avdf/error.hpp"
#include "avdf/parameters.hpp"

namespace avdf {

struct AdamConfig {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias-corrected first and second moments.
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  const AdamConfig& config() const noexcept { return config_; }
  std::uint64_t step_count() const noexcept { return step_; }

  // Applies one update to every trainable parameter in `stores`. Validation
  // runs before any parameter is touched, so a bad gradient leaves all state intact.
  void step(const std::vector<ParameterStore*>& stores) {
    for (ParameterStore* store : stores) {
      for (auto& p : *store) {
        if (!p->trainable) continue;
        if (p->grad.shape() != p->value.shape()) {
          throw ShapeError("adam_step: gradient shape " + shape_string(p->grad.shape()) + " does not match parameter " +
                           p->name + " " + shape_string(p->value.shape()));
        }
        if (!p->grad.all_finite()) throw NumericalError("adam_step: non-finite gradient for parameter " + p->name);
      }
    }
    ++step_;
    const double t = static_cast<double>(step_);
    const double c1 = 1.0 - std::pow(config_.beta1, t);
    const double c2 = 1.0 - std::pow(config_.beta2, t);
    for (ParameterStore* store : stores) {
      for (auto& p : *store) {
        if (!p->trainable) continue;
        Moments& mo = moments_[p->name];
        if (mo.first.size() != p->value.size()) {
          mo.first.assign(p->value.size(), 0.0);
          mo.second.assign(p->value.size(), 0.0);
        }
        auto value = p->value.values();
        const auto grad = p->grad.values();
        for (std::size_t i = 0; i < value.size(); ++i) {
          const double g = grad[i];
          mo.first[i] = config_.beta1 * mo.first[i] + (1.0 - config_.beta1) * g;
          mo.second[i] = config_.beta2 * mo.second[i] + (1.0 - config_.beta2) * g * g;
          const double mhat = mo.first[i] / c1;
          const double vhat = mo.second[i] / c2;
          value[i] -= config_.learning_rate * mhat / (std::sqrt(vhat) + config_.epsilon);
        }
      }
    }
  }

  void step(ParameterStore& store) { step(std::vector<ParameterStore*>{&store}); }

 private:
  struct Moments {
    std::vector<double> first;
    std::vector<double> second;
  };

  AdamConfig config_;
  std::uint64_t step_ = 0;
  std::map<std::string, Moments> moments_;
};

}  // namespace avdf
