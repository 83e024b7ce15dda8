#pragma once

// Central finite differences (h = 1e-5) against reverse-mode gradients.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "avdf/autodiff.hpp"
#include "avdf/parameters.hpp"

namespace oracle {

// A coordinate whose error exceeded the recording bound, re-measured with h / 100.
struct GradMiss {
  std::string param;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double fine_rel_error = 0.0;
};

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  std::vector<GradMiss> misses;
};

// |a - n| / max(|a|, |n|, floor); the floor keeps near-zero pairs from dominating.
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

using LossBuilder = std::function<avdf::ad::Var(avdf::ad::Graph&)>;

inline double evaluate(const LossBuilder& build) {
  avdf::ad::Graph g(avdf::ad::GradMode::Disabled);
  return build(g).value().item();
}

// Checks up to `per_param` coordinates of every parameter (all when 0).
inline GradCheckResult grad_check(const std::vector<avdf::Parameter*>& params, const LossBuilder& build,
                                  std::size_t per_param = 0, unsigned seed = 1, double h = 1e-5,
                                  double record_above = 1e-4) {
  for (auto* p : params) p->zero_grad();
  {
    avdf::ad::Graph g;
    g.backward(build(g));
  }
  std::vector<avdf::Tensor> analytic;
  for (auto* p : params) analytic.push_back(p->grad);

  std::mt19937 rng(seed);
  GradCheckResult r;
  for (std::size_t k = 0; k < params.size(); ++k) {
    avdf::Parameter& p = *params[k];
    std::vector<std::size_t> coords(p.value.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    if (per_param && per_param < coords.size()) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(per_param);
    }
    auto central = [&](std::size_t i, double step) {
      const double saved = p.value[i];
      p.value[i] = saved + step;
      const double up = evaluate(build);
      p.value[i] = saved - step;
      const double down = evaluate(build);
      p.value[i] = saved;
      return (up - down) / (2.0 * step);
    };
    for (std::size_t i : coords) {
      const double numeric = central(i, h);
      const double err = rel_error(analytic[k][i], numeric);
      r.max_rel_error = std::max(r.max_rel_error, err);
      ++r.checked;
      if (err > record_above) {
        r.misses.push_back({p.name, i, analytic[k][i], numeric, rel_error(analytic[k][i], central(i, h / 100.0))});
      }
    }
  }
  return r;
}

}  // namespace oracle
