#pragma once

// O(n^2) pair counting: P(score_fake > score_real) + 0.5 P(equal).

#include <vector>

namespace oracle {

inline double brute_auc(const std::vector<double>& scores, const std::vector<bool>& is_fake) {
  double wins = 0.0;
  double pairs = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!is_fake[i]) continue;
    for (std::size_t j = 0; j < scores.size(); ++j) {
      if (is_fake[j]) continue;
      pairs += 1.0;
      if (scores[i] > scores[j]) wins += 1.0;
      else if (scores[i] == scores[j]) wins += 0.5;
    }
  }
  return wins / pairs;
}

}  // namespace oracle
