#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "avdf/error.hpp"
#include "avdf/model.hpp"
#include "avdf/networks.hpp"

namespace avdf {

struct VideoScore {
  std::string id;
  double d_m = 0.0;
  double d_e = 0.0;
  double score = 0.0;
  std::optional<Label> label;
};

// Full per-video forward: both distances plus the emotion argmaxes.
struct VideoAnalysis {
  VideoScore score;
  std::size_t face_emotion = 0;
  std::size_t speech_emotion = 0;
};

enum class ThresholdMode { Midpoint, Optimal };

inline std::string_view to_string(ThresholdMode m) { return m == ThresholdMode::Midpoint ? "midpoint" : "optimal"; }

inline ThresholdMode parse_threshold_mode(std::string_view s) {
  if (s == "midpoint") return ThresholdMode::Midpoint;
  if (s == "optimal") return ThresholdMode::Optimal;
  throw ConfigError("threshold_mode: expected 'midpoint' or 'optimal', got '" + std::string(s) + "'");
}

inline VideoScore make_score(std::string id, double d_m, double d_e, std::optional<Label> label = std::nullopt) {
  return VideoScore{std::move(id), d_m, d_e, d_m + d_e, label};
}

inline VideoAnalysis analyze_prepared(const Detector& det, const PreparedVideo& v, std::string id,
                                      std::optional<Label> label) {
  const Tensor mf = det.face_net().embed(v.face);
  const Tensor ms = det.speech_net().embed(v.speech);
  const EmotionOutput ef = det.face_emotion().embed(v.face);
  const EmotionOutput es = det.speech_emotion().embed(v.speech);
  VideoAnalysis out;
  out.score = make_score(std::move(id), euclidean(mf.values(), ms.values()),
                         euclidean(ef.embedding.values(), es.embedding.values()), label);
  out.face_emotion = argmax(ef.distribution.values());
  out.speech_emotion = argmax(es.distribution.values());
  return out;
}

inline VideoAnalysis analyze_video(const Detector& det, const VideoFeatures& video) {
  return analyze_prepared(det, det.prepare(video), video.id, video.label);
}

inline VideoScore score_video(const Detector& det, const VideoFeatures& video) {
  return analyze_video(det, video).score;
}

inline Label classify(double score, double tau) { return score > tau ? Label::Fake : Label::Real; }

namespace detail {

inline void require_both_classes(const std::vector<VideoScore>& scores, const char* who) {
  bool real = false, fake = false;
  for (const auto& s : scores) {
    if (!s.label) throw InputError(InputErrorCode::Malformed, std::string(who) + ": score '" + s.id + "' has no label");
    (*s.label == Label::Real ? real : fake) = true;
  }
  if (!real || !fake) throw InputError(InputErrorCode::Malformed, std::string(who) + ": needs both real and fake scores");
}

}  // namespace detail

// Midpoint of the class means; Optimal picks the cut between consecutive
// sorted scores with the best training accuracy (lowest cut on ties).
inline double compute_threshold(const std::vector<VideoScore>& scores, ThresholdMode mode = ThresholdMode::Midpoint) {
  detail::require_both_classes(scores, "compute_threshold");
  if (mode == ThresholdMode::Midpoint) {
    double sr = 0.0, sf = 0.0;
    std::size_t nr = 0, nf = 0;
    for (const auto& s : scores) {
      if (*s.label == Label::Real) {
        sr += s.score;
        ++nr;
      } else {
        sf += s.score;
        ++nf;
      }
    }
    return (sr / static_cast<double>(nr) + sf / static_cast<double>(nf)) / 2.0;
  }
  std::vector<std::pair<double, bool>> v;
  for (const auto& s : scores) v.emplace_back(s.score, *s.label == Label::Fake);
  std::sort(v.begin(), v.end());
  // Start with everything classified fake (cut below the minimum).
  std::size_t correct = static_cast<std::size_t>(std::count_if(v.begin(), v.end(), [](auto& p) { return p.second; }));
  std::size_t best = correct;
  double best_tau = v.front().first - 1.0;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    while (j < v.size() && v[j].first == v[i].first) {
      correct += v[j].second ? -1 : 1;
      ++j;
    }
    if (correct > best) {
      best = correct;
      best_tau = j < v.size() ? (v[i].first + v[j].first) / 2.0 : v[i].first;
    }
    i = j;
  }
  return best_tau;
}

// Mann-Whitney statistic from midranks; fake is the positive class and ties count 1/2.
inline double auc(const std::vector<double>& scores, const std::vector<Label>& labels) {
  if (scores.size() != labels.size()) throw ShapeError("auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == Label::Fake) {
        rank_sum += midrank;
        ++pos;
      }
    }
    i = j;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) throw InputError(InputErrorCode::Malformed, "auc: needs both real and fake labels");
  const double p = static_cast<double>(pos), q = static_cast<double>(neg);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * q);
}

inline double auc(const std::vector<VideoScore>& scores) {
  detail::require_both_classes(scores, "auc");
  std::vector<double> s;
  std::vector<Label> l;
  for (const auto& v : scores) {
    s.push_back(v.score);
    l.push_back(*v.label);
  }
  return auc(s, l);
}

}  // namespace avdf
