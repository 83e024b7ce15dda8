#pragma once

// Siamese training of F1/S1 (and optionally F2/S2) on (real, fake) pairs.
//
// F1's first fully-connected layer dominates memory, so a batch is run in
// three passes: trunk features without gradients, one graph over the stacked
// features for the heads and losses, then a per-window replay of each trunk
// that back-propagates the feature gradient from the second pass.

#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "avdf/autodiff.hpp"
#include "avdf/error.hpp"
#include "avdf/losses.hpp"
#include "avdf/model.hpp"
#include "avdf/networks.hpp"
#include "avdf/optimizer.hpp"
#include "avdf/scorer.hpp"

namespace avdf {

struct TrainPair {
  VideoFeatures real;
  VideoFeatures fake;
  std::string subject;
};

// One emotion-labelled clip for pretraining F2 and S2.
struct EmotionExample {
  FaceFeatureSequence face;
  SpeechFeatureSequence speech;
  std::size_t emotion = 0;
};

struct TrainConfig {
  std::size_t batch_size = 16;
  std::size_t epochs = 12;
  double learning_rate = 0.001;
  Margins margins;
  LossSwitches losses;
  bool fine_tune_emotion = false;
  std::uint64_t seed = 7;
  EmotionPretrainConfig pretrain;
  ThresholdMode threshold_mode = ThresholdMode::Midpoint;

  void validate() const {
    if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train: learning_rate must be positive");
    margins.validate();
    losses.validate();
    if (pretrain.batch_size == 0) throw ConfigError("train: pretrain.batch_size must be >= 1");
    if (!(pretrain.learning_rate > 0.0)) throw ConfigError("train: pretrain.learning_rate must be positive");
  }
};

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double mean_rho1 = 0.0;
  double mean_rho2 = 0.0;
};

using EpochSink = std::function<void(const EpochStats&)>;

struct FitResult {
  std::vector<EpochStats> history;
  std::vector<LossBreakdown> steps;  // every pair of every epoch, in visit order
  PretrainReport face_pretrain;
  PretrainReport speech_pretrain;
  std::vector<VideoScore> train_scores;
};

// Mean over aligned frames of the per-frame L2 distance, divided by sqrt(D)
// so the face and speech figures are on a per-dimension scale.
inline double mean_frame_discrepancy(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape() || a.rank() != 2) {
    throw ShapeError("discrepancy: shapes " + shape_string(a.shape()) + " and " + shape_string(b.shape()) + " differ");
  }
  const std::size_t T = a.dim(0), D = a.dim(1);
  if (T == 0 || D == 0) return 0.0;
  double total = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    total += euclidean(std::span<const double>(a.data() + t * D, D), std::span<const double>(b.data() + t * D, D));
  }
  return total / static_cast<double>(T) / std::sqrt(static_cast<double>(D));
}

// Ties go to Face.
inline Modality detect_manipulated_modality(const PreparedVideo& real, const PreparedVideo& fake) {
  const double face = mean_frame_discrepancy(real.face, fake.face);
  const double speech = mean_frame_discrepancy(real.speech, fake.speech);
  return speech > face ? Modality::Speech : Modality::Face;
}

// Fits both standardizers on every frame of every train video.
inline void fit_standardizers(Detector& det, const std::vector<TrainPair>& pairs) {
  std::vector<const Tensor*> face, speech;
  for (const auto& p : pairs) {
    for (const VideoFeatures* v : {&p.real, &p.fake}) {
      face.push_back(&v->face.frames);
      speech.push_back(&v->speech.frames);
    }
  }
  det.set_standardizers(Standardizer::fit(face), Standardizer::fit(speech));
}

inline void pretrain_emotion(Detector& det, const std::vector<EmotionExample>& corpus, const TrainConfig& cfg,
                             FitResult& result) {
  std::vector<LabeledSequence> face, speech;
  face.reserve(corpus.size());
  speech.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const VideoFeatures v{"emotion-" + std::to_string(i), corpus[i].face, corpus[i].speech, std::nullopt};
    PreparedVideo p = det.prepare(v);
    face.push_back(LabeledSequence{std::move(p.face), corpus[i].emotion});
    speech.push_back(LabeledSequence{std::move(p.speech), corpus[i].emotion});
  }
  result.face_pretrain = emotion_pretrain(det.face_emotion(), face, cfg.pretrain, cfg.seed);
  result.speech_pretrain = emotion_pretrain(det.speech_emotion(), speech, cfg.pretrain, cfg.seed + 1);
}

namespace detail {

struct PreparedPair {
  PreparedVideo real;
  PreparedVideo fake;
  Modality manipulated = Modality::Face;
  Tensor ef_real, ef_fake, es_real, es_fake;  // cached when F2/S2 are frozen
};

// Trunk features of `windows` without gradients, stacked into [B, flat].
inline Tensor trunk_features(const ModalityEmbedder& net, const std::vector<const Tensor*>& windows) {
  const std::size_t flat = net.config().flat_size();
  Tensor out(Shape{windows.size(), flat});
  for (std::size_t i = 0; i < windows.size(); ++i) {
    ad::Graph g(ad::GradMode::Disabled);
    const Tensor& f = net.features(g, *windows[i]).value();
    std::copy(f.data(), f.data() + flat, out.data() + i * flat);
  }
  return out;
}

// Replays each trunk and pushes the matching row of `dfeatures` into the conv parameters.
inline void trunk_backward(ModalityEmbedder& net, const std::vector<const Tensor*>& windows, const Tensor& dfeatures) {
  const std::size_t flat = net.config().flat_size();
  for (std::size_t i = 0; i < windows.size(); ++i) {
    const double* row = dfeatures.data() + i * flat;
    if (std::all_of(row, row + flat, [](double v) { return v == 0.0; })) continue;
    ad::Graph g;
    ad::Var f = net.features(g, *windows[i]);
    ad::Var upstream = g.constant(Tensor(Shape{flat}, std::vector<double>(row, row + flat)));
    g.backward(ad::dot(f, upstream));
  }
}

// Registers `w` once and returns its row index.
inline std::size_t intern(std::vector<const Tensor*>& list, const Tensor* w) {
  for (std::size_t i = 0; i < list.size(); ++i)
    if (list[i] == w) return i;
  list.push_back(w);
  return list.size() - 1;
}

}  // namespace detail

// One optimizer step over `batch`; returns the per-pair loss breakdowns.
inline std::vector<LossBreakdown> siamese_step(Detector& det, Adam& adam, std::vector<detail::PreparedPair*>& batch,
                                               const TrainConfig& cfg) {
  const bool tune = cfg.fine_tune_emotion;
  std::vector<ParameterStore*> stores{&det.face_net().params(), &det.speech_net().params()};
  if (tune) {
    stores.push_back(&det.face_emotion().params());
    stores.push_back(&det.speech_emotion().params());
  }
  for (auto* s : stores) s->zero_grad();

  // Only the three modality embeddings a pair's losses read are computed.
  std::vector<const Tensor*> face_windows, speech_windows;
  struct Slots {
    std::size_t fr, ff, sr, sf;
  };
  constexpr std::size_t none = static_cast<std::size_t>(-1);
  std::vector<Slots> slots;
  for (auto* p : batch) {
    Slots s{none, none, none, none};
    s.fr = detail::intern(face_windows, &p->real.face);
    s.sr = detail::intern(speech_windows, &p->real.speech);
    if (p->manipulated == Modality::Face) s.ff = detail::intern(face_windows, &p->fake.face);
    else s.sf = detail::intern(speech_windows, &p->fake.speech);
    slots.push_back(s);
  }

  Parameter face_x{"face_features", detail::trunk_features(det.face_net(), face_windows), Tensor(), true};
  Parameter speech_x{"speech_features", detail::trunk_features(det.speech_net(), speech_windows), Tensor(), true};
  face_x.zero_grad();
  speech_x.zero_grad();

  std::vector<LossBreakdown> out;
  {
    ad::Graph g;
    const std::vector<ad::Var> mf = det.face_net().head(g, g.param(face_x));
    const std::vector<ad::Var> ms = det.speech_net().head(g, g.param(speech_x));
    std::vector<ad::Var> totals;
    std::vector<PairLoss> losses;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto& p = *batch[i];
      const Slots& s = slots[i];
      // Placeholders for the unused fake embedding; the loss never reads them.
      EmbeddingQuad<ad::Var> m{mf[s.fr], s.ff == none ? mf[s.fr] : mf[s.ff], ms[s.sr],
                               s.sf == none ? ms[s.sr] : ms[s.sf]};
      EmbeddingQuad<ad::Var> e;
      if (tune) {
        e = {det.face_emotion().forward(g, p.real.face).embedding, det.face_emotion().forward(g, p.fake.face).embedding,
             det.speech_emotion().forward(g, p.real.speech).embedding,
             det.speech_emotion().forward(g, p.fake.speech).embedding};
      } else {
        e = {g.constant(p.ef_real), g.constant(p.ef_fake), g.constant(p.es_real), g.constant(p.es_fake)};
      }
      losses.push_back(pair_loss(m, e, p.manipulated, cfg.margins, cfg.losses));
      totals.push_back(losses.back().total);
    }
    ad::Var loss = ad::mean(totals);
    for (const auto& l : losses) out.push_back(breakdown(l, cfg.margins));
    g.backward(loss);
  }
  detail::trunk_backward(det.face_net(), face_windows, face_x.grad);
  detail::trunk_backward(det.speech_net(), speech_windows, speech_x.grad);
  adam.step(stores);
  return out;
}

// Siamese loop on an already standardized and pretrained detector. Sets the
// threshold from the train-split scores when done.
inline FitResult train_siamese(Detector& det, const std::vector<TrainPair>& pairs, const TrainConfig& cfg,
                               const EpochSink& sink = {}, FitResult result = {}) {
  cfg.validate();
  if (pairs.empty()) throw InputError(InputErrorCode::EmptyFile, "fit: empty training set");

  det.face_emotion().set_trainable(cfg.fine_tune_emotion);
  det.speech_emotion().set_trainable(cfg.fine_tune_emotion);

  std::vector<detail::PreparedPair> prepared;
  prepared.reserve(pairs.size());
  for (const auto& p : pairs) {
    detail::PreparedPair pp;
    pp.real = det.prepare(p.real);
    pp.fake = det.prepare(p.fake);
    pp.manipulated = detect_manipulated_modality(pp.real, pp.fake);
    if (!cfg.fine_tune_emotion) {
      pp.ef_real = det.face_emotion().embed(pp.real.face).embedding;
      pp.ef_fake = det.face_emotion().embed(pp.fake.face).embedding;
      pp.es_real = det.speech_emotion().embed(pp.real.speech).embedding;
      pp.es_fake = det.speech_emotion().embed(pp.fake.speech).embedding;
    }
    prepared.push_back(std::move(pp));
  }

  Adam adam(AdamConfig{cfg.learning_rate});
  auto rng = derived_rng(cfg.seed, stable_hash("siamese"));
  std::vector<std::size_t> order(prepared.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t batch_index = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss = 0.0, rho1 = 0.0, rho2 = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      std::vector<detail::PreparedPair*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) {
        batch.push_back(&prepared[order[i]]);
      }
      std::vector<LossBreakdown> steps;
      try {
        steps = siamese_step(det, adam, batch, cfg);
      } catch (const NumericalError& e) {
        throw NumericalError("fit: batch " + std::to_string(batch_index) + " (epoch " + std::to_string(epoch + 1) +
                             "): " + e.what());
      }
      for (const auto& s : steps) {
        loss += s.total;
        rho1 += s.rho1;
        rho2 += s.rho2;
        result.steps.push_back(s);
      }
    }
    const double n = static_cast<double>(prepared.size());
    EpochStats stats{epoch + 1, loss / n, rho1 / n, rho2 / n};
    if (!std::isfinite(stats.mean_loss)) {
      throw NumericalError("fit: non-finite mean loss in epoch " + std::to_string(epoch + 1));
    }
    result.history.push_back(stats);
    if (sink) sink(stats);
  }

  result.train_scores.clear();
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    result.train_scores.push_back(
        analyze_prepared(det, prepared[i].real, pairs[i].real.id, Label::Real).score);
    result.train_scores.push_back(
        analyze_prepared(det, prepared[i].fake, pairs[i].fake.id, Label::Fake).score);
  }
  det.set_threshold(compute_threshold(result.train_scores, cfg.threshold_mode));
  return result;
}

// Standardize, pretrain F2/S2, run the Siamese loop, set the threshold.
inline FitResult fit(Detector& det, const std::vector<TrainPair>& pairs, const std::vector<EmotionExample>& emotion,
                     const TrainConfig& cfg, const EpochSink& sink = {}) {
  cfg.validate();
  if (pairs.empty()) throw InputError(InputErrorCode::EmptyFile, "fit: empty training set");
  fit_standardizers(det, pairs);
  FitResult result;
  if (!emotion.empty()) pretrain_emotion(det, emotion, cfg, result);
  return train_siamese(det, pairs, cfg, sink, std::move(result));
}

}  // namespace avdf
