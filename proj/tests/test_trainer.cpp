#include <gtest/gtest.h>

#include <random>

#include "avdf/experiment.hpp"
#include "avdf/synth.hpp"
#include "avdf/trainer.hpp"
#include "oracles/network_checks.hpp"
#include "oracles/tiny_model.hpp"

using namespace avdf;

namespace {

VideoFeatures random_video(std::mt19937_64& rng, const std::string& id, Label label, std::size_t tf = 10,
                           std::size_t ts = 20) {
  return VideoFeatures{id, FaceFeatureSequence{oracle::normal_tensor(Shape{tf, kFaceFeatureDim}, rng), 25.0},
                       SpeechFeatureSequence{oracle::normal_tensor(Shape{ts, kMfccDim}, rng), 0.01}, label};
}

// Fake differs from real in one modality only.
TrainPair make_pair(std::mt19937_64& rng, std::size_t i, Modality changed) {
  TrainPair p;
  p.subject = "s" + std::to_string(i);
  p.real = random_video(rng, p.subject + "_real", Label::Real);
  p.fake = p.real;
  p.fake.id = p.subject + "_fake";
  p.fake.label = Label::Fake;
  Tensor& t = changed == Modality::Face ? p.fake.face.frames : p.fake.speech.frames;
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : t.values()) v += n(rng);
  return p;
}

std::vector<Tensor> snapshot(const ParameterStore& s) {
  std::vector<Tensor> out;
  for (const auto& p : s) out.push_back(p->value);
  return out;
}

bool unchanged(const ParameterStore& s, const std::vector<Tensor>& before) {
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s[i].value != before[i]) return false;
  return true;
}

}  // namespace

TEST(Trainer, ManipulatedModality) {
  std::mt19937_64 rng(1);
  Tensor f = oracle::normal_tensor(Shape{6, 430}, rng), s = oracle::normal_tensor(Shape{9, 13}, rng);
  Tensor f2 = f, s2 = s;
  for (double& v : f2.values()) v += 0.1;
  EXPECT_EQ(detect_manipulated_modality({f, s}, {f2, s}), Modality::Face);
  for (double& v : s2.values()) v -= 0.2;
  EXPECT_EQ(detect_manipulated_modality({f, s}, {f2, s2}), Modality::Speech);
  EXPECT_EQ(detect_manipulated_modality({f, s}, {f, s2}), Modality::Speech);
  EXPECT_EQ(detect_manipulated_modality({f, s}, {f, s}), Modality::Face);
}

TEST(Trainer, DiscrepancyIsPerDimension) {
  // Every frame differs by 0.5 in each of D dimensions: distance 0.5 sqrt(D), scaled to 0.5.
  Tensor a(Shape{4, 9}), b(Shape{4, 9}, 0.5);
  EXPECT_NEAR(mean_frame_discrepancy(a, b), 0.5, 1e-15);
  EXPECT_THROW(mean_frame_discrepancy(a, Tensor(Shape{4, 8})), ShapeError);
}

// The three-pass batch step must produce the gradient of a plain single-graph forward.
TEST(Trainer, CheckpointedStepMatchesDirectGradient) {
  for (bool tune : {false, true}) {
    std::mt19937_64 rng(2);
    Detector det(oracle::tiny_model(), 3), ref(oracle::tiny_model(), 3);
    std::vector<TrainPair> pairs;
    for (std::size_t i = 0; i < 4; ++i) pairs.push_back(make_pair(rng, i, i % 2 ? Modality::Speech : Modality::Face));
    TrainConfig cfg;
    cfg.fine_tune_emotion = tune;
    cfg.margins = {3.0, 3.0};  // keep every hinge active
    fit_standardizers(det, pairs);
    copy_state(det, ref);

    std::vector<detail::PreparedPair> prepared;
    for (const auto& p : pairs) {
      detail::PreparedPair pp{det.prepare(p.real), det.prepare(p.fake), Modality::Face, {}, {}, {}, {}};
      pp.manipulated = detect_manipulated_modality(pp.real, pp.fake);
      pp.ef_real = det.face_emotion().embed(pp.real.face).embedding;
      pp.ef_fake = det.face_emotion().embed(pp.fake.face).embedding;
      pp.es_real = det.speech_emotion().embed(pp.real.speech).embedding;
      pp.es_fake = det.speech_emotion().embed(pp.fake.speech).embedding;
      prepared.push_back(std::move(pp));
    }
    std::vector<detail::PreparedPair*> batch;
    for (auto& p : prepared) batch.push_back(&p);
    det.face_emotion().set_trainable(tune);
    det.speech_emotion().set_trainable(tune);
    ref.face_emotion().set_trainable(tune);
    ref.speech_emotion().set_trainable(tune);
    Adam adam(AdamConfig{1e-12});
    const auto steps = siamese_step(det, adam, batch, cfg);
    ASSERT_EQ(steps.size(), 4u);

    for (auto* s : ref.stores()) s->zero_grad();
    ad::Graph g;
    std::vector<ad::Var> totals;
    for (const auto& p : prepared) {
      EmbeddingQuad<ad::Var> m{ref.face_net().forward(g, p.real.face), ref.face_net().forward(g, p.fake.face),
                               ref.speech_net().forward(g, p.real.speech), ref.speech_net().forward(g, p.fake.speech)};
      EmbeddingQuad<ad::Var> e{ref.face_emotion().forward(g, p.real.face).embedding,
                               ref.face_emotion().forward(g, p.fake.face).embedding,
                               ref.speech_emotion().forward(g, p.real.speech).embedding,
                               ref.speech_emotion().forward(g, p.fake.speech).embedding};
      totals.push_back(pair_loss(m, e, p.manipulated, cfg.margins, cfg.losses).total);
    }
    g.backward(ad::mean(totals));

    const auto a = det.stores();
    const auto b = ref.stores();
    const std::size_t checked_stores = tune ? 4 : 2;
    for (std::size_t s = 0; s < checked_stores; ++s) {
      for (std::size_t i = 0; i < a[s]->size(); ++i) {
        const Tensor& ga = (*a[s])[i].grad;
        const Tensor& gb = (*b[s])[i].grad;
        ASSERT_EQ(ga.shape(), gb.shape()) << (*a[s])[i].name;
        for (std::size_t k = 0; k < ga.size(); ++k) {
          EXPECT_NEAR(ga[k], gb[k], 1e-12 + 1e-9 * std::abs(gb[k])) << (*a[s])[i].name << " " << k;
        }
      }
    }
  }
}

TEST(Trainer, FitLowersLossAndSetsThreshold) {
  const auto videos = synthesize(oracle::tiny_corpus());
  Dataset data;
  {
    std::map<std::string, VideoFeatures> reals;
    for (const auto& v : videos) {
      if (v.entry.split == Split::Pretrain) {
        data.emotion.push_back({v.face, v.speech, *v.entry.emotion});
      } else if (v.entry.label == Label::Real) {
        reals[v.entry.id] = VideoFeatures{v.entry.id, v.face, v.speech, Label::Real};
      } else {
        data.train.push_back({reals.at(*v.entry.paired_real), VideoFeatures{v.entry.id, v.face, v.speech, Label::Fake},
                              v.entry.subject});
      }
    }
  }
  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.batch_size = 4;
  cfg.pretrain.epochs = 2;
  Detector det(oracle::tiny_model(), 7);
  std::vector<EpochStats> seen;
  const FitResult r = fit(det, data.train, data.emotion, cfg, [&](const EpochStats& s) { seen.push_back(s); });
  ASSERT_EQ(r.history.size(), 8u);
  EXPECT_EQ(seen.size(), 8u);
  EXPECT_EQ(r.steps.size(), 8 * data.train.size());
  EXPECT_LT(r.history.back().mean_loss, r.history.front().mean_loss);
  EXPECT_EQ(r.face_pretrain.epoch_loss.size(), 2u);
  ASSERT_TRUE(det.threshold().has_value());
  EXPECT_EQ(*det.threshold(), compute_threshold(r.train_scores));
  for (const auto& s : r.steps) {
    EXPECT_EQ(s.rho1, std::max(s.L1 + s.m1, 0.0));
    EXPECT_EQ(s.total, s.rho1 + s.rho2);
  }

  // Same inputs, same seed: identical parameters.
  Detector again(oracle::tiny_model(), 7);
  fit(again, data.train, data.emotion, cfg);
  for (std::size_t s = 0; s < 4; ++s)
    for (std::size_t i = 0; i < det.stores()[s]->size(); ++i)
      EXPECT_EQ((*det.stores()[s])[i].value, (*again.stores()[s])[i].value);
  EXPECT_EQ(*det.threshold(), *again.threshold());
}

TEST(Trainer, IdenticalPairKeepsRho1AtMargin) {
  std::mt19937_64 rng(4);
  TrainPair p;
  p.subject = "s0";
  p.real = random_video(rng, "r", Label::Real);
  p.fake = p.real;
  p.fake.id = "f";
  p.fake.label = Label::Fake;
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.losses = {true, false};
  Detector det(oracle::tiny_model(), 1);
  const FitResult r = fit(det, {p}, {}, cfg);
  for (const auto& s : r.steps) {
    EXPECT_NEAR(s.L1, 0.0, 1e-12);
    EXPECT_GE(s.rho1, 0.0);
    EXPECT_LE(s.rho1, cfg.margins.m1 + 1e-12);
  }
}

TEST(Trainer, FrozenEmotionNetworksStayFixed) {
  std::mt19937_64 rng(5);
  std::vector<TrainPair> pairs;
  for (std::size_t i = 0; i < 4; ++i) pairs.push_back(make_pair(rng, i, Modality::Face));
  TrainConfig cfg;
  cfg.epochs = 2;
  Detector det(oracle::tiny_model(), 2);
  const auto f2 = snapshot(det.face_emotion().params()), f1 = snapshot(det.face_net().params());
  fit(det, pairs, {}, cfg);
  EXPECT_TRUE(unchanged(det.face_emotion().params(), f2));
  EXPECT_FALSE(unchanged(det.face_net().params(), f1));

  // Without rho1 and with F2/S2 frozen nothing receives a gradient.
  cfg.losses = {false, true};
  Detector idle(oracle::tiny_model(), 2);
  const auto s1 = snapshot(idle.speech_net().params());
  fit(idle, pairs, {}, cfg);
  EXPECT_TRUE(unchanged(idle.speech_net().params(), s1));

  // Fine-tuning moves F2 but never the shared head.
  cfg.fine_tune_emotion = true;
  cfg.margins = {3.0, 3.0};  // keep rho2 active
  Detector tuned(oracle::tiny_model(), 2);
  const auto head = tuned.face_emotion().params().get("F2.emotion_head.weight").value;
  const auto lstm = tuned.face_emotion().params().get("F2.lstm.weight").value;
  fit(tuned, pairs, {}, cfg);
  EXPECT_EQ(tuned.face_emotion().params().get("F2.emotion_head.weight").value, head);
  EXPECT_NE(tuned.face_emotion().params().get("F2.lstm.weight").value, lstm);
}

TEST(Trainer, Errors) {
  Detector det(oracle::tiny_model(), 1);
  TrainConfig cfg;
  EXPECT_THROW(fit(det, {}, {}, cfg), InputError);
  cfg.batch_size = 0;
  std::mt19937_64 rng(6);
  EXPECT_THROW(fit(det, {make_pair(rng, 0, Modality::Face)}, {}, cfg), ConfigError);
  cfg = {};
  cfg.losses = {false, false};
  EXPECT_THROW(fit(det, {make_pair(rng, 0, Modality::Face)}, {}, cfg), ConfigError);
  TrainPair bad = make_pair(rng, 1, Modality::Face);
  bad.fake.face.frames = Tensor(Shape{3, 12});
  EXPECT_THROW(fit(det, {bad}, {}, TrainConfig{}), Error);
}
