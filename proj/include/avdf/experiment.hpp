#pragma once

// Experiment driver: load a manifest, train, pick tau on the train split,
// score the test split, and summarise (AUC, distance histograms, emotion
// mismatch, optional loss ablation).

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "json.hpp"

#include "avdf/checkpoint.hpp"
#include "avdf/config.hpp"
#include "avdf/error.hpp"
#include "avdf/log.hpp"
#include "avdf/model.hpp"
#include "avdf/scorer.hpp"
#include "avdf/synth.hpp"
#include "avdf/trainer.hpp"

namespace avdf {

struct Dataset {
  std::vector<TrainPair> train;
  std::vector<VideoFeatures> test;
  std::vector<EmotionExample> emotion;
};

inline Dataset load_dataset(const DatasetManifest& manifest, const std::filesystem::path& base) {
  manifest.validate();
  Dataset d;
  std::map<std::string, VideoFeatures> train_reals;
  for (const auto& e : manifest.entries) {
    switch (e.split) {
      case Split::Pretrain: {
        VideoFeatures v = load_video(e, base);
        d.emotion.push_back(EmotionExample{std::move(v.face), std::move(v.speech), *e.emotion});
        break;
      }
      case Split::Test: d.test.push_back(load_video(e, base)); break;
      case Split::Train:
        if (e.label == Label::Real) train_reals.emplace(e.id, load_video(e, base));
        break;
    }
  }
  for (const auto& e : manifest.entries) {
    if (e.split != Split::Train || e.label != Label::Fake) continue;
    d.train.push_back(TrainPair{train_reals.at(*e.paired_real), load_video(e, base), e.subject});
  }
  return d;
}

struct Histogram {
  double lo = 0.0;
  double hi = 2.0;
  std::vector<std::size_t> real;
  std::vector<std::size_t> fake;

  std::size_t bins() const { return real.size(); }
  double edge(std::size_t i) const { return lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins()); }
};

// Equal-width bins on [lo, hi]; the last bin is closed and out-of-range values clamp.
inline Histogram histogram(const std::vector<double>& values, const std::vector<Label>& labels, std::size_t bins,
                           double lo = 0.0, double hi = 2.0) {
  Histogram h{lo, hi, std::vector<std::size_t>(bins, 0), std::vector<std::size_t>(bins, 0)};
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double x = (values[i] - lo) / (hi - lo) * static_cast<double>(bins);
    const auto b = static_cast<std::size_t>(std::clamp(x, 0.0, static_cast<double>(bins - 1)));
    (labels[i] == Label::Real ? h.real : h.fake)[b]++;
  }
  return h;
}

struct ConfigurationResult {
  std::string name;
  LossSwitches losses;
  double auc = 0.0;
  double tau = 0.0;
  double test_accuracy = 0.0;
  double train_auc = 0.0;
  std::vector<EpochStats> history;
};

struct MismatchCounts {
  std::size_t real = 0, real_total = 0;
  std::size_t fake = 0, fake_total = 0;

  double real_rate() const { return real_total ? static_cast<double>(real) / static_cast<double>(real_total) : 0.0; }
  double fake_rate() const { return fake_total ? static_cast<double>(fake) / static_cast<double>(fake_total) : 0.0; }
};

struct ExperimentReport {
  std::uint64_t seed = 0;
  std::vector<ConfigurationResult> configurations;  // "full" first
  std::vector<VideoAnalysis> test;                    // full model
  double mean_dm_real = 0.0, mean_dm_fake = 0.0;
  double mean_de_real = 0.0, mean_de_fake = 0.0;
  Histogram hist_dm, hist_de;
  MismatchCounts mismatch;
  double face_emotion_accuracy = 0.0;
  double speech_emotion_accuracy = 0.0;
};

struct ExperimentOptions {
  bool ablation = false;
  std::size_t histogram_bins = 20;
};

inline ConfigurationResult summarize(std::string name, const Detector& det, const FitResult& fit,
                                     const std::vector<VideoAnalysis>& test, const TrainConfig& cfg) {
  ConfigurationResult r;
  r.name = std::move(name);
  r.losses = cfg.losses;
  r.tau = *det.threshold();
  std::vector<VideoScore> scores;
  std::size_t correct = 0;
  for (const auto& a : test) {
    scores.push_back(a.score);
    if (classify(a.score.score, r.tau) == *a.score.label) ++correct;
  }
  r.auc = auc(scores);
  r.test_accuracy = static_cast<double>(correct) / static_cast<double>(test.size());
  r.train_auc = auc(fit.train_scores);
  r.history = fit.history;
  return r;
}

inline std::vector<VideoAnalysis> analyze_all(const Detector& det, const std::vector<VideoFeatures>& videos) {
  std::vector<VideoAnalysis> out;
  out.reserve(videos.size());
  for (const auto& v : videos) out.push_back(analyze_video(det, v));
  return out;
}

// Trains the full model (and, with options.ablation, the two single-loss
// variants from the same standardization and pretrained F2/S2). `full_out`
// receives the trained full detector when non-null.
inline ExperimentReport run_experiment(const Dataset& data, const ModelConfig& model, const TrainConfig& train,
                                       const ExperimentOptions& options = {}, Detector* full_out = nullptr,
                                       const EpochSink& sink = {}) {
  train.validate();
  if (data.train.empty()) throw InputError(InputErrorCode::EmptyFile, "experiment: empty train split");
  if (data.test.empty()) throw InputError(InputErrorCode::EmptyFile, "experiment: empty test split");

  ExperimentReport report;
  report.seed = train.seed;

  Detector base(model, train.seed);
  fit_standardizers(base, data.train);
  FitResult pre;
  if (!data.emotion.empty()) {
    log_info("pretraining F2/S2 on " + std::to_string(data.emotion.size()) + " clips");
    pretrain_emotion(base, data.emotion, train, pre);
    report.face_emotion_accuracy = pre.face_pretrain.train_accuracy;
    report.speech_emotion_accuracy = pre.speech_pretrain.train_accuracy;
    log_info("pretrain accuracy face " + std::to_string(report.face_emotion_accuracy) + ", speech " +
             std::to_string(report.speech_emotion_accuracy));
  }

  struct Variant {
    const char* name;
    LossSwitches losses;
  };
  std::vector<Variant> variants{{"full", train.losses}};
  if (options.ablation) {
    variants = {{"full", {true, true}}, {"no_rho1", {false, true}}, {"no_rho2", {true, false}}};
  }

  for (const auto& v : variants) {
    Detector det(model, train.seed);
    copy_state(base, det);
    TrainConfig cfg = train;
    cfg.losses = v.losses;
    log_info(std::string("training configuration ") + v.name);
    const FitResult fit = train_siamese(det, data.train, cfg, sink, pre);
    const std::vector<VideoAnalysis> test = analyze_all(det, data.test);
    report.configurations.push_back(summarize(v.name, det, fit, test, cfg));
    log_info(std::string(v.name) + " test AUC " + std::to_string(report.configurations.back().auc));
    if (report.configurations.size() == 1) {
      report.test = test;
      if (full_out) copy_state(det, *full_out);
    }
  }

  std::vector<double> dm, de;
  std::vector<Label> labels;
  double sr_m = 0, sf_m = 0, sr_e = 0, sf_e = 0;
  for (const auto& a : report.test) {
    dm.push_back(a.score.d_m);
    de.push_back(a.score.d_e);
    labels.push_back(*a.score.label);
    const bool mismatch = a.face_emotion != a.speech_emotion;
    if (*a.score.label == Label::Real) {
      sr_m += a.score.d_m;
      sr_e += a.score.d_e;
      ++report.mismatch.real_total;
      report.mismatch.real += mismatch;
    } else {
      sf_m += a.score.d_m;
      sf_e += a.score.d_e;
      ++report.mismatch.fake_total;
      report.mismatch.fake += mismatch;
    }
  }
  const double nr = static_cast<double>(report.mismatch.real_total);
  const double nf = static_cast<double>(report.mismatch.fake_total);
  report.mean_dm_real = sr_m / nr;
  report.mean_dm_fake = sf_m / nf;
  report.mean_de_real = sr_e / nr;
  report.mean_de_fake = sf_e / nf;
  report.hist_dm = histogram(dm, labels, options.histogram_bins);
  report.hist_de = histogram(de, labels, options.histogram_bins);
  return report;
}

// ---- export -------------------------------------------------------------------

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline nlohmann::json report_to_json(const ExperimentReport& r) {
  nlohmann::json configs = nlohmann::json::array();
  for (const auto& c : r.configurations) {
    nlohmann::json history = nlohmann::json::array();
    for (const auto& h : c.history) {
      history.push_back(
          {{"epoch", h.epoch}, {"mean_loss", h.mean_loss}, {"mean_rho1", h.mean_rho1}, {"mean_rho2", h.mean_rho2}});
    }
    configs.push_back({{"name", c.name},
                       {"rho1", c.losses.rho1},
                       {"rho2", c.losses.rho2},
                       {"auc", c.auc},
                       {"tau", c.tau},
                       {"test_accuracy", c.test_accuracy},
                       {"train_auc", c.train_auc},
                       {"history", history}});
  }
  auto hist = [](const Histogram& h) {
    std::vector<double> edges;
    for (std::size_t i = 0; i <= h.bins(); ++i) edges.push_back(h.edge(i));
    return nlohmann::json{{"edges", edges}, {"real", h.real}, {"fake", h.fake}};
  };
  nlohmann::json scores = nlohmann::json::array();
  for (const auto& a : r.test) {
    const double tau = r.configurations.front().tau;
    scores.push_back({{"id", a.score.id},
                      {"d_m", a.score.d_m},
                      {"d_e", a.score.d_e},
                      {"score", a.score.score},
                      {"label", std::string(to_string(*a.score.label))},
                      {"verdict", std::string(to_string(classify(a.score.score, tau)))},
                      {"face_emotion", std::string(kEmotionNames[a.face_emotion])},
                      {"speech_emotion", std::string(kEmotionNames[a.speech_emotion])}});
  }
  return {{"format", "avdf_report_v1"},
          {"seed", r.seed},
          {"configurations", configs},
          {"mean_d_m", {{"real", r.mean_dm_real}, {"fake", r.mean_dm_fake}}},
          {"mean_d_e", {{"real", r.mean_de_real}, {"fake", r.mean_de_fake}}},
          {"histogram_d_m", hist(r.hist_dm)},
          {"histogram_d_e", hist(r.hist_de)},
          {"emotion_mismatch",
           {{"real", r.mismatch.real},
            {"real_total", r.mismatch.real_total},
            {"fake", r.mismatch.fake},
            {"fake_total", r.mismatch.fake_total},
            {"real_rate", r.mismatch.real_rate()},
            {"fake_rate", r.mismatch.fake_rate()}}},
          {"emotion_pretrain_accuracy", {{"face", r.face_emotion_accuracy}, {"speech", r.speech_emotion_accuracy}}},
          {"scores", scores}};
}

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError(InputErrorCode::Io, path.string() + ": cannot write");
  f << text;
  if (!f) throw InputError(InputErrorCode::Io, path.string() + ": write failed");
}

inline std::string histogram_csv(const Histogram& h) {
  std::string out = "bin_lo,bin_hi,real,fake\n";
  for (std::size_t i = 0; i < h.bins(); ++i) {
    out += format_double(h.edge(i)) + "," + format_double(h.edge(i + 1)) + "," + std::to_string(h.real[i]) + "," +
           std::to_string(h.fake[i]) + "\n";
  }
  return out;
}

}  // namespace detail

// Writes report.json, histogram_d_m.csv, histogram_d_e.csv, scores.csv and ablation.csv into `dir`.
inline void export_report(const ExperimentReport& r, const std::filesystem::path& dir) {
  if (r.test.empty() || r.configurations.empty()) {
    throw InputError(InputErrorCode::EmptyFile, "export_report: report has no test scores");
  }
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw InputError(InputErrorCode::Io, dir.string() + ": " + ec.message());

  detail::write_text(dir / "report.json", report_to_json(r).dump(2) + "\n");
  detail::write_text(dir / "histogram_d_m.csv", detail::histogram_csv(r.hist_dm));
  detail::write_text(dir / "histogram_d_e.csv", detail::histogram_csv(r.hist_de));

  std::string scores = "id,d_m,d_e,score,label,verdict,face_emotion,speech_emotion\n";
  const double tau = r.configurations.front().tau;
  for (const auto& a : r.test) {
    scores += a.score.id + "," + format_double(a.score.d_m) + "," + format_double(a.score.d_e) + "," +
              format_double(a.score.score) + "," + std::string(to_string(*a.score.label)) + "," +
              std::string(to_string(classify(a.score.score, tau))) + "," +
              std::string(kEmotionNames[a.face_emotion]) + "," + std::string(kEmotionNames[a.speech_emotion]) + "\n";
  }
  detail::write_text(dir / "scores.csv", scores);

  std::string ablation = "configuration,auc,tau,test_accuracy\n";
  for (const auto& c : r.configurations) {
    ablation += c.name + "," + format_double(c.auc) + "," + format_double(c.tau) + "," +
                format_double(c.test_accuracy) + "\n";
  }
  detail::write_text(dir / "ablation.csv", ablation);
}

}  // namespace avdf
