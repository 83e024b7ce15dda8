#pragma once

// JSON run configuration. Every section is optional; unknown keys are rejected
// with their full path.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "avdf/error.hpp"
#include "avdf/mfcc.hpp"
#include "avdf/model.hpp"
#include "avdf/synth.hpp"
#include "avdf/trainer.hpp"

namespace avdf {

inline constexpr int kConfigVersion = 1;

namespace detail {

// Typed, path-aware access to one JSON object.
class ObjectReader {
 public:
  ObjectReader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  // Rejects any key not in `allowed`.
  void allow(std::initializer_list<const char*> allowed) const {
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j_.items()) {
      if (!ok.count(k)) throw ConfigError("unknown config key '" + join(k) + "'");
    }
  }

  bool has(const char* key) const { return j_.contains(key); }

  template <class T>
  void get(const char* key, T& out) const {
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("config key '" + join(key) + "' has the wrong type");
    }
  }

  void get_size(const char* key, std::size_t& out) const {
    if (!j_.contains(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number_unsigned()) throw ConfigError("config key '" + join(key) + "' must be a non-negative integer");
    out = v.get<std::size_t>();
  }

  void get_double(const char* key, double& out) const {
    if (!j_.contains(key)) return;
    const auto& v = j_.at(key);
    if (!v.is_number()) throw ConfigError("config key '" + join(key) + "' must be a number");
    out = v.get<double>();
  }

  ObjectReader child(const char* key) const { return ObjectReader(j_.at(key), join(key)); }
  const nlohmann::json& raw(const char* key) const { return j_.at(key); }
  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

 private:
  std::string where() const { return path_.empty() ? "config" : "config key '" + path_ + "'"; }

  const nlohmann::json& j_;
  std::string path_;
};

}  // namespace detail

// ---- network configs ------------------------------------------------------------

inline nlohmann::json to_json_value(const ModalityEmbedderConfig& c) {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : c.stages) {
    stages.push_back({{"channels", s.channels}, {"kernel", s.kernel}, {"stride", s.stride}, {"pool", s.pool}});
  }
  return {{"rows", c.rows}, {"cols", c.cols}, {"stages", stages}, {"fc_widths", c.fc_widths}};
}

inline void read_into(const detail::ObjectReader& r, ModalityEmbedderConfig& c) {
  r.allow({"rows", "cols", "stages", "fc_widths"});
  r.get_size("rows", c.rows);
  r.get_size("cols", c.cols);
  if (r.has("stages")) {
    const auto& arr = r.raw("stages");
    if (!arr.is_array()) throw ConfigError("config key '" + r.join("stages") + "' must be an array");
    c.stages.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      detail::ObjectReader s(arr[i], r.join("stages[" + std::to_string(i) + "]"));
      s.allow({"channels", "kernel", "stride", "pool"});
      ConvStage stage;
      s.get_size("channels", stage.channels);
      s.get_size("kernel", stage.kernel);
      s.get_size("stride", stage.stride);
      s.get_size("pool", stage.pool);
      c.stages.push_back(stage);
    }
  }
  r.get("fc_widths", c.fc_widths);
}

inline nlohmann::json to_json_value(const EmotionEmbedderConfig& c) {
  return {{"input_dim", c.input_dim}, {"hidden", c.hidden},       {"memory", c.memory},
          {"embedding", c.embedding}, {"classes", c.classes},     {"max_steps", c.max_steps},
          {"shared_head", c.shared_head}};
}

inline void read_into(const detail::ObjectReader& r, EmotionEmbedderConfig& c) {
  r.allow({"input_dim", "hidden", "memory", "embedding", "classes", "max_steps", "shared_head"});
  r.get_size("input_dim", c.input_dim);
  r.get_size("hidden", c.hidden);
  r.get_size("memory", c.memory);
  r.get_size("embedding", c.embedding);
  r.get_size("classes", c.classes);
  r.get_size("max_steps", c.max_steps);
  r.get("shared_head", c.shared_head);
}

inline nlohmann::json to_json_value(const ModelConfig& c) {
  return {{"face_net", to_json_value(c.face_net)},
          {"speech_net", to_json_value(c.speech_net)},
          {"face_emotion", to_json_value(c.face_emotion)},
          {"speech_emotion", to_json_value(c.speech_emotion)}};
}

inline void read_into(const detail::ObjectReader& r, ModelConfig& c) {
  r.allow({"face_net", "speech_net", "face_emotion", "speech_emotion"});
  if (r.has("face_net")) read_into(r.child("face_net"), c.face_net);
  if (r.has("speech_net")) read_into(r.child("speech_net"), c.speech_net);
  if (r.has("face_emotion")) read_into(r.child("face_emotion"), c.face_emotion);
  if (r.has("speech_emotion")) read_into(r.child("speech_emotion"), c.speech_emotion);
}

// ---- training -------------------------------------------------------------------

inline nlohmann::json to_json_value(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"learning_rate", c.learning_rate},
          {"margin1", c.margins.m1},
          {"margin2", c.margins.m2},
          {"disable_rho1", !c.losses.rho1},
          {"disable_rho2", !c.losses.rho2},
          {"fine_tune_emotion", c.fine_tune_emotion},
          {"threshold_mode", std::string(to_string(c.threshold_mode))},
          {"pretrain",
           {{"epochs", c.pretrain.epochs},
            {"batch_size", c.pretrain.batch_size},
            {"learning_rate", c.pretrain.learning_rate}}}};
}

inline void read_into(const detail::ObjectReader& r, TrainConfig& c) {
  r.allow({"batch_size", "epochs", "learning_rate", "margin1", "margin2", "disable_rho1", "disable_rho2",
           "fine_tune_emotion", "threshold_mode", "pretrain"});
  r.get_size("batch_size", c.batch_size);
  r.get_size("epochs", c.epochs);
  r.get_double("learning_rate", c.learning_rate);
  r.get_double("margin1", c.margins.m1);
  r.get_double("margin2", c.margins.m2);
  bool d1 = !c.losses.rho1, d2 = !c.losses.rho2;
  r.get("disable_rho1", d1);
  r.get("disable_rho2", d2);
  c.losses.rho1 = !d1;
  c.losses.rho2 = !d2;
  r.get("fine_tune_emotion", c.fine_tune_emotion);
  if (r.has("threshold_mode")) {
    std::string mode;
    r.get("threshold_mode", mode);
    c.threshold_mode = parse_threshold_mode(mode);
  }
  if (r.has("pretrain")) {
    const auto p = r.child("pretrain");
    p.allow({"epochs", "batch_size", "learning_rate"});
    p.get_size("epochs", c.pretrain.epochs);
    p.get_size("batch_size", c.pretrain.batch_size);
    p.get_double("learning_rate", c.pretrain.learning_rate);
  }
}

// ---- synth / mfcc -------------------------------------------------------------

inline void read_into(const detail::ObjectReader& r, SynthConfig& c) {
  r.allow({"subjects", "videos_per_subject", "face_frames", "speech_frames", "manipulation", "strength", "noise",
           "style_scale", "identity_scale", "train_fraction", "pretrain_per_class", "precision"});
  r.get_size("subjects", c.subjects);
  r.get_size("videos_per_subject", c.videos_per_subject);
  r.get_size("face_frames", c.face_frames);
  r.get_size("speech_frames", c.speech_frames);
  if (r.has("manipulation")) {
    std::string m;
    r.get("manipulation", m);
    c.manipulation = parse_manipulation(m);
  }
  r.get_double("strength", c.strength);
  r.get_double("noise", c.noise);
  r.get_double("style_scale", c.style_scale);
  r.get_double("identity_scale", c.identity_scale);
  r.get_double("train_fraction", c.train_fraction);
  r.get_size("pretrain_per_class", c.pretrain_per_class);
  r.get("precision", c.precision);
}

inline WindowType parse_window(const std::string& s) {
  if (s == "hann") return WindowType::Hann;
  if (s == "hamming") return WindowType::Hamming;
  if (s == "rectangular") return WindowType::Rectangular;
  throw ConfigError("mfcc.window: expected hann|hamming|rectangular, got '" + s + "'");
}

inline void read_into(const detail::ObjectReader& r, MfccConfig& c) {
  r.allow({"frame_length", "hop", "fft_size", "mel_filters", "coefficients", "pre_emphasis", "log_floor", "low_hz",
           "high_hz", "window"});
  r.get_double("frame_length", c.frame_length);
  r.get_double("hop", c.hop);
  r.get_size("fft_size", c.fft_size);
  r.get_size("mel_filters", c.mel_filters);
  r.get_size("coefficients", c.coefficients);
  r.get_double("pre_emphasis", c.pre_emphasis);
  r.get_double("log_floor", c.log_floor);
  r.get_double("low_hz", c.low_hz);
  r.get_double("high_hz", c.high_hz);
  if (r.has("window")) {
    std::string w;
    r.get("window", w);
    c.window = parse_window(w);
  }
}

// ---- run config ---------------------------------------------------------------

struct PathsConfig {
  std::string data_dir = "data";
  std::string manifest;    // defaults to <data_dir>/manifest.json
  std::string checkpoint = "model.ckpt";
  std::string out = "out";
};

struct RunConfig {
  int version = kConfigVersion;
  std::uint64_t seed = 7;
  SynthConfig synth;
  MfccConfig mfcc;
  ModelConfig model;
  TrainConfig train;
  PathsConfig paths;

  // Copies the run seed into the sections that carry their own.
  void apply_seed(std::uint64_t s) {
    seed = s;
    synth.seed = s;
    train.seed = s;
  }

  std::filesystem::path manifest_path() const {
    return paths.manifest.empty() ? std::filesystem::path(paths.data_dir) / "manifest.json"
                                  : std::filesystem::path(paths.manifest);
  }

  void validate() const {
    if (version != kConfigVersion) throw ConfigError("config version " + std::to_string(version) + " unsupported");
    synth.validate();
    model.validate();
    train.validate();
  }
};

inline RunConfig parse_run_config(const nlohmann::json& j) {
  RunConfig c;
  const detail::ObjectReader r(j, "");
  r.allow({"version", "seed", "synth", "mfcc", "model", "train", "paths"});
  if (!r.has("version")) throw ConfigError("config key 'version' is required");
  r.get("version", c.version);
  if (c.version != kConfigVersion) throw ConfigError("config version " + std::to_string(c.version) + " unsupported");
  std::uint64_t seed = c.seed;
  r.get("seed", seed);
  if (r.has("synth")) read_into(r.child("synth"), c.synth);
  if (r.has("mfcc")) read_into(r.child("mfcc"), c.mfcc);
  if (r.has("model")) read_into(r.child("model"), c.model);
  if (r.has("train")) read_into(r.child("train"), c.train);
  if (r.has("paths")) {
    const auto p = r.child("paths");
    p.allow({"data_dir", "manifest", "checkpoint", "out"});
    p.get("data_dir", c.paths.data_dir);
    p.get("manifest", c.paths.manifest);
    p.get("checkpoint", c.paths.checkpoint);
    p.get("out", c.paths.out);
  }
  c.apply_seed(seed);
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError(path.string() + ": cannot open config");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": invalid JSON: " + e.what());
  }
  return parse_run_config(j);
}

}  // namespace avdf
