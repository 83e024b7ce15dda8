#pragma once

// Seeded synthetic audio-visual corpus.
//
// Each video has a latent z = [one-hot emotion (7), style (8)]. Face and speech
// frames are fixed random linear decodings of z, modulated by a shared
// sinusoidal envelope, shifted by a per-subject offset, plus white noise.
// A fake copies its real and re-decodes the manipulated modality from
// z' = (1 - s) z + s z_target, where z_target swaps in a different emotion and
// keeps the style. The noise draws are reused, so s = 0 reproduces the real
// bit for bit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "avdf/error.hpp"
#include "avdf/features.hpp"
#include "avdf/model.hpp"
#include "avdf/networks.hpp"
#include "avdf/parameters.hpp"
#include "avdf/tensor.hpp"

namespace avdf {

inline constexpr std::size_t kStyleDim = 8;
inline constexpr std::size_t kLatentDim = kEmotionClasses + kStyleDim;
inline constexpr std::string_view kManifestFormat = "avdf_manifest_v1";

// Mixed draws face, speech or both independently for every fake.
enum class Manipulation { Face, Speech, Both, Mixed };

inline std::string_view to_string(Manipulation m) {
  switch (m) {
    case Manipulation::Face: return "face";
    case Manipulation::Speech: return "speech";
    case Manipulation::Both: return "both";
    case Manipulation::Mixed: return "mixed";
  }
  return "?";
}

inline Manipulation parse_manipulation(std::string_view s) {
  if (s == "face") return Manipulation::Face;
  if (s == "speech") return Manipulation::Speech;
  if (s == "both") return Manipulation::Both;
  if (s == "mixed") return Manipulation::Mixed;
  throw ConfigError("manipulation: expected face|speech|both|mixed, got '" + std::string(s) + "'");
}

struct SynthConfig {
  std::size_t subjects = 200;
  std::size_t videos_per_subject = 1;  // real videos; each gets one fake
  std::size_t face_frames = 64;
  std::size_t speech_frames = 256;
  Manipulation manipulation = Manipulation::Mixed;
  double strength = 1.0;
  double noise = 0.5;
  double style_scale = 0.25;
  double identity_scale = 0.0;  // per-subject feature offset, off by default
  double train_fraction = 0.85;
  std::size_t pretrain_per_class = 30;  // emotion-labelled clips for F2/S2
  int precision = 8;                    // significant digits in feature files
  std::uint64_t seed = 7;

  friend bool operator==(const SynthConfig&, const SynthConfig&) = default;

  void validate() const {
    if (subjects < 2) throw ConfigError("synth: subjects must be >= 2");
    if (videos_per_subject == 0) throw ConfigError("synth: videos_per_subject must be >= 1");
    if (face_frames == 0 || speech_frames == 0) throw ConfigError("synth: frame counts must be >= 1");
    if (!(strength >= 0.0) || !std::isfinite(strength)) throw ConfigError("synth: strength must be >= 0");
    if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("synth: noise must be >= 0");
    if (!(style_scale >= 0.0) || !(identity_scale >= 0.0)) throw ConfigError("synth: scales must be >= 0");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("synth: train_fraction must be in (0, 1)");
    if (precision < 1 || precision > 17) throw ConfigError("synth: precision must be in [1, 17]");
  }
};

inline void to_json(nlohmann::json& j, const SynthConfig& c) {
  j = nlohmann::json{{"subjects", c.subjects},
                     {"videos_per_subject", c.videos_per_subject},
                     {"face_frames", c.face_frames},
                     {"speech_frames", c.speech_frames},
                     {"manipulation", std::string(to_string(c.manipulation))},
                     {"strength", c.strength},
                     {"noise", c.noise},
                     {"style_scale", c.style_scale},
                     {"identity_scale", c.identity_scale},
                     {"train_fraction", c.train_fraction},
                     {"pretrain_per_class", c.pretrain_per_class},
                     {"precision", c.precision},
                     {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, SynthConfig& c) {
  c.subjects = j.at("subjects").get<std::size_t>();
  c.videos_per_subject = j.at("videos_per_subject").get<std::size_t>();
  c.face_frames = j.at("face_frames").get<std::size_t>();
  c.speech_frames = j.at("speech_frames").get<std::size_t>();
  c.manipulation = parse_manipulation(j.at("manipulation").get<std::string>());
  c.strength = j.at("strength").get<double>();
  c.noise = j.at("noise").get<double>();
  c.style_scale = j.at("style_scale").get<double>();
  c.identity_scale = j.at("identity_scale").get<double>();
  c.train_fraction = j.at("train_fraction").get<double>();
  c.pretrain_per_class = j.at("pretrain_per_class").get<std::size_t>();
  c.precision = j.at("precision").get<int>();
  c.seed = j.at("seed").get<std::uint64_t>();
}

// ---- generative model -------------------------------------------------------

struct Latent {
  std::size_t emotion = 0;
  std::vector<double> z;  // kLatentDim
};

struct Envelope {
  double frequency = 1.0;  // Hz
  double phase = 0.0;
  double depth = 0.5;

  double at(double seconds) const {
    return 1.0 + depth * std::sin(2.0 * std::numbers::pi * frequency * seconds + phase);
  }
};

// Fixed decoders shared by every video of a corpus.
class SynthWorld {
 public:
  explicit SynthWorld(std::uint64_t seed) {
    auto rng = derived_rng(seed, stable_hash("world"));
    std::normal_distribution<double> n01(0.0, 1.0);
    face_ = Tensor(Shape{kFaceFeatureDim, kLatentDim});
    speech_ = Tensor(Shape{kMfccDim, kLatentDim});
    for (double& v : face_.values()) v = n01(rng);
    for (double& v : speech_.values()) v = n01(rng);
  }

  const Tensor& decoder(Modality m) const { return m == Modality::Face ? face_ : speech_; }

 private:
  Tensor face_, speech_;
};

inline Latent sample_latent(std::size_t emotion, double style_scale, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Latent l{emotion, std::vector<double>(kLatentDim, 0.0)};
  l.z[emotion] = 1.0;
  for (std::size_t i = 0; i < kStyleDim; ++i) l.z[kEmotionClasses + i] = style_scale * n01(rng);
  return l;
}

inline Latent with_emotion(const Latent& l, std::size_t emotion) {
  Latent out = l;
  std::fill(out.z.begin(), out.z.begin() + kEmotionClasses, 0.0);
  out.z[emotion] = 1.0;
  out.emotion = emotion;
  return out;
}

inline std::vector<double> lerp_latent(const std::vector<double>& a, const std::vector<double>& b, double s) {
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = (1.0 - s) * a[i] + s * b[i];
  return out;
}

// frame_t = offset + envelope(t) * (D z) + noise * eps_t, eps drawn from `noise_seed`.
inline Tensor decode_frames(const SynthWorld& world, Modality m, const std::vector<double>& z,
                            const std::vector<double>& offset, const Envelope& env, std::size_t frames,
                            double frame_seconds, double noise, std::uint64_t noise_seed) {
  const Tensor& D = world.decoder(m);
  const std::size_t dim = D.dim(0);
  std::vector<double> mean(dim, 0.0);
  for (std::size_t r = 0; r < dim; ++r)
    for (std::size_t k = 0; k < kLatentDim; ++k) mean[r] += D.at(r, k) * z[k];
  std::mt19937_64 rng(noise_seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  Tensor out(Shape{frames, dim});
  for (std::size_t t = 0; t < frames; ++t) {
    const double a = env.at(static_cast<double>(t) * frame_seconds);
    for (std::size_t r = 0; r < dim; ++r) out.at(t, r) = offset[r] + a * mean[r] + noise * n01(rng);
  }
  return out;
}

// ---- manifest ---------------------------------------------------------------

enum class Split { Train, Test, Pretrain };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Test: return "test";
    case Split::Pretrain: return "pretrain";
  }
  return "?";
}

inline Split parse_split(std::string_view s) {
  if (s == "train") return Split::Train;
  if (s == "test") return Split::Test;
  if (s == "pretrain") return Split::Pretrain;
  throw InputError(InputErrorCode::Malformed, "manifest: unknown split '" + std::string(s) + "'");
}

struct ManifestEntry {
  std::string id;
  std::string subject;
  Label label = Label::Real;
  Split split = Split::Train;
  std::string face_path;    // relative to the manifest directory
  std::string speech_path;  // relative to the manifest directory
  std::optional<std::string> paired_real;
  std::optional<std::string> manipulated;  // face | speech | both, fakes only
  std::optional<std::size_t> emotion;      // pretraining clips only
};

struct DatasetManifest {
  std::optional<SynthConfig> synth;
  std::vector<ManifestEntry> entries;

  const ManifestEntry* find(const std::string& id) const {
    for (const auto& e : entries)
      if (e.id == id) return &e;
    return nullptr;
  }

  // Fakes reference a real of the same subject in the same split; ids unique.
  void validate() const {
    std::vector<std::string> ids;
    for (const auto& e : entries) ids.push_back(e.id);
    std::sort(ids.begin(), ids.end());
    if (auto it = std::adjacent_find(ids.begin(), ids.end()); it != ids.end()) {
      throw InputError(InputErrorCode::Malformed, "manifest: duplicate id '" + *it + "'");
    }
    for (const auto& e : entries) {
      if (e.split == Split::Pretrain) {
        if (!e.emotion || *e.emotion >= kEmotionClasses) {
          throw InputError(InputErrorCode::Malformed, "manifest: pretraining clip '" + e.id + "' needs an emotion 0..6");
        }
        continue;
      }
      if (e.label == Label::Real) continue;
      if (!e.paired_real) throw InputError(InputErrorCode::Malformed, "manifest: fake '" + e.id + "' has no paired_real");
      const ManifestEntry* r = find(*e.paired_real);
      if (!r || r->label != Label::Real) {
        throw InputError(InputErrorCode::Malformed, "manifest: fake '" + e.id + "' references missing real '" +
                                                        *e.paired_real + "'");
      }
      if (r->subject != e.subject) {
        throw InputError(InputErrorCode::Malformed, "manifest: fake '" + e.id + "' pairs across subjects");
      }
      if (r->split != e.split) {
        throw InputError(InputErrorCode::Malformed, "manifest: fake '" + e.id + "' pairs across splits");
      }
    }
  }
};

inline nlohmann::json manifest_to_json(const DatasetManifest& m) {
  nlohmann::json videos = nlohmann::json::array();
  for (const auto& e : m.entries) {
    nlohmann::json v{{"id", e.id},
                     {"subject", e.subject},
                     {"label", std::string(to_string(e.label))},
                     {"split", std::string(to_string(e.split))},
                     {"face", e.face_path},
                     {"speech", e.speech_path}};
    if (e.paired_real) v["paired_real"] = *e.paired_real;
    if (e.manipulated) v["manipulated"] = *e.manipulated;
    if (e.emotion) v["emotion"] = *e.emotion;
    videos.push_back(std::move(v));
  }
  nlohmann::json j{{"format", std::string(kManifestFormat)}, {"videos", std::move(videos)}};
  if (m.synth) j["synth"] = *m.synth;
  return j;
}

inline void write_manifest(const std::filesystem::path& path, const DatasetManifest& m) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw InputError(InputErrorCode::Io, path.string() + ": cannot write manifest");
  f << manifest_to_json(m).dump(2) << '\n';
  if (!f) throw InputError(InputErrorCode::Io, path.string() + ": manifest write failed");
}

inline DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw InputError(InputErrorCode::MissingFile, path.string() + ": cannot open manifest");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw InputError(InputErrorCode::Malformed, path.string() + ": " + e.what());
  }
  DatasetManifest m;
  try {
    if (j.at("format").get<std::string>() != kManifestFormat) {
      throw InputError(InputErrorCode::Malformed, path.string() + ": format is not avdf_manifest_v1");
    }
    for (const auto& v : j.at("videos")) {
      ManifestEntry e;
      e.id = v.at("id").get<std::string>();
      e.subject = v.at("subject").get<std::string>();
      e.label = parse_label(v.at("label").get<std::string>());
      e.split = parse_split(v.at("split").get<std::string>());
      e.face_path = v.at("face").get<std::string>();
      e.speech_path = v.at("speech").get<std::string>();
      if (v.contains("paired_real")) e.paired_real = v["paired_real"].get<std::string>();
      if (v.contains("manipulated")) e.manipulated = v["manipulated"].get<std::string>();
      if (v.contains("emotion")) e.emotion = v["emotion"].get<std::size_t>();
      m.entries.push_back(std::move(e));
    }
    if (j.contains("synth")) m.synth = j["synth"].get<SynthConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw InputError(InputErrorCode::Malformed, path.string() + ": " + e.what());
  }
  m.validate();
  return m;
}

inline VideoFeatures load_video(const ManifestEntry& e, const std::filesystem::path& base) {
  return VideoFeatures{e.id, load_face_features(base / e.face_path), load_speech_features(base / e.speech_path),
                       e.label};
}

// ---- corpus generation ------------------------------------------------------

struct SynthVideo {
  ManifestEntry entry;
  FaceFeatureSequence face;
  SpeechFeatureSequence speech;
};

namespace detail {

inline std::string subject_name(std::string_view prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*s%04zu", static_cast<int>(prefix.size()), prefix.data(), i);
  return buf;
}

struct SubjectOffsets {
  std::vector<double> face, speech;
};

inline SubjectOffsets sample_offsets(double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  SubjectOffsets o{std::vector<double>(kFaceFeatureDim), std::vector<double>(kMfccDim)};
  for (double& v : o.face) v = scale * n01(rng);
  for (double& v : o.speech) v = scale * n01(rng);
  return o;
}

inline Envelope sample_envelope(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> freq(0.3, 1.5), phase(0.0, 2.0 * std::numbers::pi);
  Envelope e;
  e.frequency = freq(rng);
  e.phase = phase(rng);
  return e;
}

// Uniform over the classes other than `exclude` (and `exclude2` when given).
inline std::size_t other_emotion(std::size_t exclude, std::optional<std::size_t> exclude2, std::mt19937_64& rng) {
  std::vector<std::size_t> options;
  for (std::size_t k = 0; k < kEmotionClasses; ++k)
    if (k != exclude && (!exclude2 || k != *exclude2)) options.push_back(k);
  return options[std::uniform_int_distribution<std::size_t>(0, options.size() - 1)(rng)];
}

}  // namespace detail

// Builds every video in memory, deterministic in `cfg`. Paths in the entries
// are the ones generate_corpus writes.
inline std::vector<SynthVideo> synthesize(const SynthConfig& cfg) {
  cfg.validate();
  const SynthWorld world(cfg.seed);
  const double face_dt = 1.0 / 25.0, speech_dt = 0.010;
  std::vector<SynthVideo> out;

  // Subject-level split.
  std::vector<std::size_t> subjects(cfg.subjects);
  std::iota(subjects.begin(), subjects.end(), std::size_t{0});
  {
    auto rng = derived_rng(cfg.seed, stable_hash("split"));
    std::shuffle(subjects.begin(), subjects.end(), rng);
  }
  const std::size_t n_train = std::clamp<std::size_t>(
      static_cast<std::size_t>(std::lround(cfg.train_fraction * static_cast<double>(cfg.subjects))), 1,
      cfg.subjects - 1);
  std::vector<Split> split_of(cfg.subjects);
  for (std::size_t i = 0; i < cfg.subjects; ++i) split_of[subjects[i]] = i < n_train ? Split::Train : Split::Test;

  auto make = [&](std::string id, std::string subject, Label label, Split split, Tensor face, Tensor speech) {
    SynthVideo v;
    v.entry.id = id;
    v.entry.subject = std::move(subject);
    v.entry.label = label;
    v.entry.split = split;
    v.entry.face_path = "face/" + id + ".csv";
    v.entry.speech_path = "speech/" + id + ".csv";
    v.face = FaceFeatureSequence{std::move(face), 25.0};
    v.speech = SpeechFeatureSequence{std::move(speech), speech_dt};
    return v;
  };

  for (std::size_t s = 0; s < cfg.subjects; ++s) {
    const std::string subject = detail::subject_name("s", s);
    auto subject_rng = derived_rng(cfg.seed, stable_hash("subject:" + subject));
    const detail::SubjectOffsets offsets = detail::sample_offsets(cfg.identity_scale, subject_rng);
    for (std::size_t k = 0; k < cfg.videos_per_subject; ++k) {
      const std::string base = subject + "_v" + std::to_string(k);
      auto rng = derived_rng(cfg.seed, stable_hash("video:" + base));
      const std::size_t emotion = std::uniform_int_distribution<std::size_t>(0, kEmotionClasses - 1)(rng);
      const Latent latent = sample_latent(emotion, cfg.style_scale, rng);
      const Envelope env = detail::sample_envelope(rng);
      const std::uint64_t face_noise = rng(), speech_noise = rng();

      Tensor face = decode_frames(world, Modality::Face, latent.z, offsets.face, env, cfg.face_frames, face_dt,
                                  cfg.noise, face_noise);
      Tensor speech = decode_frames(world, Modality::Speech, latent.z, offsets.speech, env, cfg.speech_frames,
                                    speech_dt, cfg.noise, speech_noise);

      Manipulation kind = cfg.manipulation;
      if (kind == Manipulation::Mixed) {
        kind = static_cast<Manipulation>(std::uniform_int_distribution<int>(0, 2)(rng));
      }
      // "both" re-decodes each modality from its own, different emotion.
      const std::size_t face_target = detail::other_emotion(emotion, std::nullopt, rng);
      const std::size_t speech_target =
          kind == Manipulation::Both ? detail::other_emotion(emotion, face_target, rng) : face_target;
      // Only the emotion changes; the style is the real video's.
      const Latent face_latent = with_emotion(latent, face_target);
      const Latent speech_latent = with_emotion(latent, speech_target);

      Tensor fake_face = face, fake_speech = speech;
      if (kind == Manipulation::Face || kind == Manipulation::Both) {
        fake_face = decode_frames(world, Modality::Face, lerp_latent(latent.z, face_latent.z, cfg.strength),
                                  offsets.face, env, cfg.face_frames, face_dt, cfg.noise, face_noise);
      }
      if (kind == Manipulation::Speech || kind == Manipulation::Both) {
        fake_speech = decode_frames(world, Modality::Speech, lerp_latent(latent.z, speech_latent.z, cfg.strength),
                                    offsets.speech, env, cfg.speech_frames, speech_dt, cfg.noise, speech_noise);
      }

      SynthVideo real = make(base + "_real", subject, Label::Real, split_of[s], std::move(face), std::move(speech));
      SynthVideo fake =
          make(base + "_fake", subject, Label::Fake, split_of[s], std::move(fake_face), std::move(fake_speech));
      fake.entry.paired_real = real.entry.id;
      fake.entry.manipulated = std::string(to_string(kind));
      out.push_back(std::move(real));
      out.push_back(std::move(fake));
    }
  }

  // Emotion pretraining clips: separate subjects, separate random streams.
  for (std::size_t c = 0; c < kEmotionClasses; ++c) {
    for (std::size_t k = 0; k < cfg.pretrain_per_class; ++k) {
      const std::size_t index = c * cfg.pretrain_per_class + k;
      const std::string subject = detail::subject_name("p", index);
      auto rng = derived_rng(cfg.seed, stable_hash("pretrain:" + subject));
      const detail::SubjectOffsets offsets = detail::sample_offsets(cfg.identity_scale, rng);
      const Latent latent = sample_latent(c, cfg.style_scale, rng);
      const Envelope env = detail::sample_envelope(rng);
      const std::uint64_t face_noise = rng(), speech_noise = rng();
      SynthVideo v = make(subject + "_emotion", subject, Label::Real, Split::Pretrain,
                          decode_frames(world, Modality::Face, latent.z, offsets.face, env, cfg.face_frames, face_dt,
                                        cfg.noise, face_noise),
                          decode_frames(world, Modality::Speech, latent.z, offsets.speech, env, cfg.speech_frames,
                                        speech_dt, cfg.noise, speech_noise));
      v.entry.emotion = c;
      out.push_back(std::move(v));
    }
  }
  return out;
}

// Writes feature files under `dir` and `dir/manifest.json`; returns the manifest.
inline DatasetManifest generate_corpus(const SynthConfig& cfg, const std::filesystem::path& dir) {
  const std::vector<SynthVideo> videos = synthesize(cfg);
  std::error_code ec;
  std::filesystem::create_directories(dir / "face", ec);
  std::filesystem::create_directories(dir / "speech", ec);
  if (ec) throw InputError(InputErrorCode::Io, dir.string() + ": cannot create corpus directory: " + ec.message());
  DatasetManifest manifest;
  manifest.synth = cfg;
  for (const auto& v : videos) {
    save_face_features(dir / v.entry.face_path, v.face, cfg.precision);
    save_speech_features(dir / v.entry.speech_path, v.speech, cfg.precision);
    manifest.entries.push_back(v.entry);
  }
  manifest.validate();
  write_manifest(dir / "manifest.json", manifest);
  return manifest;
}

}  // namespace avdf
