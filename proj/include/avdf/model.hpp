#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "avdf/error.hpp"
#include "avdf/features.hpp"
#include "avdf/networks.hpp"

namespace avdf {

enum class Label { Real, Fake };

inline std::string_view to_string(Label l) { return l == Label::Real ? "real" : "fake"; }

inline Label parse_label(std::string_view s) {
  if (s == "real") return Label::Real;
  if (s == "fake") return Label::Fake;
  throw InputError(InputErrorCode::Malformed, "unknown label '" + std::string(s) + "'");
}

// Raw (unstandardized, unwindowed) features of one video.
struct VideoFeatures {
  std::string id;
  FaceFeatureSequence face;
  SpeechFeatureSequence speech;
  std::optional<Label> label;
};

struct ModelConfig {
  ModalityEmbedderConfig face_net = ModalityEmbedderConfig::face();
  ModalityEmbedderConfig speech_net = ModalityEmbedderConfig::speech();
  EmotionEmbedderConfig face_emotion = EmotionEmbedderConfig::face();
  EmotionEmbedderConfig speech_emotion = EmotionEmbedderConfig::speech();

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;

  void validate() const {
    face_net.stage_shapes();
    speech_net.stage_shapes();
    face_emotion.validate();
    speech_emotion.validate();
    if (face_net.cols != kFaceFeatureDim || face_emotion.input_dim != kFaceFeatureDim) {
      throw ConfigError("model: face networks must read 430-d features");
    }
    if (speech_net.cols != kMfccDim || speech_emotion.input_dim != kMfccDim) {
      throw ConfigError("model: speech networks must read 13-d features");
    }
  }
};

// Standardized fixed windows of one video, ready for the four networks.
struct PreparedVideo {
  Tensor face;    // [face rows, 430]
  Tensor speech;  // [speech rows, 13]
};

// F1, S1, F2, S2 plus the train-split standardization statistics and the
// decision threshold. Everything needed for inference.
class Detector {
 public:
  Detector(ModelConfig config, std::uint64_t seed)
      : config_((config.validate(), std::move(config))),
        seed_(seed),
        face_net_("F1", config_.face_net, seed),
        speech_net_("S1", config_.speech_net, seed),
        face_emotion_("F2", config_.face_emotion, seed),
        speech_emotion_("S2", config_.speech_emotion, seed),
        face_std_(Standardizer::identity(kFaceFeatureDim)),
        speech_std_(Standardizer::identity(kMfccDim)) {}

  Detector(Detector&&) = default;

  const ModelConfig& config() const noexcept { return config_; }
  std::uint64_t seed() const noexcept { return seed_; }

  ModalityEmbedder& face_net() noexcept { return face_net_; }
  ModalityEmbedder& speech_net() noexcept { return speech_net_; }
  EmotionEmbedder& face_emotion() noexcept { return face_emotion_; }
  EmotionEmbedder& speech_emotion() noexcept { return speech_emotion_; }
  const ModalityEmbedder& face_net() const noexcept { return face_net_; }
  const ModalityEmbedder& speech_net() const noexcept { return speech_net_; }
  const EmotionEmbedder& face_emotion() const noexcept { return face_emotion_; }
  const EmotionEmbedder& speech_emotion() const noexcept { return speech_emotion_; }

  // Fixed iteration order used by the checkpoint.
  std::vector<ParameterStore*> stores() {
    return {&face_net_.params(), &speech_net_.params(), &face_emotion_.params(), &speech_emotion_.params()};
  }
  std::vector<const ParameterStore*> stores() const {
    return {&face_net_.params(), &speech_net_.params(), &face_emotion_.params(), &speech_emotion_.params()};
  }

  const Standardizer& face_standardizer() const noexcept { return face_std_; }
  const Standardizer& speech_standardizer() const noexcept { return speech_std_; }
  void set_standardizers(Standardizer face, Standardizer speech) {
    if (face.dim() != kFaceFeatureDim || speech.dim() != kMfccDim) {
      throw ShapeError("detector: standardizer widths must be 430 and 13");
    }
    face_std_ = std::move(face);
    speech_std_ = std::move(speech);
  }

  std::optional<double> threshold() const noexcept { return tau_; }
  void set_threshold(double tau) {
    if (!std::isfinite(tau)) throw NumericalError("detector: threshold must be finite");
    tau_ = tau;
  }

  // Standardize first, then window, so padded rows sit at the train mean.
  PreparedVideo prepare(const VideoFeatures& video) const {
    if (video.face.frames.rank() != 2 || video.face.frames.dim(1) != kFaceFeatureDim) {
      throw InputError(InputErrorCode::WrongColumnCount,
                       video.id + ": face features must be [T,430], got " + shape_string(video.face.frames.shape()));
    }
    if (video.speech.frames.rank() != 2 || video.speech.frames.dim(1) != kMfccDim) {
      throw InputError(InputErrorCode::WrongColumnCount,
                       video.id + ": speech features must be [T,13], got " + shape_string(video.speech.frames.shape()));
    }
    if (video.face.frames.dim(0) == 0 || video.speech.frames.dim(0) == 0) {
      throw InputError(InputErrorCode::EmptyFile, video.id + ": empty feature sequence");
    }
    return PreparedVideo{window_fixed(face_std_.apply(video.face.frames), config_.face_net.rows),
                         window_fixed(speech_std_.apply(video.speech.frames), config_.speech_net.rows)};
  }

 private:
  ModelConfig config_;
  std::uint64_t seed_;
  ModalityEmbedder face_net_;
  ModalityEmbedder speech_net_;
  EmotionEmbedder face_emotion_;
  EmotionEmbedder speech_emotion_;
  Standardizer face_std_;
  Standardizer speech_std_;
  std::optional<double> tau_;
};

// Copies parameter values, standardizers and threshold between detectors of the same config.
inline void copy_state(const Detector& from, Detector& to) {
  if (!(from.config() == to.config())) throw ConfigError("copy_state: model configs differ");
  const auto src = from.stores();
  const auto dst = to.stores();
  for (std::size_t s = 0; s < src.size(); ++s) {
    for (std::size_t i = 0; i < src[s]->size(); ++i) (*dst[s])[i].value = (*src[s])[i].value;
  }
  to.set_standardizers(from.face_standardizer(), from.speech_standardizer());
  if (from.threshold()) to.set_threshold(*from.threshold());
}

}  // namespace avdf
