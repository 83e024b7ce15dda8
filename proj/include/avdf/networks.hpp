#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "avdf/autodiff.hpp"
#include "avdf/error.hpp"
#include "avdf/layers.hpp"
#include "avdf/optimizer.hpp"
#include "avdf/parameters.hpp"

namespace avdf {

inline constexpr std::size_t kEmbeddingDim = 250;
inline constexpr std::size_t kEmotionClasses = 7;

enum class Modality { Face, Speech };

inline std::string_view to_string(Modality m) { return m == Modality::Face ? "face" : "speech"; }

enum class Emotion : std::size_t { Happy, Sad, Angry, Fearful, Surprise, Disgust, Neutral };

inline constexpr std::array<std::string_view, kEmotionClasses> kEmotionNames{
    "happy", "sad", "angry", "fearful", "surprise", "disgust", "neutral"};

// Index of the largest probability; ties go to the lowest index.
inline std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

// ---- F1 / S1 ----------------------------------------------------------------

struct ConvStage {
  std::size_t channels = 8;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pool = 2;

  friend bool operator==(const ConvStage&, const ConvStage&) = default;
};

struct ModalityEmbedderConfig {
  std::size_t rows = 64;    // window length in frames
  std::size_t cols = 430;   // feature width
  std::vector<ConvStage> stages{{8}, {16}, {32}};
  std::vector<std::size_t> fc_widths{512, kEmbeddingDim};

  static ModalityEmbedderConfig face() { return {}; }
  static ModalityEmbedderConfig speech() {
    ModalityEmbedderConfig c;
    c.rows = 256;
    c.cols = 13;
    return c;
  }

  friend bool operator==(const ModalityEmbedderConfig&, const ModalityEmbedderConfig&) = default;

  // [channels, height, width] after each conv+pool stage; throws if any extent collapses.
  std::vector<Shape> stage_shapes() const {
    if (rows == 0 || cols == 0) throw ConfigError("modality embedder: window extents must be positive");
    if (fc_widths.empty() || fc_widths.back() != kEmbeddingDim) {
      throw ConfigError("modality embedder: final fully-connected width must be 250");
    }
    std::vector<Shape> shapes;
    std::size_t c = 1, h = rows, w = cols;
    for (const auto& s : stages) {
      if (s.channels == 0 || s.kernel == 0 || s.stride == 0 || s.pool == 0) {
        throw ConfigError("modality embedder: conv stage extents must be positive");
      }
      const std::size_t pad = s.kernel / 2;
      if (h + 2 * pad < s.kernel || w + 2 * pad < s.kernel) throw ConfigError("modality embedder: kernel exceeds input");
      h = (h + 2 * pad - s.kernel) / s.stride + 1;
      w = (w + 2 * pad - s.kernel) / s.stride + 1;
      h /= s.pool;
      w /= s.pool;
      c = s.channels;
      if (h == 0 || w == 0) {
        throw ConfigError("modality embedder: input " + std::to_string(rows) + "x" + std::to_string(cols) +
                          " collapses to zero extent after stage " + std::to_string(shapes.size() + 1));
      }
      shapes.push_back(Shape{c, h, w});
    }
    return shapes;
  }

  std::size_t flat_size() const {
    const auto shapes = stage_shapes();
    return shapes.empty() ? rows * cols : shape_size(shapes.back());
  }
};

// Conv -> maxpool -> ReLU stages, ReLU-separated fully-connected layers, and a
// terminal unit normalization. Convolutions use zero padding of kernel/2.
class ModalityEmbedder {
 public:
  ModalityEmbedder(std::string name, ModalityEmbedderConfig config, std::uint64_t seed)
      : name_(std::move(name)), config_(std::move(config)) {
    auto rng = derived_rng(seed, stable_hash(name_));
    const auto shapes = config_.stage_shapes();
    std::size_t in_channels = 1;
    for (std::size_t i = 0; i < config_.stages.size(); ++i) {
      const auto& s = config_.stages[i];
      const std::size_t fan_in = in_channels * s.kernel * s.kernel;
      const std::size_t fan_out = s.channels * s.kernel * s.kernel;
      const std::string prefix = name_ + ".conv" + std::to_string(i);
      Conv conv;
      conv.kernels = &params_.add(prefix + ".kernel",
                                  glorot_uniform(Shape{s.channels, in_channels, s.kernel, s.kernel}, fan_in, fan_out, rng));
      conv.bias = &params_.add(prefix + ".bias", Tensor(Shape{s.channels}));
      convs_.push_back(conv);
      in_channels = s.channels;
    }
    std::size_t width = config_.flat_size();
    for (std::size_t i = 0; i < config_.fc_widths.size(); ++i) {
      fcs_.push_back(LinearParams::create(params_, name_ + ".fc" + std::to_string(i), width, config_.fc_widths[i], rng));
      width = config_.fc_widths[i];
    }
  }

  ModalityEmbedder(const ModalityEmbedder&) = delete;
  ModalityEmbedder& operator=(const ModalityEmbedder&) = delete;
  ModalityEmbedder(ModalityEmbedder&&) = default;

  const std::string& name() const noexcept { return name_; }
  const ModalityEmbedderConfig& config() const noexcept { return config_; }
  ParameterStore& params() noexcept { return params_; }
  const ParameterStore& params() const noexcept { return params_; }

  ad::Var forward(ad::Graph& g, const Tensor& window) const { return forward_batch(g, {&window}).front(); }

  // Convolutions run per window; the fully-connected layers run once over the
  // stacked batch so their weights are streamed a single time.
  std::vector<ad::Var> forward_batch(ad::Graph& g, const std::vector<const Tensor*>& windows) const {
    if (windows.empty()) throw ShapeError(name_ + ": empty batch");
    std::vector<ad::Var> flat;
    flat.reserve(windows.size());
    for (const Tensor* window : windows) flat.push_back(features(g, *window));
    return head(g, ad::stack_rows(flat));
  }

  // Convolutional trunk: window [rows, cols] -> flattened feature vector.
  ad::Var features(ad::Graph& g, const Tensor& window) const {
    if (window.shape() != Shape{config_.rows, config_.cols}) {
      throw ShapeError(name_ + ": expected window " + shape_string(Shape{config_.rows, config_.cols}) + ", got " +
                       shape_string(window.shape()));
    }
    ad::Var x = g.constant(window.reshaped(Shape{1, config_.rows, config_.cols}));
    for (std::size_t i = 0; i < convs_.size(); ++i) {
      const auto& s = config_.stages[i];
      x = ad::conv2d(x, g.param(*convs_[i].kernels), s.stride, s.kernel / 2);
      x = ad::channel_bias(x, g.param(*convs_[i].bias));
      x = ad::relu(ad::maxpool2d(x, s.pool));
    }
    return ad::flatten(x);
  }

  // Fully-connected head over stacked trunk features [B, flat] -> B unit embeddings.
  std::vector<ad::Var> head(ad::Graph& g, ad::Var stacked) const {
    ad::Var h = stacked;
    for (std::size_t i = 0; i < fcs_.size(); ++i) {
      h = ad::linear_rows(h, g.param(*fcs_[i].weights), g.param(*fcs_[i].bias));
      if (i + 1 < fcs_.size()) h = ad::relu(h);
    }
    const std::size_t B = h.shape()[0];
    std::vector<ad::Var> out;
    out.reserve(B);
    for (std::size_t b = 0; b < B; ++b) out.push_back(ad::unit_normalize(ad::row(h, b)));
    return out;
  }

  Tensor embed(const Tensor& window) const {
    ad::Graph g(ad::GradMode::Disabled);
    return forward(g, window).value();
  }

 private:
  struct Conv {
    Parameter* kernels = nullptr;
    Parameter* bias = nullptr;
  };

  std::string name_;
  ModalityEmbedderConfig config_;
  ParameterStore params_;
  std::vector<Conv> convs_;
  std::vector<LinearParams> fcs_;
};

// ---- F2 / S2 ----------------------------------------------------------------

struct EmotionEmbedderConfig {
  std::size_t input_dim = 430;
  std::size_t hidden = 64;
  std::size_t memory = 64;
  std::size_t embedding = kEmbeddingDim;
  std::size_t classes = kEmotionClasses;
  std::size_t max_steps = 32;
  // F2 and S2 draw the emotion head from one common stream and never update
  // it, so both embed each emotion toward the same directions.
  bool shared_head = true;

  static EmotionEmbedderConfig face() { return {}; }
  static EmotionEmbedderConfig speech() {
    EmotionEmbedderConfig c;
    c.input_dim = 13;
    return c;
  }

  friend bool operator==(const EmotionEmbedderConfig&, const EmotionEmbedderConfig&) = default;

  void validate() const {
    if (classes != kEmotionClasses) throw ConfigError("emotion embedder: class count must be 7");
    if (embedding != kEmbeddingDim) throw ConfigError("emotion embedder: embedding width must be 250");
    if (input_dim == 0 || hidden == 0 || memory == 0 || max_steps == 0) {
      throw ConfigError("emotion embedder: sizes must be positive");
    }
  }
};

// Frames consumed by the recurrence: all of them when T <= max_steps,
// otherwise max_steps frames at indices floor(i * T / max_steps).
inline std::vector<std::size_t> emotion_step_indices(std::size_t frames, std::size_t max_steps) {
  const std::size_t n = std::min(frames, max_steps);
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i * frames / n;
  return idx;
}

struct EmotionForward {
  ad::Var embedding;   // unit-normalized projection
  ad::Var projection;  // pre-normalization projection
  ad::Var probs;       // softmax over the 7 emotion classes
};

struct EmotionOutput {
  Tensor embedding;
  Tensor distribution;
};

// Single-view Memory Fusion Network: an LSTM, an attention network over the
// cell memories of steps (t-1, t), and a sigmoid-gated multi-step memory.
// The embedding is the unit-normalized projection of [final memory, final hidden];
// the emotion head reads the same projection before normalization.
class EmotionEmbedder {
 public:
  EmotionEmbedder(std::string name, EmotionEmbedderConfig config, std::uint64_t seed)
      : name_(std::move(name)), config_(config) {
    config_.validate();
    auto rng = derived_rng(seed, stable_hash(name_));
    const std::size_t H = config_.hidden, M = config_.memory;
    lstm_ = LstmParams::create(params_, name_ + ".lstm", config_.input_dim, H, rng);
    attention_ = LinearParams::create(params_, name_ + ".attention", 2 * H, 2 * H, rng);
    candidate_ = LinearParams::create(params_, name_ + ".memory_candidate", 2 * H, M, rng);
    retain_gate_ = LinearParams::create(params_, name_ + ".retain_gate", 2 * H, M, rng);
    update_gate_ = LinearParams::create(params_, name_ + ".update_gate", 2 * H, M, rng);
    projection_ = LinearParams::create(params_, name_ + ".projection", M + H, config_.embedding, rng);
    if (config_.shared_head) {
      auto head_rng = derived_rng(seed, stable_hash("emotion_head"));
      head_ = LinearParams::create(params_, name_ + ".emotion_head", config_.embedding, config_.classes, head_rng);
    } else {
      head_ = LinearParams::create(params_, name_ + ".emotion_head", config_.embedding, config_.classes, rng);
    }
    set_trainable(true);
  }

  // A shared head stays frozen regardless.
  void set_trainable(bool trainable) {
    params_.set_trainable(trainable);
    if (config_.shared_head) {
      head_.weights->trainable = false;
      head_.bias->trainable = false;
    }
  }

  EmotionEmbedder(const EmotionEmbedder&) = delete;
  EmotionEmbedder& operator=(const EmotionEmbedder&) = delete;
  EmotionEmbedder(EmotionEmbedder&&) = default;

  const std::string& name() const noexcept { return name_; }
  const EmotionEmbedderConfig& config() const noexcept { return config_; }
  ParameterStore& params() noexcept { return params_; }
  const ParameterStore& params() const noexcept { return params_; }

  EmotionForward forward(ad::Graph& g, const Tensor& sequence) const {
    if (sequence.rank() != 2 || sequence.dim(1) != config_.input_dim) {
      throw ShapeError(name_ + ": expected [T," + std::to_string(config_.input_dim) + "] sequence, got " +
                       shape_string(sequence.shape()));
    }
    if (sequence.dim(0) == 0) throw ShapeError(name_ + ": empty sequence");
    const std::size_t H = config_.hidden, M = config_.memory, D = config_.input_dim;
    ad::Var h = g.constant(Tensor(Shape{H}));
    ad::Var c = g.constant(Tensor(Shape{H}));
    ad::Var memory = g.constant(Tensor(Shape{M}));
    for (std::size_t t : emotion_step_indices(sequence.dim(0), config_.max_steps)) {
      std::vector<double> frame(sequence.data() + t * D, sequence.data() + (t + 1) * D);
      ad::Var x = g.constant(Tensor::vector(std::move(frame)));
      const ad::Var c_prev = c;
      const LstmState next = lstm_cell_step(g, x, h, c, lstm_);
      h = next.hidden;
      c = next.cell;
      ad::Var both = ad::concat(c_prev, c);
      ad::Var attended = ad::mul(both, ad::softmax(attention_(g, both)));
      ad::Var proposal = ad::tanh(candidate_(g, attended));
      ad::Var retain = ad::sigmoid(retain_gate_(g, attended));
      ad::Var update = ad::sigmoid(update_gate_(g, attended));
      memory = ad::add(ad::mul(retain, memory), ad::mul(update, proposal));
    }
    ad::Var proj = projection_(g, ad::concat(memory, h));
    return EmotionForward{ad::unit_normalize(proj), proj, ad::softmax(head_(g, proj))};
  }

  EmotionOutput embed(const Tensor& sequence) const {
    ad::Graph g(ad::GradMode::Disabled);
    const EmotionForward f = forward(g, sequence);
    return EmotionOutput{f.embedding.value(), f.probs.value()};
  }

 private:
  std::string name_;
  EmotionEmbedderConfig config_;
  ParameterStore params_;
  LstmParams lstm_;
  LinearParams attention_, candidate_, retain_gate_, update_gate_, projection_, head_;
};

// ---- emotion pretraining ----------------------------------------------------

struct LabeledSequence {
  Tensor frames;  // standardized [T, D]
  std::size_t label = 0;
};

struct EmotionPretrainConfig {
  std::size_t epochs = 6;
  std::size_t batch_size = 16;
  double learning_rate = 0.005;

  friend bool operator==(const EmotionPretrainConfig&, const EmotionPretrainConfig&) = default;
};

struct PretrainReport {
  std::vector<double> epoch_loss;
  double train_accuracy = 0.0;
};

inline double emotion_accuracy(const EmotionEmbedder& net, const std::vector<LabeledSequence>& corpus) {
  if (corpus.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& item : corpus) {
    if (argmax(net.embed(item.frames).distribution.values()) == item.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(corpus.size());
}

// Cross-entropy training of the emotion head and everything beneath it.
inline PretrainReport emotion_pretrain(EmotionEmbedder& net, const std::vector<LabeledSequence>& corpus,
                                       const EmotionPretrainConfig& config, std::uint64_t seed) {
  std::vector<bool> seen(net.config().classes, false);
  for (const auto& item : corpus) {
    if (item.label >= net.config().classes) throw InputError(InputErrorCode::Malformed, "emotion label out of range");
    seen[item.label] = true;
  }
  if (std::count(seen.begin(), seen.end(), true) < 2) {
    throw InputError(InputErrorCode::Malformed, net.name() + ": emotion corpus needs at least 2 classes");
  }
  if (config.batch_size == 0) throw ConfigError("emotion pretraining: batch_size must be >= 1");

  PretrainReport report;
  Adam adam(AdamConfig{config.learning_rate});
  auto rng = derived_rng(seed, 0x454d4f54u);
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      net.params().zero_grad();
      ad::Graph g;
      std::vector<ad::Var> losses;
      for (std::size_t i = start; i < end; ++i) {
        const auto& item = corpus[order[i]];
        losses.push_back(ad::cross_entropy(net.forward(g, item.frames).probs, item.label));
      }
      ad::Var loss = ad::mean(losses);
      g.backward(loss);
      adam.step(net.params());
      total += loss.value().item() * static_cast<double>(end - start);
    }
    report.epoch_loss.push_back(total / static_cast<double>(corpus.size()));
  }
  report.train_accuracy = emotion_accuracy(net, corpus);
  return report;
}

}  // namespace avdf
