#pragma once

// Finite-difference checks of whole embedders on random inputs.

#include <cstdint>
#include <random>
#include <vector>

#include "avdf/networks.hpp"
#include "oracles/grad_check.hpp"
#include "oracles/random.hpp"

namespace oracle {

inline avdf::Tensor normal_tensor(avdf::Shape shape, std::mt19937_64& rng) {
  avdf::Tensor t(std::move(shape));
  std::normal_distribution<double> n(0.0, 1.0);
  for (double& v : t.values()) v = n(rng);
  return t;
}

inline std::vector<avdf::Parameter*> all_params(avdf::ParameterStore& store) {
  std::vector<avdf::Parameter*> out;
  for (auto& p : store) out.push_back(p.get());
  return out;
}

// Loss: projection of the embedding onto a fixed random direction.
inline GradCheckResult check_modality_network(const avdf::ModalityEmbedderConfig& cfg, std::uint64_t seed,
                                              std::size_t per_param) {
  avdf::ModalityEmbedder net("net", cfg, seed);
  std::mt19937_64 rng(seed * 7919 + 1);
  const avdf::Tensor window = normal_tensor(avdf::Shape{cfg.rows, cfg.cols}, rng);
  const avdf::Tensor dir = normal_tensor(avdf::Shape{avdf::kEmbeddingDim}, rng);
  return grad_check(all_params(net.params()), [&](avdf::ad::Graph& g) {
    return avdf::ad::dot(net.forward(g, window), g.constant(dir));
  }, per_param, static_cast<unsigned>(seed));
}

// Loss: embedding projection plus cross-entropy of the emotion head, with every
// parameter (including a shared head) opened for the check.
inline GradCheckResult check_emotion_network(const avdf::EmotionEmbedderConfig& cfg, std::size_t frames,
                                             std::uint64_t seed, std::size_t per_param) {
  avdf::EmotionEmbedder net("net", cfg, seed);
  for (auto& p : net.params()) p->trainable = true;
  std::mt19937_64 rng(seed * 7919 + 2);
  const avdf::Tensor seq = normal_tensor(avdf::Shape{frames, cfg.input_dim}, rng);
  const avdf::Tensor dir = normal_tensor(avdf::Shape{avdf::kEmbeddingDim}, rng);
  const std::size_t label = seed % cfg.classes;
  return grad_check(all_params(net.params()), [&](avdf::ad::Graph& g) {
    const avdf::EmotionForward f = net.forward(g, seq);
    return avdf::ad::add(avdf::ad::dot(f.embedding, g.constant(dir)), avdf::ad::cross_entropy(f.probs, label));
  }, per_param, static_cast<unsigned>(seed));
}

}  // namespace oracle
