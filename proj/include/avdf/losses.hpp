#pragma once

// Similarity scores and triplet losses for a (real, fake) pair.
//
// With the face more manipulated, speech is the anchor:
//   L1 = d(m^s_real, m^f_real) - d(m^s_real, m^f_fake)
//   L2 = d(e^s_real, e^s_fake) - d(e^f_real, e^f_fake)
// With speech more manipulated the face and speech roles swap. Each score
// feeds a hinge rho = max(L + margin, 0) and the pair loss is rho1 + rho2.

#include "avdf/autodiff.hpp"
#include "avdf/error.hpp"
#include "avdf/networks.hpp"
#include "avdf/tensor.hpp"

namespace avdf {

// Four embeddings of one modality family (either m or e) for a pair.
template <class T>
struct EmbeddingQuad {
  T face_real;
  T face_fake;
  T speech_real;
  T speech_fake;
};

struct Margins {
  double m1 = 0.2;
  double m2 = 0.2;

  void validate() const {
    if (!(m1 >= 0.0) || !(m2 >= 0.0)) throw ConfigError("margins must be >= 0");
  }
};

struct LossSwitches {
  bool rho1 = true;
  bool rho2 = true;

  void validate() const {
    if (!rho1 && !rho2) throw ConfigError("at least one of rho1 and rho2 must be enabled");
  }
};

struct LossBreakdown {
  double L1 = 0.0;
  double L2 = 0.0;
  double rho1 = 0.0;
  double rho2 = 0.0;
  double total = 0.0;
  double m1 = 0.0;
  double m2 = 0.0;
};

inline ad::Var similarity_score_1(const EmbeddingQuad<ad::Var>& m, Modality manipulated) {
  if (manipulated == Modality::Face) {
    return ad::sub(ad::euclidean_distance(m.speech_real, m.face_real),
                   ad::euclidean_distance(m.speech_real, m.face_fake));
  }
  return ad::sub(ad::euclidean_distance(m.face_real, m.speech_real),
                 ad::euclidean_distance(m.face_real, m.speech_fake));
}

inline ad::Var similarity_score_2(const EmbeddingQuad<ad::Var>& e, Modality manipulated) {
  if (manipulated == Modality::Face) {
    return ad::sub(ad::euclidean_distance(e.speech_real, e.speech_fake),
                   ad::euclidean_distance(e.face_real, e.face_fake));
  }
  return ad::sub(ad::euclidean_distance(e.face_real, e.face_fake),
                 ad::euclidean_distance(e.speech_real, e.speech_fake));
}

inline ad::Var triplet_loss(ad::Var score, double margin) {
  if (!(margin >= 0.0)) throw ConfigError("triplet margin must be >= 0");
  return ad::hinge(score, margin);
}

struct PairLoss {
  ad::Var L1, L2, rho1, rho2, total;
};

// Disabled terms are still evaluated for logging but contribute nothing to total.
inline PairLoss pair_loss(const EmbeddingQuad<ad::Var>& m, const EmbeddingQuad<ad::Var>& e, Modality manipulated,
                          const Margins& margins, const LossSwitches& switches) {
  margins.validate();
  switches.validate();
  PairLoss out;
  out.L1 = similarity_score_1(m, manipulated);
  out.L2 = similarity_score_2(e, manipulated);
  out.rho1 = triplet_loss(out.L1, margins.m1);
  out.rho2 = triplet_loss(out.L2, margins.m2);
  if (switches.rho1 && switches.rho2) out.total = ad::add(out.rho1, out.rho2);
  else out.total = switches.rho1 ? out.rho1 : out.rho2;
  return out;
}

inline LossBreakdown breakdown(const PairLoss& loss, const Margins& margins) {
  return LossBreakdown{loss.L1.value().item(),   loss.L2.value().item(),    loss.rho1.value().item(),
                       loss.rho2.value().item(), loss.total.value().item(), margins.m1,
                       margins.m2};
}

// ---- plain-value forms --------------------------------------------------------

inline double triplet_loss(double score, double margin) {
  if (!(margin >= 0.0)) throw ConfigError("triplet margin must be >= 0");
  return std::max(score + margin, 0.0);
}

inline double total_loss(double rho1, double rho2, const LossSwitches& switches) {
  switches.validate();
  return (switches.rho1 ? rho1 : 0.0) + (switches.rho2 ? rho2 : 0.0);
}

namespace detail {

inline EmbeddingQuad<ad::Var> as_constants(ad::Graph& g, const EmbeddingQuad<Tensor>& q) {
  return {g.constant(q.face_real), g.constant(q.face_fake), g.constant(q.speech_real), g.constant(q.speech_fake)};
}

}  // namespace detail

inline double similarity_score_1(const EmbeddingQuad<Tensor>& m, Modality manipulated) {
  ad::Graph g(ad::GradMode::Disabled);
  return similarity_score_1(detail::as_constants(g, m), manipulated).value().item();
}

inline double similarity_score_2(const EmbeddingQuad<Tensor>& e, Modality manipulated) {
  ad::Graph g(ad::GradMode::Disabled);
  return similarity_score_2(detail::as_constants(g, e), manipulated).value().item();
}

inline LossBreakdown loss_breakdown(const EmbeddingQuad<Tensor>& m, const EmbeddingQuad<Tensor>& e,
                                    Modality manipulated, const Margins& margins, const LossSwitches& switches) {
  ad::Graph g(ad::GradMode::Disabled);
  return breakdown(pair_loss(detail::as_constants(g, m), detail::as_constants(g, e), manipulated, margins, switches),
                   margins);
}

}  // namespace avdf
