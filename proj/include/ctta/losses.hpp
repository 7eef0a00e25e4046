#pragma once

#include "ctta/pseudo_label.hpp"

namespace ctta {

struct LossWeights {
  double lambda_entropy = 1.0;
  double lambda_src = 2.0;
  double lambda_mt = 1.0;
  double temperature = 0.1;
};

/// Inputs to the contrastive term: student embeddings of the doubled
/// batch (originals then augmentations, each augmentation inheriting
/// its original's label) and the current class means, which are treated
/// as constants. means_valid marks classes whose estimates exist; empty
/// means all valid.
struct LabeledEmbeddings {
  Matrix reduced;                  // M x FD_r
  std::vector<PseudoLabel> labels; // M
  Matrix means;                    // C x FD_r
  std::vector<bool> means_valid;   // C, optional
};

struct LossValueGrad {
  double value = 0.0;
  Matrix grad;  // w.r.t. the primary input
};

/// Supervised contrastive loss over cosine similarities: same-Known-label
/// pairs attract against all other samples, and each Known sample is
/// anchored to its class mean against the other means. Self-pairs are
/// excluded on both sides. Returns 0 with zero gradient when no sample
/// carries a Known label.
LossValueGrad contrastive_loss(const LabeledEmbeddings& emb, double temperature);

double normalized_entropy(const Vector& probs);
Vector normalized_entropy_grad(const Vector& probs);

/// Mean normalized entropy over Known-labeled rows minus mean over
/// Unknown rows; Ignored rows contribute nothing but stay in the divisor.
LossValueGrad entropy_loss(const Matrix& student_probs, const std::vector<PseudoLabel>& labels);

/// Mean per-row Euclidean distance between student features and a frozen
/// reference (source or teacher). Gradient is w.r.t. student features.
LossValueGrad feature_consistency(const Matrix& student_feats, const Matrix& ref_feats);

inline LossValueGrad consistency_src(const Matrix& student_feats, const Matrix& source_feats) {
  return feature_consistency(student_feats, source_feats);
}
inline LossValueGrad consistency_mt(const Matrix& student_feats, const Matrix& teacher_feats) {
  return feature_consistency(student_feats, teacher_feats);
}

/// contrastive + l1*entropy + l2*src + l3*mt. Throws naming the first
/// non-finite part.
double total_loss(double contrastive, double entropy, double consist_src, double consist_mt,
                  const LossWeights& w);

}  // namespace ctta
