#pragma once

#include "phenovlp/nn/autograd.hpp"

namespace phenovlp::vlp {

// Symmetric cross-entropy over the B x B logits scale * A B^T: each row of A
// must pick its own row of B and vice versa.
struct BidirectionalTerms {
    double loss = 0.0;
    nn::Matrix grad_a;
    nn::Matrix grad_b;
    double grad_scale = 0.0;  // d loss / d scale
};

BidirectionalTerms bidirectional_contrastive(const nn::Matrix& a, const nn::Matrix& b, double scale);

// Image-caption contrastive loss with temperature tau (both directions,
// full-batch denominators). Rows must be unit norm; shapes must agree.
double multimodal_contrastive_loss(const nn::Matrix& v, const nn::Matrix& t, double tau);
nn::Var multimodal_contrastive_loss(const nn::Var& v, const nn::Var& t, double tau);
// Learnable temperature: logits are exp(log_scale) * V T^T; log_scale is 1x1.
nn::Var multimodal_contrastive_loss(const nn::Var& v, const nn::Var& t, const nn::Var& log_scale);

// Student caption embeddings against frozen teacher embeddings of the same
// captions. The teacher matrix is a constant: no gradient reaches it.
double knowledge_distillation_loss(const nn::Matrix& student, const nn::Matrix& teacher, double tau);
nn::Var knowledge_distillation_loss(const nn::Var& student, const nn::Matrix& teacher, double tau);

// L_M + alpha * L_KD. At alpha == 0 the distillation term is not evaluated.
double total_vlp_loss(const nn::Matrix& v, const nn::Matrix& t, const nn::Matrix& k, double tau_m, double tau_kd,
                      double alpha);
nn::Var total_vlp_loss(const nn::Var& v, const nn::Var& t, const nn::Matrix& k, double tau_m, double tau_kd,
                       double alpha);

// Linear warmup to base_lr, then cosine annealing to 0 at total_steps.
double lr_schedule(long step, long warmup_steps, long total_steps, double base_lr);

}  // namespace phenovlp::vlp
