#pragma once

#include <span>
#include <vector>

#include "phenovlp/nn/autograd.hpp"

namespace phenovlp::knowledge {

struct LossAndGrad {
    double loss = 0.0;
    nn::Matrix grad;  // d loss / d input, same shape as the input
};

// Pairing (a_1, a_1+, a_2, a_2+, ...): 0<->1, 2<->3, ...
std::vector<int> interleaved_pairing(int phenotypes);

// Throws ParameterError unless `pairing` is a fixed-point-free involution on [0, n).
void check_pairing(std::span<const int> pairing, std::size_t n);

// In-batch InfoNCE over 2B unit rows, self excluded from each denominator:
//   -1/(2B) sum_i log( exp(z_i.z_p(i)/tau) / sum_{k != i} exp(z_i.z_k/tau) )
// No validation; callers go through knowledge_infonce_loss.
LossAndGrad infonce_with_grad(const nn::Matrix& z, std::span<const int> pairing, double tau);

// Validated entry points. Rows must be unit norm within 1e-5 (PreconditionError);
// tau must be positive (ParameterError).
double knowledge_infonce_loss(const nn::Matrix& z, std::span<const int> pairing, double tau);
nn::Var knowledge_infonce_loss(const nn::Var& z, std::span<const int> pairing, double tau);

void check_unit_rows(const nn::Matrix& m, double tol = 1e-5);

}  // namespace phenovlp::knowledge
