#pragma once

#include <string>
#include <utility>
#include <vector>

#include "phenovlp/common/rng.hpp"
#include "phenovlp/nn/autograd.hpp"

namespace phenovlp::nn {

// Named trainable tensors, in a stable order.
using NamedParams = std::vector<std::pair<std::string, Var>>;

Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng);
Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng);

// y = x W + b, W is in x out.
struct Linear {
    Var weight;
    Var bias;

    Linear() = default;
    Linear(int in, int out, Rng& rng, bool with_bias = true);
    Var operator()(const Var& x) const;
    void collect(NamedParams& out, const std::string& prefix) const;
};

struct LayerNorm {
    Var gamma;
    Var beta;

    LayerNorm() = default;
    explicit LayerNorm(int dim);
    Var operator()(const Var& x) const { return layer_norm(x, gamma, beta); }
    void collect(NamedParams& out, const std::string& prefix) const;
};

struct MultiHeadSelfAttention {
    Linear qkv;  // dim -> 3*dim
    Linear out;
    int heads = 1;
    int dim = 0;

    MultiHeadSelfAttention() = default;
    MultiHeadSelfAttention(int dim, int heads, Rng& rng);
    // x: L x dim, one sequence.
    Var operator()(const Var& x) const;
    void collect(NamedParams& out, const std::string& prefix) const;
};

// Pre-norm transformer block: x + attn(ln(x)), then x + mlp(ln(x)).
struct TransformerBlock {
    LayerNorm ln1;
    MultiHeadSelfAttention attn;
    LayerNorm ln2;
    Linear fc1;
    Linear fc2;

    TransformerBlock() = default;
    TransformerBlock(int dim, int heads, int hidden, Rng& rng);
    Var operator()(const Var& x) const;
    void collect(NamedParams& out, const std::string& prefix) const;
};

struct Conv2d {
    Var weight;
    Var bias;
    ConvGeometry geom;

    Conv2d() = default;
    Conv2d(const ConvGeometry& geom, Rng& rng);
    Var operator()(const Var& x) const { return conv2d(x, weight, bias, geom); }
    void collect(NamedParams& out, const std::string& prefix) const;
};

// Deep copy of parameter values into fresh leaves (new graph identity).
NamedParams clone_params(const NamedParams& params);

// Copies values from `src` into same-named entries of `dst`; shapes must match.
// Returns the number of tensors copied.
std::size_t copy_matching(const NamedParams& src, NamedParams& dst);

double checksum(const NamedParams& params);

}  // namespace phenovlp::nn
