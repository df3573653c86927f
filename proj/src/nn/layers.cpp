#include "phenovlp/nn/layers.hpp"

#include <cmath>
#include <map>

#include "phenovlp/common/errors.hpp"

namespace phenovlp::nn {

Matrix normal_matrix(Eigen::Index rows, Eigen::Index cols, double stddev, Rng& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = stddev * rng.normal();
    return m;
}

Matrix uniform_matrix(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform(-bound, bound);
    return m;
}

Linear::Linear(int in, int out, Rng& rng, bool with_bias) {
    const double bound = std::sqrt(6.0 / (in + out));
    weight = parameter(uniform_matrix(in, out, bound, rng));
    if (with_bias) bias = parameter(Matrix::Zero(1, out));
}

Var Linear::operator()(const Var& x) const {
    Var y = matmul(x, weight);
    return bias.defined() ? add_row(y, bias) : y;
}

void Linear::collect(NamedParams& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".weight", weight);
    if (bias.defined()) out.emplace_back(prefix + ".bias", bias);
}

LayerNorm::LayerNorm(int dim)
    : gamma(parameter(Matrix::Ones(1, dim))), beta(parameter(Matrix::Zero(1, dim))) {}

void LayerNorm::collect(NamedParams& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".gamma", gamma);
    out.emplace_back(prefix + ".beta", beta);
}

MultiHeadSelfAttention::MultiHeadSelfAttention(int dim_, int heads_, Rng& rng)
    : qkv(dim_, 3 * dim_, rng), out(dim_, dim_, rng), heads(heads_), dim(dim_) {
    if (heads <= 0 || dim % heads != 0) throw ParameterError("attention: dim must divide into heads");
}

Var MultiHeadSelfAttention::operator()(const Var& x) const {
    const int head_dim = dim / heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(head_dim));
    Var proj = qkv(x);
    std::vector<Var> outputs;
    outputs.reserve(static_cast<std::size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        Var q = col_slice(proj, h * head_dim, head_dim);
        Var k = col_slice(proj, dim + h * head_dim, head_dim);
        Var v = col_slice(proj, 2 * dim + h * head_dim, head_dim);
        Var att = softmax_rows(scale(matmul(q, transpose(k)), inv_sqrt));
        outputs.push_back(matmul(att, v));
    }
    Var merged = heads == 1 ? outputs[0] : hcat(outputs);
    return out(merged);
}

void MultiHeadSelfAttention::collect(NamedParams& o, const std::string& prefix) const {
    qkv.collect(o, prefix + ".qkv");
    out.collect(o, prefix + ".out");
}

TransformerBlock::TransformerBlock(int dim, int heads, int hidden, Rng& rng)
    : ln1(dim), attn(dim, heads, rng), ln2(dim), fc1(dim, hidden, rng), fc2(hidden, dim, rng) {}

Var TransformerBlock::operator()(const Var& x) const {
    Var h = add(x, attn(ln1(x)));
    return add(h, fc2(gelu(fc1(ln2(h)))));
}

void TransformerBlock::collect(NamedParams& out, const std::string& prefix) const {
    ln1.collect(out, prefix + ".ln1");
    attn.collect(out, prefix + ".attn");
    ln2.collect(out, prefix + ".ln2");
    fc1.collect(out, prefix + ".fc1");
    fc2.collect(out, prefix + ".fc2");
}

Conv2d::Conv2d(const ConvGeometry& g, Rng& rng) : geom(g) {
    const int fan_in = g.in_channels * g.kernel * g.kernel;
    // He-uniform for ReLU stacks.
    const double bound = std::sqrt(6.0 / fan_in);
    weight = parameter(uniform_matrix(g.out_channels, fan_in, bound, rng));
    bias = parameter(Matrix::Zero(1, g.out_channels));
}

void Conv2d::collect(NamedParams& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
}

NamedParams clone_params(const NamedParams& params) {
    NamedParams out;
    out.reserve(params.size());
    for (const auto& [name, v] : params) out.emplace_back(name, parameter(v.value()));
    return out;
}

std::size_t copy_matching(const NamedParams& src, NamedParams& dst) {
    std::map<std::string, const Var*> by_name;
    for (const auto& [name, v] : src) by_name[name] = &v;
    std::size_t copied = 0;
    for (auto& [name, v] : dst) {
        auto it = by_name.find(name);
        if (it == by_name.end()) continue;
        const Matrix& from = it->second->value();
        if (from.rows() != v.rows() || from.cols() != v.cols()) {
            throw ParameterError("shape mismatch copying " + name);
        }
        v.mutable_value() = from;
        ++copied;
    }
    return copied;
}

double checksum(const NamedParams& params) {
    double acc = 0.0;
    double w = 1.0;
    for (const auto& [name, v] : params) {
        acc += w * v.value().sum() + 0.5 * w * v.value().squaredNorm();
        w += 1.0;
    }
    return acc;
}

}  // namespace phenovlp::nn
