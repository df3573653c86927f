#include "phenovlp/knowledge/loss.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "phenovlp/common/errors.hpp"

namespace phenovlp::knowledge {

std::vector<int> interleaved_pairing(int phenotypes) {
    std::vector<int> p(static_cast<std::size_t>(2 * phenotypes));
    for (int i = 0; i < phenotypes; ++i) {
        p[static_cast<std::size_t>(2 * i)] = 2 * i + 1;
        p[static_cast<std::size_t>(2 * i + 1)] = 2 * i;
    }
    return p;
}

void check_pairing(std::span<const int> pairing, std::size_t n) {
    if (pairing.size() != n) throw ParameterError("pairing size differs from batch size");
    for (std::size_t i = 0; i < n; ++i) {
        const int j = pairing[i];
        if (j < 0 || static_cast<std::size_t>(j) >= n) throw ParameterError("pairing index out of range");
        if (static_cast<std::size_t>(j) == i) throw ParameterError("pairing has a fixed point at " + std::to_string(i));
        if (pairing[static_cast<std::size_t>(j)] != static_cast<int>(i)) throw ParameterError("pairing is not an involution");
    }
}

void check_unit_rows(const nn::Matrix& m, double tol) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const double norm = m.row(i).norm();
        if (std::abs(norm - 1.0) > tol) {
            throw PreconditionError("row " + std::to_string(i) + " has norm " + std::to_string(norm) +
                                    ", expected unit norm");
        }
    }
}

LossAndGrad infonce_with_grad(const nn::Matrix& z, std::span<const int> pairing, double tau) {
    const Eigen::Index n = z.rows();
    const nn::Matrix logits = (z * z.transpose()) / tau;
    nn::Matrix g = nn::Matrix::Zero(n, n);  // d loss / d sim
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        for (Eigen::Index k = 0; k < n; ++k)
            if (k != i) mx = std::max(mx, logits(i, k));
        double denom = 0.0;
        for (Eigen::Index k = 0; k < n; ++k)
            if (k != i) denom += std::exp(logits(i, k) - mx);
        const double lse = mx + std::log(denom);
        const Eigen::Index pos = pairing[static_cast<std::size_t>(i)];
        total += lse - logits(i, pos);
        for (Eigen::Index k = 0; k < n; ++k) {
            if (k == i) continue;
            g(i, k) = std::exp(logits(i, k) - lse);
        }
        g(i, pos) -= 1.0;
    }
    const double inv = 1.0 / static_cast<double>(n);
    g *= inv / tau;
    LossAndGrad out;
    out.loss = total * inv;
    out.grad = (g + g.transpose()) * z;
    return out;
}

double knowledge_infonce_loss(const nn::Matrix& z, std::span<const int> pairing, double tau) {
    if (!(tau > 0.0)) throw ParameterError("temperature must be positive");
    check_pairing(pairing, static_cast<std::size_t>(z.rows()));
    check_unit_rows(z);
    return infonce_with_grad(z, pairing, tau).loss;
}

nn::Var knowledge_infonce_loss(const nn::Var& z, std::span<const int> pairing, double tau) {
    if (!(tau > 0.0)) throw ParameterError("temperature must be positive");
    check_pairing(pairing, static_cast<std::size_t>(z.rows()));
    check_unit_rows(z.value());
    auto lg = infonce_with_grad(z.value(), pairing, tau);
    nn::Matrix value(1, 1);
    value(0, 0) = lg.loss;
    return nn::make_op(std::move(value), {z}, [grad = std::move(lg.grad)](nn::Node& n) {
        n.inputs[0]->accumulate(grad * n.grad(0, 0));
    });
}

}  // namespace phenovlp::knowledge
