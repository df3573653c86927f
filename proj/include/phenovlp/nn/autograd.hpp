#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace phenovlp::nn {

using Matrix = Eigen::MatrixXd;
using RowVector = Eigen::RowVectorXd;

struct Node {
    Matrix value;
    Matrix grad;  // empty until something flows into it
    bool requires_grad = false;
    std::vector<std::shared_ptr<Node>> inputs;
    std::function<void(Node&)> backward_fn;

    void accumulate(const Matrix& g);
};

// Handle onto a node of the computation graph. Copies share the node.
class Var {
public:
    Var() = default;
    explicit Var(Matrix value, bool requires_grad = false);

    const Matrix& value() const { return node_->value; }
    Matrix& mutable_value() { return node_->value; }
    const Matrix& grad() const { return node_->grad; }
    bool has_grad() const { return node_->grad.size() != 0; }
    void zero_grad() { node_->grad.resize(0, 0); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    Eigen::Index rows() const { return node_->value.rows(); }
    Eigen::Index cols() const { return node_->value.cols(); }
    double scalar() const { return node_->value(0, 0); }

    const std::shared_ptr<Node>& node() const { return node_; }
    bool defined() const { return static_cast<bool>(node_); }

    // Reverse pass from a 1x1 root.
    void backward();

private:
    std::shared_ptr<Node> node_;
};

Var constant(Matrix value);
Var parameter(Matrix value);

// Builds a result node. `backward` receives the result node; its grad is set
// and it should accumulate into node.inputs[i]->grad for inputs that require it.
Var make_op(Matrix value, std::vector<Var> inputs, std::function<void(Node&)> backward);

// --- elementwise / linear algebra --------------------------------------------
Var matmul(const Var& a, const Var& b);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_row(const Var& a, const Var& row);  // a (n x m) + row (1 x m) broadcast
Var transpose(const Var& a);
Var relu(const Var& a);
Var gelu(const Var& a);

// Row-wise layer normalisation with per-column gain/bias (1 x m each).
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var softmax_rows(const Var& x);
Var l2_normalize_rows(const Var& x, double eps = 1e-12);

// --- shape -----------------------------------------------------------------
Var col_slice(const Var& a, Eigen::Index start, Eigen::Index count);
Var hcat(std::span<const Var> parts);
Var vstack(std::span<const Var> rows);
Var mean_rows(const Var& a);  // 1 x m
Var gather_rows(const Var& table, std::span<const int> ids);

// --- convolution -----------------------------------------------------------
struct ConvGeometry {
    int in_channels = 0;
    int in_height = 0;
    int in_width = 0;
    int out_channels = 0;
    int kernel = 3;
    int stride = 1;
    int padding = 1;

    int out_height() const { return (in_height + 2 * padding - kernel) / stride + 1; }
    int out_width() const { return (in_width + 2 * padding - kernel) / stride + 1; }
};

// x: N x (C*H*W), channel-major rows. weight: out_channels x (C*k*k). bias: 1 x out_channels.
Var conv2d(const Var& x, const Var& weight, const Var& bias, const ConvGeometry& geom);

// N x (C*H*W) -> N x C
Var global_avg_pool(const Var& x, int channels, int height, int width);

}  // namespace phenovlp::nn

namespace phenovlp::nn {

// While alive on this thread, new ops record no graph (inference mode).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

}  // namespace phenovlp::nn
