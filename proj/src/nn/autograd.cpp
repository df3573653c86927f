#include "phenovlp/nn/autograd.hpp"

#include <cmath>
#include <unordered_set>

#include "phenovlp/common/errors.hpp"

namespace phenovlp::nn {

void Node::accumulate(const Matrix& g) {
    if (grad.size() == 0) {
        grad = g;
    } else {
        grad += g;
    }
}

Var::Var(Matrix value, bool requires_grad) : node_(std::make_shared<Node>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
}

void Var::backward() {
    if (!node_ || node_->value.size() != 1) {
        throw PreconditionError("backward() needs a scalar root");
    }
    if (!node_->requires_grad) return;

    // Iterative post-order DFS over nodes that take part in differentiation.
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
    visited.insert(node_.get());
    while (!stack.empty()) {
        auto& [n, next] = stack.back();
        if (next < n->inputs.size()) {
            Node* child = n->inputs[next++].get();
            if (child->requires_grad && visited.insert(child).second) stack.push_back({child, 0});
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }

    node_->accumulate(Matrix::Ones(1, 1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && n->grad.size() != 0) n->backward_fn(*n);
    }
    // Intermediate grads are released once consumed; leaves keep theirs.
    for (Node* n : order) {
        if (!n->inputs.empty()) n->grad.resize(0, 0);
    }
}

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

Var constant(Matrix value) { return Var(std::move(value), false); }
Var parameter(Matrix value) { return Var(std::move(value), true); }

Var make_op(Matrix value, std::vector<Var> inputs, std::function<void(Node&)> backward) {
    Var out(std::move(value), false);
    bool needs = false;
    if (!g_grad_enabled) return out;
    for (const auto& in : inputs) needs = needs || in.requires_grad();
    if (needs) {
        auto& node = *out.node();
        node.requires_grad = true;
        node.inputs.reserve(inputs.size());
        for (auto& in : inputs) node.inputs.push_back(in.node());
        node.backward_fn = std::move(backward);
    }
    return out;
}

namespace {

void check_same_shape(const Var& a, const Var& b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ParameterError(std::string(op) + ": shape mismatch");
    }
}

bool wants(const Node& n, std::size_t i) { return n.inputs[i]->requires_grad; }

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluK = 0.044715;

}  // namespace

Var matmul(const Var& a, const Var& b) {
    if (a.cols() != b.rows()) throw ParameterError("matmul: inner dimensions differ");
    return make_op(a.value() * b.value(), {a, b}, [](Node& n) {
        const Matrix& av = n.inputs[0]->value;
        const Matrix& bv = n.inputs[1]->value;
        if (wants(n, 0)) n.inputs[0]->accumulate(n.grad * bv.transpose());
        if (wants(n, 1)) n.inputs[1]->accumulate(av.transpose() * n.grad);
    });
}

Var add(const Var& a, const Var& b) {
    check_same_shape(a, b, "add");
    return make_op(a.value() + b.value(), {a, b}, [](Node& n) {
        if (wants(n, 0)) n.inputs[0]->accumulate(n.grad);
        if (wants(n, 1)) n.inputs[1]->accumulate(n.grad);
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a, b, "sub");
    return make_op(a.value() - b.value(), {a, b}, [](Node& n) {
        if (wants(n, 0)) n.inputs[0]->accumulate(n.grad);
        if (wants(n, 1)) n.inputs[1]->accumulate(-n.grad);
    });
}

Var scale(const Var& a, double s) {
    return make_op(a.value() * s, {a}, [s](Node& n) { n.inputs[0]->accumulate(n.grad * s); });
}

Var add_row(const Var& a, const Var& row) {
    if (row.rows() != 1 || row.cols() != a.cols()) throw ParameterError("add_row: shape mismatch");
    Matrix v = a.value().rowwise() + row.value().row(0);
    return make_op(std::move(v), {a, row}, [](Node& n) {
        if (wants(n, 0)) n.inputs[0]->accumulate(n.grad);
        if (wants(n, 1)) n.inputs[1]->accumulate(n.grad.colwise().sum());
    });
}

Var transpose(const Var& a) {
    return make_op(a.value().transpose(), {a},
                   [](Node& n) { n.inputs[0]->accumulate(n.grad.transpose()); });
}

Var relu(const Var& a) {
    Matrix v = a.value().cwiseMax(0.0);
    return make_op(std::move(v), {a}, [](Node& n) {
        const Matrix& x = n.inputs[0]->value;
        n.inputs[0]->accumulate((x.array() > 0.0).cast<double>().matrix().cwiseProduct(n.grad));
    });
}

Var gelu(const Var& a) {
    // tanh approximation
    const Matrix& x = a.value();
    Matrix t = (kGeluC * (x.array() + kGeluK * x.array().cube())).tanh().matrix();
    Matrix v = (0.5 * x.array() * (1.0 + t.array())).matrix();
    return make_op(std::move(v), {a}, [t = std::move(t)](Node& n) {
        const auto x = n.inputs[0]->value.array();
        const auto sech2 = 1.0 - t.array().square();
        const auto d = 0.5 * (1.0 + t.array()) + 0.5 * x * sech2 * kGeluC * (1.0 + 3.0 * kGeluK * x.square());
        n.inputs[0]->accumulate((d * n.grad.array()).matrix());
    });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const Eigen::Index m = x.cols();
    if (gamma.rows() != 1 || gamma.cols() != m || beta.rows() != 1 || beta.cols() != m) {
        throw ParameterError("layer_norm: gain/bias shape mismatch");
    }
    const Matrix& xv = x.value();
    Eigen::VectorXd mean = xv.rowwise().mean();
    Matrix centered = xv.colwise() - mean;
    Eigen::VectorXd inv_std =
        ((centered.array().square().rowwise().sum() / static_cast<double>(m)) + eps).rsqrt();
    Matrix xhat = centered.array().colwise() * inv_std.array();
    Matrix out = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
    out.rowwise() += beta.value().row(0);
    return make_op(std::move(out), {x, gamma, beta},
                   [xhat = std::move(xhat), inv_std = std::move(inv_std), m](Node& n) {
                       const Matrix& g = n.grad;
                       if (wants(n, 1)) n.inputs[1]->accumulate(g.cwiseProduct(xhat).colwise().sum());
                       if (wants(n, 2)) n.inputs[2]->accumulate(g.colwise().sum());
                       if (wants(n, 0)) {
                           Matrix gx = (g.array().rowwise() * n.inputs[1]->value.row(0).array()).matrix();
                           Eigen::VectorXd mean_g = gx.rowwise().mean();
                           Eigen::VectorXd mean_gx = gx.cwiseProduct(xhat).rowwise().sum() / static_cast<double>(m);
                           Matrix dx = gx.colwise() - mean_g;
                           dx -= (xhat.array().colwise() * mean_gx.array()).matrix();
                           dx = (dx.array().colwise() * inv_std.array()).matrix();
                           n.inputs[0]->accumulate(dx);
                       }
                   });
}

Var softmax_rows(const Var& x) {
    Matrix shifted = x.value().colwise() - x.value().rowwise().maxCoeff();
    Matrix e = shifted.array().exp().matrix();
    Eigen::VectorXd sums = e.rowwise().sum();
    Matrix p = e.array().colwise() / sums.array();
    Matrix pv = p;
    return make_op(std::move(pv), {x}, [p = std::move(p)](Node& n) {
        Eigen::VectorXd dot = n.grad.cwiseProduct(p).rowwise().sum();
        Matrix dx = p.cwiseProduct(n.grad.colwise() - dot);
        n.inputs[0]->accumulate(dx);
    });
}

Var l2_normalize_rows(const Var& x, double eps) {
    Eigen::VectorXd norms = x.value().rowwise().norm().cwiseMax(eps);
    Matrix y = x.value().array().colwise() / norms.array();
    Matrix yv = y;
    return make_op(std::move(yv), {x}, [y = std::move(y), norms = std::move(norms)](Node& n) {
        Eigen::VectorXd dot = n.grad.cwiseProduct(y).rowwise().sum();
        Matrix dx = n.grad - (y.array().colwise() * dot.array()).matrix();
        dx = (dx.array().colwise() / norms.array()).matrix();
        n.inputs[0]->accumulate(dx);
    });
}

Var col_slice(const Var& a, Eigen::Index start, Eigen::Index count) {
    if (start < 0 || count < 0 || start + count > a.cols()) throw ParameterError("col_slice: out of range");
    Matrix v = a.value().middleCols(start, count);
    const Eigen::Index rows = a.rows(), cols = a.cols();
    return make_op(std::move(v), {a}, [start, count, rows, cols](Node& n) {
        Matrix g = Matrix::Zero(rows, cols);
        g.middleCols(start, count) = n.grad;
        n.inputs[0]->accumulate(g);
    });
}

Var hcat(std::span<const Var> parts) {
    if (parts.empty()) throw ParameterError("hcat: no inputs");
    const Eigen::Index rows = parts[0].rows();
    Eigen::Index cols = 0;
    for (const auto& p : parts) {
        if (p.rows() != rows) throw ParameterError("hcat: row mismatch");
        cols += p.cols();
    }
    Matrix v(rows, cols);
    std::vector<Eigen::Index> offsets;
    Eigen::Index off = 0;
    for (const auto& p : parts) {
        v.middleCols(off, p.cols()) = p.value();
        offsets.push_back(off);
        off += p.cols();
    }
    return make_op(std::move(v), std::vector<Var>(parts.begin(), parts.end()),
                   [offsets = std::move(offsets)](Node& n) {
                       for (std::size_t i = 0; i < n.inputs.size(); ++i) {
                           if (!wants(n, i)) continue;
                           n.inputs[i]->accumulate(n.grad.middleCols(offsets[i], n.inputs[i]->value.cols()));
                       }
                   });
}

Var vstack(std::span<const Var> rows_in) {
    if (rows_in.empty()) throw ParameterError("vstack: no inputs");
    const Eigen::Index cols = rows_in[0].cols();
    Eigen::Index rows = 0;
    for (const auto& p : rows_in) {
        if (p.cols() != cols) throw ParameterError("vstack: column mismatch");
        rows += p.rows();
    }
    Matrix v(rows, cols);
    std::vector<Eigen::Index> offsets;
    Eigen::Index off = 0;
    for (const auto& p : rows_in) {
        v.middleRows(off, p.rows()) = p.value();
        offsets.push_back(off);
        off += p.rows();
    }
    return make_op(std::move(v), std::vector<Var>(rows_in.begin(), rows_in.end()),
                   [offsets = std::move(offsets)](Node& n) {
                       for (std::size_t i = 0; i < n.inputs.size(); ++i) {
                           if (!wants(n, i)) continue;
                           n.inputs[i]->accumulate(n.grad.middleRows(offsets[i], n.inputs[i]->value.rows()));
                       }
                   });
}

Var mean_rows(const Var& a) {
    const Eigen::Index rows = a.rows();
    if (rows == 0) throw ParameterError("mean_rows: empty input");
    Matrix v = a.value().colwise().mean();
    return make_op(std::move(v), {a}, [rows](Node& n) {
        n.inputs[0]->accumulate(n.grad.replicate(rows, 1) / static_cast<double>(rows));
    });
}

Var gather_rows(const Var& table, std::span<const int> ids) {
    const Eigen::Index cols = table.cols();
    Matrix v(static_cast<Eigen::Index>(ids.size()), cols);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= table.rows()) throw ParameterError("gather_rows: id out of range");
        v.row(static_cast<Eigen::Index>(i)) = table.value().row(ids[i]);
    }
    std::vector<int> idx(ids.begin(), ids.end());
    return make_op(std::move(v), {table}, [idx = std::move(idx)](Node& n) {
        Node& t = *n.inputs[0];
        if (t.grad.size() == 0) t.grad = Matrix::Zero(t.value.rows(), t.value.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) t.grad.row(idx[i]) += n.grad.row(static_cast<Eigen::Index>(i));
    });
}

namespace {

// Column matrix (C*k*k) x (oh*ow) for one channel-major image row.
Matrix im2col(const double* img, const ConvGeometry& g) {
    const int oh = g.out_height(), ow = g.out_width(), k = g.kernel;
    Matrix cols = Matrix::Zero(g.in_channels * k * k, oh * ow);
    for (int c = 0; c < g.in_channels; ++c) {
        const double* plane = img + static_cast<std::ptrdiff_t>(c) * g.in_height * g.in_width;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const int r = (c * k + ky) * k + kx;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * g.stride - g.padding + ky;
                    if (iy < 0 || iy >= g.in_height) continue;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * g.stride - g.padding + kx;
                        if (ix < 0 || ix >= g.in_width) continue;
                        cols(r, oy * ow + ox) = plane[iy * g.in_width + ix];
                    }
                }
            }
        }
    }
    return cols;
}

void col2im_add(const Matrix& cols, double* img, const ConvGeometry& g) {
    const int oh = g.out_height(), ow = g.out_width(), k = g.kernel;
    for (int c = 0; c < g.in_channels; ++c) {
        double* plane = img + static_cast<std::ptrdiff_t>(c) * g.in_height * g.in_width;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const int r = (c * k + ky) * k + kx;
                for (int oy = 0; oy < oh; ++oy) {
                    const int iy = oy * g.stride - g.padding + ky;
                    if (iy < 0 || iy >= g.in_height) continue;
                    for (int ox = 0; ox < ow; ++ox) {
                        const int ix = ox * g.stride - g.padding + kx;
                        if (ix < 0 || ix >= g.in_width) continue;
                        plane[iy * g.in_width + ix] += cols(r, oy * ow + ox);
                    }
                }
            }
        }
    }
}

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace

Var conv2d(const Var& x, const Var& weight, const Var& bias, const ConvGeometry& g) {
    const Eigen::Index in_size = static_cast<Eigen::Index>(g.in_channels) * g.in_height * g.in_width;
    const int k = g.kernel;
    if (x.cols() != in_size) throw ParameterError("conv2d: input size mismatch");
    if (weight.rows() != g.out_channels || weight.cols() != g.in_channels * k * k) {
        throw ParameterError("conv2d: weight shape mismatch");
    }
    if (bias.rows() != 1 || bias.cols() != g.out_channels) throw ParameterError("conv2d: bias shape mismatch");

    const Eigen::Index n_img = x.rows();
    const int positions = g.out_height() * g.out_width();
    // Row-major copies so each image is a contiguous span.
    RowMajor xin = x.value();
    RowMajor out(n_img, static_cast<Eigen::Index>(g.out_channels) * positions);
    auto cols_cache = std::make_shared<std::vector<Matrix>>();
    cols_cache->reserve(static_cast<std::size_t>(n_img));
    for (Eigen::Index i = 0; i < n_img; ++i) {
        Matrix cols = im2col(xin.row(i).data(), g);
        Matrix y = weight.value() * cols;  // out_channels x positions
        y.colwise() += bias.value().row(0).transpose();
        // Channel-major flatten: (oc, p) -> oc * positions + p.
        Eigen::Map<RowMajor>(out.row(i).data(), g.out_channels, positions) = y;
        cols_cache->push_back(std::move(cols));
    }
    return make_op(Matrix(out), {x, weight, bias}, [g, cols_cache, positions, in_size](Node& n) {
        const Eigen::Index n_img = n.grad.rows();
        RowMajor grad = n.grad;
        const Matrix& w = n.inputs[1]->value;
        Matrix dw = Matrix::Zero(w.rows(), w.cols());
        Matrix db = Matrix::Zero(1, w.rows());
        RowMajor dx;
        if (wants(n, 0)) dx = RowMajor::Zero(n_img, in_size);
        for (Eigen::Index i = 0; i < n_img; ++i) {
            Matrix gy = Eigen::Map<const RowMajor>(grad.row(i).data(), g.out_channels, positions);
            dw.noalias() += gy * (*cols_cache)[static_cast<std::size_t>(i)].transpose();
            db += gy.rowwise().sum().transpose();
            if (wants(n, 0)) {
                Matrix dcols = w.transpose() * gy;
                col2im_add(dcols, dx.row(i).data(), g);
            }
        }
        if (wants(n, 0)) n.inputs[0]->accumulate(Matrix(dx));
        if (wants(n, 1)) n.inputs[1]->accumulate(dw);
        if (wants(n, 2)) n.inputs[2]->accumulate(db);
    });
}

Var global_avg_pool(const Var& x, int channels, int height, int width) {
    const Eigen::Index plane = static_cast<Eigen::Index>(height) * width;
    if (x.cols() != channels * plane) throw ParameterError("global_avg_pool: size mismatch");
    const Eigen::Index n_img = x.rows();
    Matrix v(n_img, channels);
    for (Eigen::Index i = 0; i < n_img; ++i) {
        for (int c = 0; c < channels; ++c) v(i, c) = x.value().row(i).segment(c * plane, plane).mean();
    }
    return make_op(std::move(v), {x}, [channels, plane](Node& n) {
        Matrix dx(n.grad.rows(), channels * plane);
        for (Eigen::Index i = 0; i < n.grad.rows(); ++i) {
            for (int c = 0; c < channels; ++c) {
                dx.row(i).segment(c * plane, plane).setConstant(n.grad(i, c) / static_cast<double>(plane));
            }
        }
        n.inputs[0]->accumulate(dx);
    });
}

}  // namespace phenovlp::nn
