#include "phenovlp/vlp/loss.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "phenovlp/common/errors.hpp"
#include "phenovlp/knowledge/loss.hpp"

namespace phenovlp::vlp {

namespace {

// Row-wise softmax and the log-probability of the diagonal entry.
nn::Matrix softmax_rows_diag(const nn::Matrix& s, double& diag_log_sum) {
    nn::Matrix p(s.rows(), s.cols());
    diag_log_sum = 0.0;
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
        const double mx = s.row(i).maxCoeff();
        const auto e = (s.row(i).array() - mx).exp();
        const double denom = e.sum();
        p.row(i) = e / denom;
        diag_log_sum += s(i, i) - mx - std::log(denom);
    }
    return p;
}

void check_pair_shapes(const nn::Matrix& a, const nn::Matrix& b, const char* what) {
    if (a.rows() != b.rows() || a.cols() != b.cols() || a.rows() == 0) {
        throw ParameterError(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                             std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                             std::to_string(b.cols()) + ")");
    }
}

void check_tau(double tau) {
    if (!(tau > 0.0)) throw ParameterError("temperature must be positive");
}

nn::Var scalar_op(double loss, std::vector<nn::Var> inputs, std::function<void(nn::Node&)> backward) {
    return nn::make_op(nn::Matrix::Constant(1, 1, loss), std::move(inputs), std::move(backward));
}

}  // namespace

BidirectionalTerms bidirectional_contrastive(const nn::Matrix& a, const nn::Matrix& b, double scale) {
    const Eigen::Index n = a.rows();
    const nn::Matrix sim = a * b.transpose();
    const nn::Matrix s = scale * sim;
    double log_ab = 0.0, log_ba = 0.0;
    const nn::Matrix p = softmax_rows_diag(s, log_ab);
    const nn::Matrix q = softmax_rows_diag(s.transpose(), log_ba);
    const double inv = 1.0 / static_cast<double>(n);

    nn::Matrix ds = p + q.transpose();
    ds.diagonal().array() -= 2.0;
    ds *= inv;

    BidirectionalTerms out;
    out.loss = -(log_ab + log_ba) * inv;
    out.grad_a = scale * ds * b;
    out.grad_b = scale * ds.transpose() * a;
    out.grad_scale = (ds.array() * sim.array()).sum();
    return out;
}

double multimodal_contrastive_loss(const nn::Matrix& v, const nn::Matrix& t, double tau) {
    check_tau(tau);
    check_pair_shapes(v, t, "multimodal_contrastive_loss");
    knowledge::check_unit_rows(v);
    knowledge::check_unit_rows(t);
    return bidirectional_contrastive(v, t, 1.0 / tau).loss;
}

nn::Var multimodal_contrastive_loss(const nn::Var& v, const nn::Var& t, double tau) {
    check_tau(tau);
    check_pair_shapes(v.value(), t.value(), "multimodal_contrastive_loss");
    knowledge::check_unit_rows(v.value());
    knowledge::check_unit_rows(t.value());
    auto terms = bidirectional_contrastive(v.value(), t.value(), 1.0 / tau);
    return scalar_op(terms.loss, {v, t}, [ga = std::move(terms.grad_a), gb = std::move(terms.grad_b)](nn::Node& n) {
        const double g = n.grad(0, 0);
        if (n.inputs[0]->requires_grad) n.inputs[0]->accumulate(ga * g);
        if (n.inputs[1]->requires_grad) n.inputs[1]->accumulate(gb * g);
    });
}

nn::Var multimodal_contrastive_loss(const nn::Var& v, const nn::Var& t, const nn::Var& log_scale) {
    if (log_scale.rows() != 1 || log_scale.cols() != 1) throw ParameterError("log_scale must be 1x1");
    check_pair_shapes(v.value(), t.value(), "multimodal_contrastive_loss");
    knowledge::check_unit_rows(v.value());
    knowledge::check_unit_rows(t.value());
    const double scale = std::exp(log_scale.scalar());
    auto terms = bidirectional_contrastive(v.value(), t.value(), scale);
    return scalar_op(terms.loss, {v, t, log_scale},
                     [ga = std::move(terms.grad_a), gb = std::move(terms.grad_b),
                      gs = terms.grad_scale * scale](nn::Node& n) {
                         const double g = n.grad(0, 0);
                         if (n.inputs[0]->requires_grad) n.inputs[0]->accumulate(ga * g);
                         if (n.inputs[1]->requires_grad) n.inputs[1]->accumulate(gb * g);
                         if (n.inputs[2]->requires_grad) n.inputs[2]->accumulate(nn::Matrix::Constant(1, 1, gs * g));
                     });
}

double knowledge_distillation_loss(const nn::Matrix& student, const nn::Matrix& teacher, double tau) {
    check_tau(tau);
    check_pair_shapes(student, teacher, "knowledge_distillation_loss");
    knowledge::check_unit_rows(student);
    knowledge::check_unit_rows(teacher);
    return bidirectional_contrastive(student, teacher, 1.0 / tau).loss;
}

nn::Var knowledge_distillation_loss(const nn::Var& student, const nn::Matrix& teacher, double tau) {
    check_tau(tau);
    check_pair_shapes(student.value(), teacher, "knowledge_distillation_loss");
    knowledge::check_unit_rows(student.value());
    knowledge::check_unit_rows(teacher);
    auto terms = bidirectional_contrastive(student.value(), teacher, 1.0 / tau);
    return scalar_op(terms.loss, {student}, [ga = std::move(terms.grad_a)](nn::Node& n) {
        n.inputs[0]->accumulate(ga * n.grad(0, 0));
    });
}

double total_vlp_loss(const nn::Matrix& v, const nn::Matrix& t, const nn::Matrix& k, double tau_m, double tau_kd,
                      double alpha) {
    if (!(alpha >= 0.0)) throw ParameterError("alpha must be non-negative");
    const double lm = multimodal_contrastive_loss(v, t, tau_m);
    if (alpha == 0.0) return lm;
    return lm + alpha * knowledge_distillation_loss(t, k, tau_kd);
}

nn::Var total_vlp_loss(const nn::Var& v, const nn::Var& t, const nn::Matrix& k, double tau_m, double tau_kd,
                       double alpha) {
    if (!(alpha >= 0.0)) throw ParameterError("alpha must be non-negative");
    nn::Var lm = multimodal_contrastive_loss(v, t, tau_m);
    if (alpha == 0.0) return lm;
    return nn::add(lm, nn::scale(knowledge_distillation_loss(t, k, tau_kd), alpha));
}

double lr_schedule(long step, long warmup_steps, long total_steps, double base_lr) {
    if (warmup_steps < 0 || warmup_steps >= total_steps) {
        throw ParameterError("lr schedule needs 0 <= warmup_steps < total_steps (got " + std::to_string(warmup_steps) +
                             ", " + std::to_string(total_steps) + ")");
    }
    if (step < 0 || step > total_steps) throw ParameterError("lr schedule step out of range");
    if (step < warmup_steps) return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
    const double progress =
        static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
    return base_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace phenovlp::vlp
