#include "qdistill/distill.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace qdistill::distill {

namespace {
constexpr double kProbClamp = 1e-12;

void check_label(std::size_t num_classes, int label) {
    if (label < 0 || static_cast<std::size_t>(label) >= num_classes)
        throw ShapeError("label " + std::to_string(label) + " out of range for " +
                         std::to_string(num_classes) + " classes");
}
} // namespace

std::vector<double> softmax_t(std::span<const double> logits, double temperature) {
    if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
    if (logits.empty()) throw ShapeError("empty logit vector");
    double max_scaled = logits[0] / temperature;
    for (double z : logits) max_scaled = std::max(max_scaled, z / temperature);
    std::vector<double> probs(logits.size());
    double denom = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        probs[i] = std::exp(logits[i] / temperature - max_scaled);
        denom += probs[i];
    }
    for (auto& p : probs) p /= denom;
    return probs;
}

double cross_entropy(std::span<const double> probs, int label) {
    check_label(probs.size(), label);
    return -std::log(std::max(probs[static_cast<std::size_t>(label)], kProbClamp));
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw ShapeError("distribution length mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        acc += p[i] * std::log(p[i] / std::max(q[i], kProbClamp));
    }
    return acc;
}

LossBreakdown distill_loss(std::span<const double> teacher_logits,
                           std::span<const double> student_logits, int label,
                           const DistillConfig& cfg) {
    cfg.validate();
    if (teacher_logits.size() != student_logits.size())
        throw ShapeError("teacher/student logit length mismatch");
    LossBreakdown out;
    const auto teacher_soft = softmax_t(teacher_logits, cfg.temperature);
    const auto student_soft = softmax_t(student_logits, cfg.temperature);
    out.kd = kl_divergence(teacher_soft, student_soft);
    out.ce = cross_entropy(softmax_t(student_logits, 1.0), label);
    out.total = cfg.alpha * out.kd + (1.0 - cfg.alpha) * out.ce;
    return out;
}

std::vector<double> distill_loss_grad(std::span<const double> teacher_logits,
                                      std::span<const double> student_logits,
                                      int label, const DistillConfig& cfg) {
    cfg.validate();
    if (teacher_logits.size() != student_logits.size())
        throw ShapeError("teacher/student logit length mismatch");
    check_label(student_logits.size(), label);
    const auto teacher_soft = softmax_t(teacher_logits, cfg.temperature);
    const auto student_soft = softmax_t(student_logits, cfg.temperature);
    const auto student_hard = softmax_t(student_logits, 1.0);
    std::vector<double> grad(student_logits.size(), 0.0);
    for (std::size_t j = 0; j < grad.size(); ++j) {
        const double kd_term = (student_soft[j] - teacher_soft[j]) / cfg.temperature;
        const double ce_term =
            student_hard[j] - (static_cast<int>(j) == label ? 1.0 : 0.0);
        grad[j] = cfg.alpha * kd_term + (1.0 - cfg.alpha) * ce_term;
    }
    return grad;
}

double ce_loss(std::span<const double> logits, int label) {
    return cross_entropy(softmax_t(logits, 1.0), label);
}

std::vector<double> ce_loss_grad(std::span<const double> logits, int label) {
    check_label(logits.size(), label);
    auto grad = softmax_t(logits, 1.0);
    grad[static_cast<std::size_t>(label)] -= 1.0;
    return grad;
}

} // namespace qdistill::distill
