#ifndef QDISTILL_DISTILL_HPP
#define QDISTILL_DISTILL_HPP

#include <span>
#include <vector>

#include "qdistill/errors.hpp"

namespace qdistill::distill {

using LogitVector = std::vector<double>;

struct DistillConfig {
    double temperature = 2.0;
    double alpha = 0.4;

    void validate() const {
        if (!(temperature > 0.0)) throw ConfigError("temperature must be > 0");
        if (alpha < 0.0 || alpha > 1.0) throw ConfigError("alpha must be in [0, 1]");
    }
};

// Temperature-softened softmax with max-subtraction for overflow safety.
std::vector<double> softmax_t(std::span<const double> logits, double temperature);

// -log(probs[label]), probabilities clamped at 1e-12.
double cross_entropy(std::span<const double> probs, int label);

// sum_i p_i log(p_i / q_i); q clamped at 1e-12, p_i = 0 terms contribute 0.
double kl_divergence(std::span<const double> p, std::span<const double> q);

struct LossBreakdown {
    double total = 0.0;
    double kd = 0.0;
    double ce = 0.0;
};

// total = alpha * KL(soft(teacher) || soft(student)) + (1 - alpha) * CE.
// Teacher logits are constants; no tau^2 rescaling of the KD term.
LossBreakdown distill_loss(std::span<const double> teacher_logits,
                           std::span<const double> student_logits, int label,
                           const DistillConfig& cfg);

// Analytic dtotal/dstudent_logits for the loss above.
std::vector<double> distill_loss_grad(std::span<const double> teacher_logits,
                                      std::span<const double> student_logits,
                                      int label, const DistillConfig& cfg);

// Plain cross-entropy pieces for teacher training and no-teacher baselines.
double ce_loss(std::span<const double> logits, int label);
std::vector<double> ce_loss_grad(std::span<const double> logits, int label);

} // namespace qdistill::distill

#endif
