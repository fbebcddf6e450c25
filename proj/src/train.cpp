#include "qdistill/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <numeric>
#include <sstream>

#include "qdistill/parallel.hpp"
#include "qdistill/rng.hpp"

namespace qdistill::train {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kProbClamp = 1e-12;

bool is_perfect_square(std::size_t n, int& side) {
    const int r = static_cast<int>(std::llround(std::sqrt(static_cast<double>(n))));
    for (int s = std::max(0, r - 1); s <= r + 1; ++s) {
        if (static_cast<std::size_t>(s) * static_cast<std::size_t>(s) == n) {
            side = s;
            return true;
        }
    }
    return false;
}

} // namespace

ReadoutMode readout_from_string(const std::string& name) {
    if (name == "linear") return ReadoutMode::LinearHead;
    if (name == "basis-probs") return ReadoutMode::BasisProbs;
    throw ConfigError("unknown readout '" + name + "' (expected linear|basis-probs)");
}

std::string readout_to_string(ReadoutMode mode) {
    return mode == ReadoutMode::LinearHead ? "linear" : "basis-probs";
}

GradientEngine engine_from_string(const std::string& name) {
    if (name == "adjoint") return GradientEngine::Adjoint;
    if (name == "parameter-shift") return GradientEngine::ParameterShift;
    throw ConfigError("unknown gradient engine '" + name +
                      "' (expected adjoint|parameter-shift)");
}

void StudentSpec::validate() const {
    if (num_qubits < 1 || num_qubits > 12)
        throw ConfigError("num_qubits must be in [1, 12]");
    if (layers < 1) throw ConfigError("layers must be >= 1");
    if (num_classes < 2) throw ConfigError("num_classes must be >= 2");
    if (readout == ReadoutMode::BasisProbs &&
        (std::size_t{1} << num_qubits) < static_cast<std::size_t>(num_classes))
        throw ConfigError("basis-probs readout needs 2^Q >= num_classes");
    const bool fc = reducer == reduce::ReducerKind::FullyConnected;
    if (!fc && encoding != encode::EncodingKind::Amplitude)
        throw ConfigError("reducer '" + reduce::reducer_to_string(reducer) +
                          "' is only supported with amplitude encoding");
    if (fc && hidden_dim < 1) throw ConfigError("hidden_dim must be >= 1");
    if (reducer == reduce::ReducerKind::CenterCrop ||
        reducer == reduce::ReducerKind::MaxPool ||
        reducer == reduce::ReducerKind::AvgPool) {
        int side = 0;
        if (!is_perfect_square(target_dim(), side))
            throw ConfigError("spatial reducer needs a square target dimension; 2^" +
                              std::to_string(num_qubits) + " is not a perfect square");
        if (reducer == reduce::ReducerKind::CenterCrop &&
            (side > height || side > width))
            throw ConfigError("crop side " + std::to_string(side) +
                              " exceeds image extent");
    }
}

StudentModel student_init(const StudentSpec& spec, std::uint64_t seed,
                          const reduce::PcaBasis* pca) {
    spec.validate();
    StudentModel model;
    model.spec = spec;
    model.circuit = qsim::build_student_circuit(spec.num_qubits, spec.layers);

    if (spec.reducer == reduce::ReducerKind::FullyConnected) {
        model.fc_shape = {static_cast<int>(spec.input_dim()), spec.hidden_dim,
                          static_cast<int>(spec.target_dim())};
        model.fc_count = model.fc_shape.param_count();
    }
    if (spec.reducer == reduce::ReducerKind::PCA) {
        if (!pca || !pca->fitted())
            throw StateError("PCA reducer requires a fitted basis");
        if (pca->target_dim != static_cast<int>(spec.target_dim()))
            throw ShapeError("PCA basis target dimension mismatch");
        model.pca = *pca;
    }
    model.circuit_count = static_cast<std::size_t>(model.circuit.num_params);
    if (spec.readout == ReadoutMode::LinearHead)
        model.head_count =
            static_cast<std::size_t>(spec.num_classes) * spec.num_qubits +
            spec.num_classes;

    model.fc_offset = 0;
    model.circuit_offset = model.fc_offset + model.fc_count;
    model.head_offset = model.circuit_offset + model.circuit_count;
    model.params.assign(model.head_offset + model.head_count, 0.0);

    if (model.fc_count > 0) {
        const auto fc = reduce::init_fc_reducer(model.fc_shape, seed);
        std::copy(fc.begin(), fc.end(), model.params.begin() + static_cast<std::ptrdiff_t>(model.fc_offset));
    }
    // near-identity start: keeps the encoded state readable by the head in
    // the first epochs and avoids scrambled-unitary basins
    Rng circ_rng(derive_seed(seed, "circuit-init"));
    for (std::size_t i = 0; i < model.circuit_count; ++i)
        model.params[model.circuit_offset + i] = circ_rng.uniform(-kPi / 4.0, kPi / 4.0);
    if (model.head_count > 0) {
        Rng head_rng(derive_seed(seed, "head-init"));
        const double bound = std::sqrt(6.0 / (spec.num_qubits + spec.num_classes));
        const std::size_t weights =
            static_cast<std::size_t>(spec.num_classes) * spec.num_qubits;
        for (std::size_t i = 0; i < weights; ++i)
            model.params[model.head_offset + i] = head_rng.uniform(-bound, bound);
        // head biases zero
    }
    return model;
}

std::map<std::string, long> student_parameter_counts(const StudentModel& model) {
    std::map<std::string, long> counts;
    counts["reducer"] = static_cast<long>(model.fc_count);
    counts["circuit"] = static_cast<long>(model.circuit_count);
    counts["readout"] = static_cast<long>(model.head_count);
    counts["total"] = static_cast<long>(model.params.size());
    return counts;
}

namespace {

std::vector<double> reduce_features(const StudentModel& model,
                                    std::span<const double> image,
                                    std::vector<double>* hidden_cache) {
    const StudentSpec& spec = model.spec;
    if (image.size() != spec.input_dim())
        throw ShapeError("sample length " + std::to_string(image.size()) +
                         " does not match configured input " +
                         std::to_string(spec.input_dim()));
    if (spec.reducer == reduce::ReducerKind::FullyConnected)
        return reduce::fc_reduce(model.fc_shape, model.fc_params(), image, hidden_cache);

    std::vector<double> gray;
    std::span<const double> plane = image;
    if (spec.channels > 1) {
        gray = reduce::channel_average(image, spec.channels, spec.height, spec.width);
        plane = gray;
    }
    int side = 0;
    is_perfect_square(spec.target_dim(), side);
    switch (spec.reducer) {
    case reduce::ReducerKind::CenterCrop:
        return reduce::reduce_center_crop(plane, spec.height, spec.width, side);
    case reduce::ReducerKind::PCA:
        return reduce::pca_transform(plane, model.pca);
    case reduce::ReducerKind::MaxPool:
    case reduce::ReducerKind::AvgPool: {
        const auto mode = spec.reducer == reduce::ReducerKind::MaxPool
                              ? reduce::PoolMode::Max
                              : reduce::PoolMode::Avg;
        if (spec.height % side == 0 && spec.width % side == 0)
            return reduce::reduce_pool(plane, spec.height, spec.width, mode, side);
        int ph = 0, pw = 0;
        const auto padded =
            reduce::pad_to_multiple(plane, spec.height, spec.width, side, ph, pw);
        return reduce::reduce_pool(padded, ph, pw, mode, side);
    }
    default:
        throw StateError("unreachable reducer kind");
    }
}

qsim::Statevector encode_features(const StudentSpec& spec,
                                  std::span<const double> features) {
    switch (spec.encoding) {
    case encode::EncodingKind::Amplitude:
        return encode::encode_amplitude(features, spec.num_qubits);
    case encode::EncodingKind::Angle:
        return encode::encode_angle(features, spec.num_qubits, spec.axis);
    case encode::EncodingKind::Basis:
        return encode::encode_basis_from_features(features, spec.num_qubits);
    }
    throw StateError("unreachable encoding kind");
}

std::vector<double> readout_logits(const StudentModel& model,
                                   std::span<const double> expectations,
                                   std::span<const double> basis_probs) {
    const StudentSpec& spec = model.spec;
    std::vector<double> logits(static_cast<std::size_t>(spec.num_classes), 0.0);
    if (spec.readout == ReadoutMode::LinearHead) {
        const auto head = model.head_params();
        const std::size_t q = static_cast<std::size_t>(spec.num_qubits);
        const double* w = head.data();
        const double* b = head.data() + static_cast<std::size_t>(spec.num_classes) * q;
        for (std::size_t c = 0; c < logits.size(); ++c) {
            double acc = b[c];
            for (std::size_t k = 0; k < q; ++k) acc += w[c * q + k] * expectations[k];
            logits[c] = acc;
        }
    } else {
        double s = 0.0;
        for (std::size_t c = 0; c < logits.size(); ++c) s += basis_probs[c];
        s = std::max(s, kProbClamp);
        for (std::size_t c = 0; c < logits.size(); ++c) logits[c] = basis_probs[c] / s;
    }
    return logits;
}

} // namespace

std::vector<double> student_forward(const StudentModel& model,
                                    std::span<const double> image,
                                    StudentTrace* trace) {
    std::vector<double> hidden;
    auto features = reduce_features(model, image, &hidden);
    auto state = encode_features(model.spec, features);
    auto out_state = qsim::run_circuit(model.circuit, model.circuit_params(), state);
    auto measured = qsim::measure_analytic(out_state);
    auto logits = readout_logits(model, measured.expectations, measured.basis_probs);
    if (trace) {
        trace->image.assign(image.begin(), image.end());
        trace->features = std::move(features);
        trace->fc_hidden = std::move(hidden);
        trace->input_state = std::move(state);
        trace->output_state = std::move(out_state);
        trace->expectations = std::move(measured.expectations);
        trace->basis_probs = std::move(measured.basis_probs);
        trace->logits = logits;
    }
    return logits;
}

std::vector<double> student_forward_shots(const StudentModel& model,
                                          std::span<const double> image, long shots,
                                          std::uint64_t seed) {
    std::vector<double> hidden;
    const auto features = reduce_features(model, image, &hidden);
    const auto state = encode_features(model.spec, features);
    const auto out_state =
        qsim::run_circuit(model.circuit, model.circuit_params(), state);
    const auto measured = qsim::measure_shots(out_state, shots, seed);
    return readout_logits(model, measured.expectations, measured.basis_probs);
}

StudentGradients student_backward(const StudentModel& model,
                                  std::span<const double> image, int label,
                                  std::span<const double> teacher_logits,
                                  const distill::DistillConfig& cfg,
                                  GradientEngine engine,
                                  bool* warned_adjoint_fallback) {
    const StudentSpec& spec = model.spec;
    StudentTrace trace;
    const auto logits = student_forward(model, image, &trace);

    StudentGradients out;
    out.params.assign(model.params.size(), 0.0);
    std::vector<double> logit_grad;
    if (teacher_logits.empty()) {
        out.loss.ce = distill::ce_loss(logits, label);
        out.loss.kd = 0.0;
        out.loss.total = out.loss.ce;
        logit_grad = distill::ce_loss_grad(logits, label);
    } else {
        out.loss = distill::distill_loss(teacher_logits, logits, label, cfg);
        logit_grad = distill::distill_loss_grad(teacher_logits, logits, label, cfg);
    }

    // readout backward -> diagonal observable weights for the circuit
    const std::size_t q = static_cast<std::size_t>(spec.num_qubits);
    std::vector<double> diag_weights;
    if (spec.readout == ReadoutMode::LinearHead) {
        const auto head = model.head_params();
        const double* w = head.data();
        double* dw = out.params.data() + model.head_offset;
        double* db = dw + static_cast<std::size_t>(spec.num_classes) * q;
        std::vector<double> expectation_grad(q, 0.0);
        for (std::size_t c = 0; c < logit_grad.size(); ++c) {
            const double g = logit_grad[c];
            db[c] += g;
            for (std::size_t k = 0; k < q; ++k) {
                dw[c * q + k] += g * trace.expectations[k];
                expectation_grad[k] += g * w[c * q + k];
            }
        }
        diag_weights = qsim::pauli_z_diag_weights(spec.num_qubits, expectation_grad);
    } else {
        double s = 0.0, dot = 0.0;
        for (std::size_t c = 0; c < logit_grad.size(); ++c)
            s += trace.basis_probs[c];
        s = std::max(s, kProbClamp);
        for (std::size_t c = 0; c < logit_grad.size(); ++c)
            dot += logit_grad[c] * trace.basis_probs[c];
        diag_weights.assign(trace.basis_probs.size(), 0.0);
        for (std::size_t c = 0; c < logit_grad.size(); ++c)
            diag_weights[c] = logit_grad[c] / s - dot / (s * s);
    }

    // circuit and encoding backward
    const bool fc = spec.reducer == reduce::ReducerKind::FullyConnected;
    std::vector<double> feature_grad;
    double* circuit_grad = out.params.data() + model.circuit_offset;

    if (engine == GradientEngine::Adjoint) {
        std::vector<qsim::GateOp> ops;
        std::vector<double> angles;
        qsim::Statevector base_state;
        std::size_t enc_prefix = 0;
        if (spec.encoding == encode::EncodingKind::Angle) {
            const auto enc_ops = encode::angle_encoding_ops(spec.num_qubits, spec.axis);
            enc_prefix = enc_ops.size();
            ops = enc_ops;
            angles.assign(trace.features.begin(), trace.features.end());
            base_state = qsim::Statevector::zero_state(spec.num_qubits);
        } else {
            base_state = trace.input_state;
        }
        const auto circuit_angles =
            qsim::resolve_angles(model.circuit.ops, model.circuit_params());
        ops.insert(ops.end(), model.circuit.ops.begin(), model.circuit.ops.end());
        angles.insert(angles.end(), circuit_angles.begin(), circuit_angles.end());

        const auto tg = qsim::adjoint_gradient_ops(ops, angles, base_state, diag_weights);
        for (std::size_t k = enc_prefix; k < ops.size(); ++k)
            if (ops[k].is_rotation())
                circuit_grad[ops[k].param_index] += tg.op_grads[k];
        if (fc) {
            if (spec.encoding == encode::EncodingKind::Angle) {
                feature_grad.assign(tg.op_grads.begin(),
                                    tg.op_grads.begin() + static_cast<std::ptrdiff_t>(enc_prefix));
            } else if (spec.encoding == encode::EncodingKind::Amplitude) {
                std::vector<double> amp_grad(tg.input_grads.size());
                for (std::size_t i = 0; i < amp_grad.size(); ++i)
                    amp_grad[i] = tg.input_grads[i].real();
                feature_grad =
                    encode::encode_amplitude_backward(trace.features, amp_grad);
            }
            // basis encoding: thresholding has zero derivative almost
            // everywhere; the reducer receives no gradient
        }
    } else {
        const auto ps = qsim::gradient_parameter_shift_diag(
            model.circuit, model.circuit_params(), trace.input_state, diag_weights);
        for (std::size_t j = 0; j < ps.size(); ++j) circuit_grad[j] += ps[j];
        if (fc) {
            if (spec.encoding == encode::EncodingKind::Angle) {
                // encoding rotations obey the same shift rule
                const auto enc_ops =
                    encode::angle_encoding_ops(spec.num_qubits, spec.axis);
                std::vector<qsim::GateOp> ops = enc_ops;
                ops.insert(ops.end(), model.circuit.ops.begin(), model.circuit.ops.end());
                std::vector<double> angles(trace.features.begin(), trace.features.end());
                const auto circuit_angles =
                    qsim::resolve_angles(model.circuit.ops, model.circuit_params());
                angles.insert(angles.end(), circuit_angles.begin(), circuit_angles.end());
                const auto zero = qsim::Statevector::zero_state(spec.num_qubits);
                feature_grad.assign(enc_ops.size(), 0.0);
                for (std::size_t j = 0; j < enc_ops.size(); ++j) {
                    const double keep = angles[j];
                    angles[j] = keep + kPi / 2.0;
                    const double plus = qsim::expectation_diag(
                        qsim::run_ops(ops, angles, zero), diag_weights);
                    angles[j] = keep - kPi / 2.0;
                    const double minus = qsim::expectation_diag(
                        qsim::run_ops(ops, angles, zero), diag_weights);
                    angles[j] = keep;
                    feature_grad[j] = 0.5 * (plus - minus);
                }
            } else if (spec.encoding == encode::EncodingKind::Amplitude) {
                // no shift rule for input amplitudes; fall back to the
                // adjoint input path for the reducer gradient
                if (warned_adjoint_fallback && !*warned_adjoint_fallback) {
                    std::cerr << "warning: parameter-shift engine uses the adjoint "
                                 "input path for amplitude-encoded reducer gradients\n";
                    *warned_adjoint_fallback = true;
                }
                const auto circuit_angles =
                    qsim::resolve_angles(model.circuit.ops, model.circuit_params());
                const auto tg = qsim::adjoint_gradient_ops(
                    model.circuit.ops, circuit_angles, trace.input_state, diag_weights);
                std::vector<double> amp_grad(tg.input_grads.size());
                for (std::size_t i = 0; i < amp_grad.size(); ++i)
                    amp_grad[i] = tg.input_grads[i].real();
                feature_grad =
                    encode::encode_amplitude_backward(trace.features, amp_grad);
            }
        }
    }

    if (fc && !feature_grad.empty()) {
        std::span<double> fc_grad{out.params.data() + model.fc_offset, model.fc_count};
        reduce::fc_reduce_backward(model.fc_shape, model.fc_params(), trace.image,
                                   trace.fc_hidden, feature_grad, fc_grad, nullptr);
    }
    return out;
}

OptimizerState make_optimizer(OptimizerKind kind, double learning_rate,
                              std::size_t num_params) {
    OptimizerState state;
    state.kind = kind;
    state.learning_rate = learning_rate;
    state.m.assign(num_params, 0.0);
    state.v.assign(num_params, 0.0);
    return state;
}

void adam_step(OptimizerState& state, std::vector<double>& params,
               std::span<const double> grads) {
    if (params.size() != grads.size() || state.m.size() != params.size())
        throw ShapeError("optimizer/parameter/gradient length mismatch");
    if (state.kind == OptimizerKind::SGD) {
        for (std::size_t i = 0; i < params.size(); ++i)
            params[i] -= state.learning_rate * grads[i];
        ++state.step_count;
        return;
    }
    ++state.step_count;
    const double b1 = state.beta1, b2 = state.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.step_count));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.step_count));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * grads[i];
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * grads[i] * grads[i];
        const double mhat = state.m[i] / bc1;
        const double vhat = state.v[i] / bc2;
        params[i] -= state.learning_rate * mhat / (std::sqrt(vhat) + state.epsilon);
    }
}

namespace {

void clip_gradient(std::vector<double>& grad, double clip_norm) {
    if (clip_norm <= 0.0) return;
    double sq = 0.0;
    for (double g : grad) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > clip_norm) {
        const double scale = clip_norm / norm;
        for (auto& g : grad) g *= scale;
    }
}

} // namespace

std::string history_to_text(const std::vector<EpochRecord>& history) {
    std::ostringstream out;
    char buf[256];
    for (const auto& rec : history) {
        std::snprintf(buf, sizeof(buf),
                      "epoch=%d train_loss=%.17g kd=%.17g ce=%.17g val_acc=%.17g\n",
                      rec.epoch, rec.train_loss, rec.kd, rec.ce, rec.val_accuracy);
        out << buf;
    }
    return out.str();
}

StudentFitResult fit(const StudentModel& model, const data::Dataset& train,
                     const data::Dataset& val,
                     const data::TeacherLogitsTable* teacher,
                     const distill::DistillConfig& cfg, const TrainLoopConfig& loop) {
    cfg.validate();
    if (train.size() == 0) throw ConfigError("empty training set");
    if (val.size() == 0) throw ConfigError("empty validation set");
    if (loop.patience < 1) throw ConfigError("patience must be >= 1");
    if (loop.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    // alpha == 0 must be bit-identical to a no-teacher run, so the teacher
    // is dropped entirely rather than multiplied by zero
    const data::TeacherLogitsTable* effective_teacher =
        (teacher && cfg.alpha > 0.0) ? teacher : nullptr;

    StudentModel current = model;
    auto optimizer =
        make_optimizer(OptimizerKind::Adam, loop.learning_rate, current.params.size());

    StudentFitResult result;
    result.model = current;
    result.best_val_accuracy = -1.0;
    bool warned = false;

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);

    const int workers = worker_count(static_cast<std::size_t>(loop.batch_size));
    std::vector<std::vector<double>> worker_grads(static_cast<std::size_t>(workers));
    std::vector<distill::LossBreakdown> sample_loss(train.size());

    int bad_epochs = 0;
    for (int epoch = 1; epoch <= loop.max_epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(loop.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(loop.batch_size)) {
            const std::size_t count =
                std::min<std::size_t>(static_cast<std::size_t>(loop.batch_size),
                                      order.size() - start);
            for (auto& wg : worker_grads) wg.assign(current.params.size(), 0.0);
            std::exception_ptr failure;
            std::mutex failure_mutex;
            parallel_for_workers(count, workers, [&](std::size_t w, std::size_t k) {
                try {
                    const std::size_t idx = order[start + k];
                    std::span<const double> tlogits;
                    if (effective_teacher)
                        tlogits = effective_teacher->lookup(train.source_indices[idx]);
                    auto g = student_backward(current, train.sample(idx),
                                              train.labels[idx], tlogits, cfg,
                                              loop.engine, &warned);
                    sample_loss[start + k] = g.loss;
                    auto& wg = worker_grads[w];
                    for (std::size_t i = 0; i < wg.size(); ++i) wg[i] += g.params[i];
                } catch (const DegenerateInputError& e) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure)
                        failure = std::make_exception_ptr(DegenerateInputError(
                            "sample " +
                            std::to_string(train.source_indices[order[start + k]]) +
                            ": " + e.what()));
                } catch (...) {
                    std::lock_guard<std::mutex> lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            });
            if (failure) std::rethrow_exception(failure);

            std::vector<double> grad(current.params.size(), 0.0);
            for (const auto& wg : worker_grads)
                for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += wg[i];
            const double inv = 1.0 / static_cast<double>(count);
            for (auto& g : grad) g *= inv;
            clip_gradient(grad, loop.clip_norm);
            adam_step(optimizer, current.params, grad);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        for (std::size_t i = 0; i < order.size(); ++i) {
            rec.train_loss += sample_loss[i].total;
            rec.kd += sample_loss[i].kd;
            rec.ce += sample_loss[i].ce;
        }
        const double inv_n = 1.0 / static_cast<double>(order.size());
        rec.train_loss *= inv_n;
        rec.kd *= inv_n;
        rec.ce *= inv_n;
        rec.val_accuracy = evaluate_student(current, val).accuracy;
        result.history.push_back(rec);
        result.epochs_ran = epoch;
        if (loop.verbose)
            std::cerr << "epoch " << epoch << " loss " << rec.train_loss << " val "
                      << rec.val_accuracy << "\n";

        if (rec.val_accuracy > result.best_val_accuracy) {
            result.best_val_accuracy = rec.val_accuracy;
            result.best_epoch = epoch;
            result.model = current;
            bad_epochs = 0;
        } else if (++bad_epochs >= loop.patience) {
            break;
        }
    }
    return result;
}

Evaluation evaluate_student(const StudentModel& model, const data::Dataset& ds,
                            long shots, std::uint64_t seed) {
    Evaluation eval;
    eval.predictions.assign(ds.size(), 0);
    eval.correct.assign(ds.size(), 0);
    parallel_for(ds.size(), [&](std::size_t i) {
        std::vector<double> logits;
        if (shots > 0) {
            const auto sample_seed = derive_seed(
                seed, "eval-shots", static_cast<std::uint64_t>(ds.source_indices[i]));
            logits = student_forward_shots(model, ds.sample(i), shots, sample_seed);
        } else {
            logits = student_forward(model, ds.sample(i));
        }
        eval.predictions[i] = nn::argmax(logits);
        eval.correct[i] = eval.predictions[i] == ds.labels[i] ? 1 : 0;
    });
    std::size_t right = 0;
    for (auto c : eval.correct) right += c;
    eval.accuracy = static_cast<double>(right) / static_cast<double>(ds.size());
    return eval;
}

TeacherFitResult fit_teacher(const nn::NetworkPlan& plan, const data::Dataset& train,
                             const data::Dataset& val, const TrainLoopConfig& loop) {
    if (train.size() == 0) throw ConfigError("empty training set");
    if (val.size() == 0) throw ConfigError("empty validation set");
    if (loop.patience < 1) throw ConfigError("patience must be >= 1");

    std::vector<double> params = nn::init_params(plan, loop.seed);
    auto optimizer =
        make_optimizer(OptimizerKind::Adam, loop.learning_rate, params.size());

    TeacherFitResult result;
    result.params = params;
    result.best_val_accuracy = -1.0;

    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    const int workers = worker_count(static_cast<std::size_t>(loop.batch_size));
    std::vector<std::vector<double>> worker_grads(static_cast<std::size_t>(workers));
    std::vector<double> sample_loss(train.size(), 0.0);

    int bad_epochs = 0;
    for (int epoch = 1; epoch <= loop.max_epochs; ++epoch) {
        Rng shuffle_rng(derive_seed(loop.seed, "shuffle", static_cast<std::uint64_t>(epoch)));
        shuffle_rng.shuffle(order);

        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(loop.batch_size)) {
            const std::size_t count =
                std::min<std::size_t>(static_cast<std::size_t>(loop.batch_size),
                                      order.size() - start);
            for (auto& wg : worker_grads) wg.assign(params.size(), 0.0);
            parallel_for_workers(count, workers, [&](std::size_t w, std::size_t k) {
                const std::size_t idx = order[start + k];
                nn::ForwardTrace trace;
                const auto drop_seed =
                    derive_seed(loop.seed, "teacher-dropout",
                                static_cast<std::uint64_t>(epoch) * train.size() + idx);
                const auto logits =
                    nn::forward_sample(plan, params, train.sample(idx), nn::Mode::Train,
                                       drop_seed, &trace);
                sample_loss[start + k] = distill::ce_loss(logits, train.labels[idx]);
                const auto lg = distill::ce_loss_grad(logits, train.labels[idx]);
                const auto g = nn::backward_sample(plan, params, trace, lg);
                auto& wg = worker_grads[w];
                for (std::size_t i = 0; i < wg.size(); ++i) wg[i] += g[i];
            });
            std::vector<double> grad(params.size(), 0.0);
            for (const auto& wg : worker_grads)
                for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += wg[i];
            const double inv = 1.0 / static_cast<double>(count);
            for (auto& g : grad) g *= inv;
            clip_gradient(grad, loop.clip_norm);
            adam_step(optimizer, params, grad);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        for (std::size_t i = 0; i < order.size(); ++i) rec.train_loss += sample_loss[i];
        rec.train_loss /= static_cast<double>(order.size());
        rec.ce = rec.train_loss;
        rec.val_accuracy = evaluate_teacher(plan, params, val).accuracy;
        result.history.push_back(rec);
        result.epochs_ran = epoch;
        if (loop.verbose)
            std::cerr << "teacher epoch " << epoch << " loss " << rec.train_loss
                      << " val " << rec.val_accuracy << "\n";

        if (rec.val_accuracy > result.best_val_accuracy) {
            result.best_val_accuracy = rec.val_accuracy;
            result.best_epoch = epoch;
            result.params = params;
            bad_epochs = 0;
        } else if (++bad_epochs >= loop.patience) {
            break;
        }
    }
    return result;
}

Evaluation evaluate_teacher(const nn::NetworkPlan& plan, std::span<const double> params,
                            const data::Dataset& ds) {
    Evaluation eval;
    eval.predictions.assign(ds.size(), 0);
    eval.correct.assign(ds.size(), 0);
    parallel_for(ds.size(), [&](std::size_t i) {
        const auto logits =
            nn::forward_sample(plan, params, ds.sample(i), nn::Mode::Infer);
        eval.predictions[i] = nn::argmax(logits);
        eval.correct[i] = eval.predictions[i] == ds.labels[i] ? 1 : 0;
    });
    std::size_t right = 0;
    for (auto c : eval.correct) right += c;
    eval.accuracy = static_cast<double>(right) / static_cast<double>(ds.size());
    return eval;
}

data::TeacherLogitsTable export_teacher_logits(const nn::NetworkPlan& plan,
                                               std::span<const double> params,
                                               const data::Dataset& ds,
                                               const std::string& teacher_name) {
    data::TeacherLogitsTable table;
    table.num_classes = plan.spec.num_classes;
    table.teacher_name = teacher_name;
    std::vector<std::vector<double>> rows(ds.size());
    parallel_for(ds.size(), [&](std::size_t i) {
        rows[i] = nn::forward_sample(plan, params, ds.sample(i), nn::Mode::Infer);
    });
    for (std::size_t i = 0; i < ds.size(); ++i)
        table.rows[ds.source_indices[i]] = std::move(rows[i]);
    return table;
}

void save_student(const std::string& dir, const StudentModel& model) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    {
        std::ofstream out(fs::path(dir) / "circuit.txt");
        if (!out) throw IoError("cannot write circuit manifest in " + dir);
        out << qsim::circuit_to_text(model.circuit);
    }
    {
        std::ofstream out(fs::path(dir) / "student_params.bin", std::ios::binary);
        if (!out) throw IoError("cannot write student parameters in " + dir);
        const char magic[8] = {'Q', 'D', 'S', 'T', 'U', '0', '1', '\0'};
        out.write(magic, sizeof(magic));
        const std::uint64_t n = model.params.size();
        out.write(reinterpret_cast<const char*>(&n), sizeof(n));
        out.write(reinterpret_cast<const char*>(model.params.data()),
                  static_cast<std::streamsize>(n * sizeof(double)));
    }
    if (model.spec.reducer == reduce::ReducerKind::PCA)
        reduce::save_pca_basis((std::filesystem::path(dir) / "pca.bin").string(),
                               model.pca);
}

StudentModel load_student(const std::string& dir, const StudentSpec& spec) {
    namespace fs = std::filesystem;
    reduce::PcaBasis pca;
    const reduce::PcaBasis* pca_ptr = nullptr;
    if (spec.reducer == reduce::ReducerKind::PCA) {
        pca = reduce::load_pca_basis((fs::path(dir) / "pca.bin").string());
        pca_ptr = &pca;
    }
    StudentModel model = student_init(spec, 0, pca_ptr);
    {
        std::ifstream in(fs::path(dir) / "circuit.txt");
        if (!in) throw IoError("cannot open circuit manifest in " + dir);
        std::stringstream buf;
        buf << in.rdbuf();
        const auto circuit = qsim::circuit_from_text(buf.str());
        if (circuit.num_qubits != model.circuit.num_qubits ||
            circuit.num_params != model.circuit.num_params)
            throw FormatError("circuit manifest does not match student spec");
        model.circuit = circuit;
    }
    std::ifstream in(fs::path(dir) / "student_params.bin", std::ios::binary);
    if (!in) throw IoError("cannot open student parameters in " + dir);
    char magic[8];
    in.read(magic, sizeof(magic));
    const char expect[8] = {'Q', 'D', 'S', 'T', 'U', '0', '1', '\0'};
    if (!in || std::memcmp(magic, expect, sizeof(magic)) != 0)
        throw FormatError("bad student parameter magic in " + dir);
    std::uint64_t n = 0;
    in.read(reinterpret_cast<char*>(&n), sizeof(n));
    if (!in || n != model.params.size())
        throw FormatError("student parameter count mismatch in " + dir);
    in.read(reinterpret_cast<char*>(model.params.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw FormatError("truncated student parameters in " + dir);
    return model;
}

} // namespace qdistill::train
