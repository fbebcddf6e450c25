#include "qdistill/encode.hpp"

#include <cmath>

namespace qdistill::encode {

namespace {
constexpr double kNormEpsilon = 1e-12;

qsim::GateKind axis_gate(RotationAxis axis) {
    switch (axis) {
    case RotationAxis::X: return qsim::GateKind::RX;
    case RotationAxis::Y: return qsim::GateKind::RY;
    case RotationAxis::Z: return qsim::GateKind::RZ;
    }
    return qsim::GateKind::RY;
}
} // namespace

EncodingKind encoding_from_string(const std::string& name) {
    if (name == "amplitude") return EncodingKind::Amplitude;
    if (name == "angle") return EncodingKind::Angle;
    if (name == "qubit") return EncodingKind::Basis;
    throw ConfigError("unknown encoding '" + name + "' (expected amplitude|angle|qubit)");
}

std::string encoding_to_string(EncodingKind kind) {
    switch (kind) {
    case EncodingKind::Amplitude: return "amplitude";
    case EncodingKind::Angle: return "angle";
    case EncodingKind::Basis: return "qubit";
    }
    return "?";
}

std::size_t encoder_input_dim(EncodingKind kind, int num_qubits) {
    if (kind == EncodingKind::Amplitude) return std::size_t{1} << num_qubits;
    return static_cast<std::size_t>(num_qubits);
}

Statevector encode_amplitude(std::span<const double> features, int num_qubits) {
    const std::size_t dim = std::size_t{1} << num_qubits;
    if (features.size() != dim)
        throw ShapeError("amplitude encoding needs 2^Q = " + std::to_string(dim) +
                         " features, got " + std::to_string(features.size()));
    double sq = 0.0;
    for (double v : features) {
        if (!std::isfinite(v)) throw ShapeError("non-finite feature value");
        sq += v * v;
    }
    const double norm = std::sqrt(sq);
    if (norm < kNormEpsilon)
        throw DegenerateInputError("amplitude encoding input has near-zero norm");
    Statevector s(num_qubits);
    for (std::size_t i = 0; i < dim; ++i)
        s.amplitudes[i] = qsim::Complex(features[i] / norm, 0.0);
    return s;
}

std::vector<double> encode_amplitude_backward(std::span<const double> features,
                                              std::span<const double> amp_grads) {
    if (features.size() != amp_grads.size())
        throw ShapeError("feature/gradient length mismatch");
    double sq = 0.0;
    for (double v : features) sq += v * v;
    const double norm = std::sqrt(sq);
    if (norm < kNormEpsilon)
        throw DegenerateInputError("amplitude encoding input has near-zero norm");
    // a_i = x_i / ||x||; da_i/dx_j = (delta_ij - a_i a_j) / ||x||
    double dot = 0.0; // sum_i g_i a_i
    std::vector<double> grads(features.size(), 0.0);
    for (std::size_t i = 0; i < features.size(); ++i)
        dot += amp_grads[i] * features[i] / norm;
    for (std::size_t j = 0; j < features.size(); ++j)
        grads[j] = (amp_grads[j] - dot * features[j] / norm) / norm;
    return grads;
}

std::vector<GateOp> angle_encoding_ops(int num_qubits, RotationAxis axis) {
    std::vector<GateOp> ops;
    ops.reserve(static_cast<std::size_t>(num_qubits));
    for (int q = 0; q < num_qubits; ++q)
        ops.push_back(GateOp::rotation(axis_gate(axis), q, q));
    return ops;
}

Statevector encode_angle(std::span<const double> features, int num_qubits,
                         RotationAxis axis) {
    if (features.size() != static_cast<std::size_t>(num_qubits))
        throw ShapeError("angle encoding needs Q = " + std::to_string(num_qubits) +
                         " features, got " + std::to_string(features.size()));
    for (double v : features)
        if (!std::isfinite(v)) throw ShapeError("non-finite feature value");
    const auto ops = angle_encoding_ops(num_qubits, axis);
    return qsim::run_ops(ops, features, Statevector::zero_state(num_qubits));
}

Statevector encode_basis(std::size_t index, int num_qubits) {
    return Statevector::basis_state(num_qubits, index);
}

std::size_t basis_index_from_features(std::span<const double> features,
                                      int num_qubits) {
    if (features.size() != static_cast<std::size_t>(num_qubits))
        throw ShapeError("basis encoding needs Q = " + std::to_string(num_qubits) +
                         " features, got " + std::to_string(features.size()));
    std::size_t index = 0;
    for (int q = 0; q < num_qubits; ++q) {
        index <<= 1;
        if (features[static_cast<std::size_t>(q)] > 0.0) index |= 1;
    }
    return index;
}

Statevector encode_basis_from_features(std::span<const double> features,
                                       int num_qubits) {
    return encode_basis(basis_index_from_features(features, num_qubits), num_qubits);
}

} // namespace qdistill::encode
