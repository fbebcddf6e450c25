#ifndef QDISTILL_QSIM_HPP
#define QDISTILL_QSIM_HPP

#include <complex>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qdistill/errors.hpp"

namespace qdistill::qsim {

using Complex = std::complex<double>;
using ParamVector = std::vector<double>;

// Bit convention used throughout: qubit 0 is the MOST significant bit of the
// basis index, so |10> on two qubits is index 2 (qubit 0 = 1, qubit 1 = 0).
inline int qubit_bit(std::size_t basis_index, int qubit, int num_qubits) {
    return static_cast<int>((basis_index >> (num_qubits - 1 - qubit)) & 1u);
}

/// Full complex amplitude vector of a Q-qubit register.
struct Statevector {
    int num_qubits = 0;
    std::vector<Complex> amplitudes;

    Statevector() = default;
    explicit Statevector(int q);

    static Statevector zero_state(int q) { return Statevector(q); }
    static Statevector basis_state(int q, std::size_t index);

    std::size_t dim() const { return amplitudes.size(); }
    double norm() const;
};

enum class GateKind { RX, RY, RZ, CNOT };

std::string gate_kind_name(GateKind k);

// One gate in a circuit. Rotations carry a parameter slot; CNOT carries a
// control qubit instead.
struct GateOp {
    GateKind kind = GateKind::RX;
    int target = 0;
    int control = -1;     // CNOT only
    int param_index = -1; // rotations only

    static GateOp rotation(GateKind k, int target, int param_index) {
        return {k, target, -1, param_index};
    }
    static GateOp cnot(int control, int target) {
        return {GateKind::CNOT, target, control, -1};
    }
    bool is_rotation() const { return kind != GateKind::CNOT; }
};

/// Layered gate layout with a flat trainable parameter space.
struct CircuitSpec {
    int num_qubits = 0;
    int layers = 0;
    std::vector<GateOp> ops;
    int num_params = 0;
};

// Hardware-efficient ansatz: per layer, RX/RY/RZ on every qubit followed by a
// CNOT ring (control i -> target (i+1) mod Q; no entangler for Q = 1).
// num_params = 3 * Q * layers. Supports Q in [1, 12].
CircuitSpec build_student_circuit(int num_qubits, int layers);

// Throws StructureError if any op violates the GateOp/CircuitSpec contracts.
void validate_circuit(const CircuitSpec& spec);

/// Measurement summary of a state: per-qubit Pauli-Z expectations and the
/// basis-outcome distribution. shots_used == 0 marks analytic values.
struct MeasurementResult {
    std::vector<double> expectations;
    std::vector<double> basis_probs;
    long shots_used = 0;
};

// Pure gate application; the input state is not modified.
Statevector apply_gate(const Statevector& state, const GateOp& gate,
                       std::span<const double> params);

// In-place kernel used by the runners (angle already resolved).
void apply_gate_inplace(Statevector& state, const GateOp& gate, double angle);

Statevector run_circuit(const CircuitSpec& spec, std::span<const double> params,
                        const Statevector& input_state);

// Runs an explicit op list with externally resolved angles (one per op;
// CNOT entries ignored). This is the execution form shared by the gradient
// engines and by trainable state-preparation gates.
Statevector run_ops(std::span<const GateOp> ops, std::span<const double> angles,
                    const Statevector& input_state);

std::vector<double> resolve_angles(std::span<const GateOp> ops,
                                   std::span<const double> params);

MeasurementResult measure_analytic(const Statevector& state);

// Multinomial sampling of `shots` basis outcomes; expectations are derived
// from the empirical frequencies. Deterministic in (state, shots, seed).
MeasurementResult measure_shots(const Statevector& state, long shots,
                                std::uint64_t seed);

// Diagonal observables. Per-qubit Z cotangents c_q induce the diagonal
// weight w_i = sum_q c_q * (+1 if bit q of i is 0 else -1); a basis-prob
// cotangent is already a diagonal weight vector.
std::vector<double> pauli_z_diag_weights(int num_qubits,
                                         std::span<const double> per_qubit);

double expectation_diag(const Statevector& state,
                        std::span<const double> diag_weights);

// Shift-rule gradient of sum_q cotangent[q] * <Z_q> w.r.t. every rotation
// parameter; 2 * num_params circuit evaluations. Exact for parameters used
// by a single rotation gate (which build_student_circuit guarantees).
std::vector<double> gradient_parameter_shift(const CircuitSpec& spec,
                                             std::span<const double> params,
                                             const Statevector& input_state,
                                             std::span<const double> cost_cotangent);

std::vector<double> gradient_parameter_shift_diag(const CircuitSpec& spec,
                                                  std::span<const double> params,
                                                  const Statevector& input_state,
                                                  std::span<const double> diag_weights);

/// Reverse-mode gradients through the simulated state. `input_grads[i]`
/// packs dL/dRe(a_i) + i * dL/dIm(a_i) for input amplitude a_i.
struct AdjointGradient {
    std::vector<double> param_grads;
    std::vector<Complex> input_grads;
};

AdjointGradient gradient_adjoint(const CircuitSpec& spec,
                                 std::span<const double> params,
                                 const Statevector& input_state,
                                 std::span<const double> cost_cotangent);

AdjointGradient gradient_adjoint_diag(const CircuitSpec& spec,
                                      std::span<const double> params,
                                      const Statevector& input_state,
                                      std::span<const double> diag_weights);

/// Adjoint pass over a raw op trace: per-op angle gradients plus input
/// amplitude gradients. Callers fold op gradients back onto their own
/// parameter spaces (circuit params, encoding angles, ...).
struct TraceGradient {
    std::vector<double> op_grads; // zero for CNOT entries
    std::vector<Complex> input_grads;
};

TraceGradient adjoint_gradient_ops(std::span<const GateOp> ops,
                                   std::span<const double> angles,
                                   const Statevector& input_state,
                                   std::span<const double> diag_weights);

// Versioned one-op-per-line text form for reproducibility manifests.
std::string circuit_to_text(const CircuitSpec& spec);
CircuitSpec circuit_from_text(const std::string& text);

} // namespace qdistill::qsim

#endif
