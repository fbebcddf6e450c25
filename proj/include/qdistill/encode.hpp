#ifndef QDISTILL_ENCODE_HPP
#define QDISTILL_ENCODE_HPP

#include <span>
#include <string>
#include <vector>

#include "qdistill/qsim.hpp"

namespace qdistill::encode {

using qsim::GateOp;
using qsim::Statevector;

using FeatureVector = std::vector<double>;

enum class EncodingKind { Amplitude, Angle, Basis };
enum class RotationAxis { X, Y, Z };

EncodingKind encoding_from_string(const std::string& name);
std::string encoding_to_string(EncodingKind kind);

// Feature count an encoder consumes for Q qubits: 2^Q for Amplitude,
// Q for Angle and Basis.
std::size_t encoder_input_dim(EncodingKind kind, int num_qubits);

// |psi> with amplitudes values[i] / ||values||; requires D = 2^Q and a
// non-degenerate norm (> 1e-12).
Statevector encode_amplitude(std::span<const double> features, int num_qubits);

// Jacobian-vector product of amplitude encoding: given dL/dRe(a_i) for the
// produced (real) amplitudes, returns dL/dfeatures through the
// normalization.
std::vector<double> encode_amplitude_backward(std::span<const double> features,
                                              std::span<const double> amp_grads);

// Product state R_axis(values[q]) |0> per qubit; requires D = Q.
Statevector encode_angle(std::span<const double> features, int num_qubits,
                         RotationAxis axis = RotationAxis::Y);

// The state-preparation gate list realizing angle encoding; op k rotates
// qubit k and takes features[k] as its angle. Used to differentiate through
// the encoding with the adjoint engine.
std::vector<GateOp> angle_encoding_ops(int num_qubits, RotationAxis axis);

// Computational basis state |index>.
Statevector encode_basis(std::size_t index, int num_qubits);

// Thresholds z-scored features at 0 (bit q = 1 iff values[q] > 0) and
// prepares the resulting basis state; requires D = Q.
Statevector encode_basis_from_features(std::span<const double> features,
                                       int num_qubits);

std::size_t basis_index_from_features(std::span<const double> features,
                                      int num_qubits);

} // namespace qdistill::encode

#endif
