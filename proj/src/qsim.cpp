#include "qdistill/qsim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "qdistill/rng.hpp"

namespace qdistill::qsim {

namespace {

constexpr int kMaxQubits = 12;

void check_qubit_count(int q) {
    if (q < 1 || q > kMaxQubits)
        throw ConfigError("num_qubits must be in [1, " + std::to_string(kMaxQubits) +
                          "], got " + std::to_string(q));
}

void check_gate_indices(const GateOp& gate, int num_qubits) {
    if (gate.target < 0 || gate.target >= num_qubits)
        throw StructureError("gate target " + std::to_string(gate.target) +
                             " out of range for " + std::to_string(num_qubits) + " qubits");
    if (gate.kind == GateKind::CNOT) {
        if (gate.control < 0 || gate.control >= num_qubits)
            throw StructureError("CNOT control out of range");
        if (gate.control == gate.target)
            throw StructureError("CNOT control equals target");
        if (gate.param_index >= 0)
            throw StructureError("CNOT must not carry a parameter");
    } else {
        if (gate.control >= 0)
            throw StructureError("rotation must not carry a control");
        if (gate.param_index < 0)
            throw StructureError("rotation requires a parameter index");
    }
}

// single-qubit unitary entries for a rotation gate
void rotation_coeffs(GateKind kind, double angle, Complex& u00, Complex& u01,
                     Complex& u10, Complex& u11) {
    const double c = std::cos(angle / 2.0);
    const double s = std::sin(angle / 2.0);
    switch (kind) {
    case GateKind::RX:
        u00 = {c, 0};
        u01 = {0, -s};
        u10 = {0, -s};
        u11 = {c, 0};
        break;
    case GateKind::RY:
        u00 = {c, 0};
        u01 = {-s, 0};
        u10 = {s, 0};
        u11 = {c, 0};
        break;
    case GateKind::RZ:
        u00 = {c, -s};
        u01 = {0, 0};
        u10 = {0, 0};
        u11 = {c, s};
        break;
    case GateKind::CNOT:
        throw StructureError("CNOT has no rotation coefficients");
    }
}

void apply_single_qubit(Statevector& state, int qubit, Complex u00, Complex u01,
                        Complex u10, Complex u11) {
    const std::size_t dim = state.dim();
    const std::size_t bit = std::size_t{1} << (state.num_qubits - 1 - qubit);
    for (std::size_t base = 0; base < dim; ++base) {
        if (base & bit) continue;
        const std::size_t partner = base | bit;
        const Complex a0 = state.amplitudes[base];
        const Complex a1 = state.amplitudes[partner];
        state.amplitudes[base] = u00 * a0 + u01 * a1;
        state.amplitudes[partner] = u10 * a0 + u11 * a1;
    }
}

void apply_cnot(Statevector& state, int control, int target) {
    const std::size_t dim = state.dim();
    const std::size_t cbit = std::size_t{1} << (state.num_qubits - 1 - control);
    const std::size_t tbit = std::size_t{1} << (state.num_qubits - 1 - target);
    for (std::size_t i = 0; i < dim; ++i) {
        if ((i & cbit) && !(i & tbit))
            std::swap(state.amplitudes[i], state.amplitudes[i | tbit]);
    }
}

// applies the Pauli generator of a rotation axis, scaled by -i/2; this is
// dU/dtheta applied after U itself
void apply_shifted_generator(Statevector& state, GateKind kind, int qubit) {
    const std::size_t dim = state.dim();
    const std::size_t bit = std::size_t{1} << (state.num_qubits - 1 - qubit);
    const Complex half_mi(0.0, -0.5);
    switch (kind) {
    case GateKind::RX: // sigma_x: swap pair
        for (std::size_t base = 0; base < dim; ++base) {
            if (base & bit) continue;
            std::swap(state.amplitudes[base], state.amplitudes[base | bit]);
        }
        break;
    case GateKind::RY: // sigma_y: (a0, a1) -> (-i a1, i a0)
        for (std::size_t base = 0; base < dim; ++base) {
            if (base & bit) continue;
            const Complex a0 = state.amplitudes[base];
            const Complex a1 = state.amplitudes[base | bit];
            state.amplitudes[base] = Complex(0, -1) * a1;
            state.amplitudes[base | bit] = Complex(0, 1) * a0;
        }
        break;
    case GateKind::RZ: // sigma_z: sign flip on set bit
        for (std::size_t i = 0; i < dim; ++i)
            if (i & bit) state.amplitudes[i] = -state.amplitudes[i];
        break;
    case GateKind::CNOT:
        throw StructureError("CNOT has no generator");
    }
    for (auto& a : state.amplitudes) a *= half_mi;
}

double resolve_angle(const GateOp& gate, std::span<const double> params) {
    if (!gate.is_rotation()) return 0.0;
    if (gate.param_index < 0 || static_cast<std::size_t>(gate.param_index) >= params.size())
        throw StructureError("parameter index " + std::to_string(gate.param_index) +
                             " outside parameter vector of length " +
                             std::to_string(params.size()));
    return params[gate.param_index];
}

Complex inner_product(const Statevector& a, const Statevector& b) {
    Complex acc(0, 0);
    for (std::size_t i = 0; i < a.dim(); ++i)
        acc += std::conj(a.amplitudes[i]) * b.amplitudes[i];
    return acc;
}

} // namespace

Statevector::Statevector(int q) {
    check_qubit_count(q);
    num_qubits = q;
    amplitudes.assign(std::size_t{1} << q, Complex(0, 0));
    amplitudes[0] = Complex(1, 0);
}

Statevector Statevector::basis_state(int q, std::size_t index) {
    Statevector s(q);
    if (index >= s.dim())
        throw ShapeError("basis index " + std::to_string(index) + " out of range for " +
                         std::to_string(q) + " qubits");
    s.amplitudes[0] = Complex(0, 0);
    s.amplitudes[index] = Complex(1, 0);
    return s;
}

double Statevector::norm() const {
    double acc = 0.0;
    for (const auto& a : amplitudes) acc += std::norm(a);
    return std::sqrt(acc);
}

std::string gate_kind_name(GateKind k) {
    switch (k) {
    case GateKind::RX: return "rx";
    case GateKind::RY: return "ry";
    case GateKind::RZ: return "rz";
    case GateKind::CNOT: return "cnot";
    }
    return "?";
}

CircuitSpec build_student_circuit(int num_qubits, int layers) {
    check_qubit_count(num_qubits);
    if (layers < 1) throw ConfigError("layers must be >= 1");
    CircuitSpec spec;
    spec.num_qubits = num_qubits;
    spec.layers = layers;
    spec.num_params = 3 * num_qubits * layers;
    spec.ops.reserve(static_cast<std::size_t>(layers) *
                     (3 * num_qubits + (num_qubits > 1 ? num_qubits : 0)));
    int p = 0;
    for (int layer = 0; layer < layers; ++layer) {
        for (int q = 0; q < num_qubits; ++q) {
            spec.ops.push_back(GateOp::rotation(GateKind::RX, q, p++));
            spec.ops.push_back(GateOp::rotation(GateKind::RY, q, p++));
            spec.ops.push_back(GateOp::rotation(GateKind::RZ, q, p++));
        }
        if (num_qubits > 1) {
            for (int q = 0; q < num_qubits; ++q)
                spec.ops.push_back(GateOp::cnot(q, (q + 1) % num_qubits));
        }
    }
    return spec;
}

void validate_circuit(const CircuitSpec& spec) {
    check_qubit_count(spec.num_qubits);
    std::vector<char> seen(static_cast<std::size_t>(std::max(spec.num_params, 0)), 0);
    for (const auto& op : spec.ops) {
        check_gate_indices(op, spec.num_qubits);
        if (op.is_rotation()) {
            if (op.param_index >= spec.num_params)
                throw StructureError("param_index beyond num_params");
            seen[static_cast<std::size_t>(op.param_index)] = 1;
        }
    }
    for (int i = 0; i < spec.num_params; ++i)
        if (!seen[static_cast<std::size_t>(i)])
            throw StructureError("parameter " + std::to_string(i) + " is unused");
}

void apply_gate_inplace(Statevector& state, const GateOp& gate, double angle) {
    check_gate_indices(gate, state.num_qubits);
    if (gate.kind == GateKind::CNOT) {
        apply_cnot(state, gate.control, gate.target);
    } else {
        Complex u00, u01, u10, u11;
        rotation_coeffs(gate.kind, angle, u00, u01, u10, u11);
        apply_single_qubit(state, gate.target, u00, u01, u10, u11);
    }
}

Statevector apply_gate(const Statevector& state, const GateOp& gate,
                       std::span<const double> params) {
    Statevector out = state;
    apply_gate_inplace(out, gate, resolve_angle(gate, params));
    return out;
}

std::vector<double> resolve_angles(std::span<const GateOp> ops,
                                   std::span<const double> params) {
    std::vector<double> angles(ops.size(), 0.0);
    for (std::size_t i = 0; i < ops.size(); ++i)
        angles[i] = resolve_angle(ops[i], params);
    return angles;
}

Statevector run_ops(std::span<const GateOp> ops, std::span<const double> angles,
                    const Statevector& input_state) {
    if (ops.size() != angles.size())
        throw StructureError("op/angle length mismatch");
    Statevector state = input_state;
    for (std::size_t i = 0; i < ops.size(); ++i)
        apply_gate_inplace(state, ops[i], angles[i]);
    return state;
}

Statevector run_circuit(const CircuitSpec& spec, std::span<const double> params,
                        const Statevector& input_state) {
    if (static_cast<int>(params.size()) != spec.num_params)
        throw StructureError("expected " + std::to_string(spec.num_params) +
                             " parameters, got " + std::to_string(params.size()));
    if (input_state.num_qubits != spec.num_qubits)
        throw StructureError("input state qubit count does not match circuit");
    const auto angles = resolve_angles(spec.ops, params);
    return run_ops(spec.ops, angles, input_state);
}

MeasurementResult measure_analytic(const Statevector& state) {
    MeasurementResult r;
    r.shots_used = 0;
    r.basis_probs.resize(state.dim());
    for (std::size_t i = 0; i < state.dim(); ++i)
        r.basis_probs[i] = std::norm(state.amplitudes[i]);
    r.expectations.assign(static_cast<std::size_t>(state.num_qubits), 0.0);
    for (std::size_t i = 0; i < state.dim(); ++i) {
        const double p = r.basis_probs[i];
        for (int q = 0; q < state.num_qubits; ++q)
            r.expectations[static_cast<std::size_t>(q)] +=
                qubit_bit(i, q, state.num_qubits) ? -p : p;
    }
    return r;
}

MeasurementResult measure_shots(const Statevector& state, long shots,
                                std::uint64_t seed) {
    if (shots < 1) throw ConfigError("shots must be >= 1 (use measure_analytic for 0)");
    const auto analytic = measure_analytic(state);
    std::vector<double> cumulative(analytic.basis_probs.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < cumulative.size(); ++i) {
        acc += analytic.basis_probs[i];
        cumulative[i] = acc;
    }
    // guard against rounding: the last bucket always absorbs the tail
    cumulative.back() = 1.0;

    std::vector<long> counts(cumulative.size(), 0);
    Rng rng(seed);
    for (long s = 0; s < shots; ++s) {
        const double u = rng.uniform();
        const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        counts[static_cast<std::size_t>(it - cumulative.begin())]++;
    }

    MeasurementResult r;
    r.shots_used = shots;
    r.basis_probs.resize(counts.size());
    for (std::size_t i = 0; i < counts.size(); ++i)
        r.basis_probs[i] = static_cast<double>(counts[i]) / static_cast<double>(shots);
    r.expectations.assign(static_cast<std::size_t>(state.num_qubits), 0.0);
    for (std::size_t i = 0; i < r.basis_probs.size(); ++i) {
        const double p = r.basis_probs[i];
        for (int q = 0; q < state.num_qubits; ++q)
            r.expectations[static_cast<std::size_t>(q)] +=
                qubit_bit(i, q, state.num_qubits) ? -p : p;
    }
    return r;
}

std::vector<double> pauli_z_diag_weights(int num_qubits,
                                         std::span<const double> per_qubit) {
    if (static_cast<int>(per_qubit.size()) != num_qubits)
        throw ShapeError("per-qubit cotangent length must equal qubit count");
    std::vector<double> w(std::size_t{1} << num_qubits, 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) {
        double acc = 0.0;
        for (int q = 0; q < num_qubits; ++q)
            acc += qubit_bit(i, q, num_qubits) ? -per_qubit[static_cast<std::size_t>(q)]
                                               : per_qubit[static_cast<std::size_t>(q)];
        w[i] = acc;
    }
    return w;
}

double expectation_diag(const Statevector& state, std::span<const double> diag_weights) {
    if (diag_weights.size() != state.dim())
        throw ShapeError("diagonal weight length must equal state dimension");
    double acc = 0.0;
    for (std::size_t i = 0; i < state.dim(); ++i)
        acc += diag_weights[i] * std::norm(state.amplitudes[i]);
    return acc;
}

std::vector<double> gradient_parameter_shift_diag(const CircuitSpec& spec,
                                                  std::span<const double> params,
                                                  const Statevector& input_state,
                                                  std::span<const double> diag_weights) {
    if (static_cast<int>(params.size()) != spec.num_params)
        throw StructureError("parameter length mismatch");
    std::vector<double> grads(params.size(), 0.0);
    std::vector<double> shifted(params.begin(), params.end());
    constexpr double half_pi = 1.5707963267948966;
    for (std::size_t j = 0; j < params.size(); ++j) {
        shifted[j] = params[j] + half_pi;
        const double plus =
            expectation_diag(run_circuit(spec, shifted, input_state), diag_weights);
        shifted[j] = params[j] - half_pi;
        const double minus =
            expectation_diag(run_circuit(spec, shifted, input_state), diag_weights);
        shifted[j] = params[j];
        grads[j] = 0.5 * (plus - minus);
    }
    return grads;
}

std::vector<double> gradient_parameter_shift(const CircuitSpec& spec,
                                             std::span<const double> params,
                                             const Statevector& input_state,
                                             std::span<const double> cost_cotangent) {
    const auto weights = pauli_z_diag_weights(spec.num_qubits, cost_cotangent);
    return gradient_parameter_shift_diag(spec, params, input_state, weights);
}

TraceGradient adjoint_gradient_ops(std::span<const GateOp> ops,
                                   std::span<const double> angles,
                                   const Statevector& input_state,
                                   std::span<const double> diag_weights) {
    if (ops.size() != angles.size())
        throw StructureError("op/angle length mismatch");
    if (diag_weights.size() != input_state.dim())
        throw ShapeError("diagonal weight length must equal state dimension");

    // forward to the output state
    Statevector phi = run_ops(ops, angles, input_state);

    // mu starts as O |phi>; the loop keeps the invariant that before
    // processing gate k (in reverse), phi = U_k..U_1|psi0> and
    // mu = U_{k+1}^..U_n^ O |phi_final>
    Statevector mu = phi;
    for (std::size_t i = 0; i < mu.dim(); ++i) mu.amplitudes[i] *= diag_weights[i];

    TraceGradient out;
    out.op_grads.assign(ops.size(), 0.0);

    for (std::size_t k = ops.size(); k-- > 0;) {
        const GateOp& op = ops[k];
        if (op.is_rotation()) {
            // dU|psi_{k-1}> = (-i/2) sigma U|psi_{k-1}> = (-i/2) sigma |phi>
            Statevector ket = phi;
            apply_shifted_generator(ket, op.kind, op.target);
            out.op_grads[k] = 2.0 * inner_product(mu, ket).real();
            // undo the rotation on both vectors
            GateOp inverse = op;
            apply_gate_inplace(phi, inverse, -angles[k]);
            apply_gate_inplace(mu, inverse, -angles[k]);
        } else {
            apply_gate_inplace(phi, op, 0.0); // CNOT is self-inverse
            apply_gate_inplace(mu, op, 0.0);
        }
    }

    // mu is now U^ O U |psi0>; dL/dRe(a_i) = 2 Re(mu_i), dL/dIm(a_i) = 2 Im(mu_i)
    out.input_grads.resize(mu.dim());
    for (std::size_t i = 0; i < mu.dim(); ++i)
        out.input_grads[i] = 2.0 * mu.amplitudes[i];
    return out;
}

AdjointGradient gradient_adjoint_diag(const CircuitSpec& spec,
                                      std::span<const double> params,
                                      const Statevector& input_state,
                                      std::span<const double> diag_weights) {
    if (static_cast<int>(params.size()) != spec.num_params)
        throw StructureError("parameter length mismatch");
    const auto angles = resolve_angles(spec.ops, params);
    const auto trace =
        adjoint_gradient_ops(spec.ops, angles, input_state, diag_weights);
    AdjointGradient out;
    out.param_grads.assign(params.size(), 0.0);
    for (std::size_t k = 0; k < spec.ops.size(); ++k)
        if (spec.ops[k].is_rotation())
            out.param_grads[static_cast<std::size_t>(spec.ops[k].param_index)] +=
                trace.op_grads[k];
    out.input_grads = trace.input_grads;
    return out;
}

AdjointGradient gradient_adjoint(const CircuitSpec& spec,
                                 std::span<const double> params,
                                 const Statevector& input_state,
                                 std::span<const double> cost_cotangent) {
    const auto weights = pauli_z_diag_weights(spec.num_qubits, cost_cotangent);
    return gradient_adjoint_diag(spec, params, input_state, weights);
}

std::string circuit_to_text(const CircuitSpec& spec) {
    std::ostringstream out;
    out << "qcircuit v1\n";
    out << "qubits " << spec.num_qubits << "\n";
    out << "layers " << spec.layers << "\n";
    out << "params " << spec.num_params << "\n";
    for (const auto& op : spec.ops) {
        if (op.kind == GateKind::CNOT)
            out << "cnot " << op.control << " " << op.target << "\n";
        else
            out << gate_kind_name(op.kind) << " " << op.target << " " << op.param_index
                << "\n";
    }
    return out.str();
}

CircuitSpec circuit_from_text(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "qcircuit v1")
        throw FormatError("missing 'qcircuit v1' header");
    CircuitSpec spec;
    auto read_header = [&](const std::string& key) {
        if (!std::getline(in, line)) throw FormatError("truncated circuit header");
        std::istringstream ls(line);
        std::string k;
        int v;
        if (!(ls >> k >> v) || k != key)
            throw FormatError("expected '" + key + " <int>' line, got '" + line + "'");
        return v;
    };
    spec.num_qubits = read_header("qubits");
    spec.layers = read_header("layers");
    spec.num_params = read_header("params");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string kind;
        ls >> kind;
        if (kind == "cnot") {
            int c, t;
            if (!(ls >> c >> t)) throw FormatError("bad cnot line: " + line);
            spec.ops.push_back(GateOp::cnot(c, t));
        } else {
            GateKind k;
            if (kind == "rx") k = GateKind::RX;
            else if (kind == "ry") k = GateKind::RY;
            else if (kind == "rz") k = GateKind::RZ;
            else throw FormatError("unknown gate kind: " + kind);
            int t, p;
            if (!(ls >> t >> p)) throw FormatError("bad rotation line: " + line);
            spec.ops.push_back(GateOp::rotation(k, t, p));
        }
    }
    validate_circuit(spec);
    return spec;
}

} // namespace qdistill::qsim
