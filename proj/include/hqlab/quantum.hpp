#pragma once

#include <complex>
#include <vector>

#include "hqlab/tensor.hpp"

namespace hqlab {

/// Full statevector of an n-qubit register. Qubit q maps to bit q of the
/// amplitude index (qubit 0 is the least significant bit), so a ket written
/// |q0 q1 ... ⟩ reads left to right from bit 0.
struct QuantumState {
    int n_qubits = 0;
    std::vector<std::complex<double>> amplitudes;

    double norm() const;
};

/// Layered ansatz: optional Hadamard wall before encoding, then per layer an
/// RY rotation on every qubit followed by a ring of CNOTs
/// (control q -> target (q+1) mod n; skipped for a single qubit).
struct VqcArchitecture {
    int n_qubits = 4;
    int n_layers = 2;
    bool encode_hadamard = true;  // test hook: false skips the H wall
};

/// Rotation angles, row l = layer, column q = qubit.
struct VqcParams {
    int n_layers = 0;
    int n_qubits = 0;
    std::vector<double> angles;  // row-major [n_layers * n_qubits]

    static VqcParams zeros(int layers, int qubits);
    double& angle(int layer, int qubit) { return angles[static_cast<size_t>(layer * n_qubits + qubit)]; }
    double angle(int layer, int qubit) const { return angles[static_cast<size_t>(layer * n_qubits + qubit)]; }
};

/// Supported range is bounded by statevector memory (2^n amplitudes).
constexpr int kMaxQubits = 14;

/// |0...0⟩ on n qubits.
QuantumState init_state(int n_qubits);

// In-place gate application. All preserve the norm.
void apply_h(QuantumState& state, int qubit);
void apply_ry(QuantumState& state, int qubit, double theta);
void apply_cnot(QuantumState& state, int control, int target);

/// ⟨Z_q⟩ = P(bit q = 0) - P(bit q = 1), in [-1, 1].
double expectation_z(const QuantumState& state, int qubit);
std::vector<double> all_expectations_z(const QuantumState& state);

/// Feature-to-angle squash a_i = (pi/2) * tanh(f_i).
double encode_angle(double feature);

/// H wall then RY(encode_angle(f_q)) per qubit from |0...0⟩.
QuantumState angle_encode(const std::vector<double>& features);

/// Full circuit: encode, then n_layers of (RY row, CNOT ring). Returns
/// ⟨Z_q⟩ for every qubit.
std::vector<double> vqc_forward(const std::vector<double>& features, const VqcParams& params,
                                const VqcArchitecture& arch);

/// Exact parameter-shift gradients of sum_q upstream[q] * ⟨Z_q⟩ w.r.t. the
/// variational angles and the raw features (chained through the tanh
/// squash). 2*(n_layers+1)*n_qubits circuit evaluations.
struct VqcGradients {
    std::vector<double> grad_params;    // [n_layers * n_qubits]
    std::vector<double> grad_features;  // [n_qubits]
};
VqcGradients vqc_gradients(const std::vector<double>& features, const VqcParams& params,
                           const VqcArchitecture& arch, const std::vector<double>& upstream);

/// Tape node wrapping vqc_forward; backward applies the parameter-shift
/// rule. `features` and `params_tensor` may each be tracked or constant.
/// params_tensor holds the angles row-major [n_layers, n_qubits].
Tensor vqc_layer(Tape& tape, const Tensor& features, const Tensor& params_tensor,
                 const VqcArchitecture& arch);

}  // namespace hqlab
