#include "hqlab/quantum.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace hqlab {

namespace {

void check_qubit(const QuantumState& s, int q, const char* who) {
    if (q < 0 || q >= s.n_qubits)
        throw std::invalid_argument(std::string(who) + ": qubit " + std::to_string(q) +
                                    " out of range for " + std::to_string(s.n_qubits) + " qubits");
}

}  // namespace

double QuantumState::norm() const {
    double s = 0.0;
    for (const auto& a : amplitudes) s += std::norm(a);
    return std::sqrt(s);
}

VqcParams VqcParams::zeros(int layers, int qubits) {
    VqcParams p;
    p.n_layers = layers;
    p.n_qubits = qubits;
    p.angles.assign(static_cast<size_t>(layers * qubits), 0.0);
    return p;
}

QuantumState init_state(int n_qubits) {
    if (n_qubits < 1 || n_qubits > kMaxQubits)
        throw std::invalid_argument("init_state: n_qubits " + std::to_string(n_qubits) +
                                    " outside supported range [1," + std::to_string(kMaxQubits) + "]");
    QuantumState s;
    s.n_qubits = n_qubits;
    s.amplitudes.assign(static_cast<size_t>(1) << n_qubits, {0.0, 0.0});
    s.amplitudes[0] = {1.0, 0.0};
    return s;
}

void apply_h(QuantumState& state, int qubit) {
    check_qubit(state, qubit, "apply_h");
    const size_t bit = static_cast<size_t>(1) << qubit;
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    auto& a = state.amplitudes;
    for (size_t i = 0; i < a.size(); ++i) {
        if (i & bit) continue;
        const auto a0 = a[i];
        const auto a1 = a[i | bit];
        a[i] = inv_sqrt2 * (a0 + a1);
        a[i | bit] = inv_sqrt2 * (a0 - a1);
    }
}

void apply_ry(QuantumState& state, int qubit, double theta) {
    check_qubit(state, qubit, "apply_ry");
    const size_t bit = static_cast<size_t>(1) << qubit;
    const double c = std::cos(theta / 2.0);
    const double s = std::sin(theta / 2.0);
    auto& a = state.amplitudes;
    for (size_t i = 0; i < a.size(); ++i) {
        if (i & bit) continue;
        const auto a0 = a[i];
        const auto a1 = a[i | bit];
        a[i] = c * a0 - s * a1;
        a[i | bit] = s * a0 + c * a1;
    }
}

void apply_cnot(QuantumState& state, int control, int target) {
    check_qubit(state, control, "apply_cnot");
    check_qubit(state, target, "apply_cnot");
    if (control == target) throw std::invalid_argument("apply_cnot: control equals target");
    const size_t cbit = static_cast<size_t>(1) << control;
    const size_t tbit = static_cast<size_t>(1) << target;
    auto& a = state.amplitudes;
    for (size_t i = 0; i < a.size(); ++i) {
        if ((i & cbit) && !(i & tbit)) std::swap(a[i], a[i | tbit]);
    }
}

double expectation_z(const QuantumState& state, int qubit) {
    check_qubit(state, qubit, "expectation_z");
    const size_t bit = static_cast<size_t>(1) << qubit;
    double e = 0.0;
    for (size_t i = 0; i < state.amplitudes.size(); ++i) {
        const double p = std::norm(state.amplitudes[i]);
        e += (i & bit) ? -p : p;
    }
    return e;
}

std::vector<double> all_expectations_z(const QuantumState& state) {
    std::vector<double> e(static_cast<size_t>(state.n_qubits), 0.0);
    for (size_t i = 0; i < state.amplitudes.size(); ++i) {
        const double p = std::norm(state.amplitudes[i]);
        for (int q = 0; q < state.n_qubits; ++q)
            e[static_cast<size_t>(q)] += (i >> q) & 1 ? -p : p;
    }
    return e;
}

double encode_angle(double feature) { return (M_PI / 2.0) * std::tanh(feature); }

QuantumState angle_encode(const std::vector<double>& features) {
    const int n = static_cast<int>(features.size());
    QuantumState s = init_state(n);
    for (int q = 0; q < n; ++q) apply_h(s, q);
    for (int q = 0; q < n; ++q) apply_ry(s, q, encode_angle(features[static_cast<size_t>(q)]));
    return s;
}

namespace {

/// Runs the circuit with explicit encoding angles (post-squash) so the
/// parameter-shift rule can shift them directly.
std::vector<double> run_circuit(const std::vector<double>& encode_angles, const VqcParams& params,
                                const VqcArchitecture& arch) {
    QuantumState s = init_state(arch.n_qubits);
    if (arch.encode_hadamard)
        for (int q = 0; q < arch.n_qubits; ++q) apply_h(s, q);
    for (int q = 0; q < arch.n_qubits; ++q) apply_ry(s, q, encode_angles[static_cast<size_t>(q)]);
    for (int l = 0; l < arch.n_layers; ++l) {
        for (int q = 0; q < arch.n_qubits; ++q) apply_ry(s, q, params.angle(l, q));
        if (arch.n_qubits > 1)
            for (int q = 0; q < arch.n_qubits; ++q) apply_cnot(s, q, (q + 1) % arch.n_qubits);
    }
    return all_expectations_z(s);
}

void check_vqc_shapes(const std::vector<double>& features, const VqcParams& params,
                      const VqcArchitecture& arch) {
    if (arch.n_layers < 1) throw std::invalid_argument("vqc: n_layers must be >= 1");
    if (static_cast<int>(features.size()) != arch.n_qubits)
        throw std::invalid_argument("vqc: feature count " + std::to_string(features.size()) +
                                    " != n_qubits " + std::to_string(arch.n_qubits));
    if (params.n_layers != arch.n_layers || params.n_qubits != arch.n_qubits)
        throw std::invalid_argument("vqc: params are [" + std::to_string(params.n_layers) + "x" +
                                    std::to_string(params.n_qubits) + "] but architecture wants [" +
                                    std::to_string(arch.n_layers) + "x" +
                                    std::to_string(arch.n_qubits) + "]");
}

}  // namespace

std::vector<double> vqc_forward(const std::vector<double>& features, const VqcParams& params,
                                const VqcArchitecture& arch) {
    check_vqc_shapes(features, params, arch);
    std::vector<double> enc(features.size());
    for (size_t i = 0; i < features.size(); ++i) enc[i] = encode_angle(features[i]);
    return run_circuit(enc, params, arch);
}

VqcGradients vqc_gradients(const std::vector<double>& features, const VqcParams& params,
                           const VqcArchitecture& arch, const std::vector<double>& upstream) {
    check_vqc_shapes(features, params, arch);
    if (upstream.size() != features.size())
        throw std::invalid_argument("vqc_gradients: upstream length mismatch");
    const int n = arch.n_qubits;
    const double half_pi = M_PI / 2.0;

    std::vector<double> enc(features.size());
    for (size_t i = 0; i < features.size(); ++i) enc[i] = encode_angle(features[i]);

    auto shifted_pair = [&](std::vector<double> enc_angles, VqcParams p, int layer,
                            int qubit) -> std::vector<double> {
        // d(sum_q u_q <Z_q>)/d(angle) = (f(+pi/2) - f(-pi/2)) / 2 per output,
        // contracted with upstream
        auto bump = [&](double delta) {
            if (layer < 0)
                enc_angles[static_cast<size_t>(qubit)] += delta;
            else
                p.angle(layer, qubit) += delta;
            auto z = run_circuit(enc_angles, p, arch);
            if (layer < 0)
                enc_angles[static_cast<size_t>(qubit)] -= delta;
            else
                p.angle(layer, qubit) -= delta;
            return z;
        };
        const auto plus = bump(half_pi);
        const auto minus = bump(-half_pi);
        std::vector<double> d(plus.size());
        for (size_t i = 0; i < plus.size(); ++i) d[i] = (plus[i] - minus[i]) / 2.0;
        return d;
    };

    VqcGradients out;
    out.grad_params.assign(params.angles.size(), 0.0);
    out.grad_features.assign(features.size(), 0.0);

    for (int l = 0; l < arch.n_layers; ++l) {
        for (int q = 0; q < n; ++q) {
            const auto d = shifted_pair(enc, params, l, q);
            double acc = 0.0;
            for (size_t i = 0; i < d.size(); ++i) acc += upstream[i] * d[i];
            out.grad_params[static_cast<size_t>(l * n + q)] = acc;
        }
    }
    for (int q = 0; q < n; ++q) {
        const auto d = shifted_pair(enc, params, -1, q);
        double acc = 0.0;
        for (size_t i = 0; i < d.size(); ++i) acc += upstream[i] * d[i];
        // chain through a = (pi/2) tanh(f): da/df = (pi/2)(1 - tanh^2 f)
        const double t = std::tanh(features[static_cast<size_t>(q)]);
        out.grad_features[static_cast<size_t>(q)] = acc * (M_PI / 2.0) * (1.0 - t * t);
    }
    return out;
}

Tensor vqc_layer(Tape& tape, const Tensor& features, const Tensor& params_tensor,
                 const VqcArchitecture& arch) {
    VqcParams p;
    p.n_layers = arch.n_layers;
    p.n_qubits = arch.n_qubits;
    p.angles = params_tensor.data;
    const std::vector<double> feats = features.data;
    std::vector<double> z = vqc_forward(feats, p, arch);
    Tensor out({arch.n_qubits}, std::move(z));

    const int fn = features.node, pn = params_tensor.node;
    if (fn < 0 && pn < 0) return out;
    std::vector<int> parents;
    if (fn >= 0) parents.push_back(fn);
    if (pn >= 0) parents.push_back(pn);
    out.node = tape.record(arch.n_qubits, parents,
                           [fn, pn, feats, p, arch](const double* up, GradientSet& g) {
                               std::vector<double> u(up, up + arch.n_qubits);
                               const VqcGradients vg = vqc_gradients(feats, p, arch, u);
                               if (pn >= 0) {
                                   auto& gp = g[static_cast<size_t>(pn)];
                                   for (size_t i = 0; i < vg.grad_params.size(); ++i)
                                       gp[i] += vg.grad_params[i];
                               }
                               if (fn >= 0) {
                                   auto& gf = g[static_cast<size_t>(fn)];
                                   for (size_t i = 0; i < vg.grad_features.size(); ++i)
                                       gf[i] += vg.grad_features[i];
                               }
                           });
    return out;
}

}  // namespace hqlab
