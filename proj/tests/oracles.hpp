// Independent reference implementations the tests compare against. These
// deliberately avoid the library's code paths: plain nested loops, dense
// matrices, and direct formulas only.
#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <stdexcept>
#include <vector>

namespace oracle {

// Cross-correlation by direct summation. input [C_in,H,W], kernels
// [C_out,C_in,k,k], one bias per output channel.
inline std::vector<double> conv2d(const std::vector<double>& input, int c_in, int h, int w,
                                  const std::vector<double>& kernels, int c_out, int k,
                                  const std::vector<double>& bias, int stride, int padding,
                                  int& out_h, int& out_w) {
    out_h = (h + 2 * padding - k) / stride + 1;
    out_w = (w + 2 * padding - k) / stride + 1;
    std::vector<double> out(static_cast<size_t>(c_out) * out_h * out_w);
    for (int oc = 0; oc < c_out; ++oc) {
        for (int oy = 0; oy < out_h; ++oy) {
            for (int ox = 0; ox < out_w; ++ox) {
                double acc = bias[static_cast<size_t>(oc)];
                for (int ic = 0; ic < c_in; ++ic) {
                    for (int ky = 0; ky < k; ++ky) {
                        for (int kx = 0; kx < k; ++kx) {
                            int iy = oy * stride + ky - padding;
                            int ix = ox * stride + kx - padding;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                            acc += input[static_cast<size_t>((ic * h + iy) * w + ix)] *
                                   kernels[static_cast<size_t>(((oc * c_in + ic) * k + ky) * k + kx)];
                        }
                    }
                }
                out[static_cast<size_t>((oc * out_h + oy) * out_w + ox)] = acc;
            }
        }
    }
    return out;
}

inline std::vector<double> matvec(const std::vector<double>& w_rows, int m, int n,
                                  const std::vector<double>& x, const std::vector<double>& b) {
    std::vector<double> out(static_cast<size_t>(m));
    for (int i = 0; i < m; ++i) {
        double acc = b[static_cast<size_t>(i)];
        for (int j = 0; j < n; ++j) {
            acc += w_rows[static_cast<size_t>(i * n + j)] * x[static_cast<size_t>(j)];
        }
        out[static_cast<size_t>(i)] = acc;
    }
    return out;
}

// Central finite difference of a scalar functional at one coordinate.
inline double central_diff(const std::function<double()>& f, double& coord, double h) {
    const double saved = coord;
    coord = saved + h;
    const double up = f();
    coord = saved - h;
    const double down = f();
    coord = saved;
    return (up - down) / (2.0 * h);
}

inline double rel_err(double a, double b, double floor = 1e-8) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// ---- dense quantum circuit oracle -------------------------------------------
// Builds full 2^n x 2^n matrices and multiplies them against the state.
// Qubit q lives at bit q of the basis index.

using cvec = std::vector<std::complex<double>>;
using cmat = std::vector<std::vector<std::complex<double>>>;

inline cmat identity_matrix(int dim) {
    cmat m(static_cast<size_t>(dim), std::vector<std::complex<double>>(static_cast<size_t>(dim)));
    for (int i = 0; i < dim; ++i) m[static_cast<size_t>(i)][static_cast<size_t>(i)] = 1.0;
    return m;
}

// Embeds a 2x2 single-qubit gate acting on the given qubit.
inline cmat embed_single(int n_qubits, int qubit, const std::complex<double> g[2][2]) {
    const int dim = 1 << n_qubits;
    cmat m(static_cast<size_t>(dim), std::vector<std::complex<double>>(static_cast<size_t>(dim)));
    for (int col = 0; col < dim; ++col) {
        const int bit = (col >> qubit) & 1;
        for (int newbit = 0; newbit < 2; ++newbit) {
            const int row = (col & ~(1 << qubit)) | (newbit << qubit);
            m[static_cast<size_t>(row)][static_cast<size_t>(col)] +=
                g[static_cast<size_t>(newbit)][static_cast<size_t>(bit)];
        }
    }
    return m;
}

inline cmat h_matrix(int n_qubits, int qubit) {
    const double s = 1.0 / std::sqrt(2.0);
    const std::complex<double> g[2][2] = {{s, s}, {s, -s}};
    return embed_single(n_qubits, qubit, g);
}

inline cmat ry_matrix(int n_qubits, int qubit, double theta) {
    const double c = std::cos(theta / 2.0), s = std::sin(theta / 2.0);
    const std::complex<double> g[2][2] = {{c, -s}, {s, c}};
    return embed_single(n_qubits, qubit, g);
}

inline cmat cnot_matrix(int n_qubits, int control, int target) {
    const int dim = 1 << n_qubits;
    cmat m(static_cast<size_t>(dim), std::vector<std::complex<double>>(static_cast<size_t>(dim)));
    for (int col = 0; col < dim; ++col) {
        int row = col;
        if ((col >> control) & 1) row = col ^ (1 << target);
        m[static_cast<size_t>(row)][static_cast<size_t>(col)] = 1.0;
    }
    return m;
}

inline cvec apply_matrix(const cmat& m, const cvec& v) {
    cvec out(v.size());
    for (size_t r = 0; r < v.size(); ++r) {
        std::complex<double> acc = 0.0;
        for (size_t c = 0; c < v.size(); ++c) acc += m[r][c] * v[c];
        out[r] = acc;
    }
    return out;
}

inline double z_expectation(const cvec& v, int qubit) {
    double e = 0.0;
    for (size_t i = 0; i < v.size(); ++i) {
        const double p = std::norm(v[i]);
        e += ((i >> qubit) & 1) ? -p : p;
    }
    return e;
}

// Full circuit by dense matrix products: H wall, RY(pi/2*tanh f) encode,
// then per layer RY row + CNOT ring.
inline std::vector<double> vqc_dense(const std::vector<double>& features,
                                     const std::vector<double>& angles, int n_layers,
                                     bool hadamard_wall) {
    const int n = static_cast<int>(features.size());
    const int dim = 1 << n;
    cvec state(static_cast<size_t>(dim));
    state[0] = 1.0;
    if (hadamard_wall) {
        for (int q = 0; q < n; ++q) state = apply_matrix(h_matrix(n, q), state);
    }
    for (int q = 0; q < n; ++q) {
        const double a = M_PI_2 * std::tanh(features[static_cast<size_t>(q)]);
        state = apply_matrix(ry_matrix(n, q, a), state);
    }
    for (int l = 0; l < n_layers; ++l) {
        for (int q = 0; q < n; ++q) {
            state = apply_matrix(ry_matrix(n, q, angles[static_cast<size_t>(l * n + q)]), state);
        }
        if (n > 1) {
            for (int q = 0; q < n; ++q) {
                state = apply_matrix(cnot_matrix(n, q, (q + 1) % n), state);
            }
        }
    }
    std::vector<double> exps(static_cast<size_t>(n));
    for (int q = 0; q < n; ++q) exps[static_cast<size_t>(q)] = z_expectation(state, q);
    return exps;
}

// ---- multi-objective oracles -------------------------------------------------

// Repeatedly peels the non-dominated subset. O(N^2) per front.
inline std::vector<std::vector<size_t>> fronts_brute_force(
    const std::vector<std::pair<double, double>>& fit) {
    auto dominates = [](const std::pair<double, double>& a, const std::pair<double, double>& b) {
        return a.first <= b.first && a.second <= b.second &&
               (a.first < b.first || a.second < b.second);
    };
    std::vector<std::vector<size_t>> fronts;
    std::vector<char> assigned(fit.size(), 0);
    size_t remaining = fit.size();
    while (remaining > 0) {
        std::vector<size_t> front;
        for (size_t i = 0; i < fit.size(); ++i) {
            if (assigned[i]) continue;
            bool dominated = false;
            for (size_t j = 0; j < fit.size(); ++j) {
                if (assigned[j] || i == j) continue;
                if (dominates(fit[j], fit[i])) {
                    dominated = true;
                    break;
                }
            }
            if (!dominated) front.push_back(i);
        }
        for (size_t i : front) assigned[i] = 1;
        remaining -= front.size();
        fronts.push_back(std::move(front));
    }
    return fronts;
}

// Hypervolume of a 2-objective front against a reference point, by sweeping
// points sorted on the first objective.
inline double hypervolume_2d(std::vector<std::pair<double, double>> front, double ref1,
                             double ref2) {
    std::sort(front.begin(), front.end());
    double volume = 0.0;
    double prev_f2 = ref2;
    for (const auto& [f1, f2] : front) {
        if (f1 >= ref1 || f2 >= prev_f2) continue;
        volume += (ref1 - f1) * (prev_f2 - f2);
        prev_f2 = f2;
    }
    return volume;
}

// ---- image similarity oracle -------------------------------------------------
// Windowed SSIM written directly from the formula, one channel at a time.
inline double ssim_direct(const std::vector<double>& a, const std::vector<double>& b, int channels,
                          int h, int w) {
    const int win = 11;
    const double sigma = 1.5, k1 = 0.01, k2 = 0.03, L = 1.0;
    std::vector<double> g(static_cast<size_t>(win) * win);
    {
        double sum = 0.0;
        for (int y = 0; y < win; ++y) {
            for (int x = 0; x < win; ++x) {
                const double dy = y - 5.0, dx = x - 5.0;
                g[static_cast<size_t>(y * win + x)] =
                    std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
                sum += g[static_cast<size_t>(y * win + x)];
            }
        }
        for (auto& v : g) v /= sum;
    }
    const double c1 = (k1 * L) * (k1 * L), c2 = (k2 * L) * (k2 * L);
    double channel_total = 0.0;
    for (int ch = 0; ch < channels; ++ch) {
        const double* pa = a.data() + static_cast<size_t>(ch) * h * w;
        const double* pb = b.data() + static_cast<size_t>(ch) * h * w;
        double total = 0.0;
        int count = 0;
        for (int y = 0; y + win <= h; ++y) {
            for (int x = 0; x + win <= w; ++x) {
                double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
                for (int wy = 0; wy < win; ++wy) {
                    for (int wx = 0; wx < win; ++wx) {
                        const double gv = g[static_cast<size_t>(wy * win + wx)];
                        const double va = pa[(y + wy) * w + (x + wx)];
                        const double vb = pb[(y + wy) * w + (x + wx)];
                        ma += gv * va;
                        mb += gv * vb;
                        saa += gv * va * va;
                        sbb += gv * vb * vb;
                        sab += gv * va * vb;
                    }
                }
                const double var_a = saa - ma * ma;
                const double var_b = sbb - mb * mb;
                const double cov = sab - ma * mb;
                total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
                         ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
                ++count;
            }
        }
        channel_total += total / count;
    }
    return channel_total / channels;
}

inline double shannon_entropy_nats(const std::vector<double>& probs) {
    double e = 0.0;
    for (double p : probs) {
        if (p > 0.0) e -= p * std::log(p);
    }
    return e;
}

}  // namespace oracle
