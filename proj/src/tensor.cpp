#include "hqlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace hqlab {

namespace {

int shape_numel(const std::vector<int>& s) {
    int n = 1;
    for (int e : s) {
        if (e <= 0) throw std::invalid_argument("tensor: non-positive extent in shape");
        n *= e;
    }
    return n;
}

[[noreturn]] void shape_error(const std::string& op, const std::string& msg) {
    throw std::invalid_argument(op + ": " + msg);
}

}  // namespace

Tensor::Tensor(std::vector<int> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(shape_numel(shape)), 0.0);
}

Tensor::Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (shape_numel(shape) != static_cast<int>(data.size()))
        throw std::invalid_argument("tensor: shape/data length mismatch");
}

Tensor Tensor::full(std::vector<int> s, double v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
}

Tensor Tensor::vec(std::vector<double> d) {
    const int n = static_cast<int>(d.size());
    return Tensor({n}, std::move(d));
}

double& Tensor::at3(int c, int h, int w) {
    return data[static_cast<size_t>((c * shape[1] + h) * shape[2] + w)];
}

double Tensor::at3(int c, int h, int w) const {
    return data[static_cast<size_t>((c * shape[1] + h) * shape[2] + w)];
}

std::string Tensor::shape_str() const {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

bool Tensor::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

Tensor Tensor::reshaped(std::vector<int> s) const {
    if (shape_numel(s) != numel())
        throw std::invalid_argument("reshape: element count mismatch (" + shape_str() + ")");
    Tensor t = *this;
    t.shape = std::move(s);
    return t;
}

// ---- tape -------------------------------------------------------------------

int Tape::leaf(int size) {
    nodes_.push_back(Node{size, nullptr});
    return static_cast<int>(nodes_.size()) - 1;
}

int Tape::watch(Tensor& t) {
    t.node = leaf(t.numel());
    return t.node;
}

int Tape::record(int size, const std::vector<int>& parents, BackwardFn fn) {
    const int id = static_cast<int>(nodes_.size());
    for (int p : parents) {
        if (p < 0 || p >= id)
            throw std::logic_error("tape: parent " + std::to_string(p) +
                                   " does not precede node " + std::to_string(id) +
                                   " (cyclic or dangling tape)");
    }
    nodes_.push_back(Node{size, std::move(fn)});
    return id;
}

GradientSet Tape::backward(int loss_node) const {
    if (loss_node < 0 || loss_node >= node_count())
        throw std::invalid_argument("backward: loss node out of range");
    if (nodes_[static_cast<size_t>(loss_node)].size != 1)
        throw std::invalid_argument("backward: loss node is not scalar");
    GradientSet grads(nodes_.size());
    for (size_t i = 0; i < nodes_.size(); ++i) grads[i].assign(static_cast<size_t>(nodes_[i].size), 0.0);
    grads[static_cast<size_t>(loss_node)][0] = 1.0;
    for (int i = loss_node; i >= 0; --i) {
        const Node& n = nodes_[static_cast<size_t>(i)];
        if (n.fn) n.fn(grads[static_cast<size_t>(i)].data(), grads);
    }
    return grads;
}

// ---- ops --------------------------------------------------------------------

Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& kernels, const Tensor& bias,
              int stride, int padding) {
    if (input.ndim() != 3) shape_error("conv2d", "input must be [C,H,W], got " + input.shape_str());
    if (kernels.ndim() != 4)
        shape_error("conv2d", "kernels must be [C_out,C_in,k,k], got " + kernels.shape_str());
    const int c_in = input.dim(0), h = input.dim(1), w = input.dim(2);
    const int c_out = kernels.dim(0), k = kernels.dim(2);
    if (kernels.dim(1) != c_in)
        shape_error("conv2d", "kernel input-channel axis is " + std::to_string(kernels.dim(1)) +
                                  " but input has " + std::to_string(c_in) + " channels");
    if (kernels.dim(3) != k) shape_error("conv2d", "kernel must be square, got " + kernels.shape_str());
    if (bias.numel() != c_out)
        shape_error("conv2d", "bias length " + std::to_string(bias.numel()) + " != C_out " +
                                  std::to_string(c_out));
    if (stride < 1) shape_error("conv2d", "stride must be >= 1");
    if (k > h + 2 * padding || k > w + 2 * padding)
        shape_error("conv2d", "kernel size " + std::to_string(k) + " exceeds padded input");

    const int oh = (h + 2 * padding - k) / stride + 1;
    const int ow = (w + 2 * padding - k) / stride + 1;
    Tensor out({c_out, oh, ow});

    const double* in = input.data.data();
    const double* kn = kernels.data.data();
    for (int o = 0; o < c_out; ++o) {
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                double acc = bias.at(o);
                for (int c = 0; c < c_in; ++c) {
                    for (int i = 0; i < k; ++i) {
                        const int iy = y * stride + i - padding;
                        if (iy < 0 || iy >= h) continue;
                        const double* in_row = in + (c * h + iy) * w;
                        const double* k_row = kn + ((o * c_in + c) * k + i) * k;
                        for (int j = 0; j < k; ++j) {
                            const int ix = x * stride + j - padding;
                            if (ix < 0 || ix >= w) continue;
                            acc += in_row[ix] * k_row[j];
                        }
                    }
                }
                out.at3(o, y, x) = acc;
            }
        }
    }

    const int in_node = input.node, k_node = kernels.node, b_node = bias.node;
    if (in_node < 0 && k_node < 0 && b_node < 0) return out;

    std::vector<int> parents;
    for (int p : {in_node, k_node, b_node})
        if (p >= 0) parents.push_back(p);
    // backward needs the forward values of input and kernels
    std::vector<double> in_copy = input.data, k_copy = kernels.data;
    out.node = tape.record(
        out.numel(), parents,
        [=, in_copy = std::move(in_copy), k_copy = std::move(k_copy)](const double* up, GradientSet& g) {
            double* gi = in_node >= 0 ? g[static_cast<size_t>(in_node)].data() : nullptr;
            double* gk = k_node >= 0 ? g[static_cast<size_t>(k_node)].data() : nullptr;
            double* gb = b_node >= 0 ? g[static_cast<size_t>(b_node)].data() : nullptr;
            for (int o = 0; o < c_out; ++o) {
                for (int y = 0; y < oh; ++y) {
                    for (int x = 0; x < ow; ++x) {
                        const double u = up[(o * oh + y) * ow + x];
                        if (gb) gb[o] += u;
                        for (int c = 0; c < c_in; ++c) {
                            for (int i = 0; i < k; ++i) {
                                const int iy = y * stride + i - padding;
                                if (iy < 0 || iy >= h) continue;
                                for (int j = 0; j < k; ++j) {
                                    const int ix = x * stride + j - padding;
                                    if (ix < 0 || ix >= w) continue;
                                    const size_t ii = static_cast<size_t>((c * h + iy) * w + ix);
                                    const size_t ki = static_cast<size_t>(((o * c_in + c) * k + i) * k + j);
                                    if (gi) gi[ii] += u * k_copy[ki];
                                    if (gk) gk[ki] += u * in_copy[ii];
                                }
                            }
                        }
                    }
                }
            }
        });
    return out;
}

Tensor linear(Tape& tape, const Tensor& input, const Tensor& weights, const Tensor& bias) {
    if (weights.ndim() != 2) shape_error("linear", "weights must be [M,N], got " + weights.shape_str());
    const int m = weights.dim(0), n = weights.dim(1);
    if (input.numel() != n)
        shape_error("linear", "input length " + std::to_string(input.numel()) + " != weight columns " +
                                  std::to_string(n));
    if (bias.numel() != m)
        shape_error("linear", "bias length " + std::to_string(bias.numel()) + " != weight rows " +
                                  std::to_string(m));

    Tensor out({m});
    for (int i = 0; i < m; ++i) {
        double acc = bias.at(i);
        const double* row = weights.data.data() + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) acc += row[j] * input.at(j);
        out.at(i) = acc;
    }

    const int in_node = input.node, w_node = weights.node, b_node = bias.node;
    if (in_node < 0 && w_node < 0 && b_node < 0) return out;

    std::vector<int> parents;
    for (int p : {in_node, w_node, b_node})
        if (p >= 0) parents.push_back(p);
    std::vector<double> in_copy = input.data, w_copy = weights.data;
    out.node = tape.record(
        m, parents,
        [=, in_copy = std::move(in_copy), w_copy = std::move(w_copy)](const double* up, GradientSet& g) {
            for (int i = 0; i < m; ++i) {
                const double u = up[i];
                if (b_node >= 0) g[static_cast<size_t>(b_node)][static_cast<size_t>(i)] += u;
                for (int j = 0; j < n; ++j) {
                    if (in_node >= 0)
                        g[static_cast<size_t>(in_node)][static_cast<size_t>(j)] +=
                            u * w_copy[static_cast<size_t>(i * n + j)];
                    if (w_node >= 0)
                        g[static_cast<size_t>(w_node)][static_cast<size_t>(i * n + j)] +=
                            u * in_copy[static_cast<size_t>(j)];
                }
            }
        });
    return out;
}

Tensor relu(Tape& tape, const Tensor& x) {
    Tensor out = x;
    out.node = -1;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    if (x.node < 0) return out;
    std::vector<uint8_t> mask(x.data.size());
    for (size_t i = 0; i < x.data.size(); ++i) mask[i] = x.data[i] > 0.0 ? 1 : 0;
    const int xn = x.node;
    out.node = tape.record(out.numel(), {xn},
                           [xn, mask = std::move(mask)](const double* up, GradientSet& g) {
                               auto& gx = g[static_cast<size_t>(xn)];
                               for (size_t i = 0; i < mask.size(); ++i)
                                   if (mask[i]) gx[i] += up[i];
                           });
    return out;
}

Tensor max_pool2(Tape& tape, const Tensor& x) {
    if (x.ndim() != 3) shape_error("max_pool2", "input must be [C,H,W], got " + x.shape_str());
    const int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (h % 2 != 0 || w % 2 != 0)
        shape_error("max_pool2", "spatial dims must be even, got " + x.shape_str());
    const int oh = h / 2, ow = w / 2;
    Tensor out({c, oh, ow});
    std::vector<int> argmax(static_cast<size_t>(out.numel()));
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < oh; ++y) {
            for (int z = 0; z < ow; ++z) {
                double best = -1e308;
                int best_i = -1;
                // row-major window order; strict > keeps the first index on ties
                for (int dy = 0; dy < 2; ++dy) {
                    for (int dz = 0; dz < 2; ++dz) {
                        const int idx = (ch * h + 2 * y + dy) * w + 2 * z + dz;
                        if (x.at(idx) > best) {
                            best = x.at(idx);
                            best_i = idx;
                        }
                    }
                }
                out.at3(ch, y, z) = best;
                argmax[static_cast<size_t>((ch * oh + y) * ow + z)] = best_i;
            }
        }
    }
    if (x.node < 0) return out;
    const int xn = x.node;
    out.node = tape.record(out.numel(), {xn},
                           [xn, argmax = std::move(argmax)](const double* up, GradientSet& g) {
                               auto& gx = g[static_cast<size_t>(xn)];
                               for (size_t i = 0; i < argmax.size(); ++i)
                                   gx[static_cast<size_t>(argmax[i])] += up[i];
                           });
    return out;
}

std::vector<double> softmax(const std::vector<double>& logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        z += p[i];
    }
    for (double& v : p) v /= z;
    return p;
}

Tensor softmax_cross_entropy(Tape& tape, const Tensor& logits, int label) {
    const int k = logits.numel();
    if (label < 0 || label >= k)
        throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(label) +
                                    " out of range [0," + std::to_string(k) + ")");
    const double mx = *std::max_element(logits.data.begin(), logits.data.end());
    double z = 0.0;
    for (double v : logits.data) z += std::exp(v - mx);
    const double loss = std::log(z) - (logits.at(label) - mx);
    Tensor out({1}, {loss});
    if (logits.node < 0) return out;
    std::vector<double> probs = softmax(logits.data);
    const int ln = logits.node;
    out.node = tape.record(1, {ln},
                           [ln, label, probs = std::move(probs)](const double* up, GradientSet& g) {
                               auto& gl = g[static_cast<size_t>(ln)];
                               for (size_t i = 0; i < probs.size(); ++i) {
                                   double d = probs[i];
                                   if (static_cast<int>(i) == label) d -= 1.0;
                                   gl[i] += up[0] * d;
                               }
                           });
    return out;
}

namespace {

Tensor elementwise_binary(Tape& tape, const Tensor& a, const Tensor& b, const char* name,
                          const std::function<double(double, double)>& f,
                          const std::function<double(double, double)>& dfa,
                          const std::function<double(double, double)>& dfb) {
    if (!a.same_shape(b))
        shape_error(name, "shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    Tensor out(a.shape);
    for (int i = 0; i < a.numel(); ++i) out.at(i) = f(a.at(i), b.at(i));
    if (a.node < 0 && b.node < 0) return out;
    const int an = a.node, bn = b.node;
    std::vector<double> av = a.data, bv = b.data;
    out.node = tape.record(
        out.numel(), [&] {
            std::vector<int> ps;
            if (an >= 0) ps.push_back(an);
            if (bn >= 0) ps.push_back(bn);
            return ps;
        }(),
        [=, av = std::move(av), bv = std::move(bv)](const double* up, GradientSet& g) {
            for (size_t i = 0; i < av.size(); ++i) {
                if (an >= 0) g[static_cast<size_t>(an)][i] += up[i] * dfa(av[i], bv[i]);
                if (bn >= 0) g[static_cast<size_t>(bn)][i] += up[i] * dfb(av[i], bv[i]);
            }
        });
    return out;
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    return elementwise_binary(
        tape, a, b, "add", [](double x, double y) { return x + y; },
        [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
    return elementwise_binary(
        tape, a, b, "sub", [](double x, double y) { return x - y; },
        [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
    return elementwise_binary(
        tape, a, b, "mul", [](double x, double y) { return x * y; },
        [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor scale(Tape& tape, const Tensor& x, double k) {
    Tensor out = x;
    out.node = -1;
    for (double& v : out.data) v *= k;
    if (x.node < 0) return out;
    const int xn = x.node;
    const int n = x.numel();
    out.node = tape.record(n, {xn}, [xn, k, n](const double* up, GradientSet& g) {
        auto& gx = g[static_cast<size_t>(xn)];
        for (int i = 0; i < n; ++i) gx[static_cast<size_t>(i)] += up[i] * k;
    });
    return out;
}

Tensor sigmoid(Tape& tape, const Tensor& x) {
    Tensor out = x;
    out.node = -1;
    for (double& v : out.data) v = 1.0 / (1.0 + std::exp(-v));
    if (x.node < 0) return out;
    const int xn = x.node;
    std::vector<double> yv = out.data;
    out.node = tape.record(out.numel(), {xn},
                           [xn, yv = std::move(yv)](const double* up, GradientSet& g) {
                               auto& gx = g[static_cast<size_t>(xn)];
                               for (size_t i = 0; i < yv.size(); ++i)
                                   gx[i] += up[i] * yv[i] * (1.0 - yv[i]);
                           });
    return out;
}

Tensor tanh_op(Tape& tape, const Tensor& x) {
    Tensor out = x;
    out.node = -1;
    for (double& v : out.data) v = std::tanh(v);
    if (x.node < 0) return out;
    const int xn = x.node;
    std::vector<double> yv = out.data;
    out.node = tape.record(out.numel(), {xn},
                           [xn, yv = std::move(yv)](const double* up, GradientSet& g) {
                               auto& gx = g[static_cast<size_t>(xn)];
                               for (size_t i = 0; i < yv.size(); ++i)
                                   gx[i] += up[i] * (1.0 - yv[i] * yv[i]);
                           });
    return out;
}

Tensor sum(Tape& tape, const Tensor& x) {
    double acc = 0.0;
    for (double v : x.data) acc += v;
    Tensor out({1}, {acc});
    if (x.node < 0) return out;
    const int xn = x.node;
    const int n = x.numel();
    out.node = tape.record(1, {xn}, [xn, n](const double* up, GradientSet& g) {
        auto& gx = g[static_cast<size_t>(xn)];
        for (int i = 0; i < n; ++i) gx[static_cast<size_t>(i)] += up[0];
    });
    return out;
}

Tensor pick(Tape& tape, const Tensor& x, int index) {
    if (index < 0 || index >= x.numel())
        throw std::invalid_argument("pick: index " + std::to_string(index) + " out of range");
    Tensor out({1}, {x.at(index)});
    if (x.node < 0) return out;
    const int xn = x.node;
    out.node = tape.record(1, {xn}, [xn, index](const double* up, GradientSet& g) {
        g[static_cast<size_t>(xn)][static_cast<size_t>(index)] += up[0];
    });
    return out;
}

// ---- optimizer ----------------------------------------------------------------

std::vector<std::vector<double>> gather_grads(const GradientSet& grads,
                                              const std::vector<Tensor*>& params) {
    std::vector<std::vector<double>> out;
    out.reserve(params.size());
    for (const Tensor* p : params) {
        if (p->node >= 0 && p->node < static_cast<int>(grads.size()))
            out.push_back(grads[static_cast<size_t>(p->node)]);
        else
            out.emplace_back(static_cast<size_t>(p->numel()), 0.0);
    }
    return out;
}

void optimizer_step(std::vector<Tensor*>& params, const std::vector<std::vector<double>>& grads,
                    OptimState& state) {
    if (params.size() != grads.size())
        throw std::invalid_argument("optimizer_step: params/grads count mismatch");
    if (state.learning_rate <= 0.0 && state.learning_rate != 0.0)
        throw std::invalid_argument("optimizer_step: learning rate must be positive");
    if (state.method == OptimKind::adam && state.m.empty()) {
        state.m.resize(params.size());
        state.v.resize(params.size());
        for (size_t i = 0; i < params.size(); ++i) {
            state.m[i].assign(static_cast<size_t>(params[i]->numel()), 0.0);
            state.v[i].assign(static_cast<size_t>(params[i]->numel()), 0.0);
        }
    }
    state.step_count += 1;
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const auto& g = grads[i];
        if (g.size() != p.data.size())
            throw std::invalid_argument("optimizer_step: gradient shape mismatch for parameter " +
                                        std::to_string(i));
        if (state.method == OptimKind::sgd) {
            for (size_t j = 0; j < g.size(); ++j) p.data[j] -= state.learning_rate * g[j];
        } else {
            const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step_count));
            const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step_count));
            auto& m = state.m[i];
            auto& v = state.v[i];
            for (size_t j = 0; j < g.size(); ++j) {
                m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
                v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
                const double mh = m[j] / bc1;
                const double vh = v[j] / bc2;
                p.data[j] -= state.learning_rate * mh / (std::sqrt(vh) + state.eps_adam);
            }
        }
    }
}

}  // namespace hqlab
