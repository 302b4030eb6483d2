#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hqlab/dataset.hpp"
#include "hqlab/quantum.hpp"
#include "hqlab/tensor.hpp"

namespace hqlab {

enum class HeadKind { quantum, classical_fc };

/// Architecture descriptor. The convolutional trunk is fixed ("DeskCNN"):
/// conv(3->8,k3,pad1)-relu-pool-conv(8->16,k3,pad1)-relu-pool-linear(->n_qubits).
/// The head is either the VQC (expectations -> linear) or a tanh + linear
/// twin with the identical trunk, so head comparisons isolate the head.
struct ModelArch {
    int image_size = 16;  // must be divisible by 4
    int n_qubits = 4;
    int n_layers = 2;
    int n_classes = 10;
    HeadKind head = HeadKind::quantum;

    int trunk_features() const { return 16 * (image_size / 4) * (image_size / 4); }
    VqcArchitecture vqc() const { return VqcArchitecture{n_qubits, n_layers, true}; }
};

/// CNN trunk + quantum (or classical) head. Value type: copying clones all
/// parameters. vqc_angles exist for both head kinds so the two twins share
/// one checkpoint layout; the classical head simply never touches them.
struct HybridModel {
    ModelArch arch;
    Tensor conv1_k, conv1_b;  // [8,3,3,3], [8]
    Tensor conv2_k, conv2_b;  // [16,8,3,3], [16]
    Tensor fc_w, fc_b;        // [n_qubits, trunk_features], [n_qubits]
    Tensor vqc_angles;        // [n_layers, n_qubits]
    Tensor head_w, head_b;    // [n_classes, n_qubits], [n_classes]

    /// Fixed parameter order; also the checkpoint tensor order.
    std::vector<Tensor*> parameters();
    std::vector<const Tensor*> parameters() const;
    static std::vector<std::string> parameter_names();

    void clear_tape_nodes();
    bool same_values(const HybridModel& o) const;
};

/// Seeded Kaiming-style fan-in uniform init (biases zero).
HybridModel init_model(const ModelArch& arch, uint64_t seed);

/// Intermediate handles needed by Grad-CAM, defenses, and bound estimators.
struct ForwardTrace {
    Tensor logits;
    Tensor conv2_act;    // post-relu activations of the last conv layer
    Tensor features;     // trunk output (pre-encoding), length n_qubits
    Tensor head_input;   // VQC expectations or tanh(features)
};

/// image may be tape-tracked (node >= 0) when input gradients are wanted.
ForwardTrace forward_trace(Tape& tape, HybridModel& model, const Tensor& image);

/// Logits only, on a throwaway tape.
Tensor forward(const HybridModel& model, const Tensor& image);

/// argmax of logits, ties to the lowest class index.
int predict(const HybridModel& model, const Tensor& image);
int argmax_class(const std::vector<double>& logits);

struct TrainConfig {
    int epochs = 8;
    int batch_size = 32;
    double learning_rate = 0.05;
    OptimKind optimizer = OptimKind::sgd;
    uint64_t seed = 1;
    bool shuffle = true;
};

struct TrainResult {
    std::vector<double> epoch_losses;  // mean training loss per epoch
};

/// Minimizes mean cross-entropy over the (possibly poisoned) dataset by
/// mini-batch gradient descent. Deterministic given (model, data, cfg).
/// Throws on an empty dataset or a non-finite loss.
TrainResult train(HybridModel& model, const LabeledDataset& data, const TrainConfig& cfg,
                  OptimState* optim_state = nullptr);

}  // namespace hqlab
