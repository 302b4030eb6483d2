#include "hqlab/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "hqlab/rng.hpp"

namespace hqlab {

void LabeledDataset::validate() const {
    if (images.size() != labels.size() || images.size() != poison_mask.size())
        throw std::invalid_argument("dataset: images/labels/poison_mask lengths disagree");
    for (size_t i = 0; i < images.size(); ++i) {
        for (double v : images[i].data) {
            if (!(v >= 0.0 && v <= 1.0))
                throw std::invalid_argument("dataset: pixel outside [0,1] in sample " +
                                            std::to_string(i));
        }
    }
}

LabeledDataset LabeledDataset::subset(const std::vector<int>& indices) const {
    LabeledDataset out;
    out.images.reserve(indices.size());
    for (int i : indices) {
        out.push(images[static_cast<size_t>(i)], labels[static_cast<size_t>(i)],
                 poison_mask[static_cast<size_t>(i)] != 0);
    }
    return out;
}

std::vector<Tensor*> HybridModel::parameters() {
    return {&conv1_k, &conv1_b, &conv2_k, &conv2_b, &fc_w, &fc_b, &vqc_angles, &head_w, &head_b};
}

std::vector<const Tensor*> HybridModel::parameters() const {
    return {&conv1_k, &conv1_b, &conv2_k, &conv2_b, &fc_w, &fc_b, &vqc_angles, &head_w, &head_b};
}

std::vector<std::string> HybridModel::parameter_names() {
    return {"conv1_k", "conv1_b", "conv2_k", "conv2_b", "fc_w",
            "fc_b",    "vqc",     "head_w",  "head_b"};
}

void HybridModel::clear_tape_nodes() {
    for (Tensor* p : parameters()) p->node = -1;
}

bool HybridModel::same_values(const HybridModel& o) const {
    auto a = parameters();
    auto b = o.parameters();
    for (size_t i = 0; i < a.size(); ++i) {
        if (a[i]->shape != b[i]->shape || a[i]->data != b[i]->data) return false;
    }
    return true;
}

namespace {

Tensor kaiming_uniform(std::vector<int> shape, int fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (double& v : t.data) v = rng.uniform(-bound, bound);
    return t;
}

}  // namespace

HybridModel init_model(const ModelArch& arch, uint64_t seed) {
    if (arch.image_size % 4 != 0)
        throw std::invalid_argument("init_model: image_size must be divisible by 4");
    HybridModel m;
    m.arch = arch;
    Rng rng(Rng::mix({seed, 0x696e6974ULL}));  // dedicated init stream
    m.conv1_k = kaiming_uniform({8, 3, 3, 3}, 3 * 3 * 3, rng);
    m.conv1_b = Tensor({8});
    m.conv2_k = kaiming_uniform({16, 8, 3, 3}, 8 * 3 * 3, rng);
    m.conv2_b = Tensor({16});
    m.fc_w = kaiming_uniform({arch.n_qubits, arch.trunk_features()}, arch.trunk_features(), rng);
    m.fc_b = Tensor({arch.n_qubits});
    m.vqc_angles = kaiming_uniform({arch.n_layers, arch.n_qubits}, arch.n_qubits, rng);
    m.head_w = kaiming_uniform({arch.n_classes, arch.n_qubits}, arch.n_qubits, rng);
    m.head_b = Tensor({arch.n_classes});
    return m;
}

namespace {

ForwardTrace run_forward(Tape& tape, HybridModel& model, const Tensor& image) {
    const ModelArch& a = model.arch;
    if (image.ndim() != 3 || image.dim(0) != 3 || image.dim(1) != a.image_size ||
        image.dim(2) != a.image_size)
        throw std::invalid_argument("forward: image shape " + image.shape_str() + " != [3," +
                                    std::to_string(a.image_size) + "," +
                                    std::to_string(a.image_size) + "]");
    ForwardTrace tr;
    Tensor h1 = relu(tape, conv2d(tape, image, model.conv1_k, model.conv1_b, 1, 1));
    Tensor p1 = max_pool2(tape, h1);
    Tensor h2 = relu(tape, conv2d(tape, p1, model.conv2_k, model.conv2_b, 1, 1));
    tr.conv2_act = h2;
    Tensor p2 = max_pool2(tape, h2);
    tr.features = linear(tape, p2.reshaped({p2.numel()}), model.fc_w, model.fc_b);
    if (a.head == HeadKind::quantum) {
        tr.head_input = vqc_layer(tape, tr.features, model.vqc_angles, a.vqc());
    } else {
        tr.head_input = tanh_op(tape, tr.features);
    }
    tr.logits = linear(tape, tr.head_input, model.head_w, model.head_b);
    return tr;
}

}  // namespace

ForwardTrace forward_trace(Tape& tape, HybridModel& model, const Tensor& image) {
    return run_forward(tape, model, image);
}

Tensor forward(const HybridModel& model, const Tensor& image) {
    Tape tape;
    HybridModel& m = const_cast<HybridModel&>(model);
    // parameters stay constants on this throwaway tape
    ForwardTrace tr = run_forward(tape, m, image);
    tr.logits.node = -1;
    return tr.logits;
}

int argmax_class(const std::vector<double>& logits) {
    int best = 0;
    for (size_t i = 1; i < logits.size(); ++i)
        if (logits[i] > logits[static_cast<size_t>(best)]) best = static_cast<int>(i);
    return best;
}

int predict(const HybridModel& model, const Tensor& image) {
    return argmax_class(forward(model, image).data);
}

TrainResult train(HybridModel& model, const LabeledDataset& data, const TrainConfig& cfg,
                  OptimState* optim_state) {
    if (data.empty()) throw std::invalid_argument("train: dataset is empty");
    if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
    if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
    if (cfg.learning_rate < 0.0) throw std::invalid_argument("train: learning rate must be >= 0");

    OptimState local;
    OptimState& optim = optim_state ? *optim_state : local;
    optim.learning_rate = cfg.learning_rate;
    optim.method = cfg.optimizer;

    auto params = model.parameters();
    const int n = static_cast<int>(data.size());
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);

    TrainResult result;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (cfg.shuffle) {
            Rng rng(Rng::mix({cfg.seed, 0x73687566ULL, static_cast<uint64_t>(epoch)}));
            rng.shuffle(order);
        }
        double epoch_loss = 0.0;
        for (int start = 0; start < n; start += cfg.batch_size) {
            const int end = std::min(n, start + cfg.batch_size);
            Tape tape;
            for (Tensor* p : params) tape.watch(*p);
            Tensor batch_loss({1}, {0.0});
            for (int bi = start; bi < end; ++bi) {
                const int idx = order[static_cast<size_t>(bi)];
                ForwardTrace tr = run_forward(tape, model, data.images[static_cast<size_t>(idx)]);
                Tensor loss =
                    softmax_cross_entropy(tape, tr.logits, data.labels[static_cast<size_t>(idx)]);
                batch_loss = add(tape, batch_loss, loss);
            }
            batch_loss = scale(tape, batch_loss, 1.0 / static_cast<double>(end - start));
            if (!std::isfinite(batch_loss.at(0)))
                throw std::runtime_error("train: non-finite loss at epoch " +
                                         std::to_string(epoch) + ", batch starting at sample " +
                                         std::to_string(start));
            epoch_loss += batch_loss.at(0) * static_cast<double>(end - start);
            GradientSet grads = tape.backward(batch_loss.node);
            auto pgrads = gather_grads(grads, params);
            optimizer_step(params, pgrads, optim);
            model.clear_tape_nodes();
        }
        result.epoch_losses.push_back(epoch_loss / static_cast<double>(n));
    }
    return result;
}

}  // namespace hqlab
