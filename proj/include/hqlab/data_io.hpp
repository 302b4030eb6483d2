#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hqlab/attacks.hpp"
#include "hqlab/dataset.hpp"
#include "hqlab/model.hpp"

namespace hqlab {

// ---- dataset ingestion ------------------------------------------------------

struct DatasetSource {
    enum class Kind { mnist_idx, cifar10_bin };
    Kind kind = Kind::cifar10_bin;
    std::string dir;        // directory holding the canonical files
    int image_size = 16;    // bilinear downscale target
    size_t max_train = 0;   // 0 = keep all
    size_t max_test = 0;
};

/// Loads train and test splits, scales pixels to [0,1], replicates
/// grayscale to 3 channels, and bilinearly downscales to the target size.
std::pair<LabeledDataset, LabeledDataset> load_dataset(const DatasetSource& src);

/// Bilinear resample of a [C,H,W] image to [C,size,size].
Tensor resize_bilinear(const Tensor& image, int size);

// ---- checkpoints ------------------------------------------------------------

struct CheckpointMeta {
    uint64_t seed = 0;
    uint64_t dataset_hash = 0;
    std::array<uint64_t, 4> rng_state{0, 0, 0, 0};
    bool poisoned = false;
    double poison_rate = 0.0;
    int target_label = 0;
    std::string trigger_desc;
};

void save_checkpoint(const HybridModel& model, const OptimState& optim, const CheckpointMeta& meta,
                     const std::string& path);

struct LoadedCheckpoint {
    HybridModel model;
    OptimState optim;
    CheckpointMeta meta;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

/// Prints shapes and metadata without materializing tensor payloads.
std::string describe_checkpoint(const std::string& path);

// ---- configuration ----------------------------------------------------------

/// Every experiment knob, defaulted to the desk-scale preset.
struct ExperimentConfig {
    uint64_t seed = 1;
    int threads = 1;

    DatasetSource dataset;

    int model_qubits = 4;
    int model_layers = 2;
    int model_classes = 10;
    HeadKind model_head = HeadKind::quantum;

    int train_epochs = 8;
    int train_batch = 32;
    double train_lr = 0.05;
    OptimKind train_optimizer = OptimKind::sgd;
    bool train_shuffle = true;

    std::string trigger_kind = "qcolor";  // qcolor | patch | blend | shift
    double trigger_r1 = 1.2, trigger_r2 = 0.8, trigger_r3 = 1.1;
    int trigger_patch_size = 2;
    double trigger_alpha = 0.1;
    double trigger_shift_r = 0.2, trigger_shift_g = 0.0, trigger_shift_b = 0.0;

    bool poison_enabled = true;  // train: poison the training split first
    double poison_rate = 0.1;
    int poison_target = 0;

    int nsga_population = 20;
    int nsga_generations = 10;
    double nsga_eta_c = 15.0;
    double nsga_sigma_m = 0.05;
    double nsga_mutation_prob = 1.0 / 3.0;
    int nsga_surrogate_epochs = 2;
    size_t nsga_surrogate_samples = 2000;

    int strip_overlays = 100;
    double strip_alpha = 0.5;
    double strip_percentile = 1.0;

    int cleanse_steps = 100;
    double cleanse_lr = 0.1;
    double cleanse_lambda = 1e-3;
    int cleanse_batch = 8;
    size_t cleanse_samples = 64;

    std::vector<double> prune_rates{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};

    double bounds_conf_delta = 0.05;
    int bounds_lipschitz_pairs = 200;

    ModelArch arch() const;
    TrainConfig train_config() const;
    TriggerSpec trigger(int image_h, int image_w) const;

    /// Full key=value echo of every knob, in the parser's key order.
    std::string resolved() const;
};

/// Parses flat key=value text: '#' comments and blank lines ignored,
/// whitespace trimmed, unknown keys and type errors rejected with their
/// line number.
ExperimentConfig parse_config(const std::string& text);

ExperimentConfig load_config_file(const std::string& path);

/// Applies one "key=value" override on top of an existing config.
void apply_override(ExperimentConfig& cfg, const std::string& assignment);

// ---- result emission ----------------------------------------------------------

/// CSV writer: header + rows, 17-significant-digit floats, LF endings.
void write_results(const std::string& path, const std::string& header,
                   const std::vector<std::vector<std::string>>& rows);

std::string format_double(double v);

/// Raw planar tensor dump: u32 rank, u32 dims..., little-endian f64 payload.
void write_raw_tensor(const std::string& path, const Tensor& t);
Tensor read_raw_tensor(const std::string& path);

/// 8-bit binary PPM preview of a [3,H,W] image in [0,1].
void write_ppm(const std::string& path, const Tensor& image);

uint64_t fnv1a(const void* data, size_t len);
uint64_t dataset_hash(const LabeledDataset& ds);

// ---- synthetic corpus ---------------------------------------------------------

/// Writes a seeded 10-class oriented-grating corpus in both on-disk
/// formats: CIFAR-10 style binary batches (32x32 RGB) and IDX image/label
/// pairs (28x28 grayscale). Class identity is spatial structure, never
/// color, so color-space triggers stay orthogonal to the labels.
void generate_synthetic_corpus(const std::string& dir, size_t n_train, size_t n_test,
                               uint64_t seed);

}  // namespace hqlab
