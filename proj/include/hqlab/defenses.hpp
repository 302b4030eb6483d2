#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hqlab/attacks.hpp"
#include "hqlab/dataset.hpp"
#include "hqlab/model.hpp"
#include "hqlab/tensor.hpp"

namespace hqlab {

// ---- STRIP ----------------------------------------------------------------

struct StripConfig {
    int n_overlays = 100;
    double blend_alpha = 0.5;
    double percentile = 1.0;  // clean-entropy percentile used as threshold
    uint64_t seed = 1;

    void validate() const;
};

/// Mean Shannon entropy (nats) of the softmax output over n_overlays
/// random clean-pool blends (1-alpha)*input + alpha*overlay.
double strip_entropy(const HybridModel& model, const Tensor& input,
                     const std::vector<Tensor>& overlay_pool, const StripConfig& cfg);

struct EntropyHistogram {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<size_t> counts;
};

EntropyHistogram make_histogram(const std::vector<double>& values, int bins);

struct StripReport {
    std::vector<double> clean_entropies;
    std::vector<double> suspect_entropies;
    EntropyHistogram clean_hist;
    EntropyHistogram suspect_hist;
    double threshold = 0.0;  // percentile of the clean entropies
    double far = 0.0;        // suspect fraction above threshold (undetected)
    double frr = 0.0;        // clean fraction at or below threshold
};

StripReport strip_detect(const HybridModel& model, const LabeledDataset& clean_set,
                         const LabeledDataset& suspect_set, const StripConfig& cfg);

void write_strip_report(const std::string& path, const StripReport& report);

// ---- Neural Cleanse -------------------------------------------------------

struct CleanseConfig {
    int steps = 100;
    double learning_rate = 0.1;
    double lambda_mask = 1e-3;  // adaptive: doubled when reversed ASR > 99%, halved below 90%
    int batch_size = 8;
    size_t max_samples = 64;
    uint64_t seed = 1;

    void validate() const;
};

struct CleanseClassResult {
    int class_index = 0;
    Tensor mask;     // [H,W] in [0,1]
    Tensor pattern;  // [3,H,W] in [0,1]
    double mask_l1 = 0.0;
    bool failed = false;  // optimization hit non-finite loss twice
};

struct CleanseReport {
    std::vector<CleanseClassResult> classes;
    std::vector<double> anomaly;  // per-class anomaly index of mask_l1
    std::vector<int> flagged;     // classes with index > 2 and below-median norm
};

/// Reverse-engineers a minimal input trigger per class: optimizes a
/// sigmoid-squashed mask and pattern so that (1-m) x + m pattern is
/// classified as that class, with an L1 sparsity penalty on the mask.
CleanseReport neural_cleanse(HybridModel& model, const LabeledDataset& dataset,
                             const CleanseConfig& cfg);

/// Median-absolute-deviation outlier score (consistency constant 1.4826).
/// Flags a class only when its index exceeds 2 AND its norm lies below the
/// median. All-zero MAD yields all-zero indices.
std::pair<std::vector<double>, std::vector<int>> anomaly_index(const std::vector<double>& l1_norms);

void write_cleanse_report(const std::string& path, const CleanseReport& report);

// ---- Fine-Pruning ---------------------------------------------------------

struct PruneConfig {
    std::vector<double> rates{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};

    void validate() const;
};

struct PruneRow {
    double rate = 0.0;
    int pruned_channels = 0;
    double backdoor_acc = 0.0;  // accuracy on clean eval data
    double asr = 0.0;
};

/// Zeroes the k last-conv channels with the smallest L1 of mean activation
/// over the clean subset (k = floor(rate * channels)), evaluating clean
/// accuracy and attack success at each rate. The model is restored bitwise
/// after the sweep.
struct PruneEval {
    const LabeledDataset* eval_clean = nullptr;
    const TriggerSpec* trigger = nullptr;
    int target_label = 0;
};

std::vector<PruneRow> fine_prune_sweep(HybridModel& model, const LabeledDataset& clean_subset,
                                       const PruneEval& eval, const PruneConfig& cfg);

/// Ranks last-conv channels by L1 of mean activation, ascending.
std::vector<int> rank_channels_by_activation(HybridModel& model,
                                             const LabeledDataset& clean_subset);

/// Zeroes the given channels' conv2 kernels and biases in place.
void prune_channels(HybridModel& model, const std::vector<int>& channels);

void write_prune_report(const std::string& path, const std::vector<PruneRow>& rows);

}  // namespace hqlab
