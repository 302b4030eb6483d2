#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hqlab/attacks.hpp"
#include "hqlab/dataset.hpp"
#include "hqlab/model.hpp"
#include "hqlab/tensor.hpp"

namespace hqlab {

/// Percentage (0..100) of samples whose argmax prediction matches the label.
/// Backdoor accuracy is this same function run on a backdoored model.
double clean_accuracy(const HybridModel& model, const LabeledDataset& ds);

/// Percentage of triggered samples classified as the target, counting only
/// samples whose original label differs from the target.
double attack_success_rate(const HybridModel& model, const LabeledDataset& clean_ds,
                           const TriggerSpec& spec, int target_label);

/// Mean SSIM between two [3,H,W] images in [0,1]: 11x11 Gaussian window
/// (sigma 1.5), K1=0.01, K2=0.03, L=1, valid windows only, averaged over
/// channels.
double ssim(const Tensor& a, const Tensor& b);

/// Mean SSIM between each image and its triggered version over a dataset.
double mean_trigger_ssim(const LabeledDataset& ds, const TriggerSpec& spec, size_t max_images = 0);

/// Grad-CAM heatmap for one class: gradients of the class logit w.r.t. the
/// last conv activation, channel weights = spatial mean, weighted sum,
/// ReLU, nearest-neighbor upsample to the input size, max-normalized.
/// All-zero maps are returned as-is rather than divided by zero.
Tensor grad_cam(HybridModel& model, const Tensor& image, int class_index);

struct EvalReport {
    std::string model_id;
    std::string trigger;
    double poison_rate = 0.0;
    double clean_acc = 0.0;     // percentage
    double backdoor_acc = 0.0;  // percentage
    double asr = 0.0;           // percentage
    double mean_ssim = 0.0;
    uint64_t seed = 0;
    int n_acc_eval = 0;   // samples behind clean/backdoor accuracy
    int n_asr_eval = 0;   // non-target samples behind asr
    int n_ssim_eval = 0;  // probe images behind mean_ssim

    static std::string csv_header();
    std::string csv_row() const;  // fixed column order, counts excluded
};

}  // namespace hqlab
