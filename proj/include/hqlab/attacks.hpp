#pragma once

#include <array>
#include <cstdint>
#include <string>

#include "hqlab/dataset.hpp"
#include "hqlab/tensor.hpp"

namespace hqlab {

/// Trigger families. Qcolor multiplies the color channels by (r1,r2,r3);
/// Patch overwrites a square block; Blend mixes in a fixed pattern;
/// ColorShift adds a per-channel offset. All outputs are clamped to [0,1].
struct TriggerSpec {
    enum class Kind { qcolor, patch, blend, color_shift };
    Kind kind = Kind::qcolor;

    // qcolor
    std::array<double, 3> ratios{1.0, 1.0, 1.0};  // each in [0.5, 1.5]
    // patch (bottom-right corner)
    int patch_size = 2;
    std::array<double, 3> patch_color{1.0, 1.0, 1.0};
    // blend
    double blend_alpha = 0.1;
    Tensor blend_pattern;  // [3,H,W], must match the image
    // color shift
    std::array<double, 3> shift{0.0, 0.0, 0.0};

    static TriggerSpec qcolor(double r1, double r2, double r3);
    static TriggerSpec patch(int size, std::array<double, 3> color = {1.0, 1.0, 1.0});
    static TriggerSpec blend(double alpha, Tensor pattern);
    static TriggerSpec color_shift(double dr, double dg, double db);

    /// Seeded uniform-noise blend pattern, stored with the experiment.
    static Tensor noise_pattern(int h, int w, uint64_t seed);

    std::string describe() const;
    void validate(int image_h, int image_w) const;
};

struct PoisonConfig {
    double rate = 0.1;   // in (0, 1]
    int target_label = 0;
    uint64_t seed = 1;
};

/// Applies the trigger; output pixels stay in [0,1].
Tensor apply_trigger(const Tensor& image, const TriggerSpec& spec);

/// Selects ceil(rate*|ds|) non-target-class samples uniformly at random
/// (seeded), triggers them, relabels to the target, sets poison_mask, then
/// reshuffles the ordering. Never poisons a sample already labeled target.
LabeledDataset poison_dataset(const LabeledDataset& ds, const TriggerSpec& spec,
                              const PoisonConfig& cfg);

/// ||triggered - clean||_2 on the reference image: the delta*||z|| proxy.
double trigger_strength(const TriggerSpec& spec, const Tensor& reference_image);

}  // namespace hqlab
