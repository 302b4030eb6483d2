#pragma once

#include <cstdint>
#include <vector>

#include "hqlab/tensor.hpp"

namespace hqlab {

/// Image classification dataset. Images are [3,H,W] tensors with pixels in
/// [0,1]; poison_mask marks samples that carry a trigger and a rewritten
/// label.
struct LabeledDataset {
    std::vector<Tensor> images;
    std::vector<int> labels;
    std::vector<uint8_t> poison_mask;

    size_t size() const { return images.size(); }
    bool empty() const { return images.empty(); }

    void push(Tensor img, int label, bool poisoned = false) {
        images.push_back(std::move(img));
        labels.push_back(label);
        poison_mask.push_back(poisoned ? 1 : 0);
    }

    /// Throws if lengths disagree or any pixel leaves [0,1].
    void validate() const;

    /// Subset by index list (copies).
    LabeledDataset subset(const std::vector<int>& indices) const;
};

}  // namespace hqlab
