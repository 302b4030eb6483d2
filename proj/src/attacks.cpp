#include "hqlab/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "hqlab/rng.hpp"

namespace hqlab {

namespace {

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

void require_chw(const Tensor& image) {
    if (image.shape.size() != 3 || image.shape[0] != 3) {
        throw std::invalid_argument("apply_trigger: expected a [3,H,W] image");
    }
}

}  // namespace

TriggerSpec TriggerSpec::qcolor(double r1, double r2, double r3) {
    TriggerSpec s;
    s.kind = Kind::qcolor;
    s.ratios = {r1, r2, r3};
    return s;
}

TriggerSpec TriggerSpec::patch(int size, std::array<double, 3> color) {
    TriggerSpec s;
    s.kind = Kind::patch;
    s.patch_size = size;
    s.patch_color = color;
    return s;
}

TriggerSpec TriggerSpec::blend(double alpha, Tensor pattern) {
    TriggerSpec s;
    s.kind = Kind::blend;
    s.blend_alpha = alpha;
    s.blend_pattern = std::move(pattern);
    return s;
}

TriggerSpec TriggerSpec::color_shift(double dr, double dg, double db) {
    TriggerSpec s;
    s.kind = Kind::color_shift;
    s.shift = {dr, dg, db};
    return s;
}

Tensor TriggerSpec::noise_pattern(int h, int w, uint64_t seed) {
    Rng rng(Rng::mix({seed, 0x626c656e64ULL}));
    Tensor t({3, h, w});
    for (auto& v : t.data) v = rng.uniform();
    return t;
}

std::string TriggerSpec::describe() const {
    std::ostringstream os;
    switch (kind) {
        case Kind::qcolor:
            os << "qcolor(" << ratios[0] << "," << ratios[1] << "," << ratios[2] << ")";
            break;
        case Kind::patch:
            os << "patch(" << patch_size << ")";
            break;
        case Kind::blend:
            os << "blend(" << blend_alpha << ")";
            break;
        case Kind::color_shift:
            os << "shift(" << shift[0] << "," << shift[1] << "," << shift[2] << ")";
            break;
    }
    return os.str();
}

void TriggerSpec::validate(int image_h, int image_w) const {
    switch (kind) {
        case Kind::qcolor:
            for (double r : ratios) {
                if (r < 0.5 || r > 1.5) {
                    throw std::invalid_argument("qcolor ratio outside [0.5, 1.5]: " +
                                                std::to_string(r));
                }
            }
            break;
        case Kind::patch:
            if (patch_size < 1 || patch_size > image_h || patch_size > image_w) {
                throw std::invalid_argument("patch size " + std::to_string(patch_size) +
                                            " does not fit a " + std::to_string(image_h) + "x" +
                                            std::to_string(image_w) + " image");
            }
            break;
        case Kind::blend:
            if (blend_alpha < 0.0 || blend_alpha > 1.0) {
                throw std::invalid_argument("blend alpha outside [0, 1]: " +
                                            std::to_string(blend_alpha));
            }
            if (blend_pattern.shape != std::vector<int>{3, image_h, image_w}) {
                throw std::invalid_argument("blend pattern shape does not match the image");
            }
            break;
        case Kind::color_shift:
            break;
    }
}

Tensor apply_trigger(const Tensor& image, const TriggerSpec& spec) {
    require_chw(image);
    const int h = image.shape[1];
    const int w = image.shape[2];
    spec.validate(h, w);

    Tensor out = image;
    out.node = -1;
    switch (spec.kind) {
        case TriggerSpec::Kind::qcolor: {
            for (int c = 0; c < 3; ++c) {
                double r = spec.ratios[static_cast<size_t>(c)];
                for (int i = 0; i < h * w; ++i) {
                    double& v = out.data[static_cast<size_t>(c * h * w + i)];
                    v = clamp01(v * r);
                }
            }
            break;
        }
        case TriggerSpec::Kind::patch: {
            const int s = spec.patch_size;
            for (int c = 0; c < 3; ++c) {
                for (int y = h - s; y < h; ++y) {
                    for (int x = w - s; x < w; ++x) {
                        out.data[static_cast<size_t>((c * h + y) * w + x)] =
                            clamp01(spec.patch_color[static_cast<size_t>(c)]);
                    }
                }
            }
            break;
        }
        case TriggerSpec::Kind::blend: {
            const double a = spec.blend_alpha;
            for (size_t i = 0; i < out.data.size(); ++i) {
                out.data[i] = clamp01((1.0 - a) * out.data[i] + a * spec.blend_pattern.data[i]);
            }
            break;
        }
        case TriggerSpec::Kind::color_shift: {
            for (int c = 0; c < 3; ++c) {
                double d = spec.shift[static_cast<size_t>(c)];
                for (int i = 0; i < h * w; ++i) {
                    double& v = out.data[static_cast<size_t>(c * h * w + i)];
                    v = clamp01(v + d);
                }
            }
            break;
        }
    }
    return out;
}

LabeledDataset poison_dataset(const LabeledDataset& ds, const TriggerSpec& spec,
                              const PoisonConfig& cfg) {
    if (ds.empty()) throw std::invalid_argument("poison_dataset: empty dataset");
    if (cfg.rate <= 0.0 || cfg.rate > 1.0) {
        throw std::invalid_argument("poison rate outside (0, 1]: " + std::to_string(cfg.rate));
    }
    ds.validate();

    const size_t n = ds.size();
    const auto want = static_cast<size_t>(std::ceil(cfg.rate * static_cast<double>(n)));

    std::vector<size_t> candidates;
    candidates.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        if (ds.labels[i] != cfg.target_label) candidates.push_back(i);
    }
    if (want > candidates.size()) {
        std::ostringstream os;
        os << "poison_dataset: need " << want << " non-target samples but only "
           << candidates.size() << " available";
        throw std::invalid_argument(os.str());
    }

    Rng pick_rng(Rng::mix({cfg.seed, 0x706f69736fULL}));
    pick_rng.shuffle(candidates);
    candidates.resize(want);

    LabeledDataset out = ds;
    for (size_t idx : candidates) {
        out.images[idx] = apply_trigger(ds.images[idx], spec);
        out.labels[idx] = cfg.target_label;
        out.poison_mask[idx] = 1;
    }

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    Rng order_rng(Rng::mix({cfg.seed, 0x726f7264ULL}));
    order_rng.shuffle(order);

    LabeledDataset shuffled;
    shuffled.images.reserve(n);
    shuffled.labels.reserve(n);
    shuffled.poison_mask.reserve(n);
    for (size_t i : order) {
        shuffled.images.push_back(std::move(out.images[i]));
        shuffled.labels.push_back(out.labels[i]);
        shuffled.poison_mask.push_back(out.poison_mask[i]);
    }
    return shuffled;
}

double trigger_strength(const TriggerSpec& spec, const Tensor& reference_image) {
    Tensor triggered = apply_trigger(reference_image, spec);
    double acc = 0.0;
    for (size_t i = 0; i < triggered.data.size(); ++i) {
        double d = triggered.data[i] - reference_image.data[i];
        acc += d * d;
    }
    return std::sqrt(acc);
}

}  // namespace hqlab
