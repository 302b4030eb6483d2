#include "hqlab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace hqlab {

namespace {

constexpr int kWin = 11;
constexpr double kSigma = 1.5;
constexpr double kK1 = 0.01;
constexpr double kK2 = 0.03;
constexpr double kL = 1.0;

const std::vector<double>& gaussian_window() {
    static const std::vector<double> win = [] {
        std::vector<double> w(kWin * kWin);
        const double c = (kWin - 1) / 2.0;
        double sum = 0.0;
        for (int y = 0; y < kWin; ++y) {
            for (int x = 0; x < kWin; ++x) {
                double dy = y - c, dx = x - c;
                double v = std::exp(-(dx * dx + dy * dy) / (2.0 * kSigma * kSigma));
                w[static_cast<size_t>(y * kWin + x)] = v;
                sum += v;
            }
        }
        for (auto& v : w) v /= sum;
        return w;
    }();
    return win;
}

double ssim_channel(const double* a, const double* b, int h, int w) {
    if (h < kWin || w < kWin) {
        throw std::invalid_argument("ssim: image smaller than the 11x11 window");
    }
    const auto& win = gaussian_window();
    const double c1 = (kK1 * kL) * (kK1 * kL);
    const double c2 = (kK2 * kL) * (kK2 * kL);
    double total = 0.0;
    int count = 0;
    for (int y = 0; y + kWin <= h; ++y) {
        for (int x = 0; x + kWin <= w; ++x) {
            double mu_a = 0.0, mu_b = 0.0;
            for (int wy = 0; wy < kWin; ++wy) {
                for (int wx = 0; wx < kWin; ++wx) {
                    double g = win[static_cast<size_t>(wy * kWin + wx)];
                    mu_a += g * a[(y + wy) * w + (x + wx)];
                    mu_b += g * b[(y + wy) * w + (x + wx)];
                }
            }
            double var_a = 0.0, var_b = 0.0, cov = 0.0;
            for (int wy = 0; wy < kWin; ++wy) {
                for (int wx = 0; wx < kWin; ++wx) {
                    double g = win[static_cast<size_t>(wy * kWin + wx)];
                    double da = a[(y + wy) * w + (x + wx)] - mu_a;
                    double db = b[(y + wy) * w + (x + wx)] - mu_b;
                    var_a += g * da * da;
                    var_b += g * db * db;
                    cov += g * da * db;
                }
            }
            double num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2);
            double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            total += num / den;
            ++count;
        }
    }
    return total / count;
}

}  // namespace

double clean_accuracy(const HybridModel& model, const LabeledDataset& ds) {
    if (ds.empty()) throw std::invalid_argument("clean_accuracy: empty dataset");
    size_t hits = 0;
    for (size_t i = 0; i < ds.size(); ++i) {
        if (predict(model, ds.images[i]) == ds.labels[i]) ++hits;
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(ds.size());
}

double attack_success_rate(const HybridModel& model, const LabeledDataset& clean_ds,
                           const TriggerSpec& spec, int target_label) {
    size_t considered = 0, hits = 0;
    for (size_t i = 0; i < clean_ds.size(); ++i) {
        if (clean_ds.labels[i] == target_label) continue;
        ++considered;
        Tensor triggered = apply_trigger(clean_ds.images[i], spec);
        if (predict(model, triggered) == target_label) ++hits;
    }
    if (considered == 0) {
        throw std::invalid_argument("attack_success_rate: no samples outside the target class");
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(considered);
}

double ssim(const Tensor& a, const Tensor& b) {
    if (a.shape != b.shape || a.shape.size() != 3) {
        throw std::invalid_argument("ssim: expects two [C,H,W] images of equal shape");
    }
    const int c = a.shape[0], h = a.shape[1], w = a.shape[2];
    double total = 0.0;
    for (int ch = 0; ch < c; ++ch) {
        total += ssim_channel(a.data.data() + static_cast<size_t>(ch) * h * w,
                              b.data.data() + static_cast<size_t>(ch) * h * w, h, w);
    }
    return total / c;
}

double mean_trigger_ssim(const LabeledDataset& ds, const TriggerSpec& spec, size_t max_images) {
    if (ds.empty()) throw std::invalid_argument("mean_trigger_ssim: empty dataset");
    size_t n = ds.size();
    if (max_images > 0 && max_images < n) n = max_images;
    double total = 0.0;
    for (size_t i = 0; i < n; ++i) {
        total += ssim(ds.images[i], apply_trigger(ds.images[i], spec));
    }
    return total / static_cast<double>(n);
}

Tensor grad_cam(HybridModel& model, const Tensor& image, int class_index) {
    Tape tape;
    for (Tensor* p : model.parameters()) tape.watch(*p);
    ForwardTrace trace = forward_trace(tape, model, image);
    if (class_index < 0 || class_index >= trace.logits.shape[0]) {
        throw std::invalid_argument("grad_cam: class index out of range");
    }
    Tensor score = pick(tape, trace.logits, class_index);
    GradientSet grads = tape.backward(score.node);

    const Tensor& act = trace.conv2_act;
    const int c = act.shape[0], ah = act.shape[1], aw = act.shape[2];
    const auto& act_grad = grads[static_cast<size_t>(act.node)];

    Tensor cam({ah, aw});
    for (int ch = 0; ch < c; ++ch) {
        double wgt = 0.0;
        for (int i = 0; i < ah * aw; ++i) {
            wgt += act_grad[static_cast<size_t>(ch * ah * aw + i)];
        }
        wgt /= ah * aw;
        for (int i = 0; i < ah * aw; ++i) {
            cam.data[static_cast<size_t>(i)] +=
                wgt * act.data[static_cast<size_t>(ch * ah * aw + i)];
        }
    }
    for (auto& v : cam.data) v = std::max(0.0, v);

    const int ih = image.shape[1], iw = image.shape[2];
    Tensor up({ih, iw});
    for (int y = 0; y < ih; ++y) {
        for (int x = 0; x < iw; ++x) {
            int sy = std::min(ah - 1, y * ah / ih);
            int sx = std::min(aw - 1, x * aw / iw);
            up.data[static_cast<size_t>(y * iw + x)] = cam.data[static_cast<size_t>(sy * aw + sx)];
        }
    }
    double mx = 0.0;
    for (double v : up.data) mx = std::max(mx, v);
    if (mx > 0.0) {
        for (auto& v : up.data) v /= mx;
    }
    model.clear_tape_nodes();
    return up;
}

std::string EvalReport::csv_header() {
    return "model_id,trigger,poison_rate,clean_acc,backdoor_acc,asr,mean_ssim,seed";
}

std::string EvalReport::csv_row() const {
    std::ostringstream os;
    char nums[5][64];
    std::snprintf(nums[0], sizeof(nums[0]), "%.17g", poison_rate);
    std::snprintf(nums[1], sizeof(nums[1]), "%.17g", clean_acc);
    std::snprintf(nums[2], sizeof(nums[2]), "%.17g", backdoor_acc);
    std::snprintf(nums[3], sizeof(nums[3]), "%.17g", asr);
    std::snprintf(nums[4], sizeof(nums[4]), "%.17g", mean_ssim);
    os << model_id << ',' << trigger << ',' << nums[0] << ',' << nums[1] << ',' << nums[2] << ','
       << nums[3] << ',' << nums[4] << ',' << seed;
    return os.str();
}

}  // namespace hqlab
