#include "hqlab/defenses.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>

#include "hqlab/metrics.hpp"
#include "hqlab/rng.hpp"
#include "hqlab/thread_pool.hpp"

namespace hqlab {

// ---- STRIP ----------------------------------------------------------------

void StripConfig::validate() const {
    if (n_overlays < 1) {
        throw std::invalid_argument("strip overlays must be at least 1, got " +
                                    std::to_string(n_overlays));
    }
    if (blend_alpha <= 0.0 || blend_alpha >= 1.0) {
        throw std::invalid_argument("strip blend alpha outside (0, 1): " +
                                    std::to_string(blend_alpha));
    }
    if (percentile < 0.0 || percentile > 100.0) {
        throw std::invalid_argument("strip percentile outside [0, 100]: " +
                                    std::to_string(percentile));
    }
}

namespace {

double shannon_entropy(const std::vector<double>& probs) {
    double h = 0.0;
    for (double p : probs) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return h;
}

double nearest_rank_percentile(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    double rank = p / 100.0 * static_cast<double>(v.size());
    size_t idx = rank <= 1.0 ? 0 : static_cast<size_t>(std::ceil(rank)) - 1;
    if (idx >= v.size()) idx = v.size() - 1;
    return v[idx];
}

}  // namespace

double strip_entropy(const HybridModel& model, const Tensor& input,
                     const std::vector<Tensor>& overlay_pool, const StripConfig& cfg) {
    cfg.validate();
    if (overlay_pool.empty()) throw std::invalid_argument("strip_entropy: empty overlay pool");
    Rng rng(Rng::mix({cfg.seed, 0x7374726970ULL}));
    double total = 0.0;
    for (int k = 0; k < cfg.n_overlays; ++k) {
        const Tensor& overlay = overlay_pool[rng.uniform_int(overlay_pool.size())];
        if (overlay.shape != input.shape) {
            throw std::invalid_argument("strip_entropy: overlay shape differs from the input");
        }
        Tensor blended = input;
        blended.node = -1;
        for (size_t i = 0; i < blended.data.size(); ++i) {
            blended.data[i] =
                (1.0 - cfg.blend_alpha) * blended.data[i] + cfg.blend_alpha * overlay.data[i];
        }
        total += shannon_entropy(softmax(forward(model, blended).data));
    }
    return total / cfg.n_overlays;
}

EntropyHistogram make_histogram(const std::vector<double>& values, int bins) {
    if (bins < 1) throw std::invalid_argument("histogram needs at least one bin");
    EntropyHistogram h;
    h.counts.assign(static_cast<size_t>(bins), 0);
    if (values.empty()) return h;
    auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
    h.lo = *lo_it;
    h.hi = *hi_it;
    for (double v : values) {
        size_t b = 0;
        if (h.hi > h.lo) {
            b = static_cast<size_t>((v - h.lo) / (h.hi - h.lo) * bins);
            if (b >= static_cast<size_t>(bins)) b = static_cast<size_t>(bins) - 1;
        }
        ++h.counts[b];
    }
    return h;
}

StripReport strip_detect(const HybridModel& model, const LabeledDataset& clean_set,
                         const LabeledDataset& suspect_set, const StripConfig& cfg) {
    cfg.validate();
    if (clean_set.empty() || suspect_set.empty()) {
        throw std::invalid_argument("strip_detect: both sample sets must be nonempty");
    }

    StripReport report;
    report.clean_entropies.resize(clean_set.size());
    report.suspect_entropies.resize(suspect_set.size());

    auto run_set = [&](const LabeledDataset& set, std::vector<double>& out, uint64_t tag) {
        global_pool().parallel_for(set.size(), [&](size_t i) {
            StripConfig per = cfg;
            per.seed = Rng::mix({cfg.seed, tag, static_cast<uint64_t>(i)});
            out[i] = strip_entropy(model, set.images[i], clean_set.images, per);
        });
    };
    run_set(clean_set, report.clean_entropies, 0x636c65616eULL);
    run_set(suspect_set, report.suspect_entropies, 0x73757370ULL);

    report.threshold = nearest_rank_percentile(report.clean_entropies, cfg.percentile);
    size_t undetected = 0;
    for (double e : report.suspect_entropies) {
        if (e > report.threshold) ++undetected;
    }
    size_t rejected = 0;
    for (double e : report.clean_entropies) {
        if (e <= report.threshold) ++rejected;
    }
    report.far = static_cast<double>(undetected) / static_cast<double>(suspect_set.size());
    report.frr = static_cast<double>(rejected) / static_cast<double>(clean_set.size());
    report.clean_hist = make_histogram(report.clean_entropies, 20);
    report.suspect_hist = make_histogram(report.suspect_entropies, 20);
    return report;
}

void write_strip_report(const std::string& path, const StripReport& report) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "sample_id,set,entropy\n";
    char buf[64];
    for (size_t i = 0; i < report.clean_entropies.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", report.clean_entropies[i]);
        out << i << ",clean," << buf << '\n';
    }
    for (size_t i = 0; i < report.suspect_entropies.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g", report.suspect_entropies[i]);
        out << i << ",suspect," << buf << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

// ---- Neural Cleanse -------------------------------------------------------

void CleanseConfig::validate() const {
    if (steps < 1) {
        throw std::invalid_argument("cleanse steps must be at least 1, got " +
                                    std::to_string(steps));
    }
    if (lambda_mask < 0.0) {
        throw std::invalid_argument("cleanse mask weight must be nonnegative, got " +
                                    std::to_string(lambda_mask));
    }
    if (learning_rate <= 0.0) {
        throw std::invalid_argument("cleanse learning rate must be positive, got " +
                                    std::to_string(learning_rate));
    }
    if (batch_size < 1) {
        throw std::invalid_argument("cleanse batch size must be at least 1, got " +
                                    std::to_string(batch_size));
    }
}

namespace {

// out[c,h,w] = (1-m[h,w]) * x[c,h,w] + m[h,w] * pattern[c,h,w], with x constant.
Tensor blend_masked(Tape& tape, const Tensor& image, const Tensor& mask, const Tensor& pattern) {
    const int c = image.shape[0], h = image.shape[1], w = image.shape[2];
    if (mask.node < 0 || pattern.node < 0) {
        throw std::logic_error("blend_masked expects tape-tracked mask and pattern");
    }
    Tensor out({c, h, w});
    for (int ch = 0; ch < c; ++ch) {
        for (int i = 0; i < h * w; ++i) {
            size_t k = static_cast<size_t>(ch * h * w + i);
            out.data[k] = (1.0 - mask.data[static_cast<size_t>(i)]) * image.data[k] +
                          mask.data[static_cast<size_t>(i)] * pattern.data[k];
        }
    }
    const int m_node = mask.node, p_node = pattern.node;
    out.node = tape.record(
        static_cast<int>(out.data.size()), {m_node, p_node},
        [img = image.data, m = mask.data, pat = pattern.data, c, h, w, m_node,
         p_node](const double* up, GradientSet& grads) {
            for (int ch = 0; ch < c; ++ch) {
                for (int i = 0; i < h * w; ++i) {
                    size_t k = static_cast<size_t>(ch * h * w + i);
                    grads[static_cast<size_t>(m_node)][static_cast<size_t>(i)] +=
                        up[k] * (pat[k] - img[k]);
                    grads[static_cast<size_t>(p_node)][k] += up[k] * m[static_cast<size_t>(i)];
                }
            }
        });
    return out;
}

std::optional<CleanseClassResult> cleanse_attempt(HybridModel& model,
                                                  const std::vector<const Tensor*>& samples,
                                                  int cls, const CleanseConfig& cfg, double eta) {
    const int h = samples[0]->shape[1];
    const int w = samples[0]->shape[2];

    Tensor mask_logits({h, w});
    for (auto& v : mask_logits.data) v = -3.0;  // sigmoid(-3) ~ 0.047: sparse start
    Tensor pattern_logits({3, h, w});           // sigmoid(0) = 0.5: gray start

    Rng order_rng(Rng::mix({cfg.seed, 0x636c6e73ULL, static_cast<uint64_t>(cls)}));
    std::vector<size_t> order(samples.size());
    std::iota(order.begin(), order.end(), size_t{0});
    order_rng.shuffle(order);

    OptimState opt;
    opt.method = OptimKind::adam;
    opt.learning_rate = eta;

    double lambda = cfg.lambda_mask;
    size_t cursor = 0;
    for (int step = 0; step < cfg.steps; ++step) {
        Tape tape;
        tape.watch(mask_logits);
        tape.watch(pattern_logits);
        Tensor m = sigmoid(tape, mask_logits);
        Tensor pattern = sigmoid(tape, pattern_logits);

        Tensor loss;
        size_t hit = 0;
        const auto batch = static_cast<size_t>(cfg.batch_size);
        for (size_t b = 0; b < batch; ++b) {
            const Tensor& img = *samples[order[cursor]];
            cursor = (cursor + 1) % order.size();
            Tensor blended = blend_masked(tape, img, m, pattern);
            ForwardTrace trace = forward_trace(tape, model, blended);
            if (argmax_class(trace.logits.data) == cls) ++hit;
            Tensor ce = softmax_cross_entropy(tape, trace.logits, cls);
            loss = b == 0 ? ce : add(tape, loss, ce);
        }
        loss = scale(tape, loss, 1.0 / static_cast<double>(batch));
        Tensor sparsity = scale(tape, sum(tape, m), lambda);
        loss = add(tape, loss, sparsity);

        if (!std::isfinite(loss.data[0])) {
            mask_logits.node = pattern_logits.node = -1;
            return std::nullopt;
        }

        GradientSet grads = tape.backward(loss.node);
        std::vector<Tensor*> params{&mask_logits, &pattern_logits};
        optimizer_step(params, gather_grads(grads, params), opt);
        mask_logits.node = pattern_logits.node = -1;

        double asr = static_cast<double>(hit) / static_cast<double>(batch);
        if (asr > 0.99) {
            lambda *= 2.0;
        } else if (asr < 0.90) {
            lambda *= 0.5;
        }
    }

    CleanseClassResult res;
    res.class_index = cls;
    res.mask = Tensor({h, w});
    for (size_t i = 0; i < res.mask.data.size(); ++i) {
        res.mask.data[i] = 1.0 / (1.0 + std::exp(-mask_logits.data[i]));
    }
    res.pattern = Tensor({3, h, w});
    for (size_t i = 0; i < res.pattern.data.size(); ++i) {
        res.pattern.data[i] = 1.0 / (1.0 + std::exp(-pattern_logits.data[i]));
    }
    res.mask_l1 = std::accumulate(res.mask.data.begin(), res.mask.data.end(), 0.0);
    return res;
}

}  // namespace

CleanseReport neural_cleanse(HybridModel& model, const LabeledDataset& dataset,
                             const CleanseConfig& cfg) {
    cfg.validate();
    if (dataset.empty()) throw std::invalid_argument("neural_cleanse: empty dataset");
    const int n_classes = model.head_b.shape[0];

    std::vector<const Tensor*> samples;
    size_t n = std::min(cfg.max_samples, dataset.size());
    samples.reserve(n);
    for (size_t i = 0; i < n; ++i) samples.push_back(&dataset.images[i]);

    CleanseReport report;
    report.classes.resize(static_cast<size_t>(n_classes));
    global_pool().parallel_for(static_cast<size_t>(n_classes), [&](size_t c) {
        auto cls = static_cast<int>(c);
        auto res = cleanse_attempt(model, samples, cls, cfg, cfg.learning_rate);
        if (!res) {
            std::cerr << "warning: cleanse diverged for class " << cls
                      << ", restarting with a smaller step\n";
            res = cleanse_attempt(model, samples, cls, cfg, cfg.learning_rate / 10.0);
        }
        if (res) {
            report.classes[c] = std::move(*res);
        } else {
            report.classes[c].class_index = cls;
            report.classes[c].failed = true;
        }
    });

    std::vector<double> norms;
    norms.reserve(report.classes.size());
    for (const auto& r : report.classes) norms.push_back(r.mask_l1);
    auto [idx, flagged] = anomaly_index(norms);
    report.anomaly = std::move(idx);
    report.flagged = std::move(flagged);
    return report;
}

std::pair<std::vector<double>, std::vector<int>> anomaly_index(
    const std::vector<double>& l1_norms) {
    if (l1_norms.size() < 3) {
        throw std::invalid_argument("anomaly_index needs at least 3 classes, got " +
                                    std::to_string(l1_norms.size()));
    }
    auto median_of = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        size_t n = v.size();
        return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };
    double med = median_of(l1_norms);
    std::vector<double> devs;
    devs.reserve(l1_norms.size());
    for (double v : l1_norms) devs.push_back(std::abs(v - med));
    double mad = median_of(devs);

    std::vector<double> index(l1_norms.size(), 0.0);
    std::vector<int> flagged;
    if (mad > 0.0) {
        for (size_t i = 0; i < l1_norms.size(); ++i) {
            index[i] = std::abs(l1_norms[i] - med) / (1.4826 * mad);
            if (index[i] > 2.0 && l1_norms[i] < med) flagged.push_back(static_cast<int>(i));
        }
    }
    return {index, flagged};
}

void write_cleanse_report(const std::string& path, const CleanseReport& report) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "class,l1,anomaly_index,flagged\n";
    char buf[64];
    for (size_t c = 0; c < report.classes.size(); ++c) {
        bool is_flagged = std::find(report.flagged.begin(), report.flagged.end(),
                                    static_cast<int>(c)) != report.flagged.end();
        std::snprintf(buf, sizeof(buf), "%.17g", report.classes[c].mask_l1);
        out << report.classes[c].class_index << ',' << buf;
        std::snprintf(buf, sizeof(buf), "%.17g", report.anomaly[c]);
        out << ',' << buf << ',' << (is_flagged ? 1 : 0) << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

// ---- Fine-Pruning ---------------------------------------------------------

void PruneConfig::validate() const {
    if (rates.empty()) throw std::invalid_argument("prune sweep needs at least one rate");
    for (double r : rates) {
        if (r <= 0.0 || r >= 1.0) {
            throw std::invalid_argument("prune rate outside (0, 1): " + std::to_string(r));
        }
    }
    if (!std::is_sorted(rates.begin(), rates.end())) {
        throw std::invalid_argument("prune rates must be ascending");
    }
}

std::vector<int> rank_channels_by_activation(HybridModel& model,
                                             const LabeledDataset& clean_subset) {
    if (clean_subset.empty()) {
        throw std::invalid_argument("channel ranking needs a nonempty clean subset");
    }
    const int channels = model.conv2_k.shape[0];
    std::vector<std::vector<double>> mean_map(static_cast<size_t>(channels));
    for (size_t i = 0; i < clean_subset.size(); ++i) {
        Tape tape;
        ForwardTrace trace = forward_trace(tape, model, clean_subset.images[i]);
        const Tensor& act = trace.conv2_act;
        const int hw = act.shape[1] * act.shape[2];
        for (int ch = 0; ch < channels; ++ch) {
            auto& acc = mean_map[static_cast<size_t>(ch)];
            if (acc.empty()) acc.assign(static_cast<size_t>(hw), 0.0);
            for (int k = 0; k < hw; ++k) {
                acc[static_cast<size_t>(k)] += act.data[static_cast<size_t>(ch * hw + k)];
            }
        }
    }
    std::vector<std::pair<double, int>> scored;
    scored.reserve(static_cast<size_t>(channels));
    for (int ch = 0; ch < channels; ++ch) {
        double l1 = 0.0;
        for (double v : mean_map[static_cast<size_t>(ch)]) {
            l1 += std::abs(v / static_cast<double>(clean_subset.size()));
        }
        scored.emplace_back(l1, ch);
    }
    std::stable_sort(scored.begin(), scored.end());
    std::vector<int> order;
    order.reserve(scored.size());
    for (const auto& [l1, ch] : scored) order.push_back(ch);
    return order;
}

void prune_channels(HybridModel& model, const std::vector<int>& channels) {
    const int c_out = model.conv2_k.shape[0];
    const int per_channel = model.conv2_k.shape[1] * model.conv2_k.shape[2] * model.conv2_k.shape[3];
    for (int ch : channels) {
        if (ch < 0 || ch >= c_out) {
            throw std::invalid_argument("prune channel out of range: " + std::to_string(ch));
        }
        std::fill_n(model.conv2_k.data.begin() + static_cast<long>(ch) * per_channel, per_channel,
                    0.0);
        model.conv2_b.data[static_cast<size_t>(ch)] = 0.0;
    }
}

std::vector<PruneRow> fine_prune_sweep(HybridModel& model, const LabeledDataset& clean_subset,
                                       const PruneEval& eval, const PruneConfig& cfg) {
    cfg.validate();
    if (!eval.eval_clean || !eval.trigger) {
        throw std::invalid_argument("prune sweep needs evaluation data and a trigger");
    }
    std::vector<int> ranking = rank_channels_by_activation(model, clean_subset);
    const int channels = model.conv2_k.shape[0];
    const std::vector<double> k_save = model.conv2_k.data;
    const std::vector<double> b_save = model.conv2_b.data;

    std::vector<PruneRow> rows;
    rows.reserve(cfg.rates.size());
    for (double rate : cfg.rates) {
        const int k = static_cast<int>(std::floor(rate * channels));
        prune_channels(model, {ranking.begin(), ranking.begin() + k});
        PruneRow row;
        row.rate = rate;
        row.pruned_channels = k;
        row.backdoor_acc = clean_accuracy(model, *eval.eval_clean);
        row.asr = attack_success_rate(model, *eval.eval_clean, *eval.trigger, eval.target_label);
        rows.push_back(row);
        model.conv2_k.data = k_save;
        model.conv2_b.data = b_save;
    }
    return rows;
}

void write_prune_report(const std::string& path, const std::vector<PruneRow>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "rate,ba,asr\n";
    char buf[64];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof(buf), "%.17g", row.rate);
        out << buf;
        std::snprintf(buf, sizeof(buf), "%.17g", row.backdoor_acc);
        out << ',' << buf;
        std::snprintf(buf, sizeof(buf), "%.17g", row.asr);
        out << ',' << buf << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace hqlab
