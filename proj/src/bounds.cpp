#include "hqlab/bounds.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "hqlab/rng.hpp"
#include "hqlab/tensor.hpp"

namespace hqlab {

void BoundInputs::validate() const {
    if (loss_bound <= 0.0) {
        throw std::invalid_argument("loss bound must be positive, got " +
                                    std::to_string(loss_bound));
    }
    if (m_samples < 1) {
        throw std::invalid_argument("sample count must be at least 1, got " +
                                    std::to_string(m_samples));
    }
    if (conf_delta <= 0.0 || conf_delta >= 1.0) {
        throw std::invalid_argument("confidence parameter outside (0, 1): " +
                                    std::to_string(conf_delta));
    }
    if (lipschitz < 0.0 || trig_delta < 0.0 || z_norm < 0.0) {
        throw std::invalid_argument("lipschitz, trigger strength and z norm must be nonnegative");
    }
}

double generalization_lower_bound(const BoundInputs& inp, double train_err) {
    inp.validate();
    if (train_err < 0.0) {
        throw std::invalid_argument("training error must be nonnegative, got " +
                                    std::to_string(train_err));
    }
    double hoeffding = inp.loss_bound / std::sqrt(2.0 * inp.m_samples) *
                       std::sqrt(std::log(2.0 / inp.conf_delta));
    return train_err - hoeffding + inp.lipschitz * inp.trig_delta * inp.z_norm;
}

double hoeffding_tail(int m, double B, double eps) {
    if (m < 1) throw std::invalid_argument("sample count must be at least 1");
    if (B <= 0.0) throw std::invalid_argument("range bound must be positive");
    if (eps < 0.0) throw std::invalid_argument("deviation must be nonnegative");
    return 2.0 * std::exp(-2.0 * m * eps * eps / (B * B));
}

double estimate_lipschitz(const std::function<double(const Tensor&)>& loss,
                          const LabeledDataset& dataset, int n_pairs, uint64_t seed,
                          double perturb_scale) {
    if (dataset.size() < 2) {
        throw std::invalid_argument("lipschitz estimate needs at least 2 samples");
    }
    if (n_pairs < 1) throw std::invalid_argument("pair count must be at least 1");
    if (perturb_scale <= 0.0) throw std::invalid_argument("perturbation scale must be positive");

    Rng rng(Rng::mix({seed, 0x6c697073ULL}));
    double best = 0.0;
    for (int k = 0; k < n_pairs; ++k) {
        const Tensor& x = dataset.images[rng.uniform_int(dataset.size())];
        Tensor xp = x;
        xp.node = -1;
        double dist = 0.0;
        while (dist == 0.0) {
            dist = 0.0;
            for (size_t i = 0; i < xp.data.size(); ++i) {
                double d = perturb_scale * rng.normal();
                xp.data[i] = x.data[i] + d;
                dist += d * d;
            }
            dist = std::sqrt(dist);
        }
        double slope = std::abs(loss(xp) - loss(x)) / dist;
        best = std::max(best, slope);
    }
    return best;
}

double estimate_lipschitz(const HybridModel& model, const LabeledDataset& dataset, int n_pairs,
                          int y_fixed, uint64_t seed, double perturb_scale) {
    auto ce_loss = [&model, y_fixed](const Tensor& image) {
        auto probs = softmax(forward(model, image).data);
        double p = std::max(probs[static_cast<size_t>(y_fixed)], 1e-300);
        return -std::log(p);
    };
    return estimate_lipschitz(ce_loss, dataset, n_pairs, seed, perturb_scale);
}

CompEstimate estimate_comp(const std::vector<std::vector<double>>& features,
                           const std::vector<double>& eps_grid) {
    if (features.size() < 30) {
        throw std::invalid_argument("concentration estimate needs at least 30 feature vectors");
    }
    if (eps_grid.empty()) throw std::invalid_argument("epsilon grid is empty");
    for (size_t i = 0; i < eps_grid.size(); ++i) {
        if (eps_grid[i] < 0.0 || (i > 0 && eps_grid[i] <= eps_grid[i - 1])) {
            throw std::invalid_argument("epsilon grid must be ascending and nonnegative");
        }
    }
    const size_t dim = features[0].size();
    for (const auto& f : features) {
        if (f.size() != dim) {
            throw std::invalid_argument("feature vectors must share one dimension");
        }
    }

    CompEstimate est;
    est.epsilons = eps_grid;
    est.feature_mean.assign(dim, 0.0);
    for (const auto& f : features) {
        for (size_t d = 0; d < dim; ++d) est.feature_mean[d] += f[d];
    }
    for (auto& v : est.feature_mean) v /= static_cast<double>(features.size());

    std::vector<double> dists;
    dists.reserve(features.size());
    for (const auto& f : features) {
        double acc = 0.0;
        for (size_t d = 0; d < dim; ++d) {
            double diff = f[d] - est.feature_mean[d];
            acc += diff * diff;
        }
        dists.push_back(std::sqrt(acc));
    }

    constexpr double inf = std::numeric_limits<double>::infinity();
    double prev = 1.0;
    for (double eps : eps_grid) {
        size_t count = 0;
        for (double d : dists) {
            if (d >= eps) ++count;
        }
        double frac = static_cast<double>(count) / static_cast<double>(dists.size());
        if (frac > prev) throw std::logic_error("tail fraction increased along the grid");
        prev = frac;
        est.tail_fractions.push_back(frac);
        est.c_values.push_back(frac > 0.0 ? -std::log(frac) : inf);
    }
    return est;
}

double min_perturbation(const CompEstimate& comp, double c_query) {
    if (comp.epsilons.size() != comp.c_values.size() || comp.epsilons.empty()) {
        throw std::invalid_argument("inconsistent concentration estimate");
    }
    std::vector<double> eps, c;
    for (size_t i = 0; i < comp.c_values.size(); ++i) {
        if (std::isfinite(comp.c_values[i])) {
            eps.push_back(comp.epsilons[i]);
            c.push_back(comp.c_values[i]);
        }
    }
    if (c.empty()) throw std::invalid_argument("no finite concentration values to invert");
    if (c_query < c.front() || c_query > c.back()) {
        throw std::out_of_range("target concentration " + std::to_string(c_query) +
                                " outside the invertible range [" + std::to_string(c.front()) +
                                ", " + std::to_string(c.back()) + "]");
    }
    for (size_t i = 0; i + 1 < c.size(); ++i) {
        if (c_query >= c[i] && c_query <= c[i + 1]) {
            if (c[i + 1] == c[i]) return eps[i];
            double t = (c_query - c[i]) / (c[i + 1] - c[i]);
            return eps[i] + t * (eps[i + 1] - eps[i]);
        }
    }
    return eps.back();
}

}  // namespace hqlab
