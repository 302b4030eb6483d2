#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "hqlab/dataset.hpp"
#include "hqlab/model.hpp"

namespace hqlab {

struct BoundInputs {
    double loss_bound = 1.0;    // B > 0
    int64_t m_samples = 1;      // triggered-sample count, >= 1
    double conf_delta = 0.05;   // confidence parameter, in (0,1)
    double lipschitz = 0.0;    // L_t >= 0
    double trig_delta = 0.0;   // trigger strength, >= 0
    double z_norm = 0.0;       // trigger direction norm, >= 0

    void validate() const;
};

/// train_err - (B/sqrt(2m)) * sqrt(ln(2/conf_delta)) + L_t * trig_delta * z_norm
double generalization_lower_bound(const BoundInputs& inp, double train_err);

/// Two-sided Hoeffding tail 2*exp(-2*m*eps^2 / B^2).
double hoeffding_tail(int m, double B, double eps);

/// Empirical lower estimate of the loss Lipschitz constant: max over
/// sampled pairs (x, x + perturbation) of |loss(x') - loss(x)| / ||x' - x||.
/// The fixed label makes the loss a function of the input alone.
double estimate_lipschitz(const HybridModel& model, const LabeledDataset& dataset, int n_pairs,
                          int y_fixed, uint64_t seed, double perturb_scale = 1e-3);

/// Same estimator over an arbitrary scalar loss of the input.
double estimate_lipschitz(const std::function<double(const Tensor&)>& loss,
                          const LabeledDataset& dataset, int n_pairs, uint64_t seed,
                          double perturb_scale = 1e-3);

struct CompEstimate {
    std::vector<double> epsilons;        // ascending, > 0
    std::vector<double> tail_fractions;  // fraction with ||phi(x)-mean|| >= eps
    std::vector<double> c_values;        // -ln(tail), +inf where tail is 0
    std::vector<double> feature_mean;
};

/// Concentration profile of a feature map around its sample mean.
CompEstimate estimate_comp(const std::vector<std::vector<double>>& features,
                           const std::vector<double>& eps_grid);

/// Inverts the (epsilon, c) curve by monotone piecewise-linear
/// interpolation over the finite knots. Queries outside the observed
/// c-range are an error; no extrapolation.
double min_perturbation(const CompEstimate& comp, double c_query);

}  // namespace hqlab
