#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "hqlab/dataset.hpp"
#include "hqlab/model.hpp"
#include "hqlab/rng.hpp"

namespace hqlab {

/// Genes are Qcolor channel ratios, boxed to [0.5, 1.5].
inline constexpr double kGeneLower = 0.5;
inline constexpr double kGeneUpper = 1.5;

struct Individual {
    std::array<double, 3> genes{1.0, 1.0, 1.0};
    double f1 = std::numeric_limits<double>::quiet_NaN();  // minimized
    double f2 = std::numeric_limits<double>::quiet_NaN();  // minimized
    int rank = -1;
    double crowding = 0.0;

    bool evaluated() const;
};

struct NsgaConfig {
    int population = 20;  // even, >= 4
    int generations = 10;
    int tournament = 2;
    double eta_c = 15.0;  // SBX index; +inf makes crossover copy parents
    double sigma_m = 0.05;
    double mutation_prob = 1.0 / 3.0;
    uint64_t seed = 1;

    void validate() const;
};

/// Binds everything one fitness evaluation needs. Same genes -> same
/// (f1, f2), regardless of when or on which thread the call runs.
class FitnessEvaluator {
public:
    virtual ~FitnessEvaluator() = default;
    virtual std::pair<double, double> evaluate(const std::array<double, 3>& genes) = 0;
};

std::pair<double, double> evaluate_fitness(const std::array<double, 3>& genes,
                                           FitnessEvaluator& ctx);

/// Trains a small poisoned model per gene triple and scores
/// f1 = 1 - attack success rate, f2 = 1 - mean SSIM over a fixed probe set.
/// A diverging surrogate yields (2, 2) with a warning instead of throwing.
class SurrogateFitness : public FitnessEvaluator {
public:
    struct Budget {
        int epochs = 2;
        size_t max_train_samples = 2000;
        size_t holdout_samples = 200;
        size_t probe_images = 32;
        int batch_size = 32;
        double learning_rate = 0.05;
    };

    SurrogateFitness(const LabeledDataset& base, ModelArch arch, double poison_rate,
                     int target_label, Budget budget, uint64_t seed);

    std::pair<double, double> evaluate(const std::array<double, 3>& genes) override;

private:
    LabeledDataset train_;
    LabeledDataset holdout_;
    std::vector<Tensor> probe_;
    ModelArch arch_;
    double poison_rate_;
    int target_label_;
    Budget budget_;
    uint64_t seed_;
};

/// Deb's fast non-dominated sort. Assigns rank on each individual and
/// returns the fronts as index lists. a dominates b iff a is <= in both
/// objectives and < in at least one.
std::vector<std::vector<size_t>> fast_nondominated_sort(std::vector<Individual>& pop);

bool dominates(const Individual& a, const Individual& b);

/// Crowding distances for one front: boundary points get +inf, interior
/// points sum normalized neighbor gaps per objective. A zero-range
/// objective contributes nothing.
std::vector<double> crowding_distance(const std::vector<Individual>& front);

/// Binary-tournament selection, SBX crossover, Gaussian mutation, clamp.
/// Offspring come back unevaluated.
std::vector<Individual> evolve_generation(const std::vector<Individual>& pop,
                                          const NsgaConfig& cfg, Rng& rng);

struct GenerationRecord {
    int generation = 0;
    std::vector<Individual> front;  // rank-0 members after survival selection
};

struct NsgaResult {
    Individual best;                    // min f1+f2 on the final first front
    std::vector<Individual> front;      // final first front
    std::vector<GenerationRecord> history;  // entry 0 = initial population
};

NsgaResult nsga2_run(const NsgaConfig& cfg, FitnessEvaluator& ctx);

/// CSV dump of the per-generation fronts:
/// generation,r1,r2,r3,f1,f2,rank,crowding
void write_front_history(const std::string& path, const std::vector<GenerationRecord>& history);

}  // namespace hqlab
