#include "hqlab/nsga2.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <stdexcept>

#include "hqlab/attacks.hpp"
#include "hqlab/metrics.hpp"
#include "hqlab/thread_pool.hpp"

namespace hqlab {

bool Individual::evaluated() const { return std::isfinite(f1) && std::isfinite(f2); }

void NsgaConfig::validate() const {
    if (population < 4 || population % 2 != 0) {
        throw std::invalid_argument("population must be an even count of at least 4, got " +
                                    std::to_string(population));
    }
    if (generations < 1) {
        throw std::invalid_argument("generations must be at least 1, got " +
                                    std::to_string(generations));
    }
    if (tournament < 1) {
        throw std::invalid_argument("tournament size must be at least 1, got " +
                                    std::to_string(tournament));
    }
    if (mutation_prob < 0.0 || mutation_prob > 1.0) {
        throw std::invalid_argument("mutation probability outside [0, 1]: " +
                                    std::to_string(mutation_prob));
    }
    if (sigma_m < 0.0) {
        throw std::invalid_argument("mutation sigma must be nonnegative, got " +
                                    std::to_string(sigma_m));
    }
}

std::pair<double, double> evaluate_fitness(const std::array<double, 3>& genes,
                                           FitnessEvaluator& ctx) {
    for (double g : genes) {
        if (g < kGeneLower || g > kGeneUpper) {
            throw std::invalid_argument("gene outside [0.5, 1.5]: " + std::to_string(g));
        }
    }
    return ctx.evaluate(genes);
}

SurrogateFitness::SurrogateFitness(const LabeledDataset& base, ModelArch arch, double poison_rate,
                                   int target_label, Budget budget, uint64_t seed)
    : arch_(arch),
      poison_rate_(poison_rate),
      target_label_(target_label),
      budget_(budget),
      seed_(seed) {
    if (base.empty()) throw std::invalid_argument("surrogate fitness needs a nonempty dataset");
    base.validate();

    std::vector<int> order(base.size());
    std::iota(order.begin(), order.end(), 0);
    Rng split_rng(Rng::mix({seed, 0x73706c6974ULL}));
    split_rng.shuffle(order);

    size_t n_hold = std::min(budget.holdout_samples, base.size() / 4);
    if (n_hold < 8) n_hold = std::min<size_t>(8, base.size() / 2);
    std::vector<int> hold_idx(order.begin(), order.begin() + static_cast<long>(n_hold));
    size_t n_train = std::min(budget.max_train_samples, base.size() - n_hold);
    std::vector<int> train_idx(order.begin() + static_cast<long>(n_hold),
                               order.begin() + static_cast<long>(n_hold + n_train));
    holdout_ = base.subset(hold_idx);
    train_ = base.subset(train_idx);

    size_t n_probe = std::min(budget.probe_images, holdout_.size());
    probe_.assign(holdout_.images.begin(), holdout_.images.begin() + static_cast<long>(n_probe));
}

std::pair<double, double> SurrogateFitness::evaluate(const std::array<double, 3>& genes) {
    // Keyed by genes so identical genes give identical fitness no matter
    // where in the population (or on which thread) they are evaluated.
    uint64_t gh = Rng::mix({seed_, 0x6669746eULL, std::bit_cast<uint64_t>(genes[0]),
                            std::bit_cast<uint64_t>(genes[1]), std::bit_cast<uint64_t>(genes[2])});
    TriggerSpec trig = TriggerSpec::qcolor(genes[0], genes[1], genes[2]);

    double ssim_total = 0.0;
    for (const auto& img : probe_) ssim_total += ssim(img, apply_trigger(img, trig));
    double f2 = 1.0 - ssim_total / static_cast<double>(probe_.size());

    PoisonConfig pc;
    pc.rate = poison_rate_;
    pc.target_label = target_label_;
    pc.seed = gh;

    TrainConfig tc;
    tc.epochs = budget_.epochs;
    tc.batch_size = budget_.batch_size;
    tc.learning_rate = budget_.learning_rate;
    tc.seed = gh;

    try {
        LabeledDataset poisoned = poison_dataset(train_, trig, pc);
        HybridModel model = init_model(arch_, gh);
        train(model, poisoned, tc);
        const double asr = attack_success_rate(model, holdout_, trig, target_label_) / 100.0;
        return {1.0 - asr, f2};
    } catch (const std::runtime_error& e) {
        std::cerr << "warning: surrogate diverged for genes (" << genes[0] << "," << genes[1]
                  << "," << genes[2] << "): " << e.what() << "\n";
        return {2.0, 2.0};
    }
}

bool dominates(const Individual& a, const Individual& b) {
    return a.f1 <= b.f1 && a.f2 <= b.f2 && (a.f1 < b.f1 || a.f2 < b.f2);
}

std::vector<std::vector<size_t>> fast_nondominated_sort(std::vector<Individual>& pop) {
    const size_t n = pop.size();
    for (const auto& ind : pop) {
        if (!ind.evaluated()) {
            throw std::invalid_argument("fast_nondominated_sort: unevaluated individual");
        }
    }
    std::vector<std::vector<size_t>> dominated(n);
    std::vector<int> dom_count(n, 0);
    std::vector<std::vector<size_t>> fronts(1);

    for (size_t p = 0; p < n; ++p) {
        for (size_t q = 0; q < n; ++q) {
            if (p == q) continue;
            if (dominates(pop[p], pop[q])) {
                dominated[p].push_back(q);
            } else if (dominates(pop[q], pop[p])) {
                ++dom_count[p];
            }
        }
        if (dom_count[p] == 0) {
            pop[p].rank = 0;
            fronts[0].push_back(p);
        }
    }

    size_t i = 0;
    while (!fronts[i].empty()) {
        std::vector<size_t> next;
        for (size_t p : fronts[i]) {
            for (size_t q : dominated[p]) {
                if (--dom_count[q] == 0) {
                    pop[q].rank = static_cast<int>(i + 1);
                    next.push_back(q);
                }
            }
        }
        ++i;
        fronts.push_back(std::move(next));
    }
    fronts.pop_back();
    return fronts;
}

std::vector<double> crowding_distance(const std::vector<Individual>& front) {
    const size_t n = front.size();
    if (n == 0) throw std::invalid_argument("crowding_distance: empty front");
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> dist(n, 0.0);
    if (n <= 2) {
        std::fill(dist.begin(), dist.end(), inf);
        return dist;
    }

    auto objective = [&](size_t i, int obj) { return obj == 0 ? front[i].f1 : front[i].f2; };
    for (int obj = 0; obj < 2; ++obj) {
        std::vector<size_t> idx(n);
        std::iota(idx.begin(), idx.end(), size_t{0});
        std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
            return objective(a, obj) < objective(b, obj);
        });
        dist[idx.front()] = inf;
        dist[idx.back()] = inf;
        double range = objective(idx.back(), obj) - objective(idx.front(), obj);
        if (range <= 0.0) continue;
        for (size_t k = 1; k + 1 < n; ++k) {
            if (std::isinf(dist[idx[k]])) continue;
            dist[idx[k]] += (objective(idx[k + 1], obj) - objective(idx[k - 1], obj)) / range;
        }
    }
    return dist;
}

namespace {

// rank ascending, then crowding descending
bool tournament_better(const Individual& a, const Individual& b) {
    if (a.rank != b.rank) return a.rank < b.rank;
    return a.crowding > b.crowding;
}

size_t select_one(const std::vector<Individual>& pop, const NsgaConfig& cfg, Rng& rng) {
    size_t best = rng.uniform_int(pop.size());
    for (int t = 1; t < cfg.tournament; ++t) {
        size_t challenger = rng.uniform_int(pop.size());
        if (tournament_better(pop[challenger], pop[best])) best = challenger;
    }
    return best;
}

double clamp_gene(double v) { return std::min(kGeneUpper, std::max(kGeneLower, v)); }

// Simulated binary crossover on one gene pair. An infinite index is the
// copy-parents limit.
std::pair<double, double> sbx_pair(double p1, double p2, double eta, Rng& rng) {
    if (!std::isfinite(eta)) return {p1, p2};
    double u = rng.uniform();
    double beta;
    if (u <= 0.5) {
        beta = std::pow(2.0 * u, 1.0 / (eta + 1.0));
    } else {
        beta = std::pow(1.0 / (2.0 * (1.0 - u)), 1.0 / (eta + 1.0));
    }
    double c1 = 0.5 * ((1.0 + beta) * p1 + (1.0 - beta) * p2);
    double c2 = 0.5 * ((1.0 - beta) * p1 + (1.0 + beta) * p2);
    return {c1, c2};
}

}  // namespace

std::vector<Individual> evolve_generation(const std::vector<Individual>& pop,
                                          const NsgaConfig& cfg, Rng& rng) {
    cfg.validate();
    if (pop.empty()) throw std::invalid_argument("evolve_generation: empty population");
    std::vector<Individual> offspring;
    offspring.reserve(static_cast<size_t>(cfg.population));
    while (offspring.size() < static_cast<size_t>(cfg.population)) {
        const Individual& p1 = pop[select_one(pop, cfg, rng)];
        const Individual& p2 = pop[select_one(pop, cfg, rng)];
        Individual c1, c2;
        for (size_t g = 0; g < 3; ++g) {
            auto [a, b] = sbx_pair(p1.genes[g], p2.genes[g], cfg.eta_c, rng);
            c1.genes[g] = a;
            c2.genes[g] = b;
        }
        for (Individual* c : {&c1, &c2}) {
            for (auto& gene : c->genes) {
                if (rng.uniform() < cfg.mutation_prob) gene += cfg.sigma_m * rng.normal();
                gene = clamp_gene(gene);
            }
        }
        offspring.push_back(c1);
        if (offspring.size() < static_cast<size_t>(cfg.population)) offspring.push_back(c2);
    }
    return offspring;
}

namespace {

void evaluate_all(std::vector<Individual>& pop, FitnessEvaluator& ctx) {
    global_pool().parallel_for(pop.size(), [&](size_t i) {
        auto [f1, f2] = evaluate_fitness(pop[i].genes, ctx);
        pop[i].f1 = f1;
        pop[i].f2 = f2;
    });
}

// Rank + crowd a population in place, returning its fronts.
std::vector<std::vector<size_t>> rank_and_crowd(std::vector<Individual>& pop) {
    auto fronts = fast_nondominated_sort(pop);
    for (const auto& front : fronts) {
        std::vector<Individual> members;
        members.reserve(front.size());
        for (size_t i : front) members.push_back(pop[i]);
        auto dist = crowding_distance(members);
        for (size_t k = 0; k < front.size(); ++k) pop[front[k]].crowding = dist[k];
    }
    return fronts;
}

std::vector<Individual> front_members(const std::vector<Individual>& pop) {
    std::vector<Individual> out;
    for (const auto& ind : pop) {
        if (ind.rank == 0) out.push_back(ind);
    }
    return out;
}

}  // namespace

NsgaResult nsga2_run(const NsgaConfig& cfg, FitnessEvaluator& ctx) {
    cfg.validate();
    const auto n = static_cast<size_t>(cfg.population);

    std::vector<Individual> pop(n);
    Rng init_rng(Rng::mix({cfg.seed, 0x696e6974706fULL}));
    for (auto& ind : pop) {
        for (auto& g : ind.genes) g = init_rng.uniform(kGeneLower, kGeneUpper);
    }
    evaluate_all(pop, ctx);
    rank_and_crowd(pop);

    NsgaResult result;
    result.history.push_back({0, front_members(pop)});

    for (int gen = 1; gen <= cfg.generations; ++gen) {
        Rng var_rng(Rng::mix({cfg.seed, 0x65766f6cULL, static_cast<uint64_t>(gen)}));
        std::vector<Individual> offspring = evolve_generation(pop, cfg, var_rng);
        evaluate_all(offspring, ctx);

        std::vector<Individual> combined = pop;
        combined.insert(combined.end(), offspring.begin(), offspring.end());
        auto fronts = fast_nondominated_sort(combined);

        std::vector<Individual> next;
        next.reserve(n);
        for (const auto& front : fronts) {
            std::vector<Individual> members;
            members.reserve(front.size());
            for (size_t i : front) members.push_back(combined[i]);
            auto dist = crowding_distance(members);
            for (size_t k = 0; k < members.size(); ++k) members[k].crowding = dist[k];

            if (next.size() + members.size() <= n) {
                next.insert(next.end(), members.begin(), members.end());
            } else {
                std::vector<size_t> idx(members.size());
                std::iota(idx.begin(), idx.end(), size_t{0});
                std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
                    return members[a].crowding > members[b].crowding;
                });
                for (size_t k = 0; next.size() < n; ++k) next.push_back(members[idx[k]]);
                break;
            }
            if (next.size() == n) break;
        }
        pop = std::move(next);
        result.history.push_back({gen, front_members(pop)});
    }

    result.front = front_members(pop);
    if (result.front.empty()) throw std::logic_error("nsga2_run: empty final front");
    size_t best = 0;
    for (size_t i = 1; i < result.front.size(); ++i) {
        if (result.front[i].f1 + result.front[i].f2 <
            result.front[best].f1 + result.front[best].f2) {
            best = i;
        }
    }
    result.best = result.front[best];
    return result;
}

void write_front_history(const std::string& path, const std::vector<GenerationRecord>& history) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "generation,r1,r2,r3,f1,f2,rank,crowding\n";
    char buf[64];
    for (const auto& rec : history) {
        for (const auto& ind : rec.front) {
            out << rec.generation;
            for (double v : {ind.genes[0], ind.genes[1], ind.genes[2], ind.f1, ind.f2}) {
                std::snprintf(buf, sizeof(buf), "%.17g", v);
                out << ',' << buf;
            }
            std::snprintf(buf, sizeof(buf), "%.17g", ind.crowding);
            out << ',' << ind.rank << ',' << buf << '\n';
        }
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace hqlab
