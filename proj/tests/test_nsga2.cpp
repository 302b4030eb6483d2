#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "hqlab/nsga2.hpp"
#include "oracles.hpp"

using namespace hqlab;

namespace {

Individual make_ind(double f1, double f2) {
    Individual ind;
    ind.f1 = f1;
    ind.f2 = f2;
    return ind;
}

// Deterministic synthetic objective: f1 favors r1 near the upper bound,
// f2 favors staying near identity. Pareto-conflicting by construction.
class ToyFitness : public FitnessEvaluator {
public:
    std::pair<double, double> evaluate(const std::array<double, 3>& genes) override {
        const double d1 = kGeneUpper - genes[0];
        double ident = 0.0;
        for (double g : genes) ident += (g - 1.0) * (g - 1.0);
        return {d1, std::sqrt(ident)};
    }
};

}  // namespace

TEST_SUITE("nsga2") {

TEST_CASE("domination needs one strict improvement and no regression") {
    CHECK(dominates(make_ind(0.1, 0.1), make_ind(0.2, 0.2)));
    CHECK(dominates(make_ind(0.1, 0.2), make_ind(0.2, 0.2)));
    CHECK_FALSE(dominates(make_ind(0.2, 0.2), make_ind(0.2, 0.2)));
    CHECK_FALSE(dominates(make_ind(0.1, 0.3), make_ind(0.2, 0.2)));
    CHECK_FALSE(dominates(make_ind(0.3, 0.1), make_ind(0.2, 0.2)));
}

TEST_CASE("sorting a hand-built population yields the known fronts") {
    std::vector<Individual> pop{
        make_ind(0.0, 1.0),  // front 0
        make_ind(1.0, 0.0),  // front 0
        make_ind(0.5, 0.5),  // front 0
        make_ind(1.0, 1.0),  // front 1 (dominated by the 0.5 point)
        make_ind(2.0, 2.0),  // front 2
    };
    auto fronts = fast_nondominated_sort(pop);
    REQUIRE(fronts.size() == 3);
    CHECK(fronts[0] == std::vector<size_t>{0, 1, 2});
    CHECK(fronts[1] == std::vector<size_t>{3});
    CHECK(fronts[2] == std::vector<size_t>{4});
    CHECK(pop[3].rank == 1);
    CHECK(pop[4].rank == 2);
}

TEST_CASE("sorting matches the brute-force peeling on random populations") {
    Rng rng(61);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<Individual> pop(100);
        std::vector<std::pair<double, double>> objs(100);
        for (size_t i = 0; i < pop.size(); ++i) {
            pop[i].f1 = rng.uniform(0.0, 2.0);
            pop[i].f2 = rng.uniform(0.0, 2.0);
            objs[i] = {pop[i].f1, pop[i].f2};
        }
        auto fronts = fast_nondominated_sort(pop);
        auto want = oracle::fronts_brute_force(objs);
        REQUIRE(fronts.size() == want.size());
        for (size_t f = 0; f < fronts.size(); ++f) {
            auto got = fronts[f];
            auto expect = want[f];
            std::sort(got.begin(), got.end());
            std::sort(expect.begin(), expect.end());
            CHECK(got == expect);
        }
    }
}

TEST_CASE("every individual lands on exactly one front") {
    Rng rng(62);
    std::vector<Individual> pop(40);
    for (auto& ind : pop) {
        ind.f1 = rng.uniform(0.0, 1.0);
        ind.f2 = rng.uniform(0.0, 1.0);
    }
    auto fronts = fast_nondominated_sort(pop);
    std::vector<int> seen(pop.size(), 0);
    for (const auto& f : fronts) {
        for (size_t i : f) ++seen[i];
    }
    for (int s : seen) CHECK(s == 1);
}

TEST_CASE("crowding gives boundaries infinity and the middle its gap sum") {
    std::vector<Individual> front{make_ind(0.0, 1.0), make_ind(0.5, 0.5), make_ind(1.0, 0.0)};
    auto d = crowding_distance(front);
    REQUIRE(d.size() == 3);
    CHECK(std::isinf(d[0]));
    CHECK(std::isinf(d[2]));
    // Middle point: (1.0-0.0)/range + (1.0-0.0)/range = 2.
    CHECK(d[1] == doctest::Approx(2.0));
}

TEST_CASE("crowding on two or fewer members is all infinite") {
    std::vector<Individual> two{make_ind(0.1, 0.9), make_ind(0.9, 0.1)};
    for (double v : crowding_distance(two)) CHECK(std::isinf(v));
    std::vector<Individual> one{make_ind(0.3, 0.3)};
    CHECK(std::isinf(crowding_distance(one)[0]));
}

TEST_CASE("a collapsed objective contributes nothing to crowding") {
    std::vector<Individual> front{make_ind(0.0, 0.7), make_ind(0.5, 0.7), make_ind(1.0, 0.7)};
    auto d = crowding_distance(front);
    CHECK(d[1] == doctest::Approx(1.0));  // only f1 contributes
}

TEST_CASE("offspring respect the gene box and population size") {
    Rng rng(63);
    NsgaConfig cfg;
    cfg.population = 12;
    std::vector<Individual> pop(static_cast<size_t>(cfg.population));
    for (auto& ind : pop) {
        for (auto& g : ind.genes) g = rng.uniform(kGeneLower, kGeneUpper);
        ind.f1 = rng.uniform(0.0, 2.0);
        ind.f2 = rng.uniform(0.0, 2.0);
        ind.rank = 0;
        ind.crowding = rng.uniform(0.0, 2.0);
    }
    for (int trial = 0; trial < 20; ++trial) {
        auto kids = evolve_generation(pop, cfg, rng);
        REQUIRE(kids.size() == pop.size());
        for (const auto& kid : kids) {
            for (double g : kid.genes) {
                CHECK(g >= kGeneLower);
                CHECK(g <= kGeneUpper);
            }
            CHECK_FALSE(kid.evaluated());
        }
    }
}

TEST_CASE("infinite crossover index copies parent genes") {
    Rng rng(64);
    NsgaConfig cfg;
    cfg.population = 8;
    cfg.eta_c = std::numeric_limits<double>::infinity();
    cfg.mutation_prob = 0.0;
    std::vector<Individual> pop(8);
    std::vector<std::array<double, 3>> genes;
    for (auto& ind : pop) {
        for (auto& g : ind.genes) g = rng.uniform(kGeneLower, kGeneUpper);
        genes.push_back(ind.genes);
        ind.f1 = rng.uniform(0.0, 1.0);
        ind.f2 = rng.uniform(0.0, 1.0);
        ind.rank = 0;
    }
    auto kids = evolve_generation(pop, cfg, rng);
    for (const auto& kid : kids) {
        const bool from_parent =
            std::any_of(genes.begin(), genes.end(), [&](const std::array<double, 3>& g) {
                return g == kid.genes;
            });
        CHECK(from_parent);
    }
}

TEST_CASE("config validation enforces an even population of at least four") {
    NsgaConfig cfg;
    cfg.population = 3;
    CHECK_THROWS(cfg.validate());
    cfg.population = 7;
    CHECK_THROWS(cfg.validate());
    cfg.population = 4;
    CHECK_NOTHROW(cfg.validate());
    cfg.generations = 0;
    CHECK_THROWS(cfg.validate());
}

TEST_CASE("the run is elitist and deterministic on a synthetic objective") {
    ToyFitness toy;
    NsgaConfig cfg;
    cfg.population = 16;
    cfg.generations = 10;
    cfg.seed = 7;

    NsgaResult a = nsga2_run(cfg, toy);
    NsgaResult b = nsga2_run(cfg, toy);

    CHECK(a.best.genes == b.best.genes);
    REQUIRE(a.front.size() == b.front.size());
    for (size_t i = 0; i < a.front.size(); ++i) {
        CHECK(a.front[i].genes == b.front[i].genes);
    }
    REQUIRE(a.history.size() == 11);  // initial population plus one per generation

    // Elitism: per-objective bests never worsen between generations. The
    // population minimum of each objective always sits on the recorded front.
    auto best_objs = [](const GenerationRecord& rec) {
        double f1 = std::numeric_limits<double>::infinity();
        double f2 = f1;
        for (const auto& ind : rec.front) {
            f1 = std::min(f1, ind.f1);
            f2 = std::min(f2, ind.f2);
        }
        return std::pair<double, double>{f1, f2};
    };
    for (size_t g = 1; g < a.history.size(); ++g) {
        auto [f1_now, f2_now] = best_objs(a.history[g]);
        auto [f1_prev, f2_prev] = best_objs(a.history[g - 1]);
        CHECK(f1_now <= f1_prev);
        CHECK(f2_now <= f2_prev);
    }

    for (const auto& ind : a.front) {
        CHECK(ind.rank == 0);
        CHECK(ind.evaluated());
    }
}

TEST_CASE("one elitist generation lifts the front over the initial worst") {
    // Separable quadratic bowl: both objectives minimized at identity genes.
    class Bowl : public FitnessEvaluator {
    public:
        std::pair<double, double> evaluate(const std::array<double, 3>& genes) override {
            return {(genes[0] - 1.0) * (genes[0] - 1.0), (genes[1] - 1.0) * (genes[1] - 1.0)};
        }
    };
    Bowl bowl;
    NsgaConfig cfg;
    cfg.population = 4;
    cfg.generations = 1;
    cfg.seed = 5;
    NsgaResult res = nsga2_run(cfg, bowl);

    // Worst corner (nadir) of the initial front: every survivor must sit at
    // or below it in both objectives on this pinned instance.
    double worst_f1 = -1.0, worst_f2 = -1.0;
    for (const auto& ind : res.history.front().front) {
        worst_f1 = std::max(worst_f1, ind.f1);
        worst_f2 = std::max(worst_f2, ind.f2);
    }
    REQUIRE(worst_f1 >= 0.0);
    for (const auto& ind : res.front) {
        CHECK(ind.f1 <= worst_f1);
        CHECK(ind.f2 <= worst_f2);
    }
}

TEST_CASE("hypervolume never shrinks on a convex synthetic front") {
    // ZDT1-style bi-objective over the 3-gene box, genes shifted to [0,1].
    class Zdt : public FitnessEvaluator {
    public:
        std::pair<double, double> evaluate(const std::array<double, 3>& genes) override {
            const double x1 = genes[0] - kGeneLower;
            const double x2 = genes[1] - kGeneLower;
            const double x3 = genes[2] - kGeneLower;
            const double g = 1.0 + 9.0 * (x2 + x3) / 2.0;
            const double f2 = g * (1.0 - std::sqrt(x1 / g));
            return {x1, f2};
        }
    };
    Zdt zdt;
    NsgaConfig cfg;
    cfg.population = 16;
    cfg.generations = 8;
    cfg.seed = 11;
    NsgaResult res = nsga2_run(cfg, zdt);

    auto to_pairs = [](const std::vector<Individual>& front) {
        std::vector<std::pair<double, double>> p;
        for (const auto& ind : front) p.emplace_back(ind.f1, ind.f2);
        return p;
    };
    double prev = -1.0;
    for (const auto& rec : res.history) {
        const double hv = oracle::hypervolume_2d(to_pairs(rec.front), 1.5, 11.0);
        CHECK(hv >= prev - 1e-12);
        prev = hv;
    }
}

TEST_CASE("returned fronts are internally non-dominated") {
    ToyFitness toy;
    NsgaConfig cfg;
    cfg.population = 12;
    cfg.generations = 4;
    cfg.seed = 13;
    NsgaResult res = nsga2_run(cfg, toy);
    for (const auto& rec : res.history) {
        for (const auto& a : rec.front) {
            for (const auto& b : rec.front) {
                CHECK_FALSE(dominates(a, b));
            }
        }
    }
}

TEST_CASE("domination is a strict partial order") {
    Rng rng(65);
    std::vector<Individual> pop(30);
    for (auto& ind : pop) {
        ind.f1 = rng.uniform(0.0, 1.0);
        ind.f2 = rng.uniform(0.0, 1.0);
    }
    for (const auto& a : pop) {
        CHECK_FALSE(dominates(a, a));  // irreflexive
        for (const auto& b : pop) {
            if (dominates(a, b)) CHECK_FALSE(dominates(b, a));  // antisymmetric
            for (const auto& c : pop) {
                if (dominates(a, b) && dominates(b, c)) CHECK(dominates(a, c));  // transitive
            }
        }
    }
}

TEST_CASE("front history serializes one labeled row per member") {
    ToyFitness toy;
    NsgaConfig cfg;
    cfg.population = 8;
    cfg.generations = 2;
    cfg.seed = 3;
    NsgaResult res = nsga2_run(cfg, toy);

    const std::string path = "/tmp/hqlab_test_front.csv";
    write_front_history(path, res.history);

    std::ifstream in(path);
    REQUIRE(in.good());
    std::string header;
    std::getline(in, header);
    CHECK(header == "generation,r1,r2,r3,f1,f2,rank,crowding");
    size_t rows = 0;
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) ++rows;
    }
    size_t want = 0;
    for (const auto& rec : res.history) want += rec.front.size();
    CHECK(rows == want);
}

}  // TEST_SUITE
