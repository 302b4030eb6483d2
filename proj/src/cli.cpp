#include "hqlab/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hqlab/attacks.hpp"
#include "hqlab/bounds.hpp"
#include "hqlab/data_io.hpp"
#include "hqlab/defenses.hpp"
#include "hqlab/metrics.hpp"
#include "hqlab/model.hpp"
#include "hqlab/nsga2.hpp"
#include "hqlab/rng.hpp"
#include "hqlab/thread_pool.hpp"

namespace hqlab {

namespace {

namespace fs = std::filesystem;

struct CliArgs {
    std::string command;
    std::string config_path;
    std::vector<std::string> overrides;
    std::string out_dir;
    std::optional<uint64_t> seed;
    std::optional<int> threads;
    std::string model_path;
    std::string defense;  // strip | cleanse | prune
    std::string inspect_path;
    size_t train_count = 2000;
    size_t test_count = 1000;
};

// ---- manifest --------------------------------------------------------------

struct Manifest {
    std::string command;
    std::string resolved_config;
    std::vector<std::string> artifacts;

    uint64_t hash() const {
        std::string basis = command + '\n' + resolved_config;
        for (const auto& a : artifacts) basis += a + '\n';
        return fnv1a(basis.data(), basis.size());
    }

    void write(const std::string& dir) const {
        std::ofstream out(dir + "/manifest.txt", std::ios::binary);
        if (!out) throw std::runtime_error("cannot write manifest in " + dir);
        char hex[32];
        std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(hash()));
        out << "command = " << command << '\n';
        out << "config_hash = " << hex << '\n';
        const auto now = std::chrono::system_clock::now().time_since_epoch();
        out << "created_unix = "
            << std::chrono::duration_cast<std::chrono::seconds>(now).count()
            << "  # informational, excluded from config_hash\n";
        for (const auto& a : artifacts) out << "artifact = " << a << '\n';
        out << "--- resolved config ---\n";
        out << resolved_config;
    }
};

ExperimentConfig resolve_config(const CliArgs& args) {
    ExperimentConfig cfg;
    if (!args.config_path.empty()) cfg = load_config_file(args.config_path);
    for (const auto& o : args.overrides) apply_override(cfg, o);
    if (args.seed) cfg.seed = *args.seed;
    if (args.threads) cfg.threads = *args.threads;
    set_global_threads(cfg.threads);
    return cfg;
}

std::string model_id(const ExperimentConfig& cfg, bool poisoned) {
    std::string id = cfg.model_head == HeadKind::quantum ? "hybrid_qnn" : "cnn_twin";
    return id + (poisoned ? "+backdoor" : "+clean");
}

struct TrainedArtifacts {
    HybridModel model;
    OptimState optim;
    LabeledDataset train_set;  // possibly poisoned
    LabeledDataset test_set;
    TriggerSpec trigger;
    bool poisoned = false;
};

TrainedArtifacts train_pipeline(const ExperimentConfig& cfg, bool poisoned) {
    auto [train_set, test_set] = load_dataset(cfg.dataset);
    TrainedArtifacts out;
    out.trigger = cfg.trigger(cfg.dataset.image_size, cfg.dataset.image_size);
    out.poisoned = poisoned;
    if (poisoned) {
        PoisonConfig pc;
        pc.rate = cfg.poison_rate;
        pc.target_label = cfg.poison_target;
        pc.seed = cfg.seed;
        out.train_set = poison_dataset(train_set, out.trigger, pc);
    } else {
        out.train_set = std::move(train_set);
    }
    out.test_set = std::move(test_set);
    out.model = init_model(cfg.arch(), cfg.seed);
    out.optim.method = cfg.train_optimizer;
    out.optim.learning_rate = cfg.train_lr;
    train(out.model, out.train_set, cfg.train_config(), &out.optim);
    return out;
}

EvalReport evaluate_model(const ExperimentConfig& cfg, const HybridModel& model,
                          const LabeledDataset& test_set, const TriggerSpec& trigger,
                          bool poisoned) {
    EvalReport report;
    report.model_id = model_id(cfg, poisoned);
    report.trigger = trigger.describe();
    report.poison_rate = poisoned ? cfg.poison_rate : 0.0;
    report.clean_acc = clean_accuracy(model, test_set);
    report.backdoor_acc = report.clean_acc;
    report.asr = attack_success_rate(model, test_set, trigger, cfg.poison_target);
    report.mean_ssim = mean_trigger_ssim(test_set, trigger, 32);
    report.seed = cfg.seed;
    report.n_acc_eval = static_cast<int>(test_set.size());
    int eligible = 0;
    for (int label : test_set.labels) eligible += label != cfg.poison_target;
    report.n_asr_eval = eligible;
    report.n_ssim_eval = static_cast<int>(std::min<size_t>(test_set.size(), 32));
    return report;
}

CheckpointMeta meta_for(const ExperimentConfig& cfg, const TrainedArtifacts& run) {
    CheckpointMeta meta;
    meta.seed = cfg.seed;
    meta.dataset_hash = dataset_hash(run.train_set);
    Rng rng(Rng::mix({cfg.seed, 0x636b7074ULL}));
    meta.rng_state = rng.state();
    meta.poisoned = run.poisoned;
    meta.poison_rate = run.poisoned ? cfg.poison_rate : 0.0;
    meta.target_label = cfg.poison_target;
    meta.trigger_desc = run.trigger.describe();
    return meta;
}

bool poison_enabled(const ExperimentConfig& cfg) { return cfg.poison_enabled; }

// ---- subcommands -------------------------------------------------------------

int cmd_train(const CliArgs& args, const ExperimentConfig& cfg) {
    fs::create_directories(args.out_dir);
    TrainedArtifacts run = train_pipeline(cfg, poison_enabled(cfg));
    EvalReport report = evaluate_model(cfg, run.model, run.test_set, run.trigger, run.poisoned);

    save_checkpoint(run.model, run.optim, meta_for(cfg, run), args.out_dir + "/model.qbckpt");
    write_results(args.out_dir + "/eval.csv", EvalReport::csv_header(), {{report.csv_row()}});

    Manifest m{"train", cfg.resolved(), {"model.qbckpt", "eval.csv"}};
    m.write(args.out_dir);
    std::cout << "clean_acc=" << format_double(report.clean_acc)
              << " asr=" << format_double(report.asr)
              << " mean_ssim=" << format_double(report.mean_ssim) << "\n";
    return 0;
}

int cmd_poison(const CliArgs& args, const ExperimentConfig& cfg) {
    fs::create_directories(args.out_dir + "/previews");
    auto [train_set, test_set] = load_dataset(cfg.dataset);
    (void)test_set;
    TriggerSpec trigger = cfg.trigger(cfg.dataset.image_size, cfg.dataset.image_size);
    PoisonConfig pc;
    pc.rate = cfg.poison_rate;
    pc.target_label = cfg.poison_target;
    pc.seed = cfg.seed;
    LabeledDataset poisoned = poison_dataset(train_set, trigger, pc);

    size_t n_poisoned = 0;
    for (uint8_t m : poisoned.poison_mask) n_poisoned += m != 0;
    double mean_ssim = mean_trigger_ssim(train_set, trigger, 32);
    double strength = trigger_strength(trigger, train_set.images[0]);

    std::vector<std::string> artifacts;
    size_t shown = 0;
    for (size_t i = 0; i < poisoned.size() && shown < 8; ++i) {
        if (!poisoned.poison_mask[i]) continue;
        std::string name = "previews/poisoned_" + std::to_string(shown) + ".ppm";
        write_ppm(args.out_dir + "/" + name, poisoned.images[i]);
        artifacts.push_back(name);
        ++shown;
    }
    write_ppm(args.out_dir + "/previews/clean_reference.ppm", train_set.images[0]);
    write_ppm(args.out_dir + "/previews/triggered_reference.ppm",
              apply_trigger(train_set.images[0], trigger));
    write_raw_tensor(args.out_dir + "/triggered_reference.raw",
                     apply_trigger(train_set.images[0], trigger));
    artifacts.insert(artifacts.end(), {"previews/clean_reference.ppm",
                                       "previews/triggered_reference.ppm",
                                       "triggered_reference.raw", "poison_summary.csv"});

    write_results(args.out_dir + "/poison_summary.csv",
                  "trigger,rate,target,samples,poisoned,mean_ssim,strength",
                  {{trigger.describe(), format_double(cfg.poison_rate),
                    std::to_string(cfg.poison_target), std::to_string(poisoned.size()),
                    std::to_string(n_poisoned), format_double(mean_ssim),
                    format_double(strength)}});

    Manifest m{"poison", cfg.resolved(), artifacts};
    m.write(args.out_dir);
    std::cout << "poisoned " << n_poisoned << "/" << poisoned.size()
              << " mean_ssim=" << format_double(mean_ssim) << "\n";
    return 0;
}

int cmd_nsga(const CliArgs& args, const ExperimentConfig& cfg) {
    fs::create_directories(args.out_dir);
    auto [train_set, test_set] = load_dataset(cfg.dataset);
    (void)test_set;

    SurrogateFitness::Budget budget;
    budget.epochs = cfg.nsga_surrogate_epochs;
    budget.max_train_samples = cfg.nsga_surrogate_samples;
    SurrogateFitness fitness(train_set, cfg.arch(), cfg.poison_rate, cfg.poison_target, budget,
                             cfg.seed);

    NsgaConfig nc;
    nc.population = cfg.nsga_population;
    nc.generations = cfg.nsga_generations;
    nc.eta_c = cfg.nsga_eta_c;
    nc.sigma_m = cfg.nsga_sigma_m;
    nc.mutation_prob = cfg.nsga_mutation_prob;
    nc.seed = cfg.seed;
    NsgaResult result = nsga2_run(nc, fitness);

    write_front_history(args.out_dir + "/pareto.csv", result.history);
    {
        std::ofstream best(args.out_dir + "/best.txt", std::ios::binary);
        best << "trigger.r1 = " << format_double(result.best.genes[0]) << '\n'
             << "trigger.r2 = " << format_double(result.best.genes[1]) << '\n'
             << "trigger.r3 = " << format_double(result.best.genes[2]) << '\n'
             << "# f1 = " << format_double(result.best.f1)
             << ", f2 = " << format_double(result.best.f2) << '\n';
    }

    Manifest m{"nsga", cfg.resolved(), {"pareto.csv", "best.txt"}};
    m.write(args.out_dir);
    std::cout << "best ratios (" << format_double(result.best.genes[0]) << ","
              << format_double(result.best.genes[1]) << ","
              << format_double(result.best.genes[2]) << ") f1+f2="
              << format_double(result.best.f1 + result.best.f2) << "\n";
    return 0;
}

std::vector<ExperimentConfig> sweep_cells(const ExperimentConfig& cfg, std::vector<std::string>& labels) {
    std::vector<ExperimentConfig> cells;
    if (cfg.trigger_kind == "patch") {
        for (int side : {1, 2, 3, 4}) {
            ExperimentConfig c = cfg;
            c.trigger_patch_size = side;
            cells.push_back(c);
            labels.push_back("patch_px=" + std::to_string(side * side));
        }
    } else if (cfg.trigger_kind == "blend") {
        for (double a : {0.05, 0.10, 0.15, 0.20}) {
            ExperimentConfig c = cfg;
            c.trigger_alpha = a;
            cells.push_back(c);
            labels.push_back("blend_alpha=" + format_double(a));
        }
    } else if (cfg.trigger_kind == "shift") {
        for (double s : {0.25, 0.5, 0.75, 1.0}) {
            ExperimentConfig c = cfg;
            c.trigger_shift_r = cfg.trigger_shift_r * s;
            c.trigger_shift_g = cfg.trigger_shift_g * s;
            c.trigger_shift_b = cfg.trigger_shift_b * s;
            cells.push_back(c);
            labels.push_back("shift_scale=" + format_double(s));
        }
    } else {  // qcolor: interpolate the ratios toward the identity
        for (double s : {0.25, 0.5, 0.75, 1.0}) {
            ExperimentConfig c = cfg;
            c.trigger_r1 = 1.0 + s * (cfg.trigger_r1 - 1.0);
            c.trigger_r2 = 1.0 + s * (cfg.trigger_r2 - 1.0);
            c.trigger_r3 = 1.0 + s * (cfg.trigger_r3 - 1.0);
            cells.push_back(c);
            labels.push_back("ratio_scale=" + format_double(s));
        }
    }
    return cells;
}

int cmd_sweep(const CliArgs& args, const ExperimentConfig& cfg) {
    fs::create_directories(args.out_dir);
    std::vector<std::string> labels;
    std::vector<ExperimentConfig> cells = sweep_cells(cfg, labels);

    std::vector<std::vector<std::string>> rows;
    for (size_t i = 0; i < cells.size(); ++i) {
        TrainedArtifacts run = train_pipeline(cells[i], true);
        EvalReport rep = evaluate_model(cells[i], run.model, run.test_set, run.trigger, true);
        rows.push_back({labels[i], rep.trigger, format_double(rep.poison_rate),
                        format_double(rep.clean_acc), format_double(rep.asr),
                        format_double(rep.mean_ssim)});
        std::cout << labels[i] << ": ca=" << format_double(rep.clean_acc)
                  << " asr=" << format_double(rep.asr) << "\n";
    }
    write_results(args.out_dir + "/sweep.csv", "setting,trigger,poison_rate,ca,asr,mean_ssim",
                  rows);
    Manifest m{"sweep", cfg.resolved(), {"sweep.csv"}};
    m.write(args.out_dir);
    return 0;
}

int cmd_compare_heads(const CliArgs& args, const ExperimentConfig& cfg) {
    fs::create_directories(args.out_dir);
    std::vector<std::vector<std::string>> rows;
    for (HeadKind head : {HeadKind::quantum, HeadKind::classical_fc}) {
        ExperimentConfig c = cfg;
        c.model_head = head;
        TrainedArtifacts run = train_pipeline(c, poison_enabled(c));
        EvalReport rep = evaluate_model(c, run.model, run.test_set, run.trigger, run.poisoned);
        rows.push_back({head == HeadKind::quantum ? "quantum" : "classical",
                        format_double(rep.clean_acc), format_double(rep.backdoor_acc),
                        format_double(rep.asr), format_double(rep.mean_ssim),
                        std::to_string(rep.seed)});
        std::cout << rows.back()[0] << ": ca=" << rows.back()[1] << " asr=" << rows.back()[3]
                  << "\n";
    }
    write_results(args.out_dir + "/compare_heads.csv", "head,ca,ba,asr,mean_ssim,seed", rows);
    Manifest m{"compare-heads", cfg.resolved(), {"compare_heads.csv"}};
    m.write(args.out_dir);
    return 0;
}

int cmd_defend(const CliArgs& args, const ExperimentConfig& cfg) {
    fs::create_directories(args.out_dir);
    auto [train_set, test_set] = load_dataset(cfg.dataset);
    TriggerSpec trigger = cfg.trigger(cfg.dataset.image_size, cfg.dataset.image_size);

    HybridModel model = [&] {
        if (!args.model_path.empty()) return load_checkpoint(args.model_path).model;
        TrainedArtifacts run = train_pipeline(cfg, poison_enabled(cfg));
        return run.model;
    }();

    std::vector<std::string> artifacts;
    if (args.defense == "strip") {
        StripConfig sc;
        sc.n_overlays = cfg.strip_overlays;
        sc.blend_alpha = cfg.strip_alpha;
        sc.percentile = cfg.strip_percentile;
        sc.seed = cfg.seed;

        const int n = static_cast<int>(std::min<size_t>(test_set.size(), 100));
        std::vector<int> idx(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
        LabeledDataset clean = test_set.subset(idx);
        LabeledDataset suspect = clean;
        for (auto& img : suspect.images) img = apply_trigger(img, trigger);

        StripReport rep = strip_detect(model, clean, suspect, sc);
        write_strip_report(args.out_dir + "/strip.csv", rep);
        write_results(args.out_dir + "/strip_summary.csv", "threshold,far,frr",
                      {{format_double(rep.threshold), format_double(rep.far),
                        format_double(rep.frr)}});
        artifacts = {"strip.csv", "strip_summary.csv"};
        std::cout << "strip: threshold=" << format_double(rep.threshold)
                  << " far=" << format_double(rep.far) << " frr=" << format_double(rep.frr)
                  << "\n";
    } else if (args.defense == "cleanse") {
        CleanseConfig cc;
        cc.steps = cfg.cleanse_steps;
        cc.learning_rate = cfg.cleanse_lr;
        cc.lambda_mask = cfg.cleanse_lambda;
        cc.batch_size = cfg.cleanse_batch;
        cc.max_samples = cfg.cleanse_samples;
        cc.seed = cfg.seed;

        CleanseReport rep = neural_cleanse(model, test_set, cc);
        write_cleanse_report(args.out_dir + "/cleanse.csv", rep);
        artifacts = {"cleanse.csv"};
        for (const auto& cls : rep.classes) {
            std::string base = "mask_class" + std::to_string(cls.class_index);
            write_raw_tensor(args.out_dir + "/" + base + ".raw", cls.mask);
            artifacts.push_back(base + ".raw");
        }
        std::cout << "cleanse: flagged=" << rep.flagged.size() << "\n";
    } else {
        PruneConfig pc;
        pc.rates = cfg.prune_rates;
        const int n = static_cast<int>(std::min<size_t>(train_set.size(), 128));
        std::vector<int> idx(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
        LabeledDataset subset = train_set.subset(idx);

        PruneEval ev;
        ev.eval_clean = &test_set;
        ev.trigger = &trigger;
        ev.target_label = cfg.poison_target;
        std::vector<PruneRow> rows = fine_prune_sweep(model, subset, ev, pc);
        write_prune_report(args.out_dir + "/prune.csv", rows);
        artifacts = {"prune.csv"};
        std::cout << "prune: " << rows.size() << " rates\n";
    }

    Manifest m{"defend-" + args.defense, cfg.resolved(), artifacts};
    m.write(args.out_dir);
    return 0;
}

int cmd_bounds(const CliArgs& args, const ExperimentConfig& cfg) {
    fs::create_directories(args.out_dir);
    auto [train_set, test_set] = load_dataset(cfg.dataset);
    TriggerSpec trigger = cfg.trigger(cfg.dataset.image_size, cfg.dataset.image_size);

    LabeledDataset poisoned_train;
    const LabeledDataset* train_used = nullptr;
    HybridModel model = [&] {
        if (!args.model_path.empty()) return load_checkpoint(args.model_path).model;
        TrainedArtifacts run = train_pipeline(cfg, true);
        poisoned_train = std::move(run.train_set);
        train_used = &poisoned_train;
        return run.model;
    }();

    // Triggered-sample empirical error: fraction of poisoned training
    // samples the model fails to classify as the target.
    double train_err = 0.0;
    int m_count = 0;
    if (train_used) {
        int wrong = 0;
        for (size_t i = 0; i < train_used->size(); ++i) {
            if (!train_used->poison_mask[i]) continue;
            ++m_count;
            if (predict(model, train_used->images[i]) != cfg.poison_target) ++wrong;
        }
        train_err = m_count > 0 ? static_cast<double>(wrong) / m_count : 0.0;
    } else {
        // checkpoint route: measure on freshly triggered training images
        size_t n = std::min<size_t>(train_set.size(), 200);
        int wrong = 0;
        for (size_t i = 0; i < n; ++i) {
            if (train_set.labels[i] == cfg.poison_target) continue;
            ++m_count;
            if (predict(model, apply_trigger(train_set.images[i], trigger)) != cfg.poison_target) {
                ++wrong;
            }
        }
        train_err = m_count > 0 ? static_cast<double>(wrong) / m_count : 0.0;
    }

    BoundInputs inp;
    inp.loss_bound = 1.0;  // 0-1 loss realization
    inp.m_samples = std::max(1, m_count);
    inp.conf_delta = cfg.bounds_conf_delta;
    inp.lipschitz = estimate_lipschitz(model, test_set, cfg.bounds_lipschitz_pairs,
                                       cfg.poison_target, cfg.seed);
    inp.trig_delta = trigger_strength(trigger, test_set.images[0]);
    inp.z_norm = 1.0;

    double bound = generalization_lower_bound(inp, train_err);
    double tail = hoeffding_tail(static_cast<int>(inp.m_samples), inp.loss_bound, 0.1);

    // Concentration of the quantum-head features around their mean.
    std::vector<std::vector<double>> features;
    size_t n_feat = std::min<size_t>(test_set.size(), 200);
    for (size_t i = 0; i < n_feat; ++i) {
        Tape tape;
        ForwardTrace trace = forward_trace(tape, model, test_set.images[i]);
        features.push_back(trace.head_input.data);
    }
    std::vector<double> dists;
    {
        std::vector<double> mean(features[0].size(), 0.0);
        for (const auto& f : features) {
            for (size_t d = 0; d < mean.size(); ++d) mean[d] += f[d];
        }
        for (auto& v : mean) v /= static_cast<double>(features.size());
        for (const auto& f : features) {
            double acc = 0.0;
            for (size_t d = 0; d < mean.size(); ++d) acc += (f[d] - mean[d]) * (f[d] - mean[d]);
            dists.push_back(std::sqrt(acc));
        }
        std::sort(dists.begin(), dists.end());
    }
    std::vector<double> grid;
    for (int q = 1; q <= 16; ++q) {
        double eps = dists[std::min(dists.size() - 1, dists.size() * q / 17)];
        if (eps > 0.0 && (grid.empty() || eps > grid.back())) grid.push_back(eps);
    }
    std::vector<std::vector<std::string>> rows = {
        {"train_err", format_double(train_err), "triggered 0-1 error"},
        {"loss_bound", format_double(inp.loss_bound), "loss range"},
        {"m_samples", std::to_string(inp.m_samples), "triggered sample count"},
        {"conf_delta", format_double(inp.conf_delta), "confidence"},
        {"lipschitz_est", format_double(inp.lipschitz),
         "sampled lower estimate, " + std::to_string(cfg.bounds_lipschitz_pairs) + " pairs"},
        {"trig_delta", format_double(inp.trig_delta), trigger.describe()},
        {"z_norm", format_double(inp.z_norm), "strength folded into trig_delta"},
        {"generalization_lower_bound", format_double(bound), "triggered-risk lower bound"},
        {"hoeffding_tail_eps0.1", format_double(tail), "two-sided tail at eps=0.1"},
    };
    if (grid.size() >= 2) {
        CompEstimate comp = estimate_comp(features, grid);
        rows.push_back({"comp_grid_points", std::to_string(comp.epsilons.size()),
                        "head-feature concentration"});
        double c_lo = std::numeric_limits<double>::infinity(), c_hi = 0.0;
        for (double c : comp.c_values) {
            if (std::isfinite(c)) {
                c_lo = std::min(c_lo, c);
                c_hi = std::max(c_hi, c);
            }
        }
        if (std::isfinite(c_lo) && c_hi > c_lo) {
            double c_query = 0.5 * (c_lo + c_hi);
            rows.push_back({"min_perturbation_at_c", format_double(c_query), "query midpoint"});
            rows.push_back({"min_perturbation", format_double(min_perturbation(comp, c_query)),
                            "piecewise-linear inversion"});
        }
    }
    write_results(args.out_dir + "/bounds.csv", "quantity,value,details", rows);
    Manifest m{"bounds", cfg.resolved(), {"bounds.csv"}};
    m.write(args.out_dir);
    std::cout << "generalization_lower_bound=" << format_double(bound) << "\n";
    return 0;
}

int cmd_gradcheck(const CliArgs& args, const ExperimentConfig& cfg) {
    fs::create_directories(args.out_dir);
    HybridModel model = init_model(cfg.arch(), cfg.seed);
    Rng rng(Rng::mix({cfg.seed, 0x67636bULL}));
    Tensor image({3, cfg.dataset.image_size, cfg.dataset.image_size});
    for (auto& v : image.data) v = rng.uniform();
    const int label = static_cast<int>(rng.uniform_int(cfg.model_classes));

    auto loss_value = [&]() {
        Tape tape;
        Tensor logits = forward_trace(tape, model, image).logits;
        double mx = logits.data[0];
        for (double v : logits.data) mx = std::max(mx, v);
        double z = 0.0;
        for (double v : logits.data) z += std::exp(v - mx);
        return std::log(z) + mx - logits.data[static_cast<size_t>(label)];
    };

    Tape tape;
    auto params = model.parameters();
    for (Tensor* p : params) tape.watch(*p);
    ForwardTrace trace = forward_trace(tape, model, image);
    Tensor loss = softmax_cross_entropy(tape, trace.logits, label);
    GradientSet grads = tape.backward(loss.node);
    auto analytic = gather_grads(grads, params);
    model.clear_tape_nodes();

    const auto names = HybridModel::parameter_names();
    std::vector<std::vector<std::string>> rows;
    double worst = 0.0;
    for (size_t t = 0; t < params.size(); ++t) {
        double max_rel = 0.0, max_abs = 0.0;
        for (size_t i = 0; i < params[t]->data.size(); ++i) {
            double& theta = params[t]->data[i];
            const double saved = theta;
            const double h = 1e-5 * std::max(1.0, std::abs(saved));
            theta = saved + h;
            const double up = loss_value();
            theta = saved - h;
            const double down = loss_value();
            theta = saved;
            const double fd = (up - down) / (2.0 * h);
            const double a = analytic[t][i];
            const double abs_err = std::abs(fd - a);
            if (std::abs(fd) < 1e-8 && std::abs(a) < 1e-8) continue;
            max_abs = std::max(max_abs, abs_err);
            max_rel = std::max(max_rel, abs_err / std::max({std::abs(fd), std::abs(a), 1e-4}));
        }
        worst = std::max(worst, max_rel);
        rows.push_back({names[t], format_double(max_rel), format_double(max_abs)});
    }
    write_results(args.out_dir + "/gradcheck.csv", "tensor,max_rel_err,max_abs_err", rows);
    Manifest m{"gradcheck", cfg.resolved(), {"gradcheck.csv"}};
    m.write(args.out_dir);
    std::cout << "max_rel_err=" << format_double(worst) << "\n";
    return worst <= 1e-3 ? 0 : 1;
}

int cmd_report(const CliArgs& args, const ExperimentConfig& cfg) {
    fs::create_directories(args.out_dir);
    static const std::vector<std::string> known = {
        "eval.csv",       "sweep.csv",   "compare_heads.csv", "poison_summary.csv",
        "pareto.csv",     "strip.csv",   "strip_summary.csv", "cleanse.csv",
        "prune.csv",      "bounds.csv",  "gradcheck.csv"};
    std::ostringstream body;
    size_t found = 0;
    for (const auto& name : known) {
        const std::string path = args.out_dir + "/" + name;
        if (!fs::exists(path)) continue;
        ++found;
        std::ifstream in(path, std::ios::binary);
        body << "== " << name << " ==\n" << in.rdbuf() << "\n";
    }
    std::ofstream out(args.out_dir + "/report.txt", std::ios::binary);
    if (!out) throw std::runtime_error("cannot write report in " + args.out_dir);
    out << "aggregated " << found << " tables\n\n" << body.str();
    out.close();

    Manifest m{"report", cfg.resolved(), {"report.txt"}};
    m.write(args.out_dir);
    std::cout << "aggregated " << found << " tables\n";
    return 0;
}

int cmd_make_data(const CliArgs& args, const ExperimentConfig& cfg) {
    generate_synthetic_corpus(args.out_dir, args.train_count, args.test_count, cfg.seed);
    Manifest m{"make-data", cfg.resolved(), {"data_batch_1.bin", "test_batch.bin",
                                             "train-images-idx3-ubyte", "train-labels-idx1-ubyte",
                                             "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte"}};
    m.write(args.out_dir);
    std::cout << "wrote synthetic corpus (" << args.train_count << " train, " << args.test_count
              << " test) to " << args.out_dir << "\n";
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CliArgs args;
    uint64_t seed_val = 0;
    int threads_val = 0;

    CLI::App app{"desk-scale backdoor laboratory for hybrid CNN+VQC classifiers"};
    app.require_subcommand(1);

    std::vector<CLI::Option*> seed_opts, thread_opts;
    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", args.config_path, "key=value experiment config file")
            ->check(CLI::ExistingFile);
        sub->add_option("--set", args.overrides, "override one config key, key=value (repeatable)");
        sub->add_option("--out", args.out_dir, "output directory (default: runs/<command>)");
        seed_opts.push_back(sub->add_option("--seed", seed_val, "override the config seed"));
        thread_opts.push_back(sub->add_option("--threads", threads_val, "worker threads"));
        return sub;
    };

    common(app.add_subcommand("train", "train a clean or poisoned model"));
    common(app.add_subcommand("poison", "poison a dataset and dump previews"));
    common(app.add_subcommand("nsga", "evolve color-ratio triggers (NSGA-II)"));
    common(app.add_subcommand("sweep", "trigger-strength sweep"));
    common(app.add_subcommand("compare-heads", "quantum vs classical head on one attack"));
    CLI::App* defend = common(app.add_subcommand("defend", "run a backdoor defense"));
    defend->add_option("defense", args.defense, "strip | cleanse | prune")
        ->required()
        ->check(CLI::IsMember({"strip", "cleanse", "prune"}));
    defend->add_option("--model", args.model_path, "checkpoint to defend (default: train fresh)")
        ->check(CLI::ExistingFile);
    CLI::App* bounds = common(app.add_subcommand("bounds", "risk and concentration bounds"));
    bounds->add_option("--model", args.model_path, "checkpoint to analyze (default: train fresh)")
        ->check(CLI::ExistingFile);
    common(app.add_subcommand("gradcheck", "finite-difference gradient audit"));
    common(app.add_subcommand("report", "aggregate the CSVs in an output directory"));
    CLI::App* make_data = common(app.add_subcommand("make-data", "write the synthetic corpus"));
    make_data->add_option("--train-count", args.train_count, "training samples (default 2000)");
    make_data->add_option("--test-count", args.test_count, "test samples (default 1000)");
    CLI::App* inspect = app.add_subcommand("inspect", "print checkpoint shapes and metadata");
    inspect->add_option("checkpoint", args.inspect_path, "checkpoint file")
        ->required()
        ->check(CLI::ExistingFile);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    args.command = app.get_subcommands().front()->get_name();
    for (CLI::Option* o : seed_opts) {
        if (o->count() > 0) args.seed = seed_val;
    }
    for (CLI::Option* o : thread_opts) {
        if (o->count() > 0) args.threads = threads_val;
    }
    if (args.out_dir.empty()) args.out_dir = "runs/" + args.command;

    try {
        if (args.command == "inspect") {
            std::cout << describe_checkpoint(args.inspect_path);
            return 0;
        }
        ExperimentConfig cfg = resolve_config(args);
        if (args.command == "train") return cmd_train(args, cfg);
        if (args.command == "poison") return cmd_poison(args, cfg);
        if (args.command == "nsga") return cmd_nsga(args, cfg);
        if (args.command == "sweep") return cmd_sweep(args, cfg);
        if (args.command == "compare-heads") return cmd_compare_heads(args, cfg);
        if (args.command == "defend") return cmd_defend(args, cfg);
        if (args.command == "bounds") return cmd_bounds(args, cfg);
        if (args.command == "gradcheck") return cmd_gradcheck(args, cfg);
        if (args.command == "report") return cmd_report(args, cfg);
        return cmd_make_data(args, cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace hqlab
