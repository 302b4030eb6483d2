#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "hqlab/cli.hpp"

using namespace hqlab;
namespace fs = std::filesystem;

namespace {

int run(std::initializer_list<std::string> argv_tail) {
    std::vector<std::string> args{"hqlab"};
    args.insert(args.end(), argv_tail);
    std::vector<const char*> argv;
    argv.reserve(args.size());
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in.good());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string grep_line(const std::string& text, const std::string& prefix) {
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.rfind(prefix, 0) == 0) return line;
    }
    return {};
}

// One corpus + config shared by the whole suite; built on first use.
struct Fixture {
    fs::path root;
    fs::path corpus;
    std::string config;

    Fixture() {
        root = fs::temp_directory_path() / "hqlab_cli_suite";
        fs::remove_all(root);
        fs::create_directories(root);
        corpus = root / "corpus";
        REQUIRE(run({"make-data", "--out", corpus.string(), "--train-count", "48",
                     "--test-count", "24", "--seed", "3"}) == 0);

        config = (root / "tiny.cfg").string();
        std::ofstream cfg(config);
        cfg << "seed = 3\n"
            << "dataset.kind = cifar10_bin\n"
            << "dataset.dir = " << corpus.string() << "\n"
            << "dataset.image_size = 12\n"
            << "dataset.max_train = 40\n"
            << "dataset.max_test = 20\n"
            << "model.qubits = 2\n"
            << "model.layers = 1\n"
            << "model.classes = 10\n"
            << "train.epochs = 1\n"
            << "train.batch = 16\n";
    }
};

Fixture& fixture() {
    static Fixture f;
    return f;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("make-data writes both corpus formats plus a manifest") {
    Fixture& f = fixture();
    for (const char* name :
         {"data_batch_1.bin", "test_batch.bin", "train-images-idx3-ubyte",
          "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte",
          "manifest.txt"}) {
        CHECK(fs::exists(f.corpus / name));
    }
    const std::string manifest = slurp(f.corpus / "manifest.txt");
    CHECK(grep_line(manifest, "command = ") == "command = make-data");
    CHECK_FALSE(grep_line(manifest, "config_hash = ").empty());
}

TEST_CASE("train emits a checkpoint, an eval table and a manifest") {
    Fixture& f = fixture();
    fs::path out = f.root / "train1";
    REQUIRE(run({"train", "--config", f.config, "--out", out.string()}) == 0);
    CHECK(fs::exists(out / "model.qbckpt"));
    CHECK(fs::exists(out / "manifest.txt"));
    const std::string eval = slurp(out / "eval.csv");
    CHECK(eval.rfind("model_id,trigger,poison_rate,clean_acc,backdoor_acc,asr,mean_ssim,seed",
                     0) == 0);
    // header + exactly one row
    CHECK(std::count(eval.begin(), eval.end(), '\n') == 2);
}

TEST_CASE("reruns with the same config are byte-identical") {
    Fixture& f = fixture();
    fs::path out1 = f.root / "rerun_a";
    fs::path out2 = f.root / "rerun_b";
    REQUIRE(run({"train", "--config", f.config, "--out", out1.string()}) == 0);
    REQUIRE(run({"train", "--config", f.config, "--out", out2.string()}) == 0);

    CHECK(slurp(out1 / "model.qbckpt") == slurp(out2 / "model.qbckpt"));
    CHECK(slurp(out1 / "eval.csv") == slurp(out2 / "eval.csv"));
    // Manifests may differ in the informational timestamp, never in the hash.
    const std::string h1 = grep_line(slurp(out1 / "manifest.txt"), "config_hash = ");
    const std::string h2 = grep_line(slurp(out2 / "manifest.txt"), "config_hash = ");
    REQUIRE_FALSE(h1.empty());
    CHECK(h1 == h2);
}

TEST_CASE("a changed seed changes the config hash and the artifacts") {
    Fixture& f = fixture();
    fs::path out1 = f.root / "seed_a";
    fs::path out2 = f.root / "seed_b";
    REQUIRE(run({"train", "--config", f.config, "--out", out1.string()}) == 0);
    REQUIRE(run({"train", "--config", f.config, "--seed", "4", "--out", out2.string()}) == 0);
    CHECK(grep_line(slurp(out1 / "manifest.txt"), "config_hash = ") !=
          grep_line(slurp(out2 / "manifest.txt"), "config_hash = "));
    CHECK(slurp(out1 / "model.qbckpt") != slurp(out2 / "model.qbckpt"));
}

TEST_CASE("set overrides reach the run and invalid ones fail the command") {
    Fixture& f = fixture();
    fs::path out = f.root / "override";
    REQUIRE(run({"train", "--config", f.config, "--set", "poison.enabled=false", "--out",
                 out.string()}) == 0);
    const std::string manifest = slurp(out / "manifest.txt");
    CHECK(manifest.find("poison.enabled = false") != std::string::npos);
    // Clean run: the eval row reports a zero poison rate.
    const std::string eval = slurp(out / "eval.csv");
    CHECK(eval.find("+clean") != std::string::npos);

    CHECK(run({"train", "--config", f.config, "--set", "train.epochs=0", "--out",
               (f.root / "bad1").string()}) != 0);
    CHECK(run({"train", "--config", f.config, "--set", "no.such.key=1", "--out",
               (f.root / "bad2").string()}) != 0);
}

TEST_CASE("a patch sweep covers the four patch areas") {
    Fixture& f = fixture();
    fs::path out = f.root / "sweep";
    REQUIRE(run({"sweep", "--config", f.config, "--set", "trigger.kind=patch", "--out",
                 out.string()}) == 0);
    const std::string csv = slurp(out / "sweep.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);  // header + 4 cells
    for (const char* label : {"patch_px=1", "patch_px=4", "patch_px=9", "patch_px=16"}) {
        CHECK(csv.find(label) != std::string::npos);
    }
}

TEST_CASE("inspect prints checkpoint metadata") {
    Fixture& f = fixture();
    fs::path out = f.root / "inspect_src";
    REQUIRE(run({"train", "--config", f.config, "--out", out.string()}) == 0);

    std::ostringstream captured;
    std::streambuf* saved = std::cout.rdbuf(captured.rdbuf());
    const int rc = run({"inspect", (out / "model.qbckpt").string()});
    std::cout.rdbuf(saved);
    REQUIRE(rc == 0);
    const std::string text = captured.str();
    CHECK(text.find("qubits=2") != std::string::npos);
    CHECK(text.find("image_size=12") != std::string::npos);
    CHECK(text.find("qcolor") != std::string::npos);
}

TEST_CASE("gradcheck on a small model exits cleanly") {
    Fixture& f = fixture();
    fs::path out = f.root / "gradcheck";
    REQUIRE(run({"gradcheck", "--config", f.config, "--set", "model.classes=3", "--out",
                 out.string()}) == 0);
    const std::string csv = slurp(out / "gradcheck.csv");
    CHECK(csv.rfind("tensor,max_rel_err,max_abs_err", 0) == 0);
    CHECK(csv.find("conv1_k") != std::string::npos);
}

TEST_CASE("bad invocations exit nonzero without touching the filesystem") {
    Fixture& f = fixture();
    CHECK(run({}) != 0);                                    // no subcommand
    CHECK(run({"no-such-command"}) != 0);                   // unknown subcommand
    CHECK(run({"train", "--no-such-flag"}) != 0);           // unknown flag
    CHECK(run({"train", "--config", "/no/such/file"}) != 0);
    CHECK(run({"defend", "melt", "--config", f.config}) != 0);  // bad defense name
    CHECK(run({"inspect", "/no/such/checkpoint"}) != 0);
}

TEST_CASE("missing dataset files surface as a clean error") {
    Fixture& f = fixture();
    fs::path empty = f.root / "empty_dir";
    fs::create_directories(empty);
    CHECK(run({"train", "--config", f.config, "--set", "dataset.dir=" + empty.string(), "--out",
               (f.root / "bad3").string()}) != 0);
}

}  // TEST_SUITE
