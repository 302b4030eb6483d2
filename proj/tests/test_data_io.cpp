#include "doctest.h"

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hqlab/data_io.hpp"
#include "hqlab/rng.hpp"
#include "oracles.hpp"

using namespace hqlab;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
    fs::path dir = fs::temp_directory_path() / ("hqlab_io_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

void write_bytes(const fs::path& path, const std::vector<uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
}

void push_be32(std::vector<uint8_t>& v, uint32_t x) {
    v.push_back(static_cast<uint8_t>(x >> 24));
    v.push_back(static_cast<uint8_t>(x >> 16));
    v.push_back(static_cast<uint8_t>(x >> 8));
    v.push_back(static_cast<uint8_t>(x));
}

// Minimal IDX pair: n grayscale images of side px, pixel = (n*i + j) % 256.
void write_idx_fixture(const fs::path& dir, int n, int px) {
    std::vector<uint8_t> images;
    push_be32(images, 0x00000803);
    push_be32(images, static_cast<uint32_t>(n));
    push_be32(images, static_cast<uint32_t>(px));
    push_be32(images, static_cast<uint32_t>(px));
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < px * px; ++j) {
            images.push_back(static_cast<uint8_t>((i * 37 + j) % 256));
        }
    }
    write_bytes(dir / "train-images-idx3-ubyte", images);

    std::vector<uint8_t> labels;
    push_be32(labels, 0x00000801);
    push_be32(labels, static_cast<uint32_t>(n));
    for (int i = 0; i < n; ++i) labels.push_back(static_cast<uint8_t>(i % 10));
    write_bytes(dir / "train-labels-idx1-ubyte", labels);

    // Tiny matching test split.
    std::vector<uint8_t> timg;
    push_be32(timg, 0x00000803);
    push_be32(timg, 1);
    push_be32(timg, static_cast<uint32_t>(px));
    push_be32(timg, static_cast<uint32_t>(px));
    for (int j = 0; j < px * px; ++j) timg.push_back(128);
    write_bytes(dir / "t10k-images-idx3-ubyte", timg);
    std::vector<uint8_t> tlab;
    push_be32(tlab, 0x00000801);
    push_be32(tlab, 1);
    tlab.push_back(7);
    write_bytes(dir / "t10k-labels-idx1-ubyte", tlab);
}

// CIFAR-10 binary batch: per record 1 label byte + 3072 channel-planar bytes.
void write_cifar_fixture(const fs::path& dir, int n) {
    std::vector<uint8_t> batch;
    for (int i = 0; i < n; ++i) {
        batch.push_back(static_cast<uint8_t>(i % 10));
        for (int c = 0; c < 3; ++c) {
            for (int p = 0; p < 1024; ++p) {
                batch.push_back(static_cast<uint8_t>((c * 50 + i * 3 + p) % 256));
            }
        }
    }
    write_bytes(dir / "data_batch_1.bin", batch);
    std::vector<uint8_t> test(batch.begin(), batch.begin() + 3073);
    write_bytes(dir / "test_batch.bin", test);
}

}  // namespace

TEST_SUITE("data_io") {

TEST_CASE("idx pairs load with big-endian headers and scaled pixels") {
    fs::path dir = fresh_dir("idx");
    write_idx_fixture(dir, 5, 28);

    DatasetSource src;
    src.kind = DatasetSource::Kind::mnist_idx;
    src.dir = dir.string();
    src.image_size = 28;
    auto [train, test] = load_dataset(src);

    REQUIRE(train.size() == 5);
    REQUIRE(test.size() == 1);
    CHECK(train.labels == std::vector<int>{0, 1, 2, 3, 4});
    CHECK(test.labels[0] == 7);

    // Grayscale replicated across the three channels, scaled by 255.
    const Tensor& img = train.images[1];
    REQUIRE(img.shape == std::vector<int>{3, 28, 28});
    CHECK(img.at3(0, 0, 0) == doctest::Approx(37.0 / 255.0));
    CHECK(img.at3(1, 0, 0) == img.at3(0, 0, 0));
    CHECK(img.at3(2, 0, 0) == img.at3(0, 0, 0));
}

TEST_CASE("a corrupted idx magic number names the offending file") {
    fs::path dir = fresh_dir("idx_bad");
    write_idx_fixture(dir, 2, 28);
    // Flip byte 3 of the image magic.
    std::fstream f(dir / "train-images-idx3-ubyte",
                   std::ios::binary | std::ios::in | std::ios::out);
    f.seekp(3);
    f.put(static_cast<char>(0x55));
    f.close();

    DatasetSource src;
    src.kind = DatasetSource::Kind::mnist_idx;
    src.dir = dir.string();
    src.image_size = 28;
    try {
        load_dataset(src);
        FAIL("expected a magic-number failure");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("train-images-idx3-ubyte") != std::string::npos);
    }
}

TEST_CASE("cifar batches load channel-planar records") {
    fs::path dir = fresh_dir("cifar");
    write_cifar_fixture(dir, 4);

    DatasetSource src;
    src.kind = DatasetSource::Kind::cifar10_bin;
    src.dir = dir.string();
    src.image_size = 32;
    auto [train, test] = load_dataset(src);

    REQUIRE(train.size() == 4);
    REQUIRE(test.size() == 1);
    CHECK(train.labels == std::vector<int>{0, 1, 2, 3});
    const Tensor& img = train.images[2];
    REQUIRE(img.shape == std::vector<int>{3, 32, 32});
    CHECK(img.at3(0, 0, 0) == doctest::Approx(6.0 / 255.0));    // (0*50 + 2*3 + 0) % 256
    CHECK(img.at3(1, 0, 0) == doctest::Approx(56.0 / 255.0));   // (1*50 + 2*3 + 0) % 256
    CHECK(img.at3(2, 0, 0) == doctest::Approx(106.0 / 255.0));  // (2*50 + 2*3 + 0) % 256
}

TEST_CASE("a truncated cifar record is rejected") {
    fs::path dir = fresh_dir("cifar_bad");
    write_cifar_fixture(dir, 2);
    fs::resize_file(dir / "data_batch_1.bin", 3073 + 100);  // half a record

    DatasetSource src;
    src.kind = DatasetSource::Kind::cifar10_bin;
    src.dir = dir.string();
    src.image_size = 32;
    CHECK_THROWS(load_dataset(src));
}

TEST_CASE("loaders honor the max split caps and target size") {
    fs::path dir = fresh_dir("caps");
    write_idx_fixture(dir, 5, 28);
    DatasetSource src;
    src.kind = DatasetSource::Kind::mnist_idx;
    src.dir = dir.string();
    src.image_size = 16;
    src.max_train = 3;
    auto [train, test] = load_dataset(src);
    CHECK(train.size() == 3);
    CHECK(train.images[0].shape == std::vector<int>{3, 16, 16});
    train.validate();
    test.validate();
}

TEST_CASE("bilinear resize keeps constant images constant") {
    Tensor img = Tensor::full({3, 8, 8}, 0.42);
    Tensor out = resize_bilinear(img, 5);
    REQUIRE(out.shape == std::vector<int>{3, 5, 5});
    for (double v : out.data) CHECK(v == doctest::Approx(0.42).epsilon(1e-12));

    // Identity size is a pass-through.
    Tensor same = resize_bilinear(img, 8);
    CHECK(same.data == img.data);
}

TEST_CASE("bilinear resize preserves a horizontal gradient's ordering") {
    Tensor img({3, 4, 4});
    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < 4; ++y) {
            for (int x = 0; x < 4; ++x) img.at3(c, y, x) = x / 3.0;
        }
    }
    Tensor out = resize_bilinear(img, 8);
    for (int x = 1; x < 8; ++x) {
        CHECK(out.at3(0, 3, x) >= out.at3(0, 3, x - 1) - 1e-12);
    }
}

TEST_CASE("checkpoints round-trip bitwise") {
    ModelArch a;
    a.image_size = 12;
    a.n_qubits = 3;
    a.n_layers = 2;
    a.n_classes = 4;
    HybridModel model = init_model(a, 71);

    OptimState opt;
    opt.method = OptimKind::adam;
    opt.learning_rate = 0.0125;
    opt.step_count = 42;
    opt.m.assign(1, std::vector<double>{0.5, -0.25});
    opt.v.assign(1, std::vector<double>{0.125, 0.0625});

    CheckpointMeta meta;
    meta.seed = 99;
    meta.dataset_hash = 0xdeadbeefcafef00dULL;
    meta.rng_state = {1, 2, 3, 4};
    meta.poisoned = true;
    meta.poison_rate = 0.1;
    meta.target_label = 3;
    meta.trigger_desc = "qcolor(0.9,1,1.1)";

    fs::path dir = fresh_dir("ckpt");
    const std::string path = (dir / "model.qbckpt").string();
    save_checkpoint(model, opt, meta, path);
    LoadedCheckpoint loaded = load_checkpoint(path);

    CHECK(loaded.model.same_values(model));
    CHECK(loaded.model.arch.image_size == 12);
    CHECK(loaded.model.arch.head == HeadKind::quantum);
    CHECK(loaded.optim.method == OptimKind::adam);
    CHECK(loaded.optim.learning_rate == 0.0125);
    CHECK(loaded.optim.step_count == 42);
    CHECK(loaded.optim.m == opt.m);
    CHECK(loaded.optim.v == opt.v);
    CHECK(loaded.meta.seed == 99);
    CHECK(loaded.meta.dataset_hash == meta.dataset_hash);
    CHECK(loaded.meta.rng_state == meta.rng_state);
    CHECK(loaded.meta.poisoned);
    CHECK(loaded.meta.poison_rate == 0.1);
    CHECK(loaded.meta.target_label == 3);
    CHECK(loaded.meta.trigger_desc == meta.trigger_desc);

    // Round-trip stability: saving the loaded state reproduces the file.
    const std::string path2 = (dir / "model2.qbckpt").string();
    save_checkpoint(loaded.model, loaded.optim, loaded.meta, path2);
    std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
    std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
    std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
    CHECK(b1 == b2);

    const std::string described = describe_checkpoint(path);
    CHECK(described.find("qcolor") != std::string::npos);
}

TEST_CASE("a checkpoint with a broken magic is refused") {
    ModelArch a;
    a.image_size = 12;
    a.n_qubits = 2;
    a.n_layers = 1;
    a.n_classes = 2;
    HybridModel model = init_model(a, 73);
    fs::path dir = fresh_dir("ckpt_bad");
    const std::string path = (dir / "model.qbckpt").string();
    save_checkpoint(model, OptimState{}, CheckpointMeta{}, path);

    std::fstream f(path, std::ios::binary | std::ios::in | std::ios::out);
    f.put('X');
    f.close();
    CHECK_THROWS(load_checkpoint(path));
}

TEST_CASE("configs parse comments, whitespace and typed keys") {
    const std::string text =
        "# experiment preset\n"
        "seed = 9\n"
        "\n"
        "model.qubits = 6   \n"
        "model.head = classical\n"
        "train.lr = 0.025\n"
        "trigger.kind = patch\n"
        "trigger.patch_size = 3\n"
        "poison.enabled = false\n"
        "prune.rates = 0.25, 0.5, 0.75\n";
    ExperimentConfig cfg = parse_config(text);
    CHECK(cfg.seed == 9);
    CHECK(cfg.model_qubits == 6);
    CHECK(cfg.model_head == HeadKind::classical_fc);
    CHECK(cfg.train_lr == 0.025);
    CHECK(cfg.trigger_kind == "patch");
    CHECK(cfg.trigger_patch_size == 3);
    CHECK_FALSE(cfg.poison_enabled);
    CHECK(cfg.prune_rates == std::vector<double>{0.25, 0.5, 0.75});
}

TEST_CASE("config errors carry the line number") {
    try {
        parse_config("seed = 1\npoison.rate = 1.5\n");
        FAIL("expected a range failure");
    } catch (const std::exception& e) {
        const std::string msg = e.what();
        CHECK(msg.find("line 2") != std::string::npos);
        CHECK(msg.find("poison.rate") != std::string::npos);
    }

    try {
        parse_config("unknown.knob = 3\n");
        FAIL("expected an unknown-key failure");
    } catch (const std::exception& e) {
        CHECK(std::string(e.what()).find("line 1") != std::string::npos);
    }

    CHECK_THROWS(parse_config("seed\n"));                      // missing '='
    CHECK_THROWS(parse_config("model.qubits = twelve\n"));     // not an int
    CHECK_THROWS(parse_config("dataset.kind = mnist_idx\n"));  // dir required
}

TEST_CASE("overrides replace single keys and reject junk") {
    ExperimentConfig cfg;
    apply_override(cfg, "train.epochs=3");
    CHECK(cfg.train_epochs == 3);
    apply_override(cfg, "trigger.r1 = 0.75");
    CHECK(cfg.trigger_r1 == 0.75);
    CHECK_THROWS(apply_override(cfg, "no.such.key=1"));
    CHECK_THROWS(apply_override(cfg, "train.epochs=0"));
}

TEST_CASE("the resolved echo reparses to the same configuration") {
    ExperimentConfig cfg;
    cfg.seed = 123;
    cfg.model_qubits = 5;
    cfg.trigger_kind = "blend";
    cfg.trigger_alpha = 0.07;
    cfg.prune_rates = {0.2, 0.4};
    ExperimentConfig back = parse_config(cfg.resolved());
    CHECK(back.seed == 123);
    CHECK(back.model_qubits == 5);
    CHECK(back.trigger_kind == "blend");
    CHECK(back.trigger_alpha == 0.07);
    CHECK(back.prune_rates == cfg.prune_rates);
    CHECK(back.resolved() == cfg.resolved());
}

TEST_CASE("result files are header-plus-rows with LF endings") {
    fs::path dir = fresh_dir("csv");
    const std::string path = (dir / "rows.csv").string();
    write_results(path, "a,b", {{"1", "2"}, {format_double(0.1), "x"}});

    std::ifstream in(path, std::ios::binary);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(content == "a,b\n1,2\n" + format_double(0.1) + ",x\n");
    CHECK(content.find('\r') == std::string::npos);
}

TEST_CASE("seventeen significant digits round-trip doubles exactly") {
    Rng rng(91);
    for (int i = 0; i < 200; ++i) {
        const double v = rng.uniform(-1e6, 1e6) * std::pow(10.0, rng.uniform_int(7) - 3);
        const std::string s = format_double(v);
        CHECK(std::stod(s) == v);
    }
    CHECK(format_double(0.1) == "0.10000000000000001");
}

TEST_CASE("raw tensor dumps round-trip bitwise") {
    Rng rng(92);
    Tensor t({2, 3, 4});
    for (auto& v : t.data) v = rng.uniform(-5.0, 5.0);
    fs::path dir = fresh_dir("raw");
    const std::string path = (dir / "t.raw").string();
    write_raw_tensor(path, t);
    Tensor back = read_raw_tensor(path);
    CHECK(back.shape == t.shape);
    CHECK(back.data == t.data);
}

TEST_CASE("ppm previews carry the P6 header and clamped bytes") {
    Tensor img({3, 2, 2});
    for (int c = 0; c < 3; ++c) {
        img.at3(c, 0, 0) = 0.0;
        img.at3(c, 0, 1) = 1.0;
        img.at3(c, 1, 0) = 0.5;
        img.at3(c, 1, 1) = 2.0;  // clamps to 255
    }
    fs::path dir = fresh_dir("ppm");
    const std::string path = (dir / "img.ppm").string();
    write_ppm(path, img);

    std::ifstream in(path, std::ios::binary);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(content.rfind("P6\n2 2\n255\n", 0) == 0);
    const size_t base = std::string("P6\n2 2\n255\n").size();
    REQUIRE(content.size() == base + 12);
    CHECK(static_cast<uint8_t>(content[base + 0]) == 0);
    CHECK(static_cast<uint8_t>(content[base + 3]) == 255);
    CHECK(static_cast<uint8_t>(content[base + 11]) == 255);
}

TEST_CASE("fnv1a matches the published test vectors") {
    CHECK(fnv1a("", 0) == 0xcbf29ce484222325ULL);
    CHECK(fnv1a("a", 1) == 0xaf63dc4c8601ec8cULL);
    CHECK(fnv1a("foobar", 6) == 0x85944171f73967e8ULL);
}

TEST_CASE("dataset hashes react to any pixel or label change") {
    Rng rng(93);
    LabeledDataset ds;
    for (int i = 0; i < 3; ++i) {
        Tensor img({3, 4, 4});
        for (auto& v : img.data) v = rng.uniform(0.0, 1.0);
        ds.push(std::move(img), i);
    }
    const uint64_t base = dataset_hash(ds);
    CHECK(dataset_hash(ds) == base);

    LabeledDataset flipped = ds;
    flipped.labels[1] = 9;
    CHECK(dataset_hash(flipped) != base);

    LabeledDataset nudged = ds;
    nudged.images[2].data[5] += 1e-9;
    CHECK(dataset_hash(nudged) != base);
}

TEST_CASE("the synthetic corpus loads through both format readers") {
    fs::path dir = fresh_dir("corpus");
    generate_synthetic_corpus(dir.string(), 60, 20, 5);

    DatasetSource cif;
    cif.kind = DatasetSource::Kind::cifar10_bin;
    cif.dir = dir.string();
    cif.image_size = 16;
    auto [ctrain, ctest] = load_dataset(cif);
    CHECK(ctrain.size() == 60);
    CHECK(ctest.size() == 20);
    ctrain.validate();

    DatasetSource idx;
    idx.kind = DatasetSource::Kind::mnist_idx;
    idx.dir = dir.string();
    idx.image_size = 16;
    auto [itrain, itest] = load_dataset(idx);
    CHECK(itrain.size() == 60);
    CHECK(itest.size() == 20);

    // All ten classes present in a 60-sample draw, labels in range.
    std::vector<int> counts(10, 0);
    for (int l : ctrain.labels) {
        REQUIRE(l >= 0);
        REQUIRE(l <= 9);
        ++counts[static_cast<size_t>(l)];
    }
    for (int c : counts) CHECK(c > 0);

    // Deterministic: regenerating with the same seed gives identical bytes.
    fs::path dir2 = fresh_dir("corpus2");
    generate_synthetic_corpus(dir2.string(), 60, 20, 5);
    for (const char* name : {"data_batch_1.bin", "test_batch.bin", "train-images-idx3-ubyte"}) {
        std::ifstream a(dir / name, std::ios::binary), b(dir2 / name, std::ios::binary);
        std::string ba((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
        std::string bb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
        CHECK(ba == bb);
    }
}

}  // TEST_SUITE
