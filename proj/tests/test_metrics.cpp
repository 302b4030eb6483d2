#include "doctest.h"

#include <cmath>

#include "hqlab/metrics.hpp"
#include "hqlab/rng.hpp"
#include "oracles.hpp"

using namespace hqlab;

namespace {

Tensor random_image(int size, Rng& rng) {
    Tensor img({3, size, size});
    for (auto& v : img.data) v = rng.uniform(0.0, 1.0);
    return img;
}

// Model whose prediction is a pure brightness threshold, built by training a
// tiny net; metrics tests only need *some* deterministic classifier.
HybridModel threshold_model(int image_size, int classes) {
    ModelArch a;
    a.image_size = image_size;
    a.n_qubits = 3;
    a.n_layers = 1;
    a.n_classes = classes;
    return init_model(a, 99);
}

}  // namespace

TEST_SUITE("metrics") {

TEST_CASE("ssim of an image with itself is exactly one") {
    Rng rng(51);
    for (int trial = 0; trial < 5; ++trial) {
        Tensor img = random_image(16, rng);
        CHECK(ssim(img, img) == 1.0);
    }
}

TEST_CASE("ssim matches the direct windowed reference") {
    Rng rng(52);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor a = random_image(16, rng);
        Tensor b = a;
        // Mix of correlated and fresh noise keeps values spread over (0,1).
        for (auto& v : b.data) {
            v = std::min(1.0, std::max(0.0, v + rng.uniform(-0.3, 0.3)));
        }
        const double got = ssim(a, b);
        const double want = oracle::ssim_direct(a.data, b.data, 3, 16, 16);
        CHECK(std::abs(got - want) <= 1e-6);
    }
}

TEST_CASE("ssim decreases as the color ratio moves away from identity") {
    Rng rng(53);
    Tensor img = random_image(16, rng);
    double prev = 1.0;
    for (double r : {1.0, 0.95, 0.9, 0.8, 0.6}) {
        Tensor t = apply_trigger(img, TriggerSpec::qcolor(r, 1.0, 1.0));
        const double s = ssim(img, t);
        CHECK(s <= prev + 1e-12);
        prev = s;
    }
}

TEST_CASE("ssim requires same-shape images of workable size") {
    Tensor small({3, 8, 8});
    Tensor other({3, 16, 16});
    CHECK_THROWS(ssim(small, other));
    CHECK_THROWS(ssim(small, small));  // smaller than one 11x11 window
}

TEST_CASE("identity trigger has unit mean ssim over a dataset") {
    Rng rng(54);
    LabeledDataset ds;
    for (int i = 0; i < 6; ++i) ds.push(random_image(16, rng), i % 2);
    CHECK(mean_trigger_ssim(ds, TriggerSpec::qcolor(1.0, 1.0, 1.0)) == 1.0);
}

TEST_CASE("accuracy is the percentage of argmax hits") {
    HybridModel model = threshold_model(12, 2);
    Rng rng(55);
    LabeledDataset ds;
    for (int i = 0; i < 10; ++i) ds.push(random_image(12, rng), 0);

    // Label everything with the model's own prediction, then flip 3 labels:
    // accuracy must read exactly 70%.
    for (size_t i = 0; i < ds.size(); ++i) ds.labels[i] = predict(model, ds.images[i]);
    for (size_t i = 0; i < 3; ++i) ds.labels[i] = 1 - ds.labels[i];
    CHECK(clean_accuracy(model, ds) == doctest::Approx(70.0));
}

TEST_CASE("accuracy is bounded by 0 and 100") {
    HybridModel model = threshold_model(12, 2);
    Rng rng(56);
    LabeledDataset ds;
    for (int i = 0; i < 7; ++i) ds.push(random_image(12, rng), i % 2);
    const double acc = clean_accuracy(model, ds);
    CHECK(acc >= 0.0);
    CHECK(acc <= 100.0);
}

TEST_CASE("attack success counts only non-target originals") {
    HybridModel model = threshold_model(12, 2);
    Rng rng(57);

    // All samples labeled with the target: the eligible cohort is empty and
    // the rate is undefined, so the call is rejected rather than reported 0.
    LabeledDataset all_target;
    for (int i = 0; i < 4; ++i) all_target.push(random_image(12, rng), 1);
    CHECK_THROWS(attack_success_rate(model, all_target, TriggerSpec::patch(1), 1));

    // Identity trigger: success rate equals the percentage of non-target
    // samples the model already sends to the target class.
    LabeledDataset ds;
    for (int i = 0; i < 12; ++i) ds.push(random_image(12, rng), 0);
    int hits = 0;
    for (const auto& img : ds.images) hits += predict(model, img) == 1 ? 1 : 0;
    const double expect = 100.0 * hits / 12.0;
    CHECK(attack_success_rate(model, ds, TriggerSpec::qcolor(1, 1, 1), 1) ==
          doctest::Approx(expect));
}

TEST_CASE("grad-cam heatmap is nonnegative, normalized, input-sized") {
    Rng rng(58);
    HybridModel model = threshold_model(12, 2);
    Tensor img = random_image(12, rng);
    Tensor cam = grad_cam(model, img, 0);
    REQUIRE(cam.shape == std::vector<int>{12, 12});
    double peak = 0.0;
    for (double v : cam.data) {
        CHECK(v >= 0.0);
        peak = std::max(peak, v);
    }
    CHECK(peak <= 1.0 + 1e-12);
}

TEST_CASE("eval report serializes a fixed column order") {
    CHECK(EvalReport::csv_header() ==
          "model_id,trigger,poison_rate,clean_acc,backdoor_acc,asr,mean_ssim,seed");
    EvalReport r;
    r.model_id = "hybrid_qnn+backdoor";
    r.trigger = "qcolor(0.9,1,1)";
    r.poison_rate = 0.1;
    r.clean_acc = 81.5;
    r.backdoor_acc = 80.0;
    r.asr = 97.25;
    r.mean_ssim = 0.9921;
    r.seed = 3;
    const std::string row = r.csv_row();
    CHECK(row.find("hybrid_qnn+backdoor") == 0);
    CHECK(row.find("97.25") != std::string::npos);
    CHECK(row.find(",3") == row.size() - 2);
    // Counts are diagnostics, never columns.
    CHECK(row.find("n_acc") == std::string::npos);
}

}  // TEST_SUITE
