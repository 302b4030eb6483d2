#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <stdexcept>

#include "hqlab/attacks.hpp"
#include "hqlab/bounds.hpp"
#include "hqlab/defenses.hpp"
#include "hqlab/metrics.hpp"
#include "hqlab/nsga2.hpp"
#include "hqlab/quantum.hpp"

namespace py = pybind11;
using namespace hqlab;

namespace {

Tensor to_image(const std::vector<double>& flat, int h, int w) {
    if (static_cast<int>(flat.size()) != 3 * h * w) {
        throw std::invalid_argument("image buffer must hold 3*h*w values");
    }
    return Tensor({3, h, w}, flat);
}

TriggerSpec spec_from_kwargs(const std::string& kind, double r1, double r2, double r3,
                             int patch_size, double alpha, uint64_t pattern_seed, int h, int w,
                             double dr, double dg, double db) {
    if (kind == "qcolor") return TriggerSpec::qcolor(r1, r2, r3);
    if (kind == "patch") return TriggerSpec::patch(patch_size);
    if (kind == "blend") {
        return TriggerSpec::blend(alpha, TriggerSpec::noise_pattern(h, w, pattern_seed));
    }
    if (kind == "shift") return TriggerSpec::color_shift(dr, dg, db);
    throw std::invalid_argument("unknown trigger kind '" + kind + "'");
}

}  // namespace

PYBIND11_MODULE(_hqlab, m) {
    m.doc() = "hybrid CNN+VQC backdoor laboratory: quantum simulator, triggers, "
              "metrics and bound estimators";

    // quantum simulator
    m.def(
        "vqc_expectations",
        [](const std::vector<double>& features, const std::vector<double>& angles, int n_layers,
           bool encode_hadamard) {
            const int n_qubits = static_cast<int>(features.size());
            if (angles.size() != static_cast<size_t>(n_layers) * features.size()) {
                throw std::invalid_argument("angles must hold n_layers * n_qubits values");
            }
            VqcParams params = VqcParams::zeros(n_layers, n_qubits);
            params.angles = angles;
            VqcArchitecture arch{n_qubits, n_layers, encode_hadamard};
            return vqc_forward(features, params, arch);
        },
        py::arg("features"), py::arg("angles"), py::arg("n_layers"),
        py::arg("encode_hadamard") = true,
        "Z expectations of the layered ansatz (H wall, RY encode, RY+CNOT-ring layers).");

    m.def(
        "vqc_parameter_shift",
        [](const std::vector<double>& features, const std::vector<double>& angles, int n_layers,
           const std::vector<double>& upstream) {
            const int n_qubits = static_cast<int>(features.size());
            if (angles.size() != static_cast<size_t>(n_layers) * features.size()) {
                throw std::invalid_argument("angles must hold n_layers * n_qubits values");
            }
            VqcParams params = VqcParams::zeros(n_layers, n_qubits);
            params.angles = angles;
            VqcArchitecture arch{n_qubits, n_layers, true};
            VqcGradients g = vqc_gradients(features, params, arch, upstream);
            return py::make_tuple(g.grad_params, g.grad_features);
        },
        py::arg("features"), py::arg("angles"), py::arg("n_layers"), py::arg("upstream"),
        "Exact parameter-shift gradients: (d/d_angles, d/d_features) of "
        "sum(upstream * <Z>).");

    m.def("encode_angle", &encode_angle, py::arg("feature"),
          "Feature-to-angle squash (pi/2)*tanh(f).");

    // triggers
    m.def(
        "apply_trigger",
        [](const std::vector<double>& image, int h, int w, const std::string& kind, double r1,
           double r2, double r3, int patch_size, double alpha, uint64_t pattern_seed, double dr,
           double dg, double db) {
            TriggerSpec spec =
                spec_from_kwargs(kind, r1, r2, r3, patch_size, alpha, pattern_seed, h, w, dr, dg, db);
            return apply_trigger(to_image(image, h, w), spec).data;
        },
        py::arg("image"), py::arg("h"), py::arg("w"), py::arg("kind") = "qcolor",
        py::arg("r1") = 1.2, py::arg("r2") = 0.8, py::arg("r3") = 1.1, py::arg("patch_size") = 2,
        py::arg("alpha") = 0.1, py::arg("pattern_seed") = 1, py::arg("dr") = 0.2,
        py::arg("dg") = 0.0, py::arg("db") = 0.0,
        "Applies a trigger to a flat [3,h,w] image in [0,1]; returns the flat result.");

    m.def(
        "trigger_strength",
        [](const std::vector<double>& image, int h, int w, const std::string& kind, double r1,
           double r2, double r3, int patch_size, double alpha, uint64_t pattern_seed, double dr,
           double dg, double db) {
            TriggerSpec spec =
                spec_from_kwargs(kind, r1, r2, r3, patch_size, alpha, pattern_seed, h, w, dr, dg, db);
            return trigger_strength(spec, to_image(image, h, w));
        },
        py::arg("image"), py::arg("h"), py::arg("w"), py::arg("kind") = "qcolor",
        py::arg("r1") = 1.2, py::arg("r2") = 0.8, py::arg("r3") = 1.1, py::arg("patch_size") = 2,
        py::arg("alpha") = 0.1, py::arg("pattern_seed") = 1, py::arg("dr") = 0.2,
        py::arg("dg") = 0.0, py::arg("db") = 0.0,
        "L2 distance between the image and its triggered version.");

    // metrics
    m.def(
        "ssim",
        [](const std::vector<double>& a, const std::vector<double>& b, int h, int w) {
            return ssim(to_image(a, h, w), to_image(b, h, w));
        },
        py::arg("a"), py::arg("b"), py::arg("h"), py::arg("w"),
        "Channel-mean SSIM of two flat [3,h,w] images (11x11 Gaussian, valid windows).");

    // defenses
    m.def("anomaly_index", &anomaly_index, py::arg("l1_norms"),
          "MAD-based anomaly indices and the flagged class list.");

    // bounds
    m.def(
        "generalization_lower_bound",
        [](double train_err, double loss_bound, int m_samples, double conf_delta,
           double lipschitz, double trig_delta, double z_norm) {
            BoundInputs inp;
            inp.loss_bound = loss_bound;
            inp.m_samples = m_samples;
            inp.conf_delta = conf_delta;
            inp.lipschitz = lipschitz;
            inp.trig_delta = trig_delta;
            inp.z_norm = z_norm;
            return generalization_lower_bound(inp, train_err);
        },
        py::arg("train_err"), py::arg("loss_bound"), py::arg("m_samples"), py::arg("conf_delta"),
        py::arg("lipschitz") = 0.0, py::arg("trig_delta") = 0.0, py::arg("z_norm") = 0.0,
        "Triggered-risk lower bound from the empirical error and a Hoeffding term.");

    m.def("hoeffding_tail", &hoeffding_tail, py::arg("m"), py::arg("loss_bound"), py::arg("eps"),
          "Two-sided tail 2*exp(-2*m*eps^2/B^2).");

    m.def(
        "min_perturbation",
        [](const std::vector<double>& epsilons, const std::vector<double>& c_values,
           double c_query) {
            if (epsilons.size() != c_values.size()) {
                throw std::invalid_argument("epsilons and c_values must align");
            }
            CompEstimate comp;
            comp.epsilons = epsilons;
            comp.c_values = c_values;
            comp.tail_fractions.assign(epsilons.size(), 0.0);
            return min_perturbation(comp, c_query);
        },
        py::arg("epsilons"), py::arg("c_values"), py::arg("c_query"),
        "Inverts an (epsilon, c) concentration curve piecewise-linearly.");

    // multi-objective helpers
    m.def(
        "pareto_fronts",
        [](const std::vector<std::pair<double, double>>& objectives) {
            std::vector<Individual> pop(objectives.size());
            for (size_t i = 0; i < objectives.size(); ++i) {
                pop[i].f1 = objectives[i].first;
                pop[i].f2 = objectives[i].second;
            }
            return fast_nondominated_sort(pop);
        },
        py::arg("objectives"),
        "Non-dominated fronts (index lists) of (f1, f2) pairs, both minimized.");

    m.def(
        "crowding_distance",
        [](const std::vector<std::pair<double, double>>& front) {
            std::vector<Individual> f(front.size());
            for (size_t i = 0; i < front.size(); ++i) {
                f[i].f1 = front[i].first;
                f[i].f2 = front[i].second;
            }
            return crowding_distance(f);
        },
        py::arg("front"), "Crowding distances of one front of (f1, f2) pairs.");
}
