#include "hqlab/data_io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "hqlab/rng.hpp"

namespace hqlab {

namespace {

// ---- little-endian primitives ----------------------------------------------

void put_u32(std::string& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<uint64_t>(v)); }

void put_str(std::string& out, const std::string& s) {
    put_u32(out, static_cast<uint32_t>(s.size()));
    out += s;
}

class FileReader {
public:
    explicit FileReader(const std::string& path)
        : in_(path, std::ios::binary | std::ios::ate), path_(path) {
        if (!in_) throw std::runtime_error("cannot open " + path);
        size_ = static_cast<uint64_t>(in_.tellg());
        in_.seekg(0);
    }

    void read(void* dst, size_t n) {
        if (!in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n))) {
            throw std::runtime_error("truncated file: " + path_);
        }
    }

    void skip(uint64_t n) {
        const auto pos = static_cast<uint64_t>(in_.tellg());
        if (pos + n > size_) throw std::runtime_error("truncated file: " + path_);
        in_.seekg(static_cast<std::streamoff>(pos + n));
    }

    uint32_t u32() {
        unsigned char b[4];
        read(b, 4);
        return static_cast<uint32_t>(b[0]) | static_cast<uint32_t>(b[1]) << 8 |
               static_cast<uint32_t>(b[2]) << 16 | static_cast<uint32_t>(b[3]) << 24;
    }

    uint64_t u64() {
        unsigned char b[8];
        read(b, 8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
        return v;
    }

    double f64() { return std::bit_cast<double>(u64()); }

    uint32_t be_u32() {
        unsigned char b[4];
        read(b, 4);
        return static_cast<uint32_t>(b[0]) << 24 | static_cast<uint32_t>(b[1]) << 16 |
               static_cast<uint32_t>(b[2]) << 8 | static_cast<uint32_t>(b[3]);
    }

    std::string str() {
        uint32_t n = u32();
        std::string s(n, '\0');
        if (n > 0) read(s.data(), n);
        return s;
    }

    const std::string& path() const { return path_; }
    uint64_t size() const { return size_; }

private:
    std::ifstream in_;
    std::string path_;
    uint64_t size_ = 0;
};

void write_file(const std::string& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// ---- dataset loaders ---------------------------------------------------------

void check_image_size(int size) {
    if (size < 12 || size % 4 != 0) {
        throw std::invalid_argument("image size must be >= 12 and divisible by 4, got " +
                                    std::to_string(size));
    }
}

void push_preprocessed(LabeledDataset& out, Tensor image, int label, int target_size) {
    out.push(resize_bilinear(image, target_size), label);
}

void load_cifar_file(const std::string& path, LabeledDataset& out, size_t limit, int target_size) {
    FileReader in(path);
    const uint64_t file_size = in.size();
    constexpr uint64_t kRecord = 3073;
    if (file_size % kRecord != 0) {
        throw std::runtime_error(path + ": size " + std::to_string(file_size) +
                                 " is not a whole number of 3073-byte records");
    }
    const uint64_t records = file_size / kRecord;
    std::vector<unsigned char> rec(kRecord);
    for (uint64_t r = 0; r < records; ++r) {
        if (limit > 0 && out.size() >= limit) return;
        in.read(rec.data(), kRecord);
        const int label = rec[0];
        if (label > 9) {
            throw std::runtime_error(path + ": record " + std::to_string(r) + " has label " +
                                     std::to_string(label) + " outside 0..9");
        }
        Tensor image({3, 32, 32});
        for (size_t i = 0; i < 3072; ++i) {
            image.data[i] = static_cast<double>(rec[1 + i]) / 255.0;
        }
        push_preprocessed(out, std::move(image), label, target_size);
    }
}

LabeledDataset load_idx_pair(const std::string& images_path, const std::string& labels_path,
                             int target_size, size_t limit) {
    FileReader imgs(images_path);
    const uint32_t img_magic = imgs.be_u32();
    if (img_magic != 0x00000803u) {
        char hex[16];
        std::snprintf(hex, sizeof(hex), "0x%08x", img_magic);
        throw std::runtime_error(images_path + ": bad IDX image magic " + hex);
    }
    const uint32_t n = imgs.be_u32();
    const uint32_t rows = imgs.be_u32();
    const uint32_t cols = imgs.be_u32();

    FileReader labs(labels_path);
    const uint32_t lab_magic = labs.be_u32();
    if (lab_magic != 0x00000801u) {
        char hex[16];
        std::snprintf(hex, sizeof(hex), "0x%08x", lab_magic);
        throw std::runtime_error(labels_path + ": bad IDX label magic " + hex);
    }
    const uint32_t n_labels = labs.be_u32();
    if (n_labels != n) {
        throw std::runtime_error(labels_path + ": label count " + std::to_string(n_labels) +
                                 " differs from image count " + std::to_string(n));
    }

    LabeledDataset out;
    const size_t count = limit > 0 ? std::min<size_t>(limit, n) : n;
    std::vector<unsigned char> pix(static_cast<size_t>(rows) * cols);
    for (size_t i = 0; i < count; ++i) {
        imgs.read(pix.data(), pix.size());
        unsigned char label = 0;
        labs.read(&label, 1);
        if (label > 9) {
            throw std::runtime_error(labels_path + ": sample " + std::to_string(i) +
                                     " has label " + std::to_string(int(label)) +
                                     " outside 0..9");
        }
        Tensor image({3, static_cast<int>(rows), static_cast<int>(cols)});
        for (size_t p = 0; p < pix.size(); ++p) {
            double v = static_cast<double>(pix[p]) / 255.0;
            image.data[p] = v;
            image.data[pix.size() + p] = v;
            image.data[2 * pix.size() + p] = v;
        }
        push_preprocessed(out, std::move(image), label, target_size);
    }
    return out;
}

}  // namespace

Tensor resize_bilinear(const Tensor& image, int size) {
    if (image.shape.size() != 3) throw std::invalid_argument("resize expects a [C,H,W] image");
    const int c = image.shape[0], h = image.shape[1], w = image.shape[2];
    if (h == size && w == size) return image;
    Tensor out({c, size, size});
    const double sy = static_cast<double>(h) / size;
    const double sx = static_cast<double>(w) / size;
    for (int ch = 0; ch < c; ++ch) {
        const double* src = image.data.data() + static_cast<size_t>(ch) * h * w;
        double* dst = out.data.data() + static_cast<size_t>(ch) * size * size;
        for (int y = 0; y < size; ++y) {
            double fy = (y + 0.5) * sy - 0.5;
            int y0 = static_cast<int>(std::floor(fy));
            double ty = fy - y0;
            int y1 = std::min(h - 1, std::max(0, y0 + 1));
            y0 = std::min(h - 1, std::max(0, y0));
            for (int x = 0; x < size; ++x) {
                double fx = (x + 0.5) * sx - 0.5;
                int x0 = static_cast<int>(std::floor(fx));
                double tx = fx - x0;
                int x1 = std::min(w - 1, std::max(0, x0 + 1));
                x0 = std::min(w - 1, std::max(0, x0));
                double top = (1.0 - tx) * src[y0 * w + x0] + tx * src[y0 * w + x1];
                double bot = (1.0 - tx) * src[y1 * w + x0] + tx * src[y1 * w + x1];
                dst[y * size + x] = (1.0 - ty) * top + ty * bot;
            }
        }
    }
    return out;
}

std::pair<LabeledDataset, LabeledDataset> load_dataset(const DatasetSource& src) {
    check_image_size(src.image_size);
    if (src.dir.empty()) throw std::invalid_argument("dataset directory not set");
    namespace fs = std::filesystem;

    LabeledDataset train, test;
    if (src.kind == DatasetSource::Kind::cifar10_bin) {
        bool any = false;
        for (int b = 1; b <= 5; ++b) {
            const std::string path = src.dir + "/data_batch_" + std::to_string(b) + ".bin";
            if (!fs::exists(path)) continue;
            any = true;
            load_cifar_file(path, train, src.max_train, src.image_size);
            if (src.max_train > 0 && train.size() >= src.max_train) break;
        }
        if (!any) {
            throw std::runtime_error("no CIFAR-10 batch files (data_batch_*.bin) in " + src.dir);
        }
        load_cifar_file(src.dir + "/test_batch.bin", test, src.max_test, src.image_size);
    } else {
        train = load_idx_pair(src.dir + "/train-images-idx3-ubyte",
                              src.dir + "/train-labels-idx1-ubyte", src.image_size,
                              src.max_train);
        test = load_idx_pair(src.dir + "/t10k-images-idx3-ubyte",
                             src.dir + "/t10k-labels-idx1-ubyte", src.image_size, src.max_test);
    }
    train.validate();
    test.validate();
    if (train.empty() || test.empty()) {
        throw std::runtime_error("dataset in " + src.dir + " produced an empty split");
    }
    return {std::move(train), std::move(test)};
}

// ---- checkpoints ---------------------------------------------------------------

namespace {
constexpr char kMagic[9] = "QBCKPT01";
constexpr uint32_t kVersion = 1;
}  // namespace

void save_checkpoint(const HybridModel& model, const OptimState& optim, const CheckpointMeta& meta,
                     const std::string& path) {
    std::string buf;
    buf.append(kMagic, 8);
    put_u32(buf, kVersion);

    put_u32(buf, static_cast<uint32_t>(model.arch.image_size));
    put_u32(buf, static_cast<uint32_t>(model.arch.n_qubits));
    put_u32(buf, static_cast<uint32_t>(model.arch.n_layers));
    put_u32(buf, static_cast<uint32_t>(model.arch.n_classes));
    put_u32(buf, model.arch.head == HeadKind::quantum ? 0u : 1u);

    put_u64(buf, meta.seed);
    put_u64(buf, meta.dataset_hash);
    for (uint64_t s : meta.rng_state) put_u64(buf, s);
    buf.push_back(meta.poisoned ? 1 : 0);
    put_f64(buf, meta.poison_rate);
    put_u32(buf, static_cast<uint32_t>(meta.target_label));
    put_str(buf, meta.trigger_desc);

    const auto params = model.parameters();
    const auto names = HybridModel::parameter_names();
    put_u32(buf, static_cast<uint32_t>(params.size()));
    for (size_t i = 0; i < params.size(); ++i) {
        put_str(buf, names[i]);
        put_u32(buf, static_cast<uint32_t>(params[i]->shape.size()));
        for (int d : params[i]->shape) put_u32(buf, static_cast<uint32_t>(d));
        put_u64(buf, params[i]->data.size());
        for (double v : params[i]->data) put_f64(buf, v);
    }

    buf.push_back(optim.method == OptimKind::sgd ? 0 : 1);
    put_f64(buf, optim.learning_rate);
    put_f64(buf, optim.beta1);
    put_f64(buf, optim.beta2);
    put_f64(buf, optim.eps_adam);
    put_u64(buf, optim.step_count);
    put_u32(buf, static_cast<uint32_t>(optim.m.size()));
    for (size_t i = 0; i < optim.m.size(); ++i) {
        put_u64(buf, optim.m[i].size());
        for (double v : optim.m[i]) put_f64(buf, v);
        put_u64(buf, optim.v[i].size());
        for (double v : optim.v[i]) put_f64(buf, v);
    }

    write_file(path, buf);
}

namespace {

struct CheckpointHeader {
    ModelArch arch;
    CheckpointMeta meta;
};

CheckpointHeader read_checkpoint_header(FileReader& in) {
    char magic[8];
    in.read(magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0) {
        throw std::runtime_error(in.path() + ": not a checkpoint (bad magic)");
    }
    const uint32_t version = in.u32();
    if (version != kVersion) {
        throw std::runtime_error(in.path() + ": unsupported checkpoint version " +
                                 std::to_string(version) + " (expected " +
                                 std::to_string(kVersion) + ")");
    }
    CheckpointHeader h;
    h.arch.image_size = static_cast<int>(in.u32());
    h.arch.n_qubits = static_cast<int>(in.u32());
    h.arch.n_layers = static_cast<int>(in.u32());
    h.arch.n_classes = static_cast<int>(in.u32());
    h.arch.head = in.u32() == 0 ? HeadKind::quantum : HeadKind::classical_fc;

    h.meta.seed = in.u64();
    h.meta.dataset_hash = in.u64();
    for (auto& s : h.meta.rng_state) s = in.u64();
    unsigned char poisoned = 0;
    in.read(&poisoned, 1);
    h.meta.poisoned = poisoned != 0;
    h.meta.poison_rate = in.f64();
    h.meta.target_label = static_cast<int>(in.u32());
    h.meta.trigger_desc = in.str();
    return h;
}

}  // namespace

LoadedCheckpoint load_checkpoint(const std::string& path) {
    FileReader in(path);
    CheckpointHeader header = read_checkpoint_header(in);

    LoadedCheckpoint loaded;
    loaded.meta = header.meta;
    loaded.model = init_model(header.arch, 0);
    auto params = loaded.model.parameters();
    const auto names = HybridModel::parameter_names();

    const uint32_t n_tensors = in.u32();
    if (n_tensors != params.size()) {
        throw std::runtime_error(path + ": expected " + std::to_string(params.size()) +
                                 " tensors, found " + std::to_string(n_tensors));
    }
    for (size_t i = 0; i < params.size(); ++i) {
        const std::string name = in.str();
        if (name != names[i]) {
            throw std::runtime_error(path + ": tensor " + std::to_string(i) + " is named '" +
                                     name + "', expected '" + names[i] + "'");
        }
        const uint32_t rank = in.u32();
        std::vector<int> shape(rank);
        uint64_t product = 1;
        for (auto& d : shape) {
            d = static_cast<int>(in.u32());
            product *= static_cast<uint64_t>(d);
        }
        const uint64_t count = in.u64();
        if (count != product) {
            throw std::runtime_error(path + ": tensor '" + name + "' declares " +
                                     std::to_string(count) + " values but its shape holds " +
                                     std::to_string(product));
        }
        if (shape != params[i]->shape) {
            throw std::runtime_error(path + ": tensor '" + name +
                                     "' shape differs from the declared architecture");
        }
        for (auto& v : params[i]->data) v = in.f64();
    }

    unsigned char method = 0;
    in.read(&method, 1);
    loaded.optim.method = method == 0 ? OptimKind::sgd : OptimKind::adam;
    loaded.optim.learning_rate = in.f64();
    loaded.optim.beta1 = in.f64();
    loaded.optim.beta2 = in.f64();
    loaded.optim.eps_adam = in.f64();
    loaded.optim.step_count = in.u64();
    const uint32_t slots = in.u32();
    loaded.optim.m.resize(slots);
    loaded.optim.v.resize(slots);
    for (uint32_t i = 0; i < slots; ++i) {
        loaded.optim.m[i].resize(in.u64());
        for (auto& v : loaded.optim.m[i]) v = in.f64();
        loaded.optim.v[i].resize(in.u64());
        for (auto& v : loaded.optim.v[i]) v = in.f64();
    }
    return loaded;
}

std::string describe_checkpoint(const std::string& path) {
    FileReader in(path);
    CheckpointHeader header = read_checkpoint_header(in);

    std::ostringstream os;
    os << "checkpoint " << path << "\n";
    os << "version " << kVersion << "\n";
    os << "arch: image_size=" << header.arch.image_size << " qubits=" << header.arch.n_qubits
       << " layers=" << header.arch.n_layers << " classes=" << header.arch.n_classes
       << " head=" << (header.arch.head == HeadKind::quantum ? "quantum" : "classical") << "\n";
    os << "meta: seed=" << header.meta.seed << " dataset_hash=" << header.meta.dataset_hash
       << " poisoned=" << (header.meta.poisoned ? 1 : 0)
       << " poison_rate=" << format_double(header.meta.poison_rate)
       << " target=" << header.meta.target_label << " trigger="
       << (header.meta.trigger_desc.empty() ? "-" : header.meta.trigger_desc) << "\n";

    const uint32_t n_tensors = in.u32();
    os << "tensors:\n";
    for (uint32_t i = 0; i < n_tensors; ++i) {
        const std::string name = in.str();
        const uint32_t rank = in.u32();
        os << "  " << name << " [";
        uint64_t product = 1;
        for (uint32_t d = 0; d < rank; ++d) {
            uint32_t dim = in.u32();
            product *= dim;
            os << (d ? "," : "") << dim;
        }
        os << "]\n";
        const uint64_t count = in.u64();
        if (count != product) {
            throw std::runtime_error(path + ": tensor '" + name + "' declares " +
                                     std::to_string(count) + " values but its shape holds " +
                                     std::to_string(product));
        }
        in.skip(count * 8);  // payload stays on disk
    }

    unsigned char method = 0;
    in.read(&method, 1);
    os << "optimizer: " << (method == 0 ? "sgd" : "adam");
    os << " lr=" << format_double(in.f64());
    in.f64();  // beta1
    in.f64();  // beta2
    in.f64();  // eps
    os << " steps=" << in.u64() << "\n";
    return os.str();
}

// ---- configuration --------------------------------------------------------------

namespace {

[[noreturn]] void key_error(const std::string& ctx, const std::string& detail) {
    throw std::invalid_argument(ctx + ": " + detail);
}

double parse_double_value(const std::string& key, const std::string& value,
                          const std::string& ctx) {
    try {
        size_t pos = 0;
        double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        key_error(ctx, "expected a number for " + key + ", got '" + value + "'");
    }
}

long long parse_int_value(const std::string& key, const std::string& value,
                          const std::string& ctx) {
    try {
        size_t pos = 0;
        long long v = std::stoll(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        key_error(ctx, "expected an integer for " + key + ", got '" + value + "'");
    }
}

uint64_t parse_u64_value(const std::string& key, const std::string& value,
                         const std::string& ctx) {
    try {
        size_t pos = 0;
        unsigned long long v = std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        key_error(ctx, "expected an unsigned integer for " + key + ", got '" + value + "'");
    }
}

bool parse_bool_value(const std::string& key, const std::string& value, const std::string& ctx) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    key_error(ctx, "expected true/false for " + key + ", got '" + value + "'");
}

struct KeyDef {
    const char* name;
    std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

std::string bool_str(bool b) { return b ? "true" : "false"; }

const std::vector<KeyDef>& key_table() {
    auto int_range = [](const char* key, int lo, int hi, auto member) {
        return KeyDef{
            key,
            [=](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
                long long x = parse_int_value(key, v, ctx);
                if (x < lo || x > hi) {
                    key_error(ctx, std::string(key) + " outside [" + std::to_string(lo) + ", " +
                                       std::to_string(hi) + "]: " + v);
                }
                c.*member = static_cast<int>(x);
            },
            [=](const ExperimentConfig& c) { return std::to_string(c.*member); }};
    };
    auto dbl_range = [](const char* key, double lo, double hi, auto member, bool lo_open = false,
                        bool hi_open = false) {
        return KeyDef{
            key,
            [=](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
                double x = parse_double_value(key, v, ctx);
                bool bad = lo_open ? x <= lo : x < lo;
                bad = bad || (hi_open ? x >= hi : x > hi);
                if (bad) {
                    key_error(ctx, std::string(key) + " outside " + (lo_open ? "(" : "[") +
                                       format_double(lo) + ", " + format_double(hi) +
                                       (hi_open ? ")" : "]") + ": " + v);
                }
                c.*member = x;
            },
            [=](const ExperimentConfig& c) { return format_double(c.*member); }};
    };

    static const std::vector<KeyDef> table = {
        {"seed",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             c.seed = parse_u64_value("seed", v, ctx);
         },
         [](const ExperimentConfig& c) { return std::to_string(c.seed); }},
        int_range("threads", 1, 256, &ExperimentConfig::threads),
        {"dataset.kind",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             if (v == "cifar10_bin") {
                 c.dataset.kind = DatasetSource::Kind::cifar10_bin;
             } else if (v == "mnist_idx") {
                 c.dataset.kind = DatasetSource::Kind::mnist_idx;
             } else {
                 key_error(ctx, "dataset.kind must be cifar10_bin or mnist_idx, got '" + v + "'");
             }
         },
         [](const ExperimentConfig& c) {
             return std::string(c.dataset.kind == DatasetSource::Kind::cifar10_bin ? "cifar10_bin"
                                                                                   : "mnist_idx");
         }},
        {"dataset.dir",
         [](ExperimentConfig& c, const std::string& v, const std::string&) { c.dataset.dir = v; },
         [](const ExperimentConfig& c) { return c.dataset.dir; }},
        {"dataset.image_size",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             long long x = parse_int_value("dataset.image_size", v, ctx);
             if (x < 12 || x % 4 != 0 || x > 256) {
                 key_error(ctx, "dataset.image_size must be >= 12, <= 256 and divisible by 4");
             }
             c.dataset.image_size = static_cast<int>(x);
         },
         [](const ExperimentConfig& c) { return std::to_string(c.dataset.image_size); }},
        {"dataset.max_train",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             c.dataset.max_train = parse_u64_value("dataset.max_train", v, ctx);
         },
         [](const ExperimentConfig& c) { return std::to_string(c.dataset.max_train); }},
        {"dataset.max_test",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             c.dataset.max_test = parse_u64_value("dataset.max_test", v, ctx);
         },
         [](const ExperimentConfig& c) { return std::to_string(c.dataset.max_test); }},
        int_range("model.qubits", 1, 14, &ExperimentConfig::model_qubits),
        int_range("model.layers", 1, 16, &ExperimentConfig::model_layers),
        int_range("model.classes", 2, 10, &ExperimentConfig::model_classes),
        {"model.head",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             if (v == "quantum") {
                 c.model_head = HeadKind::quantum;
             } else if (v == "classical") {
                 c.model_head = HeadKind::classical_fc;
             } else {
                 key_error(ctx, "model.head must be quantum or classical, got '" + v + "'");
             }
         },
         [](const ExperimentConfig& c) {
             return std::string(c.model_head == HeadKind::quantum ? "quantum" : "classical");
         }},
        int_range("train.epochs", 1, 10000, &ExperimentConfig::train_epochs),
        int_range("train.batch", 1, 65536, &ExperimentConfig::train_batch),
        dbl_range("train.lr", 0.0, 10.0, &ExperimentConfig::train_lr),
        {"train.optimizer",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             if (v == "sgd") {
                 c.train_optimizer = OptimKind::sgd;
             } else if (v == "adam") {
                 c.train_optimizer = OptimKind::adam;
             } else {
                 key_error(ctx, "train.optimizer must be sgd or adam, got '" + v + "'");
             }
         },
         [](const ExperimentConfig& c) {
             return std::string(c.train_optimizer == OptimKind::sgd ? "sgd" : "adam");
         }},
        {"train.shuffle",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             c.train_shuffle = parse_bool_value("train.shuffle", v, ctx);
         },
         [](const ExperimentConfig& c) { return bool_str(c.train_shuffle); }},
        {"trigger.kind",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             if (v != "qcolor" && v != "patch" && v != "blend" && v != "shift") {
                 key_error(ctx, "trigger.kind must be qcolor, patch, blend or shift, got '" + v +
                                    "'");
             }
             c.trigger_kind = v;
         },
         [](const ExperimentConfig& c) { return c.trigger_kind; }},
        dbl_range("trigger.r1", 0.5, 1.5, &ExperimentConfig::trigger_r1),
        dbl_range("trigger.r2", 0.5, 1.5, &ExperimentConfig::trigger_r2),
        dbl_range("trigger.r3", 0.5, 1.5, &ExperimentConfig::trigger_r3),
        int_range("trigger.patch_size", 1, 256, &ExperimentConfig::trigger_patch_size),
        dbl_range("trigger.alpha", 0.0, 1.0, &ExperimentConfig::trigger_alpha),
        dbl_range("trigger.shift_r", -1.0, 1.0, &ExperimentConfig::trigger_shift_r),
        dbl_range("trigger.shift_g", -1.0, 1.0, &ExperimentConfig::trigger_shift_g),
        dbl_range("trigger.shift_b", -1.0, 1.0, &ExperimentConfig::trigger_shift_b),
        {"poison.enabled",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             c.poison_enabled = parse_bool_value("poison.enabled", v, ctx);
         },
         [](const ExperimentConfig& c) { return bool_str(c.poison_enabled); }},
        dbl_range("poison.rate", 0.0, 1.0, &ExperimentConfig::poison_rate, true, false),
        int_range("poison.target", 0, 9, &ExperimentConfig::poison_target),
        {"nsga.population",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             long long x = parse_int_value("nsga.population", v, ctx);
             if (x < 4 || x % 2 != 0) {
                 key_error(ctx, "nsga.population must be an even value of at least 4");
             }
             c.nsga_population = static_cast<int>(x);
         },
         [](const ExperimentConfig& c) { return std::to_string(c.nsga_population); }},
        int_range("nsga.generations", 1, 1000, &ExperimentConfig::nsga_generations),
        dbl_range("nsga.eta_c", 0.0, 1000.0, &ExperimentConfig::nsga_eta_c),
        dbl_range("nsga.sigma_m", 0.0, 1.0, &ExperimentConfig::nsga_sigma_m),
        dbl_range("nsga.mutation_prob", 0.0, 1.0, &ExperimentConfig::nsga_mutation_prob),
        int_range("nsga.surrogate_epochs", 1, 100, &ExperimentConfig::nsga_surrogate_epochs),
        {"nsga.surrogate_samples",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             uint64_t x = parse_u64_value("nsga.surrogate_samples", v, ctx);
             if (x < 10) key_error(ctx, "nsga.surrogate_samples must be at least 10");
             c.nsga_surrogate_samples = x;
         },
         [](const ExperimentConfig& c) { return std::to_string(c.nsga_surrogate_samples); }},
        int_range("strip.overlays", 1, 100000, &ExperimentConfig::strip_overlays),
        dbl_range("strip.alpha", 0.0, 1.0, &ExperimentConfig::strip_alpha, true, true),
        dbl_range("strip.percentile", 0.0, 100.0, &ExperimentConfig::strip_percentile),
        int_range("cleanse.steps", 1, 100000, &ExperimentConfig::cleanse_steps),
        dbl_range("cleanse.lr", 0.0, 10.0, &ExperimentConfig::cleanse_lr, true, false),
        dbl_range("cleanse.lambda", 0.0, 100.0, &ExperimentConfig::cleanse_lambda),
        int_range("cleanse.batch", 1, 4096, &ExperimentConfig::cleanse_batch),
        {"cleanse.samples",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             uint64_t x = parse_u64_value("cleanse.samples", v, ctx);
             if (x < 1) key_error(ctx, "cleanse.samples must be at least 1");
             c.cleanse_samples = x;
         },
         [](const ExperimentConfig& c) { return std::to_string(c.cleanse_samples); }},
        {"prune.rates",
         [](ExperimentConfig& c, const std::string& v, const std::string& ctx) {
             std::vector<double> rates;
             std::stringstream ss(v);
             std::string item;
             while (std::getline(ss, item, ',')) {
                 double r = parse_double_value("prune.rates", item, ctx);
                 if (r <= 0.0 || r >= 1.0) {
                     key_error(ctx, "prune rate outside (0, 1): " + item);
                 }
                 if (!rates.empty() && r <= rates.back()) {
                     key_error(ctx, "prune.rates must be strictly ascending");
                 }
                 rates.push_back(r);
             }
             if (rates.empty()) key_error(ctx, "prune.rates must list at least one rate");
             c.prune_rates = std::move(rates);
         },
         [](const ExperimentConfig& c) {
             std::string out;
             for (size_t i = 0; i < c.prune_rates.size(); ++i) {
                 if (i) out += ',';
                 out += format_double(c.prune_rates[i]);
             }
             return out;
         }},
        dbl_range("bounds.conf_delta", 0.0, 1.0, &ExperimentConfig::bounds_conf_delta, true,
                  true),
        int_range("bounds.lipschitz_pairs", 1, 1000000, &ExperimentConfig::bounds_lipschitz_pairs),
    };
    return table;
}

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

void set_config_key(ExperimentConfig& cfg, const std::string& key, const std::string& value,
                    const std::string& ctx) {
    for (const auto& def : key_table()) {
        if (key == def.name) {
            def.set(cfg, value, ctx);
            return;
        }
    }
    key_error(ctx, "unknown key '" + key + "'");
}

}  // namespace

ModelArch ExperimentConfig::arch() const {
    ModelArch a;
    a.image_size = dataset.image_size;
    a.n_qubits = model_qubits;
    a.n_layers = model_layers;
    a.n_classes = model_classes;
    a.head = model_head;
    return a;
}

TrainConfig ExperimentConfig::train_config() const {
    TrainConfig t;
    t.epochs = train_epochs;
    t.batch_size = train_batch;
    t.learning_rate = train_lr;
    t.optimizer = train_optimizer;
    t.seed = seed;
    t.shuffle = train_shuffle;
    return t;
}

TriggerSpec ExperimentConfig::trigger(int image_h, int image_w) const {
    TriggerSpec spec;
    if (trigger_kind == "qcolor") {
        spec = TriggerSpec::qcolor(trigger_r1, trigger_r2, trigger_r3);
    } else if (trigger_kind == "patch") {
        spec = TriggerSpec::patch(trigger_patch_size);
    } else if (trigger_kind == "blend") {
        spec = TriggerSpec::blend(trigger_alpha,
                                  TriggerSpec::noise_pattern(image_h, image_w, seed));
    } else {
        spec = TriggerSpec::color_shift(trigger_shift_r, trigger_shift_g, trigger_shift_b);
    }
    spec.validate(image_h, image_w);
    return spec;
}

std::string ExperimentConfig::resolved() const {
    std::string out;
    for (const auto& def : key_table()) {
        out += def.name;
        out += " = ";
        out += def.get(*this);
        out += '\n';
    }
    return out;
}

ExperimentConfig parse_config(const std::string& text) {
    ExperimentConfig cfg;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    int kind_line = 0;
    bool dir_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        const std::string ctx = "line " + std::to_string(line_no);
        if (eq == std::string::npos) key_error(ctx, "expected key=value, got '" + line + "'");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) key_error(ctx, "empty key");
        set_config_key(cfg, key, value, ctx);
        if (key == "dataset.kind") kind_line = line_no;
        if (key == "dataset.dir") dir_seen = true;
    }
    if (kind_line > 0 && !dir_seen) {
        key_error("line " + std::to_string(kind_line),
                  "dataset.kind requires dataset.dir to be set");
    }
    return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open config " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config(ss.str());
    } catch (const std::invalid_argument& e) {
        throw std::invalid_argument(path + ": " + e.what());
    }
}

void apply_override(ExperimentConfig& cfg, const std::string& assignment) {
    auto eq = assignment.find('=');
    const std::string ctx = "override '" + assignment + "'";
    if (eq == std::string::npos) key_error(ctx, "expected key=value");
    std::string key = trim(assignment.substr(0, eq));
    std::string value = trim(assignment.substr(eq + 1));
    if (key.empty()) key_error(ctx, "empty key");
    set_config_key(cfg, key, value, ctx);
}

// ---- result emission --------------------------------------------------------------

std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_results(const std::string& path, const std::string& header,
                   const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << header << '\n';
    for (const auto& row : rows) {
        for (size_t i = 0; i < row.size(); ++i) {
            if (i) out << ',';
            out << row[i];
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

void write_raw_tensor(const std::string& path, const Tensor& t) {
    std::string buf;
    put_u32(buf, static_cast<uint32_t>(t.shape.size()));
    for (int d : t.shape) put_u32(buf, static_cast<uint32_t>(d));
    for (double v : t.data) put_f64(buf, v);
    write_file(path, buf);
}

Tensor read_raw_tensor(const std::string& path) {
    FileReader in(path);
    const uint32_t rank = in.u32();
    if (rank == 0 || rank > 8) {
        throw std::runtime_error(path + ": implausible tensor rank " + std::to_string(rank));
    }
    std::vector<int> shape(rank);
    size_t count = 1;
    for (auto& d : shape) {
        d = static_cast<int>(in.u32());
        count *= static_cast<size_t>(d);
    }
    Tensor t(shape);
    for (auto& v : t.data) v = in.f64();
    return t;
}

void write_ppm(const std::string& path, const Tensor& image) {
    if (image.shape.size() != 3 || image.shape[0] != 3) {
        throw std::invalid_argument("ppm preview expects a [3,H,W] image");
    }
    const int h = image.shape[1], w = image.shape[2];
    std::string buf = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                double v = clamp01(image.data[static_cast<size_t>((c * h + y) * w + x)]);
                buf.push_back(static_cast<char>(std::lround(v * 255.0)));
            }
        }
    }
    write_file(path, buf);
}

uint64_t fnv1a(const void* data, size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    uint64_t h = 14695981039346656037ull;
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

uint64_t dataset_hash(const LabeledDataset& ds) {
    uint64_t h = 14695981039346656037ull;
    auto fold = [&h](const void* data, size_t len) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < len; ++i) {
            h ^= p[i];
            h *= 1099511628211ull;
        }
    };
    for (size_t i = 0; i < ds.size(); ++i) {
        fold(ds.images[i].data.data(), ds.images[i].data.size() * sizeof(double));
        fold(&ds.labels[i], sizeof(int));
        unsigned char m = ds.poison_mask[i];
        fold(&m, 1);
    }
    return h;
}

// ---- synthetic corpus ----------------------------------------------------------------

namespace {

// Oriented grating with a class-specific (orientation, frequency) pair.
// Color never carries the label: tint and noise are sampled per image.
void grating(std::vector<double>& gray, int size, int cls, double phase) {
    const double theta = (cls % 5) * (3.14159265358979323846 / 5.0);
    const double freq = cls < 5 ? 3.0 : 6.0;
    const double ct = std::cos(theta), st = std::sin(theta);
    gray.resize(static_cast<size_t>(size) * size);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            double u = (x * ct + y * st) / size;
            gray[static_cast<size_t>(y * size + x)] =
                0.5 + 0.45 * std::sin(2.0 * 3.14159265358979323846 * freq * u + phase);
        }
    }
}

void write_cifar_split(const std::string& path, size_t n, uint64_t seed, uint64_t split_tag) {
    std::string buf;
    buf.reserve(n * 3073);
    std::vector<double> gray;
    for (size_t i = 0; i < n; ++i) {
        const int cls = static_cast<int>(i % 10);
        Rng rng(Rng::mix({seed, 0x636966617200ULL, split_tag, static_cast<uint64_t>(i)}));
        grating(gray, 32, cls, rng.uniform(0.0, 2.0 * 3.14159265358979323846));
        // Per-image exposure varies; the channel balance stays tight, the way
        // camera color balance does. Wide per-channel spreads would swamp
        // color-space structure in label-independent tint noise.
        const double exposure = 0.85 + 0.15 * rng.uniform();
        double gains[3];
        for (auto& g : gains) g = exposure * (0.99 + 0.01 * rng.uniform());
        buf.push_back(static_cast<char>(cls));
        for (int c = 0; c < 3; ++c) {
            for (size_t p = 0; p < gray.size(); ++p) {
                double v = clamp01(gray[p] * gains[c] + 0.02 * rng.normal());
                buf.push_back(static_cast<char>(std::lround(v * 255.0)));
            }
        }
    }
    write_file(path, buf);
}

void put_be_u32(std::string& out, uint32_t v) {
    for (int i = 3; i >= 0; --i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void write_idx_split(const std::string& images_path, const std::string& labels_path, size_t n,
                     uint64_t seed, uint64_t split_tag) {
    std::string imgs, labs;
    put_be_u32(imgs, 0x00000803u);
    put_be_u32(imgs, static_cast<uint32_t>(n));
    put_be_u32(imgs, 28);
    put_be_u32(imgs, 28);
    put_be_u32(labs, 0x00000801u);
    put_be_u32(labs, static_cast<uint32_t>(n));

    std::vector<double> gray;
    for (size_t i = 0; i < n; ++i) {
        const int cls = static_cast<int>(i % 10);
        Rng rng(Rng::mix({seed, 0x69647800ULL, split_tag, static_cast<uint64_t>(i)}));
        grating(gray, 28, cls, rng.uniform(0.0, 2.0 * 3.14159265358979323846));
        for (double g : gray) {
            double v = clamp01(g + 0.02 * rng.normal());
            imgs.push_back(static_cast<char>(std::lround(v * 255.0)));
        }
        labs.push_back(static_cast<char>(cls));
    }
    write_file(images_path, imgs);
    write_file(labels_path, labs);
}

}  // namespace

void generate_synthetic_corpus(const std::string& dir, size_t n_train, size_t n_test,
                               uint64_t seed) {
    if (n_train < 10 || n_test < 10) {
        throw std::invalid_argument("synthetic corpus needs at least 10 samples per split");
    }
    std::filesystem::create_directories(dir);
    write_cifar_split(dir + "/data_batch_1.bin", n_train, seed, 1);
    write_cifar_split(dir + "/test_batch.bin", n_test, seed, 2);
    write_idx_split(dir + "/train-images-idx3-ubyte", dir + "/train-labels-idx1-ubyte", n_train,
                    seed, 3);
    write_idx_split(dir + "/t10k-images-idx3-ubyte", dir + "/t10k-labels-idx1-ubyte", n_test, seed,
                    4);
}

}  // namespace hqlab
