#include "mgkd/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace mgkd {
namespace {

struct Blob {
    double cx, cy, radius;
    std::vector<double> color;
};

Blob random_blob(std::mt19937_64& rng, std::size_t size, std::size_t channels, double r_lo, double r_hi) {
    std::uniform_real_distribution<double> pos(2.5, static_cast<double>(size) - 3.5);
    std::uniform_real_distribution<double> rad(r_lo, r_hi);
    std::uniform_real_distribution<double> col(-1.0, 1.0);
    Blob b{pos(rng), pos(rng), rad(rng), std::vector<double>(channels)};
    for (double& c : b.color) c = col(rng);
    // Keep blobs visible: rescale color to unit max-magnitude.
    double mx = 0.0;
    for (double c : b.color) mx = std::max(mx, std::abs(c));
    for (double& c : b.color) c /= std::max(mx, 1e-6);
    return b;
}

void render(const Blob& b, double dx, double dy, double amp, std::size_t size, float* img) {
    const std::size_t plane = size * size;
    const double inv = 1.0 / (2.0 * b.radius * b.radius);
    for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
            const double ddx = static_cast<double>(x) - (b.cx + dx);
            const double ddy = static_cast<double>(y) - (b.cy + dy);
            const double g = amp * std::exp(-(ddx * ddx + ddy * ddy) * inv);
            for (std::size_t c = 0; c < b.color.size(); ++c)
                img[c * plane + y * size + x] += static_cast<float>(g * b.color[c]);
        }
    }
}

struct SyntheticPool {
    Tensor train;
    std::vector<int> train_labels;
    Tensor test;
    std::vector<int> test_labels;
};

SyntheticPool generate_synthetic(const SyntheticSpec& s) {
    if (s.classes < 2) throw InvalidArgument("synthetic dataset needs at least 2 classes");
    if (s.image_size < 8) throw InvalidArgument("synthetic image_size must be at least 8");
    std::mt19937_64 proto_rng(s.seed);
    const std::size_t groups = (s.classes + 1) / 2;
    std::vector<Blob> coarse, fine;
    for (std::size_t g = 0; g < groups; ++g) coarse.push_back(random_blob(proto_rng, s.image_size, s.channels, 2.5, 4.0));
    for (std::size_t k = 0; k < s.classes; ++k) fine.push_back(random_blob(proto_rng, s.image_size, s.channels, 1.2, 2.0));

    const Shape4 img{1, s.channels, s.image_size, s.image_size};
    auto make = [&](std::size_t per_class, std::uint64_t stream, Tensor& images, std::vector<int>& labels) {
        std::mt19937_64 rng(s.seed * 0x9E3779B97F4A7C15ull + stream);
        std::uniform_real_distribution<double> jit(-s.jitter, s.jitter);
        std::uniform_real_distribution<double> amp(0.7, 1.3);
        std::normal_distribution<double> noise(0.0, s.pixel_noise);
        const std::size_t n = per_class * s.classes;
        images = Tensor(Shape4{n, s.channels, s.image_size, s.image_size});
        labels.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t k = i % s.classes;
            labels[i] = static_cast<int>(k);
            float* dst = images.data() + i * img.per_sample();
            render(coarse[k / 2], jit(rng), jit(rng), amp(rng), s.image_size, dst);
            render(fine[k], jit(rng), jit(rng), amp(rng), s.image_size, dst);
            const Blob clutter = random_blob(rng, s.image_size, s.channels, 1.5, 3.0);
            render(clutter, 0.0, 0.0, 0.6 * amp(rng), s.image_size, dst);
            for (std::size_t p = 0; p < img.per_sample(); ++p) dst[p] += static_cast<float>(noise(rng));
        }
    };
    SyntheticPool pool;
    make(s.train_per_class, 1, pool.train, pool.train_labels);
    make(s.test_per_class, 2, pool.test, pool.test_labels);
    return pool;
}

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFound("dataset file not found: " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Appends records of one CIFAR binary file. `label_bytes` is 1 (CIFAR-10) or
// 2 (CIFAR-100: coarse, fine; the fine label is used).
void read_cifar(const std::filesystem::path& path, std::size_t label_bytes, std::size_t classes,
                std::vector<float>& pixels, std::vector<int>& labels) {
    constexpr std::size_t kImage = 3 * 32 * 32;
    const auto bytes = read_file(path);
    const std::size_t record = label_bytes + kImage;
    if (bytes.size() % record != 0)
        throw FormatError(path.string() + ": truncated record at index " + std::to_string(bytes.size() / record));
    for (std::size_t r = 0; r < bytes.size() / record; ++r) {
        const unsigned char* rec = bytes.data() + r * record;
        const int label = rec[label_bytes - 1];
        if (static_cast<std::size_t>(label) >= classes)
            throw FormatError(path.string() + ": record " + std::to_string(r) + " has label " + std::to_string(label) +
                              " outside [0, " + std::to_string(classes) + ")");
        labels.push_back(label);
        for (std::size_t i = 0; i < kImage; ++i) pixels.push_back(static_cast<float>(rec[label_bytes + i]) / 255.0f);
    }
}

void normalize(Tensor& images, const Normalization& norm) {
    const Shape4 s = images.shape();
    if (norm.mean.empty() && norm.std.empty()) return;
    if (norm.mean.size() != s.c || norm.std.size() != s.c)
        throw InvalidArgument("normalization needs one mean and std per channel (" + std::to_string(s.c) + ")");
    const std::size_t plane = s.h * s.w;
    for (std::size_t i = 0; i < s.n; ++i)
        for (std::size_t c = 0; c < s.c; ++c) {
            if (!(norm.std[c] > 0.0f)) throw InvalidArgument("normalization std must be positive");
            float* p = images.data() + (i * s.c + c) * plane;
            for (std::size_t k = 0; k < plane; ++k) p[k] = (p[k] - norm.mean[c]) / norm.std[c];
        }
}

std::filesystem::path resolve_root(const DatasetConfig& cfg) {
    if (!cfg.root.empty()) return cfg.root;
    if (const char* env = std::getenv("MGKD_DATA_ROOT")) return env;
    return ".";
}

} // namespace

void DatasetSplit::validate() const {
    if (images.batch() != labels.size())
        throw InvalidArgument(name + ": " + std::to_string(images.batch()) + " images but " +
                              std::to_string(labels.size()) + " labels");
    if (class_count < 2) throw InvalidArgument(name + ": class_count must be at least 2");
    for (float v : images.storage())
        if (!std::isfinite(v)) throw InvalidArgument(name + ": non-finite pixel value");
    LabelBatch(labels, class_count);
}

Tensor gather_samples(const Tensor& t, std::span<const std::size_t> indices) {
    Shape4 s = t.shape();
    s.n = indices.size();
    Tensor out(s);
    const std::size_t f = s.per_sample();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= t.batch()) throw InvalidArgument("sample index out of range");
        std::copy_n(t.data() + indices[i] * f, f, out.data() + i * f);
    }
    return out;
}

Tensor DatasetSplit::gather(std::span<const std::size_t> indices) const { return gather_samples(images, indices); }

LabelBatch DatasetSplit::gather_labels(std::span<const std::size_t> indices) const {
    std::vector<int> out(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) out[i] = labels[indices[i]];
    return LabelBatch(std::move(out), class_count);
}

std::size_t num_classes_for(const DatasetConfig& cfg) {
    if (cfg.name == "synthetic") return cfg.synthetic.classes;
    if (cfg.name == "cifar10") return 10;
    if (cfg.name == "cifar100") return 100;
    throw InvalidArgument("unknown dataset '" + cfg.name + "' (valid: synthetic, cifar10, cifar100)");
}

Shape4 image_shape_for(const DatasetConfig& cfg) {
    if (cfg.name == "synthetic") return {1, cfg.synthetic.channels, cfg.synthetic.image_size, cfg.synthetic.image_size};
    if (cfg.name == "cifar10" || cfg.name == "cifar100") return {1, 3, 32, 32};
    throw InvalidArgument("unknown dataset '" + cfg.name + "' (valid: synthetic, cifar10, cifar100)");
}

DatasetBundle load_dataset(const DatasetConfig& cfg) {
    if (!(cfg.val_fraction >= 0.0 && cfg.val_fraction < 1.0)) throw InvalidArgument("val_fraction must be in [0, 1)");
    const std::size_t classes = num_classes_for(cfg);
    DatasetSplit pool{"train_pool", {}, {}, classes};
    DatasetSplit test{"test", {}, {}, classes};

    if (cfg.name == "synthetic") {
        SyntheticPool sp = generate_synthetic(cfg.synthetic);
        pool.images = std::move(sp.train);
        pool.labels = std::move(sp.train_labels);
        test.images = std::move(sp.test);
        test.labels = std::move(sp.test_labels);
    } else {
        const auto root = resolve_root(cfg);
        std::vector<float> px, tpx;
        if (cfg.name == "cifar10") {
            const auto dir = root / "cifar-10-batches-bin";
            for (int b = 1; b <= 5; ++b)
                read_cifar(dir / ("data_batch_" + std::to_string(b) + ".bin"), 1, classes, px, pool.labels);
            read_cifar(dir / "test_batch.bin", 1, classes, tpx, test.labels);
        } else {
            const auto dir = root / "cifar-100-binary";
            read_cifar(dir / "train.bin", 2, classes, px, pool.labels);
            read_cifar(dir / "test.bin", 2, classes, tpx, test.labels);
        }
        pool.images = Tensor(Shape4{pool.labels.size(), 3, 32, 32}, std::move(px));
        test.images = Tensor(Shape4{test.labels.size(), 3, 32, 32}, std::move(tpx));
    }
    normalize(pool.images, cfg.normalization);
    normalize(test.images, cfg.normalization);

    // Stratified split: the same fraction of every class goes to validation.
    std::vector<std::vector<std::size_t>> by_class(classes);
    for (std::size_t i = 0; i < pool.labels.size(); ++i) by_class[pool.labels[i]].push_back(i);
    std::mt19937_64 rng(cfg.split_seed);
    DatasetBundle out;
    for (auto& members : by_class) {
        std::shuffle(members.begin(), members.end(), rng);
        const auto n_val = static_cast<std::size_t>(std::llround(cfg.val_fraction * static_cast<double>(members.size())));
        out.val_indices.insert(out.val_indices.end(), members.begin(), members.begin() + n_val);
        out.train_indices.insert(out.train_indices.end(), members.begin() + n_val, members.end());
    }
    std::sort(out.train_indices.begin(), out.train_indices.end());
    std::sort(out.val_indices.begin(), out.val_indices.end());
    out.train = subset(pool, out.train_indices, "train");
    out.val = subset(pool, out.val_indices, "val");
    out.test = std::move(test);
    out.train.validate();
    out.test.validate();
    return out;
}

DatasetSplit add_gaussian_noise(const DatasetSplit& split, double sigma, std::uint64_t seed) {
    if (!(sigma >= 0.0) || !std::isfinite(sigma))
        throw InvalidArgument("noise sigma must be non-negative, got " + std::to_string(sigma));
    DatasetSplit out = split;
    if (sigma == 0.0) return out;
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> dist(0.0f, static_cast<float>(sigma));
    for (float& v : out.images.storage()) v += dist(rng);
    return out;
}

DatasetSplit subset(const DatasetSplit& split, std::span<const std::size_t> indices, std::string name) {
    DatasetSplit out{std::move(name), split.gather(indices), {}, split.class_count};
    out.labels.reserve(indices.size());
    for (std::size_t i : indices) out.labels.push_back(split.labels[i]);
    return out;
}

std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::mt19937_64& rng) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < n; i += batch_size)
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
    return out;
}

std::vector<std::vector<std::size_t>> ordered_batches(std::size_t n, std::size_t batch_size) {
    std::vector<std::vector<std::size_t>> out;
    for (std::size_t i = 0; i < n; i += batch_size) {
        std::vector<std::size_t> b(std::min(n, i + batch_size) - i);
        std::iota(b.begin(), b.end(), i);
        out.push_back(std::move(b));
    }
    return out;
}

void augment_in_place(Tensor& batch, const Augmentation& aug, std::mt19937_64& rng) {
    if (!aug.enabled()) return;
    const Shape4 s = batch.shape();
    const auto pad = static_cast<long>(aug.crop_padding);
    std::uniform_int_distribution<long> shift(-pad, pad);
    std::bernoulli_distribution flip(0.5);
    std::vector<float> tmp(s.per_sample());
    for (std::size_t i = 0; i < s.n; ++i) {
        float* img = batch.data() + i * s.per_sample();
        const long dy = pad ? shift(rng) : 0;
        const long dx = pad ? shift(rng) : 0;
        const bool mirror = aug.horizontal_flip && flip(rng);
        for (std::size_t c = 0; c < s.c; ++c)
            for (std::size_t y = 0; y < s.h; ++y)
                for (std::size_t x = 0; x < s.w; ++x) {
                    const long sx0 = mirror ? static_cast<long>(s.w - 1 - x) : static_cast<long>(x);
                    const long sy = static_cast<long>(y) + dy;
                    const long sx = sx0 + dx;
                    const bool inside = sy >= 0 && sy < static_cast<long>(s.h) && sx >= 0 && sx < static_cast<long>(s.w);
                    tmp[(c * s.h + y) * s.w + x] = inside ? img[(c * s.h + sy) * s.w + sx] : 0.0f;
                }
        std::copy(tmp.begin(), tmp.end(), img);
    }
}

} // namespace mgkd
