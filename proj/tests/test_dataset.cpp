#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

#include <unistd.h>

#include "mgkd/dataset.hpp"

using namespace mgkd;
namespace fs = std::filesystem;

namespace {

// Recorded from the default synthetic spec (libstdc++ distributions).
constexpr std::uint64_t kFirstTrainImageChecksum = 0xa84b4eb19c6cc4ffull;

DatasetConfig small_synthetic() {
    DatasetConfig c;
    c.synthetic.train_per_class = 20;
    c.synthetic.test_per_class = 10;
    return c;
}

fs::path temp_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("mgkd_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

void write_cifar_file(const fs::path& path, std::size_t records, std::size_t label_bytes, int label) {
    std::ofstream out(path, std::ios::binary);
    for (std::size_t r = 0; r < records; ++r) {
        for (std::size_t b = 0; b < label_bytes; ++b) out.put(static_cast<char>(label));
        for (std::size_t i = 0; i < 3072; ++i) out.put(static_cast<char>((r + i) % 256));
    }
}

} // namespace

TEST(Synthetic, ShapesSplitsAndDeterminism) {
    const DatasetBundle a = load_dataset(small_synthetic());
    const DatasetBundle b = load_dataset(small_synthetic());
    EXPECT_EQ(a.train.size(), 160u);
    EXPECT_EQ(a.val.size(), 40u);
    EXPECT_EQ(a.test.size(), 100u);
    EXPECT_EQ(a.train.images.shape(), (Shape4{160, 3, 16, 16}));
    EXPECT_EQ(a.train.class_count, 10u);
    EXPECT_EQ(a.train.images, b.train.images);
    EXPECT_EQ(a.val.labels, b.val.labels);

    std::set<std::size_t> tr(a.train_indices.begin(), a.train_indices.end());
    for (std::size_t v : a.val_indices) EXPECT_FALSE(tr.count(v));
    std::vector<int> per_class(10, 0);
    for (int y : a.val.labels) ++per_class[y];
    for (int c : per_class) EXPECT_EQ(c, 4); // stratified
}

TEST(Synthetic, FirstImageChecksumIsStable) {
    const DatasetBundle d = load_dataset(DatasetConfig{});
    EXPECT_EQ(checksum(d.train.images.sample(0)), kFirstTrainImageChecksum);
}

TEST(Synthetic, SplitSeedChangesPartitionOnly) {
    DatasetConfig c = small_synthetic();
    c.split_seed = 5;
    const DatasetBundle a = load_dataset(small_synthetic()), b = load_dataset(c);
    EXPECT_NE(a.val_indices, b.val_indices);
    EXPECT_EQ(a.test.images, b.test.images);
}

TEST(Synthetic, Errors) {
    DatasetConfig c = small_synthetic();
    c.synthetic.classes = 1;
    EXPECT_THROW(load_dataset(c), InvalidArgument);
    c = small_synthetic();
    c.val_fraction = 1.0;
    EXPECT_THROW(load_dataset(c), InvalidArgument);
    c = small_synthetic();
    c.name = "imagenet";
    EXPECT_THROW(num_classes_for(c), InvalidArgument);
    c = small_synthetic();
    c.normalization = {{0.5f}, {0.2f}};
    EXPECT_THROW(load_dataset(c), InvalidArgument);
}

TEST(Normalization, PerChannelAffine) {
    DatasetConfig c = small_synthetic();
    const DatasetBundle raw = load_dataset(c);
    c.normalization = {{0.5f, 0.0f, -1.0f}, {2.0f, 1.0f, 0.5f}};
    const DatasetBundle n = load_dataset(c);
    const auto r = raw.test.images.sample(0), v = n.test.images.sample(0);
    EXPECT_FLOAT_EQ(v[0], (r[0] - 0.5f) / 2.0f);
    EXPECT_FLOAT_EQ(v[16 * 16], r[16 * 16]);
    EXPECT_FLOAT_EQ(v[2 * 16 * 16 + 3], (r[2 * 16 * 16 + 3] + 1.0f) / 0.5f);
}

TEST(Cifar, ReadsBinaryRecordsAndReportsProblems) {
    const fs::path root = temp_dir("cifar");
    const fs::path dir = root / "cifar-10-batches-bin";
    fs::create_directories(dir);
    for (int b = 1; b <= 5; ++b) write_cifar_file(dir / ("data_batch_" + std::to_string(b) + ".bin"), 4, 1, b);
    write_cifar_file(dir / "test_batch.bin", 3, 1, 9);
    DatasetConfig c;
    c.name = "cifar10";
    c.root = root;
    c.val_fraction = 0.0;
    const DatasetBundle d = load_dataset(c);
    EXPECT_EQ(d.train.size(), 20u);
    EXPECT_EQ(d.test.size(), 3u);
    EXPECT_EQ(d.test.images.shape(), (Shape4{3, 3, 32, 32}));
    EXPECT_EQ(d.test.labels, (std::vector<int>{9, 9, 9}));
    EXPECT_FLOAT_EQ(d.test.images.sample(1)[0], 1.0f / 255.0f);

    { // truncated
        std::ofstream out(dir / "test_batch.bin", std::ios::binary | std::ios::app);
        out.put('x');
    }
    EXPECT_THROW(load_dataset(c), FormatError);
    write_cifar_file(dir / "test_batch.bin", 1, 1, 10);
    EXPECT_THROW(load_dataset(c), FormatError);
    fs::remove(dir / "test_batch.bin");
    EXPECT_THROW(load_dataset(c), NotFound);

    const fs::path d100 = root / "cifar-100-binary";
    fs::create_directories(d100);
    write_cifar_file(d100 / "train.bin", 2, 2, 42);
    write_cifar_file(d100 / "test.bin", 2, 2, 99);
    c.name = "cifar100";
    const DatasetBundle e = load_dataset(c);
    EXPECT_EQ(e.train.class_count, 100u);
    EXPECT_EQ(e.test.labels, (std::vector<int>{99, 99}));
    fs::remove_all(root);
}

TEST(Noise, ZeroSigmaIsBitIdentical) {
    const DatasetBundle d = load_dataset(small_synthetic());
    EXPECT_EQ(add_gaussian_noise(d.test, 0.0, 3).images, d.test.images);
    EXPECT_THROW(add_gaussian_noise(d.test, -0.1, 3), InvalidArgument);
}

TEST(Noise, LeavesTheInputSplitUntouched) {
    const DatasetBundle d = load_dataset(small_synthetic());
    const DatasetSplit copy = d.test;
    const DatasetSplit noisy = add_gaussian_noise(d.test, 0.2, 5);
    EXPECT_EQ(d.test.images, copy.images);
    EXPECT_EQ(d.test.labels, copy.labels);
    EXPECT_NE(noisy.images, d.test.images);
    EXPECT_EQ(noisy.labels, d.test.labels);
}

TEST(Noise, SampleMomentsMatchSigma) {
    DatasetSplit flat{"flat", Tensor(Shape4{1000, 1, 1000, 1}, 0.25f), std::vector<int>(1000, 0), 2};
    const double sigma = 0.1;
    const DatasetSplit noisy = add_gaussian_noise(flat, sigma, 77);
    double sum = 0, sq = 0;
    const double n = static_cast<double>(flat.images.size());
    ASSERT_EQ(flat.images.size(), 1000000u);
    for (std::size_t i = 0; i < flat.images.size(); ++i) {
        const double d = double(noisy.images.data()[i]) - flat.images.data()[i];
        sum += d;
        sq += d * d;
    }
    const double mean = sum / n;
    const double sd = std::sqrt(sq / n - mean * mean);
    EXPECT_LT(std::abs(mean), 3 * sigma / std::sqrt(n));
    EXPECT_LT(std::abs(sd - sigma), 0.01 * sigma);
    EXPECT_EQ(add_gaussian_noise(flat, sigma, 77).images, noisy.images);
    EXPECT_NE(add_gaussian_noise(flat, sigma, 78).images, noisy.images);
}

TEST(Batches, CoverEverySampleOnce) {
    std::mt19937_64 rng(1);
    for (std::size_t n : {1u, 63u, 64u, 65u, 300u}) {
        const auto b = epoch_batches(n, 64, rng);
        std::vector<std::size_t> all;
        for (const auto& x : b) {
            EXPECT_LE(x.size(), 64u);
            all.insert(all.end(), x.begin(), x.end());
        }
        std::sort(all.begin(), all.end());
        std::vector<std::size_t> want(n);
        std::iota(want.begin(), want.end(), 0u);
        EXPECT_EQ(all, want);
        EXPECT_EQ(ordered_batches(n, 64).size(), b.size());
    }
    EXPECT_TRUE(ordered_batches(0, 8).empty());
}

TEST(Gather, CopiesSamplesAndRejectsBadIndices) {
    const DatasetBundle d = load_dataset(small_synthetic());
    const std::vector<std::size_t> idx{5, 0};
    const Tensor g = d.test.gather(idx);
    EXPECT_EQ(g.batch(), 2u);
    EXPECT_TRUE(std::equal(g.sample(0).begin(), g.sample(0).end(), d.test.images.sample(5).begin()));
    EXPECT_EQ(d.test.gather_labels(idx)[0], d.test.labels[5]);
    const std::vector<std::size_t> bad{1000};
    EXPECT_THROW(d.test.gather(bad), InvalidArgument);
}

TEST(Augmentation, FlipAndCropKeepShapeAndAreSeeded) {
    const DatasetBundle d = load_dataset(small_synthetic());
    Tensor a = d.test.images, b = d.test.images;
    std::mt19937_64 r1(3), r2(3);
    augment_in_place(a, {true, 2}, r1);
    augment_in_place(b, {true, 2}, r2);
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.shape(), d.test.images.shape());
    EXPECT_NE(a, d.test.images);

    Tensor c = d.test.images;
    std::mt19937_64 r3(3);
    augment_in_place(c, {}, r3);
    EXPECT_EQ(c, d.test.images);
}
