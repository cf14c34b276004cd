#pragma once

// Image-classification splits in normalized NCHW float layout.
//
// Supported sources:
//   synthetic  generated Gaussian-blob images (bundled, no files needed)
//   cifar10    <root>/cifar-10-batches-bin/{data_batch_1..5,test_batch}.bin
//   cifar100   <root>/cifar-100-binary/{train,test}.bin
//
// Binary CIFAR records are <label byte(s)><3072 bytes R,G,B planes>.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "mgkd/distill_math.hpp"
#include "mgkd/tensor.hpp"

namespace mgkd {

struct DatasetSplit {
    std::string name;
    Tensor images; ///< N x C x H x W, normalized units
    std::vector<int> labels;
    std::size_t class_count = 0;

    std::size_t size() const noexcept { return labels.size(); }
    void validate() const;

    Tensor gather(std::span<const std::size_t> indices) const;
    LabelBatch gather_labels(std::span<const std::size_t> indices) const;
    LabelBatch all_labels() const { return LabelBatch(labels, class_count); }
};

/// Per-channel (x - mean) / std.
struct Normalization {
    std::vector<float> mean;
    std::vector<float> std;
};

/// Blob-image generator. Classes come in pairs that share a coarse blob
/// (a superclass) and differ by a smaller fine blob, plus a random clutter
/// blob and pixel noise per sample.
struct SyntheticSpec {
    std::size_t classes = 10;
    std::size_t channels = 3;
    std::size_t image_size = 16;
    std::size_t train_per_class = 200;
    std::size_t test_per_class = 100;
    double pixel_noise = 0.6;
    double jitter = 1.5;
    std::uint64_t seed = 7;
};

struct DatasetConfig {
    std::string name = "synthetic";
    std::filesystem::path root;
    Normalization normalization;
    double val_fraction = 0.2;
    std::uint64_t split_seed = 0;
    SyntheticSpec synthetic;
};

struct DatasetBundle {
    DatasetSplit train;
    DatasetSplit val;
    DatasetSplit test;
    std::vector<std::size_t> train_indices; ///< positions in the full training pool
    std::vector<std::size_t> val_indices;
};

/// Class count implied by a config without touching the filesystem.
std::size_t num_classes_for(const DatasetConfig& cfg);

/// Image geometry (channels, height, width) implied by a config.
Shape4 image_shape_for(const DatasetConfig& cfg);

DatasetBundle load_dataset(const DatasetConfig& cfg);

/// New split with i.i.d. N(0, sigma^2) added to every pixel. sigma == 0
/// returns a bit-identical copy.
DatasetSplit add_gaussian_noise(const DatasetSplit& split, double sigma, std::uint64_t seed);

DatasetSplit subset(const DatasetSplit& split, std::span<const std::size_t> indices, std::string name);

/// Copies the given samples (first dimension) into a new tensor.
Tensor gather_samples(const Tensor& t, std::span<const std::size_t> indices);

/// Shuffled mini-batches covering [0, n).
std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, std::mt19937_64& rng);

/// Sequential mini-batches covering [0, n).
std::vector<std::vector<std::size_t>> ordered_batches(std::size_t n, std::size_t batch_size);

struct Augmentation {
    bool horizontal_flip = false;
    std::size_t crop_padding = 0; ///< random crop after zero padding by this many pixels
    bool enabled() const noexcept { return horizontal_flip || crop_padding > 0; }
};

void augment_in_place(Tensor& batch, const Augmentation& aug, std::mt19937_64& rng);

} // namespace mgkd
