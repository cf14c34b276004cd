#pragma once

// Measurement suite: accuracy, representation similarity (CKA), per-sample
// knowledge similarity, class-correlation differences, noise robustness and
// frozen-backbone transfer.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mgkd/dataset.hpp"
#include "mgkd/distill_math.hpp"
#include "mgkd/model.hpp"
#include "mgkd/optim.hpp"

namespace mgkd {

/// Index of the first maximum.
template <typename T>
std::size_t argmax(std::span<const T> row) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < row.size(); ++i)
        if (row[i] > row[best]) best = i;
    return best;
}

/// Backbone features for every sample, batched.
Tensor extract_features(const Backbone& backbone, const Tensor& images, std::size_t batch = 256);

/// Native-head logits for every sample, batched.
MatrixF predict_logits(const Network& net, const Tensor& images, std::size_t batch = 256);

/// Fraction of samples with argmax(native logits) == label.
double top1_accuracy(const Network& net, const DatasetSplit& split);

/// Same, from precomputed logits.
double top1_accuracy(const MatrixF& logits, const std::vector<int>& labels);

enum class CkaKernel { Linear, Rbf };

/// HSIC(K,L) / sqrt(HSIC(K,K) HSIC(L,L)) with centered Gram matrices and
/// the biased estimator tr(KHLH)/(n-1)^2. RBF bandwidth is the median
/// pairwise Euclidean distance. Throws DegenerateInput when N < 2 or a
/// kernel has zero centered energy.
double cka_similarity(const Matrix& x, const Matrix& y, CkaKernel kernel);

/// Gram matrix of the chosen kernel (uncentered).
Matrix gram_matrix(const Matrix& x, CkaKernel kernel);

struct SimilarityReport {
    double ssim = 0.0;
    double cosine = 0.0;
    double pearson = 0.0;
    double l2 = 0.0;
    std::size_t skipped_ssim = 0;   ///< rows with zero dynamic range and zero variance
    std::size_t skipped_cosine = 0; ///< rows with a zero-norm vector
    std::size_t skipped_pearson = 0; ///< rows with a zero-variance vector
};

/// Row-wise metrics averaged over samples, teacher rows as reference.
/// SSIM is the single-window form over each vectorized row with
/// C1 = (0.01 L)^2, C2 = (0.03 L)^2 and L = max - min of the teacher row.
SimilarityReport knowledge_similarity(const Matrix& t_out, const Matrix& s_out);

struct CorrelationDifference {
    Matrix difference;           ///< C x C, teacher minus student
    bool degenerate = false;     ///< some class column was constant; its entries are 0
};

/// Pearson correlation between class-probability columns (softmax at
/// temperature 1) for each model; returns teacher matrix minus student matrix.
CorrelationDifference correlation_matrix_difference(const LogitsBatch& t_logits, const LogitsBatch& s_logits);

/// Pearson correlation matrix between columns of a probability matrix.
Matrix column_correlation(const Matrix& probs, bool* degenerate = nullptr);

struct NoiseCurve {
    std::vector<double> sigmas;
    std::vector<double> accuracy;       ///< fractions in [0, 1]
    std::vector<double> accuracy_delta; ///< percentage points relative to sigma = 0
    double variance = 0.0;              ///< population variance of accuracy_delta
};

/// {0, 0.02, ..., 0.30}.
std::vector<double> default_noise_grid();

/// Per sigma, accuracy on split + N(0, sigma^2) noise drawn from a seed
/// derived from (seed, index). Sigmas must start at 0 and be non-negative.
NoiseCurve noise_robustness_sweep(const Network& net, const DatasetSplit& split, std::span<const double> sigmas,
                                  std::uint64_t seed);

struct TransferResult {
    double accuracy = 0.0;
    std::uint64_t backbone_checksum_before = 0;
    std::uint64_t backbone_checksum_after = 0;
    Network model;
};

/// Frozen-backbone fine-tuning: fits `classifier` (fresh, sized to the
/// target classes) on target_train features and reports target_test top-1.
TransferResult transfer_finetune(const Network& student, Linear classifier, const DatasetSplit& target_train,
                                 const DatasetSplit& target_test, const TrainSchedule& schedule, std::uint64_t seed);

/// Convenience overload that creates the fresh classifier from `seed`.
TransferResult transfer_finetune(const Network& student, const DatasetSplit& target_train,
                                 const DatasetSplit& target_test, const TrainSchedule& schedule, std::uint64_t seed);

} // namespace mgkd
