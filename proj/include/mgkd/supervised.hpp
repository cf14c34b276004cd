#pragma once

// Plain cross-entropy training, used to produce desk-scale teachers and to
// fit classifier heads on frozen features.

#include <cstdint>
#include <vector>

#include "mgkd/dataset.hpp"
#include "mgkd/metrics.hpp"
#include "mgkd/model.hpp"
#include "mgkd/optim.hpp"

namespace mgkd {

/// Trains backbone and classifier jointly. Records train loss/accuracy and,
/// when `val` is given, validation accuracy per epoch.
Network train_network(Network net, const DatasetSplit& train, const DatasetSplit* val, const TrainSchedule& schedule,
                      std::uint64_t seed, const Augmentation& aug = {}, std::vector<MetricsRecord>* records = nullptr);

/// Fits `head` on precomputed features (N x F) with cross entropy. The
/// features are treated as constants.
void fit_linear_head(Linear& head, const MatrixF& features, const std::vector<int>& labels, std::size_t num_classes,
                     const TrainSchedule& schedule, std::uint64_t seed);

} // namespace mgkd
