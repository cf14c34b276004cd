#pragma once

// Small deterministic problems shared by the unit tests and the acceptance
// runner.

#include <random>

#include "mgkd/dataset.hpp"
#include "mgkd/eval.hpp"
#include "mgkd/model.hpp"
#include "mgkd/supervised.hpp"

namespace mgkd::testing {

/// Gaussian clusters around well separated class means, laid out as
/// N x dim x 1 x 1 so that an MLP backbone consumes them directly.
inline DatasetSplit separable_split(std::size_t classes, std::size_t per_class, std::size_t dim, std::uint64_t seed,
                                    double spread = 0.35) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> noise(0.0f, static_cast<float>(spread));
    DatasetSplit s{"separable", Tensor(Shape4{classes * per_class, dim, 1, 1}), {}, classes};
    for (std::size_t c = 0; c < classes; ++c)
        for (std::size_t k = 0; k < per_class; ++k) {
            const std::size_t i = c * per_class + k;
            auto x = s.images.sample(i);
            for (std::size_t d = 0; d < dim; ++d) x[d] = noise(rng) + (d % classes == c ? 2.0f : -0.5f);
            s.labels.push_back(static_cast<int>(c));
        }
    return s;
}

inline BackboneConfig tiny_perceptron(std::size_t dim) { return {BackboneKind::Mlp, dim, 1, 1, {16}}; }

inline TrainSchedule short_schedule(int epochs, double lr, std::size_t batch = 32) {
    TrainSchedule s;
    s.initial_lr = lr;
    s.epochs = epochs;
    s.batch_size = batch;
    return s;
}

/// A perceptron teacher trained to fit `train` (checked by the callers).
inline Network separable_teacher(const DatasetSplit& train, std::uint64_t seed) {
    Network net = make_network(tiny_perceptron(train.images.features()), train.class_count, seed);
    return train_network(std::move(net), train, nullptr, short_schedule(30, 0.05), seed);
}

} // namespace mgkd::testing
