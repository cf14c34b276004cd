#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "mgkd/matrix.hpp"

namespace mgkd {

/// NCHW float activations. Row vectors are stored as N x C x 1 x 1.
struct Shape4 {
    std::size_t n = 0, c = 0, h = 1, w = 1;
    std::size_t per_sample() const noexcept { return c * h * w; }
    std::size_t total() const noexcept { return n * per_sample(); }
    friend bool operator==(const Shape4&, const Shape4&) = default;
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape4 shape, float fill = 0.0f) : shape_(shape), data_(shape.total(), fill) {}
    Tensor(Shape4 shape, std::vector<float> data);

    const Shape4& shape() const noexcept { return shape_; }
    std::size_t batch() const noexcept { return shape_.n; }
    std::size_t features() const noexcept { return shape_.per_sample(); }
    std::size_t size() const noexcept { return data_.size(); }

    float* data() noexcept { return data_.data(); }
    const float* data() const noexcept { return data_.data(); }
    std::vector<float>& storage() noexcept { return data_; }
    const std::vector<float>& storage() const noexcept { return data_; }

    std::span<float> sample(std::size_t i) { return {data_.data() + i * features(), features()}; }
    std::span<const float> sample(std::size_t i) const { return {data_.data() + i * features(), features()}; }

    /// Reinterpret as N x features without copying semantics changes.
    Tensor flattened() const&;
    Tensor flattened() &&;

    MatrixF as_matrix() const;
    static Tensor from_matrix(const MatrixF& m);

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape4 shape_;
    std::vector<float> data_;
};

/// FNV-1a over the raw bytes of a float buffer.
std::uint64_t checksum(std::span<const float> values, std::uint64_t seed = 14695981039346656037ull);

} // namespace mgkd
