#include "mgkd/tensor.hpp"

#include <cstring>
#include <string>

namespace mgkd {

Tensor::Tensor(Shape4 shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.total())
        throw InvalidArgument("tensor data has " + std::to_string(data_.size()) + " values, shape needs " +
                              std::to_string(shape_.total()));
}

Tensor Tensor::flattened() const& { return Tensor(*this).flattened(); }

Tensor Tensor::flattened() && {
    shape_ = Shape4{shape_.n, shape_.per_sample(), 1, 1};
    return std::move(*this);
}

MatrixF Tensor::as_matrix() const {
    MatrixF m(shape_.n, features());
    std::memcpy(m.data(), data_.data(), data_.size() * sizeof(float));
    return m;
}

Tensor Tensor::from_matrix(const MatrixF& m) {
    return Tensor(Shape4{m.rows(), m.cols(), 1, 1}, m.storage());
}

std::uint64_t checksum(std::span<const float> values, std::uint64_t seed) {
    std::uint64_t h = seed;
    const auto* bytes = reinterpret_cast<const unsigned char*>(values.data());
    for (std::size_t i = 0; i < values.size_bytes(); ++i) {
        h ^= bytes[i];
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace mgkd
