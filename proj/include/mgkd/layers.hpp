#pragma once

// Trainable building blocks. Each layer offers a const `forward` for
// inference, a `forward_train` that caches what `backward` needs, and a
// `backward` that accumulates parameter gradients and returns the gradient
// with respect to the layer input.

#include <cstddef>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "mgkd/tensor.hpp"

namespace mgkd {

struct Parameter {
    std::string name;
    std::vector<std::size_t> shape;
    std::vector<float> value;
    std::vector<float> grad;

    Parameter() = default;
    Parameter(std::string n, std::vector<std::size_t> s);

    std::size_t size() const noexcept { return value.size(); }
    void zero_grad();
};

/// y = x W + b with W stored (in_features x out_features).
class Linear {
public:
    Linear() = default;
    Linear(std::size_t in_features, std::size_t out_features);

    std::size_t in_features() const noexcept { return in_; }
    std::size_t out_features() const noexcept { return out_; }

    void init_uniform(std::mt19937_64& rng, float weight_bound, float bias_bound);
    /// Fan-in scaled: U(-1/sqrt(in), 1/sqrt(in)) for both weight and bias.
    void init_fan_in(std::mt19937_64& rng);

    Tensor forward(const Tensor& x) const;
    Tensor forward_train(const Tensor& x);
    Tensor backward(const Tensor& grad_out);

    Parameter weight;
    Parameter bias;

private:
    std::size_t in_ = 0;
    std::size_t out_ = 0;
    Tensor cached_input_;
};

/// 3x3 convolution, stride 1, zero padding 1.
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(std::size_t in_channels, std::size_t out_channels);

    std::size_t in_channels() const noexcept { return in_; }
    std::size_t out_channels() const noexcept { return out_; }

    void init_uniform(std::mt19937_64& rng, float weight_bound, float bias_bound);

    Tensor forward(const Tensor& x) const;
    Tensor forward_train(const Tensor& x);
    Tensor backward(const Tensor& grad_out);

    Parameter weight; ///< out x in x 3 x 3
    Parameter bias;

private:
    Tensor run(const Tensor& x, std::vector<float>* cols_cache) const;

    std::size_t in_ = 0;
    std::size_t out_ = 0;
    Shape4 cached_shape_;
    std::vector<float> cached_cols_;
};

class ReLU {
public:
    Tensor forward(const Tensor& x) const;
    Tensor forward_train(const Tensor& x);
    Tensor backward(const Tensor& grad_out);

private:
    Tensor cached_input_;
};

/// 2x2 max pooling with stride 2; H and W must be even.
class MaxPool2d {
public:
    Tensor forward(const Tensor& x) const;
    Tensor forward_train(const Tensor& x);
    Tensor backward(const Tensor& grad_out);

private:
    Tensor run(const Tensor& x, std::vector<std::size_t>* argmax) const;

    Shape4 cached_shape_;
    std::vector<std::size_t> cached_argmax_;
};

using Layer = std::variant<Conv2d, ReLU, MaxPool2d, Linear>;

/// Parameters of a layer, or an empty list for parameter-free layers.
std::vector<Parameter*> layer_parameters(Layer& layer);
std::vector<const Parameter*> layer_parameters(const Layer& layer);

} // namespace mgkd
