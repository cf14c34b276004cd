#include "mgkd/layers.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "mgkd/kernels.hpp"

namespace mgkd {
namespace {

std::size_t product(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
}

void fill_uniform(std::vector<float>& v, std::mt19937_64& rng, float bound) {
    std::uniform_real_distribution<float> dist(-bound, bound);
    for (float& x : v) x = dist(rng);
}

// Unfold one C x H x W image into (C*9) x (H*W) patch columns.
void im2col(const float* img, std::size_t c, std::size_t h, std::size_t w, float* cols) {
    const std::size_t hw = h * w;
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                float* dst = cols + ((ch * 3 + ky) * 3 + kx) * hw;
                for (std::size_t y = 0; y < h; ++y) {
                    const long sy = static_cast<long>(y) + ky - 1;
                    for (std::size_t x = 0; x < w; ++x) {
                        const long sx = static_cast<long>(x) + kx - 1;
                        const bool inside = sy >= 0 && sy < static_cast<long>(h) && sx >= 0 &&
                                            sx < static_cast<long>(w);
                        dst[y * w + x] = inside ? img[(ch * h + sy) * w + sx] : 0.0f;
                    }
                }
            }
        }
    }
}

void col2im(const float* cols, std::size_t c, std::size_t h, std::size_t w, float* img) {
    const std::size_t hw = h * w;
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (int ky = 0; ky < 3; ++ky) {
            for (int kx = 0; kx < 3; ++kx) {
                const float* src = cols + ((ch * 3 + ky) * 3 + kx) * hw;
                for (std::size_t y = 0; y < h; ++y) {
                    const long sy = static_cast<long>(y) + ky - 1;
                    if (sy < 0 || sy >= static_cast<long>(h)) continue;
                    for (std::size_t x = 0; x < w; ++x) {
                        const long sx = static_cast<long>(x) + kx - 1;
                        if (sx < 0 || sx >= static_cast<long>(w)) continue;
                        img[(ch * h + sy) * w + sx] += src[y * w + x];
                    }
                }
            }
        }
    }
}

} // namespace

Parameter::Parameter(std::string n, std::vector<std::size_t> s)
    : name(std::move(n)), shape(std::move(s)), value(product(shape), 0.0f), grad(value.size(), 0.0f) {}

void Parameter::zero_grad() { std::fill(grad.begin(), grad.end(), 0.0f); }

// ---------------------------------------------------------------------------
// Linear

Linear::Linear(std::size_t in_features, std::size_t out_features)
    : weight("weight", {in_features, out_features}), bias("bias", {out_features}), in_(in_features),
      out_(out_features) {
    if (in_features == 0 || out_features == 0) throw InvalidArgument("linear layer with zero dimension");
}

void Linear::init_uniform(std::mt19937_64& rng, float weight_bound, float bias_bound) {
    fill_uniform(weight.value, rng, weight_bound);
    fill_uniform(bias.value, rng, bias_bound);
}

void Linear::init_fan_in(std::mt19937_64& rng) {
    const float bound = 1.0f / std::sqrt(static_cast<float>(in_));
    init_uniform(rng, bound, bound);
}

Tensor Linear::forward(const Tensor& x) const {
    if (x.features() != in_)
        throw InvalidArgument("linear layer expects " + std::to_string(in_) + " features, got " +
                              std::to_string(x.features()));
    const std::size_t n = x.batch();
    Tensor y(Shape4{n, out_, 1, 1});
    for (std::size_t i = 0; i < n; ++i) std::copy(bias.value.begin(), bias.value.end(), y.data() + i * out_);
    kernels::active().gemm_nn(n, out_, in_, x.data(), in_, weight.value.data(), out_, y.data(), out_, true);
    return y;
}

Tensor Linear::forward_train(const Tensor& x) {
    Tensor y = forward(x);
    cached_input_ = x;
    return y;
}

Tensor Linear::backward(const Tensor& grad_out) {
    const std::size_t n = cached_input_.batch();
    if (grad_out.batch() != n || grad_out.features() != out_)
        throw InvalidArgument("linear backward: gradient shape does not match cached forward");
    const auto& k = kernels::active();
    k.gemm_tn(in_, out_, n, cached_input_.data(), in_, grad_out.data(), out_, weight.grad.data(), out_, true);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < out_; ++j) bias.grad[j] += grad_out.data()[i * out_ + j];
    Tensor grad_in(cached_input_.shape());
    k.gemm_nt(n, in_, out_, grad_out.data(), out_, weight.value.data(), out_, grad_in.data(), in_, false);
    return grad_in;
}

// ---------------------------------------------------------------------------
// Conv2d

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels)
    : weight("weight", {out_channels, in_channels, 3, 3}), bias("bias", {out_channels}), in_(in_channels),
      out_(out_channels) {
    if (in_channels == 0 || out_channels == 0) throw InvalidArgument("conv layer with zero channels");
}

void Conv2d::init_uniform(std::mt19937_64& rng, float weight_bound, float bias_bound) {
    fill_uniform(weight.value, rng, weight_bound);
    fill_uniform(bias.value, rng, bias_bound);
}

Tensor Conv2d::run(const Tensor& x, std::vector<float>* cols_cache) const {
    const Shape4 s = x.shape();
    if (s.c != in_)
        throw InvalidArgument("conv layer expects " + std::to_string(in_) + " channels, got " + std::to_string(s.c));
    const std::size_t hw = s.h * s.w;
    const std::size_t patch = in_ * 9;
    Tensor y(Shape4{s.n, out_, s.h, s.w});
    std::vector<float> local;
    std::vector<float>& cols = cols_cache ? *cols_cache : local;
    cols.assign((cols_cache ? s.n : 1) * patch * hw, 0.0f);
    const auto& k = kernels::active();
    for (std::size_t i = 0; i < s.n; ++i) {
        float* c = cols.data() + (cols_cache ? i * patch * hw : 0);
        im2col(x.data() + i * s.per_sample(), in_, s.h, s.w, c);
        float* out = y.data() + i * out_ * hw;
        for (std::size_t o = 0; o < out_; ++o) std::fill(out + o * hw, out + (o + 1) * hw, bias.value[o]);
        k.gemm_nn(out_, hw, patch, weight.value.data(), patch, c, hw, out, hw, true);
    }
    return y;
}

Tensor Conv2d::forward(const Tensor& x) const { return run(x, nullptr); }

Tensor Conv2d::forward_train(const Tensor& x) {
    cached_shape_ = x.shape();
    return run(x, &cached_cols_);
}

Tensor Conv2d::backward(const Tensor& grad_out) {
    const Shape4 s = cached_shape_;
    const std::size_t hw = s.h * s.w;
    const std::size_t patch = in_ * 9;
    if (grad_out.shape() != Shape4{s.n, out_, s.h, s.w})
        throw InvalidArgument("conv backward: gradient shape does not match cached forward");
    const auto& k = kernels::active();
    Tensor grad_in(s);
    std::vector<float> dcols(patch * hw);
    for (std::size_t i = 0; i < s.n; ++i) {
        const float* dout = grad_out.data() + i * out_ * hw;
        const float* cols = cached_cols_.data() + i * patch * hw;
        k.gemm_nt(out_, patch, hw, dout, hw, cols, hw, weight.grad.data(), patch, true);
        for (std::size_t o = 0; o < out_; ++o) {
            float acc = 0.0f;
            for (std::size_t p = 0; p < hw; ++p) acc += dout[o * hw + p];
            bias.grad[o] += acc;
        }
        k.gemm_tn(patch, hw, out_, weight.value.data(), patch, dout, hw, dcols.data(), hw, false);
        col2im(dcols.data(), in_, s.h, s.w, grad_in.data() + i * s.per_sample());
    }
    return grad_in;
}

// ---------------------------------------------------------------------------
// ReLU

Tensor ReLU::forward(const Tensor& x) const {
    Tensor y(x.shape());
    kernels::active().relu(x.data(), y.data(), x.size());
    return y;
}

Tensor ReLU::forward_train(const Tensor& x) {
    cached_input_ = x;
    return forward(x);
}

Tensor ReLU::backward(const Tensor& grad_out) {
    if (grad_out.shape() != cached_input_.shape())
        throw InvalidArgument("relu backward: gradient shape does not match cached forward");
    Tensor grad_in(grad_out.shape());
    kernels::active().relu_backward(cached_input_.data(), grad_out.data(), grad_in.data(), grad_out.size());
    return grad_in;
}

// ---------------------------------------------------------------------------
// MaxPool2d

Tensor MaxPool2d::run(const Tensor& x, std::vector<std::size_t>* argmax) const {
    const Shape4 s = x.shape();
    if (s.h % 2 != 0 || s.w % 2 != 0) throw InvalidArgument("max pool needs even spatial dimensions");
    const Shape4 o{s.n, s.c, s.h / 2, s.w / 2};
    Tensor y(o);
    if (argmax) argmax->assign(o.total(), 0);
    std::size_t out_idx = 0;
    for (std::size_t plane = 0; plane < s.n * s.c; ++plane) {
        const std::size_t base = plane * s.h * s.w;
        for (std::size_t oy = 0; oy < o.h; ++oy) {
            for (std::size_t ox = 0; ox < o.w; ++ox, ++out_idx) {
                float best = -std::numeric_limits<float>::infinity();
                std::size_t best_idx = 0;
                for (std::size_t dy = 0; dy < 2; ++dy) {
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                        const std::size_t idx = base + (2 * oy + dy) * s.w + (2 * ox + dx);
                        if (x.data()[idx] > best) {
                            best = x.data()[idx];
                            best_idx = idx;
                        }
                    }
                }
                y.data()[out_idx] = best;
                if (argmax) (*argmax)[out_idx] = best_idx;
            }
        }
    }
    return y;
}

Tensor MaxPool2d::forward(const Tensor& x) const { return run(x, nullptr); }

Tensor MaxPool2d::forward_train(const Tensor& x) {
    cached_shape_ = x.shape();
    return run(x, &cached_argmax_);
}

Tensor MaxPool2d::backward(const Tensor& grad_out) {
    if (grad_out.size() != cached_argmax_.size())
        throw InvalidArgument("max pool backward: gradient shape does not match cached forward");
    Tensor grad_in(cached_shape_);
    for (std::size_t i = 0; i < cached_argmax_.size(); ++i) grad_in.data()[cached_argmax_[i]] += grad_out.data()[i];
    return grad_in;
}

// ---------------------------------------------------------------------------

std::vector<Parameter*> layer_parameters(Layer& layer) {
    if (auto* l = std::get_if<Linear>(&layer)) return {&l->weight, &l->bias};
    if (auto* c = std::get_if<Conv2d>(&layer)) return {&c->weight, &c->bias};
    return {};
}

std::vector<const Parameter*> layer_parameters(const Layer& layer) {
    if (const auto* l = std::get_if<Linear>(&layer)) return {&l->weight, &l->bias};
    if (const auto* c = std::get_if<Conv2d>(&layer)) return {&c->weight, &c->bias};
    return {};
}

} // namespace mgkd
