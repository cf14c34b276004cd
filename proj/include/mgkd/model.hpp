#pragma once

// Backbones, classifiers and the multi-granularity heads.
//
// A Network is a feature extractor followed by a single affine classifier.
// Attaching branches to a trained Network yields a TeacherBundle with two
// extra parallel heads on the flatten representation F:
//
//   F -> classifier           -> f_nk  (N x C)
//   F -> ake -> ak_adapter    -> f_ak  (N x dim_ak),  f_akb (N x C)
//   F -> dke -> dk_adapter    -> f_dk  (N x dim_dk),  f_dkb (N x C)
//
// Students carry the same encoders but no adapters.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "mgkd/layers.hpp"
#include "mgkd/matrix.hpp"
#include "mgkd/tensor.hpp"

namespace mgkd {

enum class BackboneKind { Cnn, Mlp };

/// Architecture of a desk-scale feature extractor.
///  - Cnn: one [conv3x3 -> relu -> maxpool2] block per entry of `widths`.
///  - Mlp: one [linear -> relu] block per entry of `widths`.
struct BackboneConfig {
    BackboneKind kind = BackboneKind::Cnn;
    std::size_t channels = 3;
    std::size_t height = 16;
    std::size_t width = 16;
    std::vector<std::size_t> widths;

    friend bool operator==(const BackboneConfig&, const BackboneConfig&) = default;
};

std::string to_string(BackboneKind kind);
BackboneKind backbone_kind_from_string(const std::string& s);

class Backbone {
public:
    Backbone() = default;
    explicit Backbone(BackboneConfig cfg);

    const BackboneConfig& config() const noexcept { return cfg_; }
    std::size_t feature_dim() const noexcept { return feature_dim_; }

    void init(std::mt19937_64& rng);

    /// Flatten representation, N x feature_dim.
    Tensor forward(const Tensor& x) const;
    Tensor forward_train(const Tensor& x);
    /// Accumulates parameter gradients; the input gradient is discarded.
    void backward(const Tensor& grad_features);

    /// (local name, parameter) pairs, e.g. ("0.weight", ...).
    std::vector<std::pair<std::string, Parameter*>> named_parameters();
    std::vector<std::pair<std::string, const Parameter*>> named_parameters() const;

    std::vector<Layer>& layers() noexcept { return layers_; }

private:
    BackboneConfig cfg_;
    std::vector<Layer> layers_;
    std::size_t feature_dim_ = 0;
};

/// Backbone + classifier; what a pretrained teacher or a deployed student is.
struct Network {
    Backbone backbone;
    Linear classifier;

    std::size_t num_classes() const noexcept { return classifier.out_features(); }
    Tensor logits(const Tensor& x) const;
    std::vector<std::pair<std::string, Parameter*>> named_parameters();
    std::vector<std::pair<std::string, const Parameter*>> named_parameters() const;
};

Network make_network(const BackboneConfig& cfg, std::size_t num_classes, std::uint64_t seed);

/// Head dimensions; valid iff 2 <= dim_ak < num_classes < dim_dk.
struct GranularitySpec {
    std::size_t dim_ak = 0;
    std::size_t num_classes = 0;
    std::size_t dim_dk = 0;
    friend bool operator==(const GranularitySpec&, const GranularitySpec&) = default;
};

/// Empty on success, otherwise a description naming the failed inequality.
std::optional<std::string> validate_spec(const GranularitySpec& spec);
void require_valid(const GranularitySpec& spec);

struct GranularityOutputs {
    MatrixF features; ///< flatten representation F
    MatrixF f_ak;
    MatrixF f_nk;
    MatrixF f_dk;
    std::optional<MatrixF> f_akb;
    std::optional<MatrixF> f_dkb;
};

/// Stable part names used in checkpoint keys and freeze sets.
namespace part {
inline constexpr const char* kBackbone = "backbone";
inline constexpr const char* kClassifier = "classifier";
inline constexpr const char* kAke = "ake";
inline constexpr const char* kDke = "dke";
inline constexpr const char* kAkAdapter = "ak_adapter";
inline constexpr const char* kDkAdapter = "dk_adapter";
} // namespace part

using NamedParams = std::vector<std::pair<std::string, Parameter*>>;
using ConstNamedParams = std::vector<std::pair<std::string, const Parameter*>>;

/// FNV-1a over the values of the given parameters, in order.
std::uint64_t parameter_checksum(const ConstNamedParams& params);
std::size_t parameter_count(const ConstNamedParams& params);

struct TeacherBundle {
    Backbone backbone;
    Linear classifier;
    Linear ake;
    Linear dke;
    Linear ak_adapter;
    Linear dk_adapter;
    GranularitySpec spec;
    std::set<std::string> frozen_parts;

    /// Fully qualified names ("ake.weight", "backbone.0.bias", ...).
    NamedParams named_parameters();
    ConstNamedParams named_parameters() const;
    /// Parameters of parts not in frozen_parts.
    NamedParams trainable_parameters();
    std::uint64_t checksum_of(const std::set<std::string>& parts) const;
    std::uint64_t frozen_checksum() const { return checksum_of(frozen_parts); }
};

/// Wraps a trained network with freshly initialized encoders and adapters.
/// Backbone and classifier are copied bit-exactly and frozen.
TeacherBundle attach_branches(const Network& teacher, const GranularitySpec& spec, std::uint64_t seed);

GranularityOutputs forward_teacher(const TeacherBundle& bundle, const Tensor& batch);

struct StudentBundle {
    Backbone backbone;
    Linear classifier;
    Linear ake;
    Linear dke;
    GranularitySpec spec;

    NamedParams named_parameters();
    ConstNamedParams named_parameters() const;

    /// Caching forward for training.
    GranularityOutputs forward_train(const Tensor& batch);
    /// Backpropagates head gradients (N x head dim, float) through heads and backbone.
    void backward(const MatrixF& grad_ak, const MatrixF& grad_nk, const MatrixF& grad_dk);
    void zero_grad();
};

StudentBundle make_student(const BackboneConfig& cfg, const GranularitySpec& spec, std::uint64_t seed);

GranularityOutputs forward_student(const StudentBundle& bundle, const Tensor& batch);

/// Deployable backbone + classifier; native-head outputs are bit-identical.
Network strip_encoders(const StudentBundle& student);

} // namespace mgkd
