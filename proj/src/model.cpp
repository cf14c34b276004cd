#include "mgkd/model.hpp"

#include <cmath>
#include <variant>

namespace mgkd {
namespace {

float kaiming_bound(std::size_t fan_in) { return std::sqrt(6.0f / static_cast<float>(fan_in)); }
float fan_in_bound(std::size_t fan_in) { return 1.0f / std::sqrt(static_cast<float>(fan_in)); }

void append(NamedParams& out, const std::string& prefix, Linear& l) {
    out.emplace_back(prefix + ".weight", &l.weight);
    out.emplace_back(prefix + ".bias", &l.bias);
}

void append(ConstNamedParams& out, const std::string& prefix, const Linear& l) {
    out.emplace_back(prefix + ".weight", &l.weight);
    out.emplace_back(prefix + ".bias", &l.bias);
}

template <typename Params>
void append_backbone(Params& out, auto& backbone) {
    for (auto& [name, p] : backbone.named_parameters()) out.emplace_back(std::string(part::kBackbone) + "." + name, p);
}

std::string part_of(const std::string& qualified) { return qualified.substr(0, qualified.find('.')); }

} // namespace

std::string to_string(BackboneKind kind) { return kind == BackboneKind::Cnn ? "cnn" : "mlp"; }

BackboneKind backbone_kind_from_string(const std::string& s) {
    if (s == "cnn") return BackboneKind::Cnn;
    if (s == "mlp") return BackboneKind::Mlp;
    throw InvalidArgument("unknown backbone architecture '" + s + "' (valid: cnn, mlp)");
}

// ---------------------------------------------------------------------------
// Backbone

Backbone::Backbone(BackboneConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.widths.empty()) throw InvalidArgument("backbone needs at least one block width");
    if (cfg_.channels == 0 || cfg_.height == 0 || cfg_.width == 0) throw InvalidArgument("backbone input shape has a zero dimension");
    if (cfg_.kind == BackboneKind::Cnn) {
        std::size_t c = cfg_.channels, h = cfg_.height, w = cfg_.width;
        for (std::size_t width : cfg_.widths) {
            if (h % 2 != 0 || w % 2 != 0)
                throw InvalidArgument("cnn backbone: spatial size " + std::to_string(h) + "x" + std::to_string(w) +
                                      " cannot be pooled by 2 for every block");
            layers_.emplace_back(Conv2d(c, width));
            layers_.emplace_back(ReLU{});
            layers_.emplace_back(MaxPool2d{});
            c = width;
            h /= 2;
            w /= 2;
        }
        feature_dim_ = c * h * w;
    } else {
        std::size_t in = cfg_.channels * cfg_.height * cfg_.width;
        for (std::size_t width : cfg_.widths) {
            layers_.emplace_back(Linear(in, width));
            layers_.emplace_back(ReLU{});
            in = width;
        }
        feature_dim_ = in;
    }
}

void Backbone::init(std::mt19937_64& rng) {
    for (auto& layer : layers_) {
        if (auto* conv = std::get_if<Conv2d>(&layer)) {
            const std::size_t fan_in = conv->in_channels() * 9;
            conv->init_uniform(rng, kaiming_bound(fan_in), fan_in_bound(fan_in));
        } else if (auto* lin = std::get_if<Linear>(&layer)) {
            lin->init_uniform(rng, kaiming_bound(lin->in_features()), fan_in_bound(lin->in_features()));
        }
    }
}

Tensor Backbone::forward(const Tensor& x) const {
    const Shape4 expect{x.batch(), cfg_.channels, cfg_.height, cfg_.width};
    if (x.shape() != expect && !(cfg_.kind == BackboneKind::Mlp && x.features() == expect.per_sample()))
        throw InvalidArgument("backbone input shape mismatch: expected N x " + std::to_string(cfg_.channels) + " x " +
                              std::to_string(cfg_.height) + " x " + std::to_string(cfg_.width));
    Tensor h = x;
    for (const auto& layer : layers_) h = std::visit([&](const auto& l) { return l.forward(h); }, layer);
    return std::move(h).flattened();
}

Tensor Backbone::forward_train(const Tensor& x) {
    const Shape4 expect{x.batch(), cfg_.channels, cfg_.height, cfg_.width};
    if (x.shape() != expect && !(cfg_.kind == BackboneKind::Mlp && x.features() == expect.per_sample()))
        throw InvalidArgument("backbone input shape mismatch");
    Tensor h = x;
    for (auto& layer : layers_) h = std::visit([&](auto& l) { return l.forward_train(h); }, layer);
    return std::move(h).flattened();
}

void Backbone::backward(const Tensor& grad_features) {
    // Restore the pre-flatten shape expected by the last layer.
    Tensor g = grad_features;
    if (cfg_.kind == BackboneKind::Cnn) {
        std::size_t h = cfg_.height >> cfg_.widths.size();
        std::size_t w = cfg_.width >> cfg_.widths.size();
        g = Tensor(Shape4{g.batch(), cfg_.widths.back(), h, w}, std::move(g.storage()));
    }
    for (std::size_t i = layers_.size(); i-- > 0;)
        g = std::visit([&](auto& l) { return l.backward(g); }, layers_[i]);
}

std::vector<std::pair<std::string, Parameter*>> Backbone::named_parameters() {
    std::vector<std::pair<std::string, Parameter*>> out;
    for (std::size_t i = 0; i < layers_.size(); ++i)
        for (Parameter* p : layer_parameters(layers_[i])) out.emplace_back(std::to_string(i) + "." + p->name, p);
    return out;
}

std::vector<std::pair<std::string, const Parameter*>> Backbone::named_parameters() const {
    std::vector<std::pair<std::string, const Parameter*>> out;
    for (std::size_t i = 0; i < layers_.size(); ++i)
        for (const Parameter* p : layer_parameters(layers_[i])) out.emplace_back(std::to_string(i) + "." + p->name, p);
    return out;
}

// ---------------------------------------------------------------------------
// Network

Tensor Network::logits(const Tensor& x) const { return classifier.forward(backbone.forward(x)); }

std::vector<std::pair<std::string, Parameter*>> Network::named_parameters() {
    NamedParams out;
    append_backbone(out, backbone);
    append(out, part::kClassifier, classifier);
    return out;
}

std::vector<std::pair<std::string, const Parameter*>> Network::named_parameters() const {
    ConstNamedParams out;
    append_backbone(out, backbone);
    append(out, part::kClassifier, classifier);
    return out;
}

Network make_network(const BackboneConfig& cfg, std::size_t num_classes, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    Network net{Backbone(cfg), Linear()};
    net.backbone.init(rng);
    net.classifier = Linear(net.backbone.feature_dim(), num_classes);
    net.classifier.init_fan_in(rng);
    return net;
}

// ---------------------------------------------------------------------------
// Granularity spec

std::optional<std::string> validate_spec(const GranularitySpec& spec) {
    const std::string ordering = "dim_ak < num_classes < dim_dk";
    if (spec.dim_ak < 2)
        return "dim_ak (" + std::to_string(spec.dim_ak) + ") must be at least 2 to form a distribution";
    if (!(spec.dim_ak < spec.num_classes))
        return "granularity ordering " + ordering + " violated: dim_ak (" + std::to_string(spec.dim_ak) +
               ") is not < num_classes (" + std::to_string(spec.num_classes) + ")";
    if (!(spec.num_classes < spec.dim_dk))
        return "granularity ordering " + ordering + " violated: num_classes (" + std::to_string(spec.num_classes) +
               ") is not < dim_dk (" + std::to_string(spec.dim_dk) + ")";
    return std::nullopt;
}

void require_valid(const GranularitySpec& spec) {
    if (auto violation = validate_spec(spec)) throw InvalidArgument(*violation);
}

std::uint64_t parameter_checksum(const ConstNamedParams& params) {
    std::uint64_t h = 14695981039346656037ull;
    for (const auto& [name, p] : params) h = checksum(p->value, h);
    return h;
}

std::size_t parameter_count(const ConstNamedParams& params) {
    std::size_t n = 0;
    for (const auto& [name, p] : params) n += p->size();
    return n;
}

// ---------------------------------------------------------------------------
// Teacher

NamedParams TeacherBundle::named_parameters() {
    NamedParams out;
    append_backbone(out, backbone);
    append(out, part::kClassifier, classifier);
    append(out, part::kAke, ake);
    append(out, part::kDke, dke);
    append(out, part::kAkAdapter, ak_adapter);
    append(out, part::kDkAdapter, dk_adapter);
    return out;
}

ConstNamedParams TeacherBundle::named_parameters() const {
    ConstNamedParams out;
    append_backbone(out, backbone);
    append(out, part::kClassifier, classifier);
    append(out, part::kAke, ake);
    append(out, part::kDke, dke);
    append(out, part::kAkAdapter, ak_adapter);
    append(out, part::kDkAdapter, dk_adapter);
    return out;
}

NamedParams TeacherBundle::trainable_parameters() {
    NamedParams out;
    for (auto& entry : named_parameters())
        if (!frozen_parts.contains(part_of(entry.first))) out.push_back(entry);
    return out;
}

std::uint64_t TeacherBundle::checksum_of(const std::set<std::string>& parts) const {
    ConstNamedParams selected;
    for (const auto& entry : named_parameters())
        if (parts.contains(part_of(entry.first))) selected.push_back(entry);
    return parameter_checksum(selected);
}

TeacherBundle attach_branches(const Network& teacher, const GranularitySpec& spec, std::uint64_t seed) {
    require_valid(spec);
    if (teacher.num_classes() != spec.num_classes)
        throw InvalidArgument("teacher classifier has " + std::to_string(teacher.num_classes()) +
                              " outputs but the granularity spec declares " + std::to_string(spec.num_classes));
    const std::size_t f = teacher.classifier.in_features();
    TeacherBundle b{teacher.backbone, teacher.classifier, Linear(f, spec.dim_ak), Linear(f, spec.dim_dk),
                    Linear(spec.dim_ak, spec.num_classes), Linear(spec.dim_dk, spec.num_classes), spec,
                    {part::kBackbone, part::kClassifier}};
    std::mt19937_64 rng(seed);
    b.ake.init_fan_in(rng);
    b.dke.init_fan_in(rng);
    b.ak_adapter.init_fan_in(rng);
    b.dk_adapter.init_fan_in(rng);
    return b;
}

GranularityOutputs forward_teacher(const TeacherBundle& bundle, const Tensor& batch) {
    const Tensor f = bundle.backbone.forward(batch);
    const Tensor ak = bundle.ake.forward(f);
    const Tensor dk = bundle.dke.forward(f);
    GranularityOutputs out;
    out.features = f.as_matrix();
    out.f_nk = bundle.classifier.forward(f).as_matrix();
    out.f_akb = bundle.ak_adapter.forward(ak).as_matrix();
    out.f_dkb = bundle.dk_adapter.forward(dk).as_matrix();
    out.f_ak = ak.as_matrix();
    out.f_dk = dk.as_matrix();
    return out;
}

// ---------------------------------------------------------------------------
// Student

NamedParams StudentBundle::named_parameters() {
    NamedParams out;
    append_backbone(out, backbone);
    append(out, part::kClassifier, classifier);
    append(out, part::kAke, ake);
    append(out, part::kDke, dke);
    return out;
}

ConstNamedParams StudentBundle::named_parameters() const {
    ConstNamedParams out;
    append_backbone(out, backbone);
    append(out, part::kClassifier, classifier);
    append(out, part::kAke, ake);
    append(out, part::kDke, dke);
    return out;
}

GranularityOutputs StudentBundle::forward_train(const Tensor& batch) {
    const Tensor f = backbone.forward_train(batch);
    GranularityOutputs out;
    out.features = f.as_matrix();
    out.f_ak = ake.forward_train(f).as_matrix();
    out.f_nk = classifier.forward_train(f).as_matrix();
    out.f_dk = dke.forward_train(f).as_matrix();
    return out;
}

void StudentBundle::backward(const MatrixF& grad_ak, const MatrixF& grad_nk, const MatrixF& grad_dk) {
    Tensor g = classifier.backward(Tensor::from_matrix(grad_nk));
    const Tensor g_ak = ake.backward(Tensor::from_matrix(grad_ak));
    const Tensor g_dk = dke.backward(Tensor::from_matrix(grad_dk));
    for (std::size_t i = 0; i < g.size(); ++i) g.data()[i] += g_ak.data()[i] + g_dk.data()[i];
    backbone.backward(g);
}

void StudentBundle::zero_grad() {
    for (auto& [name, p] : named_parameters()) p->zero_grad();
}

StudentBundle make_student(const BackboneConfig& cfg, const GranularitySpec& spec, std::uint64_t seed) {
    require_valid(spec);
    std::mt19937_64 rng(seed);
    StudentBundle s{Backbone(cfg), Linear(), Linear(), Linear(), spec};
    s.backbone.init(rng);
    const std::size_t f = s.backbone.feature_dim();
    s.classifier = Linear(f, spec.num_classes);
    s.ake = Linear(f, spec.dim_ak);
    s.dke = Linear(f, spec.dim_dk);
    s.classifier.init_fan_in(rng);
    s.ake.init_fan_in(rng);
    s.dke.init_fan_in(rng);
    return s;
}

GranularityOutputs forward_student(const StudentBundle& bundle, const Tensor& batch) {
    const Tensor f = bundle.backbone.forward(batch);
    GranularityOutputs out;
    out.features = f.as_matrix();
    out.f_ak = bundle.ake.forward(f).as_matrix();
    out.f_nk = bundle.classifier.forward(f).as_matrix();
    out.f_dk = bundle.dke.forward(f).as_matrix();
    return out;
}

Network strip_encoders(const StudentBundle& student) { return Network{student.backbone, student.classifier}; }

} // namespace mgkd
