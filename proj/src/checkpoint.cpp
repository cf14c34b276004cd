#include "mgkd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <numeric>

#ifndef MGKD_CODE_VERSION
#define MGKD_CODE_VERSION "unknown"
#endif

namespace mgkd {
namespace {

constexpr char kMagic[8] = {'M', 'G', 'K', 'D', 'C', 'K', 'P', 'T'};

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
public:
    template <typename T>
    void pod(T v) {
        const auto* p = reinterpret_cast<const unsigned char*>(&v);
        buf_.insert(buf_.end(), p, p + sizeof(T));
    }
    void bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        buf_.insert(buf_.end(), p, p + n);
    }
    std::vector<unsigned char>& buffer() { return buf_; }

private:
    std::vector<unsigned char> buf_;
};

class Reader {
public:
    Reader(const std::vector<unsigned char>& buf, std::size_t end, std::string origin)
        : buf_(buf), end_(end), origin_(std::move(origin)) {}

    template <typename T>
    T pod(const char* what) {
        T v;
        take(&v, sizeof(T), what);
        return v;
    }
    void take(void* dst, std::size_t n, const char* what) {
        if (n > end_ - pos_)
            throw FormatError(origin_ + ": truncated checkpoint while reading " + what + " at byte " + std::to_string(pos_));
        std::memcpy(dst, buf_.data() + pos_, n);
        pos_ += n;
    }
    std::size_t position() const { return pos_; }

private:
    const std::vector<unsigned char>& buf_;
    std::size_t end_;
    std::size_t pos_ = 0;
    std::string origin_;
};

std::uint64_t fnv1a(const unsigned char* data, std::size_t n) {
    std::uint64_t h = 14695981039346656037ull;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= data[i];
        h *= 1099511628211ull;
    }
    return h;
}

void store_params(Checkpoint& ckpt, const ConstNamedParams& params) {
    for (const auto& [name, p] : params) ckpt.tensors[name] = Blob{p->shape, p->value};
}

void restore_params(const Checkpoint& ckpt, const NamedParams& params) {
    for (const auto& [name, p] : params) {
        auto it = ckpt.tensors.find(name);
        if (it == ckpt.tensors.end()) throw FormatError("checkpoint is missing tensor '" + name + "'");
        if (it->second.shape != p->shape) throw FormatError("checkpoint tensor '" + name + "' has the wrong shape");
        p->value = it->second.data;
    }
    if (ckpt.tensors.size() != params.size())
        throw FormatError("checkpoint holds " + std::to_string(ckpt.tensors.size()) + " tensors, model expects " +
                          std::to_string(params.size()));
}

void require_kind(const Checkpoint& ckpt, const std::string& kind) {
    const std::string got = ckpt.metadata.value("kind", "");
    if (got != kind) throw FormatError("checkpoint kind is '" + got + "', expected '" + kind + "'");
}

nlohmann::json base_metadata(const std::string& kind, const nlohmann::json& extra) {
    nlohmann::json meta = extra.is_object() ? extra : nlohmann::json::object();
    meta["format_version"] = kCheckpointVersion;
    meta["code_version"] = code_version();
    meta["kind"] = kind;
    return meta;
}

} // namespace

std::string code_version() { return MGKD_CODE_VERSION; }

std::vector<unsigned char> serialize_checkpoint(const Checkpoint& ckpt) {
    Writer w;
    w.bytes(kMagic, sizeof(kMagic));
    w.pod<std::uint32_t>(kCheckpointVersion);
    const std::string meta = ckpt.metadata.dump();
    w.pod<std::uint64_t>(meta.size());
    w.bytes(meta.data(), meta.size());
    w.pod<std::uint32_t>(static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, blob] : ckpt.tensors) {
        const std::size_t expect = std::accumulate(blob.shape.begin(), blob.shape.end(), std::size_t{1}, std::multiplies<>());
        if (expect != blob.data.size()) throw InvalidArgument("tensor '" + name + "' data does not match its shape");
        w.pod<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
        w.bytes(name.data(), name.size());
        w.pod<std::uint32_t>(static_cast<std::uint32_t>(blob.shape.size()));
        for (std::size_t d : blob.shape) w.pod<std::uint64_t>(d);
        w.bytes(blob.data.data(), blob.data.size() * sizeof(float));
    }
    auto& buf = w.buffer();
    const std::uint64_t sum = fnv1a(buf.data(), buf.size());
    w.pod<std::uint64_t>(sum);
    return std::move(buf);
}

Checkpoint deserialize_checkpoint(const std::vector<unsigned char>& bytes, const std::string& origin) {
    constexpr std::size_t kHeader = sizeof(kMagic) + sizeof(std::uint32_t);
    if (bytes.size() < kHeader) throw FormatError(origin + ": truncated checkpoint header");
    if (std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) throw FormatError(origin + ": not a checkpoint (bad magic)");
    std::uint32_t version;
    std::memcpy(&version, bytes.data() + sizeof(kMagic), sizeof(version));
    if (version != kCheckpointVersion)
        throw IncompatibleVersion(origin + ": checkpoint format version " + std::to_string(version) +
                                  " is incompatible with this build (format version " +
                                  std::to_string(kCheckpointVersion) + ")");
    if (bytes.size() < kHeader + sizeof(std::uint64_t)) throw FormatError(origin + ": truncated checkpoint");
    const std::size_t body = bytes.size() - sizeof(std::uint64_t);

    Reader r(bytes, body, origin);
    char magic[8];
    r.take(magic, sizeof(magic), "magic");
    r.pod<std::uint32_t>("version");
    const auto meta_len = r.pod<std::uint64_t>("metadata length");
    if (meta_len > body) throw FormatError(origin + ": truncated checkpoint while reading metadata");
    std::string meta(meta_len, '\0');
    r.take(meta.data(), meta.size(), "metadata");

    Checkpoint ckpt;
    try {
        ckpt.metadata = nlohmann::json::parse(meta);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(origin + ": checkpoint metadata is not valid JSON: " + e.what());
    }
    const auto count = r.pod<std::uint32_t>("tensor count");
    for (std::uint32_t t = 0; t < count; ++t) {
        const auto name_len = r.pod<std::uint32_t>("tensor name length");
        if (name_len > body) throw FormatError(origin + ": truncated checkpoint while reading tensor name");
        std::string name(name_len, '\0');
        r.take(name.data(), name.size(), "tensor name");
        const auto rank = r.pod<std::uint32_t>("tensor rank");
        Blob blob;
        std::size_t elems = 1;
        for (std::uint32_t d = 0; d < rank; ++d) {
            blob.shape.push_back(r.pod<std::uint64_t>("tensor dims"));
            elems *= blob.shape.back();
        }
        if (elems > body / sizeof(float)) throw FormatError(origin + ": truncated checkpoint while reading tensor '" + name + "'");
        blob.data.resize(elems);
        r.take(blob.data.data(), elems * sizeof(float), "tensor data");
        ckpt.tensors.emplace(std::move(name), std::move(blob));
    }
    if (r.position() != body) throw FormatError(origin + ": trailing bytes after checkpoint tensors");
    std::uint64_t stored;
    std::memcpy(&stored, bytes.data() + body, sizeof(stored));
    if (stored != fnv1a(bytes.data(), body)) throw FormatError(origin + ": checkpoint checksum mismatch (corrupt or truncated)");
    return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    const auto bytes = serialize_checkpoint(ckpt);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const auto tmp = std::filesystem::path(path.string() + ".tmp");
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write checkpoint: " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw std::runtime_error("short write: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFound("checkpoint not found: " + path.string());
    std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    return deserialize_checkpoint(bytes, path.string());
}

nlohmann::json to_json(const BackboneConfig& cfg) {
    return {{"arch", to_string(cfg.kind)},
            {"channels", cfg.channels},
            {"height", cfg.height},
            {"width", cfg.width},
            {"widths", cfg.widths}};
}

BackboneConfig backbone_config_from_json(const nlohmann::json& j) {
    try {
        BackboneConfig cfg;
        cfg.kind = backbone_kind_from_string(j.at("arch").get<std::string>());
        cfg.channels = j.at("channels").get<std::size_t>();
        cfg.height = j.at("height").get<std::size_t>();
        cfg.width = j.at("width").get<std::size_t>();
        cfg.widths = j.at("widths").get<std::vector<std::size_t>>();
        return cfg;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad backbone description in checkpoint: ") + e.what());
    }
}

nlohmann::json to_json(const GranularitySpec& spec) {
    return {{"dim_ak", spec.dim_ak}, {"num_classes", spec.num_classes}, {"dim_dk", spec.dim_dk}};
}

GranularitySpec granularity_spec_from_json(const nlohmann::json& j) {
    GranularitySpec spec;
    try {
        spec = {j.at("dim_ak").get<std::size_t>(), j.at("num_classes").get<std::size_t>(), j.at("dim_dk").get<std::size_t>()};
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("bad granularity spec in checkpoint: ") + e.what());
    }
    if (auto violation = validate_spec(spec)) throw FormatError("bad granularity spec in checkpoint: " + *violation);
    return spec;
}

Checkpoint to_checkpoint(const Network& net, const nlohmann::json& extra) {
    Checkpoint ckpt;
    ckpt.metadata = base_metadata("network", extra);
    ckpt.metadata["backbone"] = to_json(net.backbone.config());
    ckpt.metadata["num_classes"] = net.num_classes();
    store_params(ckpt, net.named_parameters());
    return ckpt;
}

Checkpoint to_checkpoint(const TeacherBundle& bundle, const nlohmann::json& extra) {
    Checkpoint ckpt;
    ckpt.metadata = base_metadata("teacher_sa", extra);
    ckpt.metadata["backbone"] = to_json(bundle.backbone.config());
    ckpt.metadata["spec"] = to_json(bundle.spec);
    ckpt.metadata["frozen_parts"] = bundle.frozen_parts;
    store_params(ckpt, bundle.named_parameters());
    return ckpt;
}

Checkpoint to_checkpoint(const StudentBundle& bundle, const nlohmann::json& extra) {
    Checkpoint ckpt;
    ckpt.metadata = base_metadata("student", extra);
    ckpt.metadata["backbone"] = to_json(bundle.backbone.config());
    ckpt.metadata["spec"] = to_json(bundle.spec);
    store_params(ckpt, bundle.named_parameters());
    return ckpt;
}

Network network_from_checkpoint(const Checkpoint& ckpt) {
    const std::string kind = ckpt.metadata.value("kind", "");
    if (kind == "student" || kind == "teacher_sa") {
        // Native path only: backbone + classifier of a bundle.
        Checkpoint sub;
        sub.metadata = ckpt.metadata;
        for (const auto& [name, blob] : ckpt.tensors)
            if (name.starts_with("backbone.") || name.starts_with("classifier.")) sub.tensors.emplace(name, blob);
        const auto spec = granularity_spec_from_json(ckpt.metadata.at("spec"));
        sub.metadata["kind"] = "network";
        sub.metadata["num_classes"] = spec.num_classes;
        return network_from_checkpoint(sub);
    }
    require_kind(ckpt, "network");
    const auto cfg = backbone_config_from_json(ckpt.metadata.at("backbone"));
    Network net{Backbone(cfg), Linear()};
    net.classifier = Linear(net.backbone.feature_dim(), ckpt.metadata.at("num_classes").get<std::size_t>());
    restore_params(ckpt, net.named_parameters());
    return net;
}

TeacherBundle teacher_from_checkpoint(const Checkpoint& ckpt) {
    require_kind(ckpt, "teacher_sa");
    const auto cfg = backbone_config_from_json(ckpt.metadata.at("backbone"));
    const auto spec = granularity_spec_from_json(ckpt.metadata.at("spec"));
    require_valid(spec);
    Backbone bb(cfg);
    const std::size_t f = bb.feature_dim();
    TeacherBundle b{std::move(bb), Linear(f, spec.num_classes), Linear(f, spec.dim_ak), Linear(f, spec.dim_dk),
                    Linear(spec.dim_ak, spec.num_classes), Linear(spec.dim_dk, spec.num_classes), spec,
                    ckpt.metadata.value("frozen_parts", std::set<std::string>{part::kBackbone, part::kClassifier})};
    restore_params(ckpt, b.named_parameters());
    return b;
}

StudentBundle student_from_checkpoint(const Checkpoint& ckpt) {
    require_kind(ckpt, "student");
    const auto cfg = backbone_config_from_json(ckpt.metadata.at("backbone"));
    const auto spec = granularity_spec_from_json(ckpt.metadata.at("spec"));
    require_valid(spec);
    Backbone bb(cfg);
    const std::size_t f = bb.feature_dim();
    StudentBundle s{std::move(bb), Linear(f, spec.num_classes), Linear(f, spec.dim_ak), Linear(f, spec.dim_dk), spec};
    restore_params(ckpt, s.named_parameters());
    return s;
}

} // namespace mgkd
