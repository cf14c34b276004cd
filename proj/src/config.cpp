#include "mgkd/config.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace mgkd {
namespace {

using nlohmann::json;

// ---------------------------------------------------------------- parsing

class TomlParser {
public:
    explicit TomlParser(const std::string& text) : s_(text) {}

    json parse() {
        json root = json::object();
        json* table = &root;
        while (true) {
            skip_blank_lines();
            if (eof()) break;
            if (peek() == '[') {
                table = &open_table(root);
            } else {
                const std::string key = parse_key();
                skip_ws();
                expect('=');
                skip_ws();
                json value = parse_value();
                if (table->contains(key)) fail("duplicate key \"" + key + "\"");
                (*table)[key] = std::move(value);
            }
            end_of_line();
        }
        return root;
    }

private:
    bool eof() const { return pos_ >= s_.size(); }
    char peek() const { return eof() ? '\0' : s_[pos_]; }
    char get() {
        const char c = s_[pos_++];
        if (c == '\n') ++line_;
        return c;
    }

    [[noreturn]] void fail(const std::string& msg) const { throw ConfigError("line " + std::to_string(line_), msg); }

    void expect(char c) {
        if (peek() != c) fail(std::string("expected '") + c + "'");
        get();
    }

    void skip_ws() {
        while (!eof() && (peek() == ' ' || peek() == '\t' || peek() == '\r')) get();
    }

    void skip_comment() {
        if (peek() == '#')
            while (!eof() && peek() != '\n') get();
    }

    void skip_blank_lines() {
        while (true) {
            skip_ws();
            skip_comment();
            if (peek() == '\n') {
                get();
                continue;
            }
            return;
        }
    }

    // Whitespace, comments and newlines inside arrays.
    void skip_array_space() {
        while (!eof()) {
            skip_ws();
            skip_comment();
            if (peek() != '\n') return;
            get();
        }
    }

    void end_of_line() {
        skip_ws();
        skip_comment();
        if (eof()) return;
        if (peek() != '\n') fail("unexpected trailing characters");
        get();
    }

    static bool key_char(char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-'; }

    std::string parse_key() {
        std::string k;
        while (!eof() && key_char(peek())) k += get();
        if (k.empty()) fail("expected a key");
        return k;
    }

    json& open_table(json& root) {
        expect('[');
        skip_ws();
        json* t = &root;
        std::string full;
        while (true) {
            const std::string part = parse_key();
            full += (full.empty() ? "" : ".") + part;
            if (!t->contains(part)) (*t)[part] = json::object();
            t = &(*t)[part];
            if (!t->is_object()) fail("\"" + full + "\" is already a value");
            skip_ws();
            if (peek() == '.') {
                get();
                skip_ws();
                continue;
            }
            break;
        }
        expect(']');
        if (!opened_.insert(full).second) fail("table [" + full + "] defined twice");
        return *t;
    }

    json parse_value() {
        const char c = peek();
        if (c == '"') return parse_string();
        if (c == '[') return parse_array();
        if (s_.compare(pos_, 4, "true") == 0 && !key_char(s_.size() > pos_ + 4 ? s_[pos_ + 4] : ' ')) {
            pos_ += 4;
            return true;
        }
        if (s_.compare(pos_, 5, "false") == 0 && !key_char(s_.size() > pos_ + 5 ? s_[pos_ + 5] : ' ')) {
            pos_ += 5;
            return false;
        }
        return parse_number();
    }

    json parse_string() {
        expect('"');
        std::string out;
        while (true) {
            if (eof() || peek() == '\n') fail("unterminated string");
            const char c = get();
            if (c == '"') break;
            if (c != '\\') {
                out += c;
                continue;
            }
            if (eof()) fail("unterminated escape");
            switch (get()) {
            case '"': out += '"'; break;
            case '\\': out += '\\'; break;
            case 'n': out += '\n'; break;
            case 't': out += '\t'; break;
            default: fail("unsupported escape sequence");
            }
        }
        return out;
    }

    json parse_array() {
        expect('[');
        json arr = json::array();
        skip_array_space();
        while (peek() != ']') {
            arr.push_back(parse_value());
            skip_array_space();
            if (peek() == ',') {
                get();
                skip_array_space();
            } else if (peek() != ']') {
                fail("expected ',' or ']' in array");
            }
        }
        get();
        return arr;
    }

    json parse_number() {
        std::string tok;
        while (!eof() && (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '+' || peek() == '-' ||
                          peek() == '.' || peek() == '_'))
            tok += get();
        std::string clean;
        for (char ch : tok)
            if (ch != '_') clean += ch;
        if (clean.empty()) fail("expected a value");
        const bool is_float = clean.find_first_of(".eE") != std::string::npos;
        try {
            std::size_t used = 0;
            if (is_float) {
                const double v = std::stod(clean, &used);
                if (used == clean.size() && std::isfinite(v)) return v;
            } else {
                const long long v = std::stoll(clean, &used);
                if (used == clean.size()) return v;
            }
        } catch (const std::exception&) {
        }
        fail("invalid value \"" + tok + "\"");
    }

    const std::string& s_;
    std::size_t pos_ = 0;
    int line_ = 1;
    std::set<std::string> opened_;
};

// ---------------------------------------------------------------- typed access

class Table {
public:
    Table(const json* j, std::string path) : j_(j), path_(std::move(path)) {
        if (j_ && !j_->is_object()) throw ConfigError(path_, "expected a table");
    }

    bool present() const { return j_ != nullptr; }
    const std::string& path() const { return path_; }

    std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    const json* find(const std::string& key) {
        used_.insert(key);
        if (!j_) return nullptr;
        const auto it = j_->find(key);
        return it == j_->end() ? nullptr : &*it;
    }

    bool has(const std::string& key) const { return j_ && j_->contains(key); }

    Table sub(const std::string& key) {
        const json* v = find(key);
        return Table(v, field(key));
    }

    std::string str(const std::string& key, std::string def) {
        const json* v = find(key);
        if (!v) return def;
        if (!v->is_string()) throw ConfigError(field(key), "expected a string");
        return v->get<std::string>();
    }

    double real(const std::string& key, double def) {
        const json* v = find(key);
        if (!v) return def;
        return as_real(*v, field(key));
    }

    std::optional<double> opt_real(const std::string& key) {
        if (!has(key)) {
            used_.insert(key);
            return std::nullopt;
        }
        return real(key, 0.0);
    }

    long long integer(const std::string& key, long long def) {
        const json* v = find(key);
        if (!v) return def;
        return as_int(*v, field(key));
    }

    std::size_t count(const std::string& key, std::size_t def) {
        const long long v = integer(key, static_cast<long long>(def));
        if (v < 0) throw ConfigError(field(key), "must be non-negative");
        return static_cast<std::size_t>(v);
    }

    bool flag(const std::string& key, bool def) {
        const json* v = find(key);
        if (!v) return def;
        if (!v->is_boolean()) throw ConfigError(field(key), "expected true or false");
        return v->get<bool>();
    }

    std::vector<double> reals(const std::string& key, std::vector<double> def) {
        const json* v = find(key);
        if (!v) return def;
        std::vector<double> out;
        for (const auto& e : array(*v, key)) out.push_back(as_real(e, field(key)));
        return out;
    }

    std::vector<long long> integers(const std::string& key, std::vector<long long> def) {
        const json* v = find(key);
        if (!v) return def;
        std::vector<long long> out;
        for (const auto& e : array(*v, key)) out.push_back(as_int(e, field(key)));
        return out;
    }

    std::vector<std::size_t> counts(const std::string& key, std::vector<std::size_t> def) {
        std::vector<long long> raw(def.begin(), def.end());
        std::vector<std::size_t> out;
        for (long long v : integers(key, raw)) {
            if (v < 0) throw ConfigError(field(key), "entries must be non-negative");
            out.push_back(static_cast<std::size_t>(v));
        }
        return out;
    }

    /// Rejects keys that were never looked up.
    void finish() const {
        if (!j_) return;
        for (const auto& [k, v] : j_->items())
            if (!used_.contains(k)) throw ConfigError(field(k), "unknown key");
    }

private:
    const json& array(const json& v, const std::string& key) const {
        if (!v.is_array()) throw ConfigError(field(key), "expected an array");
        return v;
    }

    static double as_real(const json& v, const std::string& f) {
        if (!v.is_number()) throw ConfigError(f, "expected a number");
        return v.get<double>();
    }

    static long long as_int(const json& v, const std::string& f) {
        if (!v.is_number_integer()) throw ConfigError(f, "expected an integer");
        return v.get<long long>();
    }

    const json* j_;
    std::string path_;
    std::set<std::string> used_;
};

void check(bool ok, const std::string& field, const std::string& msg) {
    if (!ok) throw ConfigError(field, msg);
}

TrainSchedule read_schedule(Table t, TrainSchedule s, double scale) {
    s.optimizer = t.str("optimizer", s.optimizer);
    check(s.optimizer == "sgd", t.field("optimizer"), "only \"sgd\" is supported");
    s.initial_lr = t.real("lr", s.initial_lr);
    s.momentum = t.real("momentum", s.momentum);
    s.weight_decay = t.real("weight_decay", s.weight_decay);
    s.lr_decay_factor = t.real("lr_decay", s.lr_decay_factor);
    const auto ms = t.integers("milestones", std::vector<long long>(s.milestones.begin(), s.milestones.end()));
    s.milestones.assign(ms.begin(), ms.end());
    s.epochs = static_cast<int>(t.integer("epochs", s.epochs));
    s.batch_size = t.count("batch_size", s.batch_size);
    t.finish();
    try {
        s.validate();
        s = s.scaled(scale);
        s.validate();
    } catch (const InvalidArgument& e) {
        throw ConfigError(t.path(), e.what());
    }
    return s;
}

Augmentation read_augmentation(Table t) {
    Augmentation a;
    a.horizontal_flip = t.flag("flip", a.horizontal_flip);
    a.crop_padding = t.count("crop_padding", a.crop_padding);
    t.finish();
    return a;
}

DatasetConfig read_dataset(Table t) {
    DatasetConfig d;
    d.name = t.str("name", d.name);
    d.root = t.str("root", "");
    d.val_fraction = t.real("val_fraction", d.val_fraction);
    check(d.val_fraction >= 0.0 && d.val_fraction < 1.0, t.field("val_fraction"), "must lie in [0, 1)");
    d.split_seed = static_cast<std::uint64_t>(t.integer("split_seed", 0));
    for (double v : t.reals("mean", {})) d.normalization.mean.push_back(static_cast<float>(v));
    for (double v : t.reals("std", {})) d.normalization.std.push_back(static_cast<float>(v));

    Table syn = t.sub("synthetic");
    SyntheticSpec& s = d.synthetic;
    s.classes = syn.count("classes", s.classes);
    s.channels = syn.count("channels", s.channels);
    s.image_size = syn.count("image_size", s.image_size);
    s.train_per_class = syn.count("train_per_class", s.train_per_class);
    s.test_per_class = syn.count("test_per_class", s.test_per_class);
    s.pixel_noise = syn.real("pixel_noise", s.pixel_noise);
    s.jitter = syn.real("jitter", s.jitter);
    s.seed = static_cast<std::uint64_t>(syn.integer("seed", static_cast<long long>(s.seed)));
    syn.finish();
    t.finish();

    try {
        num_classes_for(d);
    } catch (const InvalidArgument& e) {
        throw ConfigError(t.field("name"), e.what());
    }
    if (d.name == "synthetic") {
        check(s.classes >= 2, syn.field("classes"), "needs at least 2 classes");
        check(s.channels >= 1, syn.field("channels"), "needs at least 1 channel");
        check(s.image_size >= 8, syn.field("image_size"), "must be at least 8");
        check(s.train_per_class >= 1, syn.field("train_per_class"), "must be positive");
        check(s.test_per_class >= 1, syn.field("test_per_class"), "must be positive");
        check(s.pixel_noise >= 0.0, syn.field("pixel_noise"), "must be non-negative");
    }
    const std::size_t channels = image_shape_for(d).c;
    const auto& n = d.normalization;
    check(n.mean.size() == n.std.size(), t.field("std"), "mean and std need the same length");
    check(n.mean.empty() || n.mean.size() == channels, t.field("mean"),
          "needs one entry per channel (" + std::to_string(channels) + ")");
    for (float v : n.std) check(v > 0.0f, t.field("std"), "entries must be positive");
    return d;
}

BackboneConfig read_arch(Table& t, const DatasetConfig& data) {
    BackboneConfig a;
    const Shape4 shape = image_shape_for(data);
    a.channels = shape.c;
    a.height = shape.h;
    a.width = shape.w;
    try {
        a.kind = backbone_kind_from_string(t.str("arch", "cnn"));
    } catch (const InvalidArgument& e) {
        throw ConfigError(t.field("arch"), e.what());
    }
    a.widths = t.counts("widths", {});
    try {
        Backbone probe(a);
    } catch (const InvalidArgument& e) {
        throw ConfigError(t.field("widths"), e.what());
    }
    return a;
}

void check_temperature(double v, const std::string& field) {
    check(std::isfinite(v) && v > 0.0, field, "temperature must be positive");
}

void check_sigmas(const std::vector<double>& s, const std::string& field) {
    check(!s.empty(), field, "needs at least one sigma");
    check(s.front() == 0.0, field, "must start at 0");
    for (std::size_t i = 0; i < s.size(); ++i) {
        check(s[i] >= 0.0, field, "sigmas must be non-negative");
        if (i > 0) check(s[i] > s[i - 1], field, "sigmas must be strictly increasing");
    }
}

void apply_overrides(json& root, const ConfigOverrides& o) {
    if (!root.contains("run")) root["run"] = json::object();
    if (!o.seeds.empty()) root["run"]["seeds"] = o.seeds;
    if (o.out) root["run"]["out"] = o.out->string();
    if (o.scale) root["run"]["scale"] = *o.scale;
    if (o.scheme || o.hook) {
        if (!root.contains("distill")) root["distill"] = json::object();
        if (o.scheme) root["distill"]["scheme"] = *o.scheme;
        if (o.hook) root["distill"]["hook"] = *o.hook;
    }
    if (o.sweep_axis) {
        if (!root.contains("sweep")) root["sweep"] = json::object();
        root["sweep"]["axis"] = *o.sweep_axis;
    }
}

} // namespace

nlohmann::json parse_toml(const std::string& text) { return TomlParser(text).parse(); }

DistillTemperatures ExperimentConfig::distill_temperatures() const {
    const DistillSection d = distill.value_or(DistillSection{});
    return {Temperature(d.tau_ak.value_or(granularity.tau_akb)), Temperature(d.tau_nk),
            Temperature(d.tau_dk.value_or(granularity.tau_dkb))};
}

SelfAnalyzeConfig ExperimentConfig::self_analyze_config(std::uint64_t seed) const {
    SelfAnalyzeConfig c;
    c.tau_akb = Temperature(granularity.tau_akb);
    c.tau_dkb = Temperature(granularity.tau_dkb);
    if (self_analyze) {
        c.schedule = self_analyze->schedule;
        c.cache_features = self_analyze->cache_features;
    } else {
        c.schedule = default_branch_schedule().scaled(run.scale);
    }
    c.seed = seed;
    return c;
}

DistillConfig ExperimentConfig::distill_config(std::uint64_t seed) const {
    const DistillSection d = distill.value_or(DistillSection{});
    DistillConfig c;
    c.scheme = d.scheme;
    c.temps = distill_temperatures();
    c.weights = d.weights;
    c.schedule = distill ? d.schedule : d.schedule.scaled(run.scale);
    c.seed = seed;
    c.augmentation = d.augmentation;
    return c;
}

std::string ExperimentConfig::hash() const {
    // Where a run is written is not part of what it computes.
    nlohmann::json identity = resolved;
    if (identity.contains("run")) identity["run"].erase("out");
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : identity.dump()) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

ExperimentConfig parse_config(const std::string& text, const ConfigOverrides& overrides) {
    ExperimentConfig cfg;
    cfg.source_text = text;
    json root = parse_toml(text);
    apply_overrides(root, overrides);
    cfg.resolved = root;

    Table top(&root, "");

    Table run = top.sub("run");
    cfg.run.seeds.clear();
    for (long long s : run.integers("seeds", {0})) {
        check(s >= 0, run.field("seeds"), "seeds must be non-negative");
        cfg.run.seeds.push_back(static_cast<std::uint64_t>(s));
    }
    check(!cfg.run.seeds.empty(), run.field("seeds"), "needs at least one seed");
    cfg.run.out = run.str("out", cfg.run.out.string());
    check(!cfg.run.out.empty(), run.field("out"), "must not be empty");
    cfg.run.scale = run.real("scale", cfg.run.scale);
    check(std::isfinite(cfg.run.scale) && cfg.run.scale > 0.0, run.field("scale"), "must be positive");
    run.finish();
    const double scale = cfg.run.scale;

    cfg.dataset = read_dataset(top.sub("dataset"));

    Table gran = top.sub("granularity");
    cfg.granularity.dim_ak = gran.count("dim_ak", 0);
    cfg.granularity.dim_dk = gran.count("dim_dk", 0);
    cfg.granularity.tau_akb = gran.real("tau_akb", cfg.granularity.tau_akb);
    cfg.granularity.tau_dkb = gran.real("tau_dkb", cfg.granularity.tau_dkb);
    gran.finish();
    const bool needs_spec = top.has("self_analyze") || top.has("distill") || top.has("sweep") || top.has("student");
    if (needs_spec || gran.present()) {
        if (cfg.granularity.dim_ak == 0 && cfg.granularity.dim_dk == 0 && !gran.present())
            throw ConfigError("granularity", "section is required for self-analysis and distillation");
        if (auto violation = validate_spec(cfg.spec())) throw ConfigError("granularity.dim_ak", *violation);
    }
    check_temperature(cfg.granularity.tau_akb, gran.field("tau_akb"));
    check_temperature(cfg.granularity.tau_dkb, gran.field("tau_dkb"));
    check(cfg.granularity.tau_akb < cfg.granularity.tau_dkb, gran.field("tau_akb"),
          "temperatures must satisfy tau_akb < tau_dkb");

    if (top.has("teacher")) {
        Table t = top.sub("teacher");
        TeacherSection s;
        s.arch = read_arch(t, cfg.dataset);
        s.checkpoint = t.str("checkpoint", "");
        s.train = read_schedule(t.sub("train"), default_student_schedule(), scale);
        s.augmentation = read_augmentation(t.sub("augment"));
        t.finish();
        cfg.teacher = std::move(s);
    } else {
        top.sub("teacher");
    }

    if (top.has("student")) {
        Table t = top.sub("student");
        StudentSection s;
        s.arch = read_arch(t, cfg.dataset);
        t.finish();
        cfg.student = std::move(s);
    } else {
        top.sub("student");
    }

    if (top.has("self_analyze")) {
        Table t = top.sub("self_analyze");
        SelfAnalyzeSection s;
        s.checkpoint = t.str("checkpoint", "");
        s.cache_features = t.flag("cache_features", s.cache_features);
        s.schedule = read_schedule(t.sub("schedule"), default_branch_schedule(), scale);
        t.finish();
        cfg.self_analyze = std::move(s);
    } else {
        top.sub("self_analyze");
    }

    if (top.has("distill")) {
        Table t = top.sub("distill");
        DistillSection s;
        try {
            s.scheme = scheme_from_string(t.str("scheme", "se"));
        } catch (const InvalidArgument& e) {
            throw ConfigError(t.field("scheme"), e.what());
        }
        s.hook = t.str("hook", s.hook);
        try {
            hook_by_name(s.hook, Temperature(1.0));
        } catch (const InvalidArgument& e) {
            throw ConfigError(t.field("hook"), e.what());
        }
        s.include_ce = t.flag("include_ce", s.include_ce);
        s.tau_ak = t.opt_real("tau_ak");
        s.tau_nk = t.real("tau_nk", s.tau_nk);
        s.tau_dk = t.opt_real("tau_dk");
        if (s.tau_ak) check_temperature(*s.tau_ak, t.field("tau_ak"));
        if (s.tau_dk) check_temperature(*s.tau_dk, t.field("tau_dk"));
        check_temperature(s.tau_nk, t.field("tau_nk"));
        const std::pair<const char*, double*> weights[] = {
            {"weight_ak", &s.weights.ak}, {"weight_nk", &s.weights.nk}, {"weight_dk", &s.weights.dk}, {"weight_en", &s.weights.en}};
        for (const auto& [key, slot] : weights) {
            *slot = t.real(key, 1.0);
            check(std::isfinite(*slot) && *slot >= 0.0, t.field(key), "weights must be finite and non-negative");
        }
        s.stability_fraction = t.real("stability_fraction", s.stability_fraction);
        check(s.stability_fraction > 0.0 && s.stability_fraction <= 1.0, t.field("stability_fraction"),
              "must lie in (0, 1]");
        s.schedule = read_schedule(t.sub("schedule"), default_student_schedule(), scale);
        s.augmentation = read_augmentation(t.sub("augment"));
        t.finish();
        cfg.distill = std::move(s);
    } else {
        top.sub("distill");
    }

    if (top.has("evaluate")) {
        Table t = top.sub("evaluate");
        EvaluateSection s;
        const std::string cka = t.str("cka_kernel", "rbf");
        if (cka == "linear") s.cka = CkaChoice::Linear;
        else if (cka == "rbf") s.cka = CkaChoice::Rbf;
        else if (cka == "both") s.cka = CkaChoice::Both;
        else throw ConfigError(t.field("cka_kernel"), "unknown kernel \"" + cka + "\"; valid options: {linear, rbf, both}");
        s.max_samples = t.count("max_samples", s.max_samples);
        check(s.max_samples >= 2, t.field("max_samples"), "must be at least 2");
        s.noise_sigmas = t.reals("noise_sigmas", s.noise_sigmas);
        check_sigmas(s.noise_sigmas, t.field("noise_sigmas"));
        s.noise_seed = static_cast<std::uint64_t>(t.integer("noise_seed", static_cast<long long>(s.noise_seed)));
        s.export_embeddings = t.flag("export_embeddings", s.export_embeddings);
        t.finish();
        cfg.evaluate = std::move(s);
    } else {
        top.sub("evaluate");
    }

    if (top.has("sweep")) {
        Table t = top.sub("sweep");
        SweepSection s;
        const std::string axis = t.str("axis", "dims");
        if (axis == "dims") s.axis = SweepAxis::Dims;
        else if (axis == "temperatures") s.axis = SweepAxis::Temperatures;
        else throw ConfigError(t.field("axis"), "unknown axis \"" + axis + "\"; valid options: {dims, temperatures}");
        s.ak_dims = t.counts("ak_dims", s.ak_dims);
        s.dk_dims = t.counts("dk_dims", s.dk_dims);
        s.ak_temps = t.reals("ak_temps", s.ak_temps);
        s.dk_temps = t.reals("dk_temps", s.dk_temps);
        for (double v : s.ak_temps) check_temperature(v, t.field("ak_temps"));
        for (double v : s.dk_temps) check_temperature(v, t.field("dk_temps"));
        s.seeds_per_point = t.count("seeds_per_point", s.seeds_per_point);
        check(s.seeds_per_point >= 1, t.field("seeds_per_point"), "must be at least 1");
        s.strict = t.flag("strict", s.strict);
        if (s.axis == SweepAxis::Dims) {
            check(!s.ak_dims.empty(), t.field("ak_dims"), "must not be empty");
            check(!s.dk_dims.empty(), t.field("dk_dims"), "must not be empty");
        } else {
            check(!s.ak_temps.empty(), t.field("ak_temps"), "must not be empty");
            check(!s.dk_temps.empty(), t.field("dk_temps"), "must not be empty");
        }
        t.finish();
        cfg.sweep = std::move(s);
    } else {
        top.sub("sweep");
    }

    if (top.has("transfer")) {
        Table t = top.sub("transfer");
        TransferSection s;
        s.dataset = read_dataset(t.sub("dataset"));
        TrainSchedule base;
        base.initial_lr = 0.05;
        base.epochs = 60;
        base.milestones = {30, 45};
        s.schedule = read_schedule(t.sub("schedule"), base, scale);
        t.finish();
        cfg.transfer = std::move(s);
    } else {
        top.sub("transfer");
    }

    top.finish();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFound("config file not found: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), overrides);
}

void require_section(bool present, const std::string& section, const std::string& command) {
    if (!present) throw ConfigError(section, "section is required by \"" + command + "\"");
}

} // namespace mgkd
