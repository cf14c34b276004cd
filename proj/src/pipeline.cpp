#include "mgkd/pipeline.hpp"

#include <chrono>
#include <fstream>
#include <numeric>
#include <sstream>
#include <utility>

#include "mgkd/checkpoint.hpp"
#include "mgkd/eval.hpp"
#include "mgkd/metrics.hpp"
#include "mgkd/self_analyze.hpp"
#include "mgkd/supervised.hpp"

namespace mgkd {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void log(const PipelineOptions& opt, const std::string& line) {
    if (opt.log) *opt.log << line << '\n' << std::flush;
}

json provenance(const ExperimentConfig& cfg, const std::string& command) {
    return {{"command", command},
            {"config_hash", cfg.hash()},
            {"seeds", cfg.run.seeds},
            {"scale", cfg.run.scale},
            {"code_version", code_version()}};
}

class RunDir {
public:
    RunDir(const ExperimentConfig& cfg, fs::path dir, std::string command)
        : cfg_(cfg), dir_(std::move(dir)), command_(std::move(command)) {
        if (fs::exists(dir_ / "summary.json"))
            throw ConfigError("run.out", dir_.string() + " holds a completed run; choose another --out");
        fs::create_directories(dir_);
        write_text_atomic(dir_ / "config.toml", cfg_.source_text);
    }

    const fs::path& path() const { return dir_; }
    fs::path file(const std::string& name) const { return dir_ / name; }

    fs::path finish(json summary) const {
        summary["provenance"] = provenance(cfg_, command_);
        summary["resolved_config"] = cfg_.resolved;
        write_json_atomic(dir_ / "summary.json", summary);
        return dir_;
    }

private:
    const ExperimentConfig& cfg_;
    fs::path dir_;
    std::string command_;
};

void require_file(const fs::path& p, const std::string& what) {
    if (!fs::exists(p)) throw NotFound(what + " not found: " + p.string());
}

MetricsSink progress(const PipelineOptions& opt, const std::string& tag, int epochs) {
    if (!opt.log) return {};
    return [&opt, tag, epochs](const MetricsRecord& r) {
        std::ostringstream ss;
        ss << tag << " epoch " << (r.epoch + 1) << "/" << epochs << " lr=" << r.lr;
        for (const auto& [k, v] : r.values) ss << ' ' << k << '=' << v;
        log(opt, ss.str());
    };
}

Network load_teacher(const ExperimentConfig& cfg, std::size_t classes) {
    const fs::path p = teacher_checkpoint_path(cfg);
    Network net = network_from_checkpoint(load_checkpoint(p));
    if (net.num_classes() != classes)
        throw InvalidArgument("teacher at " + p.string() + " has " + std::to_string(net.num_classes()) +
                              " classes, dataset has " + std::to_string(classes));
    return net;
}

TeacherBundle load_teacher_sa(const ExperimentConfig& cfg) {
    const fs::path p = teacher_sa_checkpoint_path(cfg);
    TeacherBundle t = teacher_from_checkpoint(load_checkpoint(p));
    if (!(t.spec == cfg.spec()))
        throw InvalidArgument("T_SA at " + p.string() + " has heads (" + std::to_string(t.spec.dim_ak) + ", " +
                              std::to_string(t.spec.num_classes) + ", " + std::to_string(t.spec.dim_dk) +
                              ") but the config asks for (" + std::to_string(cfg.spec().dim_ak) + ", " +
                              std::to_string(cfg.spec().num_classes) + ", " + std::to_string(cfg.spec().dim_dk) + ")");
    return t;
}

struct SelfAnalysisOutcome {
    SelfAnalysisResult result;
    BranchAgreement train_agreement;
    BranchAgreement val_agreement;
};

SelfAnalysisOutcome self_analyze_once(const ExperimentConfig& cfg, const Network& teacher, const DatasetBundle& data,
                                      std::uint64_t seed, const PipelineOptions& opt) {
    const SelfAnalyzeConfig sa = cfg.self_analyze_config(seed);
    SelfAnalysisOutcome out{run_self_analysis(attach_branches(teacher, cfg.spec(), seed), data.train, sa,
                                              progress(opt, "self-analyze", sa.schedule.epochs)),
                            {},
                            {}};
    out.train_agreement = branch_agreement(out.result.bundle, data.train);
    out.val_agreement = data.val.size() ? branch_agreement(out.result.bundle, data.val) : BranchAgreement{};
    return out;
}

struct DistillOutcome {
    DistillResult result;
    double test_accuracy = 0.0;        ///< stripped model
    double native_head_accuracy = 0.0; ///< full bundle, f_nk
    double stability = 0.0;
};

double native_head_accuracy(const StudentBundle& s, const DatasetSplit& split) {
    std::size_t hits = 0;
    for (const auto& idx : ordered_batches(split.size(), 256)) {
        const GranularityOutputs o = forward_student(s, split.gather(idx));
        for (std::size_t i = 0; i < idx.size(); ++i)
            if (argmax(o.f_nk.row(i)) == static_cast<std::size_t>(split.labels[idx[i]])) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(split.size());
}

DistillOutcome distill_once(const ExperimentConfig& cfg, const TeacherBundle& t_sa, const DatasetBundle& data,
                            DistillScheme scheme, std::uint64_t seed, const PipelineOptions& opt) {
    DistillConfig dc = cfg.distill_config(seed);
    dc.scheme = scheme;
    const DistillSection ds = cfg.distill.value_or(DistillSection{});
    const BaseKDHook hook = hook_by_name(ds.hook, dc.temps.tau_nk, ds.include_ce);
    StudentBundle student = make_student(cfg.student->arch, t_sa.spec, seed);
    const DatasetSplit* val = data.val.size() ? &data.val : nullptr;
    DistillOutcome out{run_distillation(t_sa, std::move(student), data.train, val, hook, dc,
                                        progress(opt, "distill-" + to_string(scheme), dc.schedule.epochs)),
                       0.0, 0.0, 0.0};
    out.test_accuracy = top1_accuracy(strip_encoders(out.result.student), data.test);
    out.native_head_accuracy = native_head_accuracy(out.result.student, data.test);
    const std::string key = val ? "val_loss" : "total";
    const std::vector<double> series = metric_series(out.result.records, key);
    out.stability = early_loss_stability(series, ds.stability_fraction);
    return out;
}

json agreement_json(const BranchAgreement& a) {
    return {{"akb_agreement", a.akb_agreement}, {"dkb_agreement", a.dkb_agreement}};
}

void write_matrix_csv(const fs::path& p, const Matrix& m) {
    std::ostringstream ss;
    for (std::size_t i = 0; i < m.rows(); ++i) {
        for (std::size_t j = 0; j < m.cols(); ++j) ss << (j ? "," : "") << format_double(m(i, j));
        ss << '\n';
    }
    write_text_atomic(p, ss.str());
}

void write_noise_csv(const fs::path& p, const NoiseCurve& c) {
    std::ostringstream ss;
    ss << "sigma,accuracy,accuracy_delta\n";
    for (std::size_t i = 0; i < c.sigmas.size(); ++i)
        ss << format_double(c.sigmas[i]) << ',' << format_double(c.accuracy[i]) << ','
           << format_double(c.accuracy_delta[i]) << '\n';
    write_text_atomic(p, ss.str());
}

json noise_json(const NoiseCurve& c) {
    return {{"sigmas", c.sigmas}, {"accuracy", c.accuracy}, {"accuracy_delta", c.accuracy_delta},
            {"variance", c.variance}};
}

// A checkpoint of any kind, viewed as named head outputs.
struct EvalModel {
    std::string kind;
    Network net;
    std::optional<TeacherBundle> teacher;
    std::optional<StudentBundle> student;

    std::map<std::string, MatrixF> heads(const Tensor& images) const {
        std::map<std::string, MatrixF> out;
        if (teacher || student) {
            const GranularityOutputs o = teacher ? forward_teacher(*teacher, images) : forward_student(*student, images);
            out["features"] = o.features;
            out["ak"] = o.f_ak;
            out["nk"] = o.f_nk;
            out["dk"] = o.f_dk;
        } else {
            out["features"] = net.backbone.forward(images).as_matrix();
            out["nk"] = net.logits(images).as_matrix();
        }
        return out;
    }
};

EvalModel load_eval_model(const fs::path& p) {
    const Checkpoint ckpt = load_checkpoint(p);
    EvalModel m;
    m.kind = ckpt.metadata.value("kind", "");
    m.net = network_from_checkpoint(ckpt);
    if (m.kind == "teacher_sa") m.teacher = teacher_from_checkpoint(ckpt);
    if (m.kind == "student") m.student = student_from_checkpoint(ckpt);
    return m;
}

json cka_json(const Matrix& x, const Matrix& y, CkaChoice choice) {
    json j = json::object();
    auto one = [&](CkaKernel k, const char* name) {
        try {
            j[name] = cka_similarity(x, y, k);
        } catch (const DegenerateInput& e) {
            j[name] = nullptr;
            j[std::string(name) + "_error"] = e.what();
        }
    };
    if (choice != CkaChoice::Rbf) one(CkaKernel::Linear, "linear");
    if (choice != CkaChoice::Linear) one(CkaKernel::Rbf, "rbf");
    return j;
}

json compare_models(const EvalModel& t, const EvalModel& s, const DatasetSplit& sample, const EvaluateSection& ev,
                    const fs::path& dir, const std::string& tag) {
    const auto th = t.heads(sample.images);
    const auto sh = s.heads(sample.images);
    json heads = json::object();
    for (const auto& [name, tm] : th) {
        const auto it = sh.find(name);
        if (it == sh.end()) continue;
        const MatrixF& sm = it->second;
        json h;
        h["cka"] = cka_json(tm.cast<double>(), sm.cast<double>(), ev.cka);
        if (name != "features") {
            if (tm.cols() != sm.cols())
                throw InvalidArgument("head " + name + ": teacher has " + std::to_string(tm.cols()) + " outputs, student has " +
                                      std::to_string(sm.cols()));
            const SimilarityReport r = knowledge_similarity(tm.cast<double>(), sm.cast<double>());
            h["ssim"] = r.ssim;
            h["cosine"] = r.cosine;
            h["pearson"] = r.pearson;
            h["l2"] = r.l2;
            h["skipped"] = {{"ssim", r.skipped_ssim}, {"cosine", r.skipped_cosine}, {"pearson", r.skipped_pearson}};
        }
        heads[name] = h;
    }
    const CorrelationDifference diff = correlation_matrix_difference(LogitsBatch(th.at("nk").cast<double>()),
                                                                     LogitsBatch(sh.at("nk").cast<double>()));
    write_matrix_csv(dir / ("correlation_diff-" + tag + ".csv"), diff.difference);
    double max_abs = 0.0, mean_abs = 0.0;
    for (double v : diff.difference.storage()) {
        max_abs = std::max(max_abs, std::abs(v));
        mean_abs += std::abs(v);
    }
    mean_abs /= static_cast<double>(diff.difference.size());

    if (ev.export_embeddings)
        for (const auto& [name, m] : sh) write_matrix_csv(dir / ("embeddings-" + tag + "-" + name + ".csv"), m.cast<double>());
    return {{"heads", heads},
            {"correlation_difference", {{"max_abs", max_abs}, {"mean_abs", mean_abs}, {"degenerate", diff.degenerate}}}};
}

std::string scheme_dir_name(DistillScheme s) { return "distill-" + to_string(s); }

} // namespace

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) return kExitConfig;
    if (dynamic_cast<const NotFound*>(&e)) return kExitMissingArtifact;
    if (dynamic_cast<const NumericFailure*>(&e)) return kExitNumeric;
    return kExitFailure;
}

fs::path teacher_checkpoint_path(const ExperimentConfig& cfg) {
    if (cfg.teacher && !cfg.teacher->checkpoint.empty()) return cfg.teacher->checkpoint;
    return cfg.run.out / "train-teacher" / "teacher.ckpt";
}

fs::path teacher_sa_checkpoint_path(const ExperimentConfig& cfg) {
    if (cfg.self_analyze && !cfg.self_analyze->checkpoint.empty()) return cfg.self_analyze->checkpoint;
    return cfg.run.out / "self-analyze" / "teacher_sa.ckpt";
}

fs::path distill_run_dir(const ExperimentConfig& cfg, DistillScheme scheme) {
    return cfg.run.out / scheme_dir_name(scheme);
}

fs::path student_checkpoint_path(const ExperimentConfig& cfg, DistillScheme scheme, std::uint64_t seed) {
    return distill_run_dir(cfg, scheme) / ("seed-" + std::to_string(seed)) / "student.ckpt";
}

fs::path cmd_train_teacher(const ExperimentConfig& cfg, const PipelineOptions& opt) {
    require_section(cfg.teacher.has_value(), "teacher", "train-teacher");
    const TeacherSection& ts = *cfg.teacher;
    const DatasetBundle data = load_dataset(cfg.dataset);
    RunDir dir(cfg, cfg.run.out / "train-teacher", "train-teacher");

    const std::uint64_t seed = cfg.run.seeds.front();
    std::vector<MetricsRecord> records;
    Network net = make_network(ts.arch, data.train.class_count, seed);
    log(opt, "train-teacher: " + std::to_string(ts.train.epochs) + " epochs on " + std::to_string(data.train.size()) +
                 " samples");
    net = train_network(std::move(net), data.train, data.val.size() ? &data.val : nullptr, ts.train, seed,
                        ts.augmentation, &records);
    write_metrics_csv(dir.file("metrics.csv"), records);
    save_checkpoint(to_checkpoint(net, {{"seed", seed}, {"config_hash", cfg.hash()}}), dir.file("teacher.ckpt"));

    json summary;
    summary["seed"] = seed;
    summary["test_accuracy"] = top1_accuracy(net, data.test);
    if (data.val.size()) summary["val_accuracy"] = top1_accuracy(net, data.val);
    summary["train_accuracy"] = top1_accuracy(net, data.train);
    summary["parameters"] = parameter_count(std::as_const(net).named_parameters());
    log(opt, "train-teacher: test accuracy " + format_double(summary["test_accuracy"].get<double>()));
    return dir.finish(summary);
}

fs::path cmd_self_analyze(const ExperimentConfig& cfg, const PipelineOptions& opt) {
    require_file(teacher_checkpoint_path(cfg), "teacher checkpoint");
    const DatasetBundle data = load_dataset(cfg.dataset);
    const Network teacher = load_teacher(cfg, data.train.class_count);
    RunDir dir(cfg, cfg.run.out / "self-analyze", "self-analyze");

    const std::uint64_t seed = cfg.run.seeds.front();
    const SelfAnalysisOutcome out = self_analyze_once(cfg, teacher, data, seed, opt);
    const TeacherBundle& t = out.result.bundle;
    write_metrics_csv(dir.file("metrics.csv"), out.result.records);
    save_checkpoint(to_checkpoint(t, {{"seed", seed},
                                      {"tau_akb", cfg.granularity.tau_akb},
                                      {"tau_dkb", cfg.granularity.tau_dkb},
                                      {"config_hash", cfg.hash()}}),
                    dir.file("teacher_sa.ckpt"));
    const json agreement = {{"train", agreement_json(out.train_agreement)}, {"val", agreement_json(out.val_agreement)}};
    write_json_atomic(dir.file("branch_agreement.json"), agreement);

    json summary;
    summary["seed"] = seed;
    summary["spec"] = to_json(t.spec);
    summary["tau_akb"] = cfg.granularity.tau_akb;
    summary["tau_dkb"] = cfg.granularity.tau_dkb;
    summary["branch_agreement"] = agreement;
    summary["frozen_checksum"] = t.frozen_checksum();
    summary["teacher_test_accuracy"] = top1_accuracy(teacher, data.test);
    log(opt, "self-analyze: train agreement akb=" + format_double(out.train_agreement.akb_agreement) +
                 " dkb=" + format_double(out.train_agreement.dkb_agreement));
    return dir.finish(summary);
}

fs::path cmd_distill(const ExperimentConfig& cfg, const PipelineOptions& opt) {
    require_section(cfg.student.has_value(), "student", "distill");
    require_file(teacher_sa_checkpoint_path(cfg), "T_SA checkpoint");
    const DistillScheme scheme = cfg.distill.value_or(DistillSection{}).scheme;
    const DatasetBundle data = load_dataset(cfg.dataset);
    const TeacherBundle t_sa = load_teacher_sa(cfg);
    RunDir dir(cfg, distill_run_dir(cfg, scheme), "distill");

    json summary;
    summary["scheme"] = to_string(scheme);
    summary["hook"] = cfg.distill.value_or(DistillSection{}).hook;
    const DistillTemperatures temps = cfg.distill_temperatures();
    summary["temperatures"] = {{"tau_ak", temps.tau_ak.value()}, {"tau_nk", temps.tau_nk.value()},
                               {"tau_dk", temps.tau_dk.value()}};
    summary["teacher_test_accuracy"] = top1_accuracy(Network{t_sa.backbone, t_sa.classifier}, data.test);
    json runs = json::array();
    double acc_sum = 0.0;
    for (const std::uint64_t seed : cfg.run.seeds) {
        log(opt, "distill: scheme " + to_string(scheme) + " seed " + std::to_string(seed));
        const DistillOutcome out = distill_once(cfg, t_sa, data, scheme, seed, opt);
        const fs::path sd = dir.path() / ("seed-" + std::to_string(seed));
        fs::create_directories(sd);
        write_metrics_csv(sd / "metrics.csv", out.result.records);
        const json extra = {{"seed", seed}, {"scheme", to_string(scheme)}, {"config_hash", cfg.hash()}};
        save_checkpoint(to_checkpoint(out.result.student, extra), sd / "student.ckpt");
        save_checkpoint(to_checkpoint(strip_encoders(out.result.student), extra), sd / "student_stripped.ckpt");

        json r;
        r["seed"] = seed;
        r["test_accuracy"] = out.test_accuracy;
        r["native_head_accuracy"] = out.native_head_accuracy;
        r["early_loss_stability"] = out.stability;
        r["loss_decomposition"] = out.result.records.back().values;
        runs.push_back(r);
        acc_sum += out.test_accuracy;
        log(opt, "distill: seed " + std::to_string(seed) + " test accuracy " + format_double(out.test_accuracy));
    }
    summary["runs"] = runs;
    summary["mean_test_accuracy"] = acc_sum / static_cast<double>(cfg.run.seeds.size());
    summary["stability_fraction"] = cfg.distill.value_or(DistillSection{}).stability_fraction;
    return dir.finish(summary);
}

fs::path cmd_evaluate(const ExperimentConfig& cfg, const EvaluateInputs& in, const PipelineOptions& opt) {
    const EvaluateSection ev = cfg.evaluate.value_or(EvaluateSection{});
    const fs::path teacher_path = in.teacher.value_or(teacher_sa_checkpoint_path(cfg));
    std::vector<fs::path> students = in.students;
    if (students.empty()) {
        const DistillScheme scheme = cfg.distill.value_or(DistillSection{}).scheme;
        for (const std::uint64_t seed : cfg.run.seeds) students.push_back(student_checkpoint_path(cfg, scheme, seed));
    }
    require_file(teacher_path, "teacher checkpoint");
    for (const auto& s : students) require_file(s, "student checkpoint");

    const DatasetBundle data = load_dataset(cfg.dataset);
    const EvalModel teacher = load_eval_model(teacher_path);
    std::vector<EvalModel> models;
    for (const auto& s : students) models.push_back(load_eval_model(s));
    RunDir dir(cfg, cfg.run.out / "evaluate", "evaluate");

    std::vector<std::size_t> first(std::min(ev.max_samples, data.test.size()));
    std::iota(first.begin(), first.end(), std::size_t{0});
    const DatasetSplit sample = subset(data.test, first, "test_sample");

    json report;
    report["teacher"] = {{"checkpoint", teacher_path.string()}, {"kind", teacher.kind},
                         {"test_accuracy", top1_accuracy(teacher.net, data.test)}};
    const NoiseCurve t_noise = noise_robustness_sweep(teacher.net, data.test, ev.noise_sigmas, ev.noise_seed);
    write_noise_csv(dir.file("noise_curve-teacher.csv"), t_noise);
    report["teacher"]["noise"] = noise_json(t_noise);

    json entries = json::array();
    for (std::size_t i = 0; i < models.size(); ++i) {
        const std::string tag = "student" + std::to_string(i);
        log(opt, "evaluate: " + students[i].string());
        json e = compare_models(teacher, models[i], sample, ev, dir.path(), tag);
        e["checkpoint"] = students[i].string();
        e["kind"] = models[i].kind;
        e["test_accuracy"] = top1_accuracy(models[i].net, data.test);
        const NoiseCurve c = noise_robustness_sweep(models[i].net, data.test, ev.noise_sigmas, ev.noise_seed);
        write_noise_csv(dir.file("noise_curve-" + tag + ".csv"), c);
        e["noise"] = noise_json(c);
        entries.push_back(e);
    }
    report["students"] = entries;
    report["similarity_samples"] = sample.size();
    report["cka_estimator"] = "biased HSIC, centered Gram matrices, RBF bandwidth = median pairwise distance";
    report["provenance"] = provenance(cfg, "evaluate");
    write_json_atomic(dir.file("report.json"), report);
    return dir.finish(report);
}

fs::path cmd_sweep(const ExperimentConfig& cfg, const PipelineOptions& opt) {
    require_section(cfg.sweep.has_value(), "sweep", "sweep");
    require_section(cfg.student.has_value(), "student", "sweep");
    const SweepSection& sw = *cfg.sweep;
    const std::size_t classes = cfg.num_classes();
    if (sw.seeds_per_point > cfg.run.seeds.size())
        throw ConfigError("sweep.seeds_per_point", std::to_string(sw.seeds_per_point) + " exceeds the number of seeds (" +
                                                       std::to_string(cfg.run.seeds.size()) + ")");

    struct Point {
        ExperimentConfig cfg;
        json key;
    };
    std::vector<Point> points;
    json rejected = json::array();
    auto consider = [&](ExperimentConfig c, json key) {
        std::optional<std::string> why = validate_spec(c.spec());
        if (!why && !(c.granularity.tau_akb < c.granularity.tau_dkb)) why = "tau_akb < tau_dkb fails";
        if (why) {
            if (sw.strict) throw ConfigError("sweep", "grid point " + key.dump() + " is invalid: " + *why);
            key["reason"] = *why;
            rejected.push_back(key);
            return;
        }
        points.push_back({std::move(c), std::move(key)});
    };
    if (sw.axis == SweepAxis::Dims) {
        for (std::size_t ak : sw.ak_dims)
            for (std::size_t dk : sw.dk_dims) {
                ExperimentConfig c = cfg;
                c.granularity.dim_ak = ak;
                c.granularity.dim_dk = dk;
                consider(std::move(c), {{"dim_ak", ak}, {"dim_dk", dk}});
            }
    } else {
        for (double ak : sw.ak_temps)
            for (double dk : sw.dk_temps) {
                ExperimentConfig c = cfg;
                c.granularity.tau_akb = ak;
                c.granularity.tau_dkb = dk;
                consider(std::move(c), {{"tau_akb", ak}, {"tau_dkb", dk}});
            }
    }
    if (points.empty()) throw ConfigError("sweep", "no valid grid point for " + std::to_string(classes) + " classes");

    require_file(teacher_checkpoint_path(cfg), "teacher checkpoint");
    const DatasetBundle data = load_dataset(cfg.dataset);
    const Network teacher = load_teacher(cfg, data.train.class_count);
    const std::string axis = sw.axis == SweepAxis::Dims ? "dims" : "temperatures";
    RunDir dir(cfg, cfg.run.out / ("sweep-" + axis), "sweep");
    const DistillScheme scheme = cfg.distill.value_or(DistillSection{}).scheme;
    const std::vector<std::uint64_t> seeds(cfg.run.seeds.begin(), cfg.run.seeds.begin() + sw.seeds_per_point);

    std::ostringstream csv;
    csv << (sw.axis == SweepAxis::Dims ? "dim_ak,dim_dk" : "tau_akb,tau_dkb") << ",mean_test_accuracy";
    for (auto s : seeds) csv << ",seed_" << s;
    csv << '\n';
    json rows = json::array();
    for (const Point& p : points) {
        double sum = 0.0;
        std::vector<double> accs;
        for (const std::uint64_t seed : seeds) {
            log(opt, "sweep: point " + p.key.dump() + " seed " + std::to_string(seed));
            const SelfAnalysisOutcome sa = self_analyze_once(p.cfg, teacher, data, seed, {});
            const DistillOutcome d = distill_once(p.cfg, sa.result.bundle, data, scheme, seed, {});
            accs.push_back(d.test_accuracy);
            sum += d.test_accuracy;
        }
        const double mean = sum / static_cast<double>(seeds.size());
        if (sw.axis == SweepAxis::Dims)
            csv << p.cfg.granularity.dim_ak << ',' << p.cfg.granularity.dim_dk;
        else
            csv << format_double(p.cfg.granularity.tau_akb) << ',' << format_double(p.cfg.granularity.tau_dkb);
        csv << ',' << format_double(mean);
        for (double a : accs) csv << ',' << format_double(a);
        csv << '\n';
        json row = p.key;
        row["mean_test_accuracy"] = mean;
        row["test_accuracy"] = accs;
        rows.push_back(row);
    }
    write_text_atomic(dir.file("sweep.csv"), csv.str());
    return dir.finish({{"axis", axis}, {"scheme", to_string(scheme)}, {"points", rows}, {"rejected", rejected},
                       {"seeds_per_point", seeds.size()}});
}

fs::path cmd_transfer(const ExperimentConfig& cfg, const std::optional<fs::path>& student, const PipelineOptions& opt) {
    require_section(cfg.transfer.has_value(), "transfer", "transfer");
    const DistillScheme scheme = cfg.distill.value_or(DistillSection{}).scheme;
    const fs::path path = student.value_or(student_checkpoint_path(cfg, scheme, cfg.run.seeds.front()));
    require_file(path, "student checkpoint");
    const DatasetBundle source = load_dataset(cfg.dataset);
    const DatasetBundle target = load_dataset(cfg.transfer->dataset);
    const Network net = network_from_checkpoint(load_checkpoint(path));
    if (net.backbone.config().channels != target.train.images.shape().c ||
        net.backbone.config().height != target.train.images.shape().h ||
        net.backbone.config().width != target.train.images.shape().w)
        throw InvalidArgument("target images do not match the student's input shape");
    RunDir dir(cfg, cfg.run.out / "transfer", "transfer");

    const std::uint64_t seed = cfg.run.seeds.front();
    log(opt, "transfer: fitting a fresh classifier on " + std::to_string(target.train.size()) + " target samples");
    const TransferResult r = transfer_finetune(net, target.train, target.test, cfg.transfer->schedule, seed);
    json report;
    report["student_checkpoint"] = path.string();
    report["source_accuracy"] = top1_accuracy(net, source.test);
    report["target_accuracy"] = r.accuracy;
    report["target_classes"] = target.train.class_count;
    report["backbone_checksum_before"] = r.backbone_checksum_before;
    report["backbone_checksum_after"] = r.backbone_checksum_after;
    report["backbone_unchanged"] = r.backbone_checksum_before == r.backbone_checksum_after;
    report["provenance"] = provenance(cfg, "transfer");
    write_json_atomic(dir.file("report.json"), report);
    return dir.finish(report);
}

fs::path cmd_noise(const ExperimentConfig& cfg, const std::optional<fs::path>& model, const PipelineOptions& opt) {
    const EvaluateSection ev = cfg.evaluate.value_or(EvaluateSection{});
    const DistillScheme scheme = cfg.distill.value_or(DistillSection{}).scheme;
    const fs::path path = model.value_or(student_checkpoint_path(cfg, scheme, cfg.run.seeds.front()));
    require_file(path, "model checkpoint");
    const DatasetBundle data = load_dataset(cfg.dataset);
    const Network net = network_from_checkpoint(load_checkpoint(path));
    RunDir dir(cfg, cfg.run.out / "noise", "noise");

    log(opt, "noise: " + std::to_string(ev.noise_sigmas.size()) + " sigmas on " + std::to_string(data.test.size()) +
                 " test samples");
    const NoiseCurve c = noise_robustness_sweep(net, data.test, ev.noise_sigmas, ev.noise_seed);
    write_noise_csv(dir.file("noise_curve.csv"), c);
    json report = noise_json(c);
    report["checkpoint"] = path.string();
    report["noise_seed"] = ev.noise_seed;
    report["provenance"] = provenance(cfg, "noise");
    write_json_atomic(dir.file("report.json"), report);
    return dir.finish(report);
}

std::vector<fs::path> cmd_run(const ExperimentConfig& cfg, const PipelineOptions& opt) {
    std::vector<fs::path> dirs;
    if (cfg.teacher && !fs::exists(teacher_checkpoint_path(cfg))) dirs.push_back(cmd_train_teacher(cfg, opt));
    if (cfg.self_analyze) dirs.push_back(cmd_self_analyze(cfg, opt));
    if (cfg.distill) dirs.push_back(cmd_distill(cfg, opt));
    if (cfg.evaluate) dirs.push_back(cmd_evaluate(cfg, {}, opt));
    if (cfg.transfer) dirs.push_back(cmd_transfer(cfg, std::nullopt, opt));
    if (cfg.sweep) dirs.push_back(cmd_sweep(cfg, opt));
    return dirs;
}

} // namespace mgkd
