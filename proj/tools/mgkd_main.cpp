// mgkd: experiment driver for multi-granularity distillation.
//
//   mgkd train-teacher --config desk.toml
//   mgkd self-analyze  --config desk.toml
//   mgkd distill       --config desk.toml --scheme se --seed 0 --seed 1
//   mgkd evaluate      --config desk.toml [--teacher T.ckpt] [--student S.ckpt ...]
//   mgkd sweep         --config desk.toml --axis dims
//   mgkd transfer      --config desk.toml [--student S.ckpt]
//   mgkd noise         --config desk.toml [--model M.ckpt]
//   mgkd run           --config desk.toml
//
// Exit codes: 0 ok, 2 config error, 3 missing artifact, 4 non-finite loss, 1 other.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mgkd/checkpoint.hpp"
#include "mgkd/kernels.hpp"
#include "mgkd/pipeline.hpp"

namespace {

struct CommonFlags {
    std::string config;
    std::vector<std::uint64_t> seeds;
    std::string out;
    std::optional<double> scale;
    std::string scheme;
    std::string hook;
    bool quiet = false;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config, "Experiment config (TOML)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--seed", f.seeds, "Seed; repeat for several runs (overrides run.seeds)");
    cmd->add_option("--out", f.out, "Output root (overrides run.out)");
    cmd->add_option("--scale", f.scale, "Schedule multiplier (overrides run.scale)");
    cmd->add_option("--scheme", f.scheme, "Distillation scheme")->check(CLI::IsMember({"gwd", "se", "base"}));
    cmd->add_option("--hook", f.hook, "Base distillation hook {null, hkd}");
    cmd->add_flag("--quiet", f.quiet, "No progress output");
}

mgkd::ConfigOverrides overrides_from(const CommonFlags& f) {
    mgkd::ConfigOverrides o;
    o.seeds = f.seeds;
    if (!f.out.empty()) o.out = f.out;
    o.scale = f.scale;
    if (!f.scheme.empty()) o.scheme = f.scheme;
    if (!f.hook.empty()) o.hook = f.hook;
    return o;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-granularity knowledge distillation experiments"};
    app.require_subcommand(1);
    app.set_version_flag("--version", mgkd::code_version());

    CommonFlags f;
    std::optional<std::string> teacher, single;
    std::vector<std::string> students;
    std::string axis;

    auto* train = app.add_subcommand("train-teacher", "Train the teacher network with cross entropy");
    auto* self = app.add_subcommand("self-analyze", "Attach and train the abstracted/detailed branches");
    auto* distill = app.add_subcommand("distill", "Distill a student from the self-analyzed teacher");
    auto* evaluate = app.add_subcommand("evaluate", "Accuracy, similarity, CKA, correlation and noise reports");
    auto* sweep = app.add_subcommand("sweep", "Ablation over encoder dimensions or temperatures");
    auto* transfer = app.add_subcommand("transfer", "Frozen-backbone transfer to a target dataset");
    auto* noise = app.add_subcommand("noise", "Gaussian-noise robustness curve for one checkpoint");
    auto* run = app.add_subcommand("run", "Every stage whose config section is present");
    for (auto* c : {train, self, distill, evaluate, sweep, transfer, noise, run}) add_common(c, f);
    evaluate->add_option("--teacher", teacher, "Reference checkpoint (default: T_SA)");
    evaluate->add_option("--student", students, "Compared checkpoint; repeatable");
    sweep->add_option("--axis", axis, "Sweep axis")->check(CLI::IsMember({"dims", "temperatures"}));
    transfer->add_option("--student", single, "Student checkpoint");
    noise->add_option("--model", single, "Checkpoint to evaluate");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : mgkd::kExitConfig;
    }

    try {
        mgkd::ConfigOverrides o = overrides_from(f);
        if (!axis.empty()) o.sweep_axis = axis;
        const mgkd::ExperimentConfig cfg = mgkd::load_config(f.config, o);
        mgkd::PipelineOptions opt;
        if (!f.quiet) {
            opt.log = &std::cerr;
            std::cerr << "kernels: " << mgkd::kernels::active().name << ", config " << cfg.hash() << '\n';
        }

        std::vector<std::filesystem::path> dirs;
        if (*train) dirs.push_back(mgkd::cmd_train_teacher(cfg, opt));
        if (*self) dirs.push_back(mgkd::cmd_self_analyze(cfg, opt));
        if (*distill) dirs.push_back(mgkd::cmd_distill(cfg, opt));
        if (*evaluate) {
            mgkd::EvaluateInputs in;
            if (teacher) in.teacher = *teacher;
            for (const auto& s : students) in.students.emplace_back(s);
            dirs.push_back(mgkd::cmd_evaluate(cfg, in, opt));
        }
        if (*sweep) dirs.push_back(mgkd::cmd_sweep(cfg, opt));
        if (*transfer || *noise) {
            std::optional<std::filesystem::path> p;
            if (single) p = *single;
            dirs.push_back(*transfer ? mgkd::cmd_transfer(cfg, p, opt) : mgkd::cmd_noise(cfg, p, opt));
        }
        if (*run) dirs = mgkd::cmd_run(cfg, opt);
        for (const auto& d : dirs) std::cout << d.string() << '\n';
        return mgkd::kExitOk;
    } catch (const mgkd::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return mgkd::kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return mgkd::exit_code_for(e);
    }
}
