#pragma once

// Experiment configuration.
//
// Files use a TOML subset: [table] and [table.sub] headers, `key = value`
// pairs, '#' comments, and values that are basic strings, integers, floats,
// booleans or (possibly multi-line) arrays of those. See configs/desk.toml
// for every recognized key. Unknown keys are errors.
//
// Schedules are written at paper scale and multiplied by run.scale
// (default 1/6) when the config is loaded.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "mgkd/dataset.hpp"
#include "mgkd/distill.hpp"
#include "mgkd/eval.hpp"
#include "mgkd/model.hpp"
#include "mgkd/optim.hpp"
#include "mgkd/self_analyze.hpp"

namespace mgkd {

/// Parses the TOML subset into nested JSON objects. Errors are ConfigError
/// with field "line N".
nlohmann::json parse_toml(const std::string& text);

struct TeacherSection {
    BackboneConfig arch;
    std::filesystem::path checkpoint; ///< empty: <out>/train-teacher/teacher.ckpt
    TrainSchedule train;
    Augmentation augmentation;
};

struct StudentSection {
    BackboneConfig arch;
};

struct GranularitySection {
    std::size_t dim_ak = 0;
    std::size_t dim_dk = 0;
    double tau_akb = 2.5;
    double tau_dkb = 8.0;
};

struct SelfAnalyzeSection {
    std::filesystem::path checkpoint; ///< T_SA path; empty: <out>/self-analyze/teacher_sa.ckpt
    TrainSchedule schedule = default_branch_schedule();
    bool cache_features = false;
};

struct DistillSection {
    DistillScheme scheme = DistillScheme::SE;
    std::string hook = "hkd";
    bool include_ce = true;
    std::optional<double> tau_ak; ///< default tau_akb
    double tau_nk = 4.0;
    std::optional<double> tau_dk; ///< default tau_dkb
    TermWeights weights;
    TrainSchedule schedule = default_student_schedule();
    Augmentation augmentation;
    double stability_fraction = 0.25;
};

enum class CkaChoice { Linear, Rbf, Both };

struct EvaluateSection {
    CkaChoice cka = CkaChoice::Rbf;
    std::size_t max_samples = 500; ///< CKA and similarity use the first max_samples test images
    std::vector<double> noise_sigmas = default_noise_grid();
    std::uint64_t noise_seed = 1234;
    bool export_embeddings = false;
};

enum class SweepAxis { Dims, Temperatures };

struct SweepSection {
    SweepAxis axis = SweepAxis::Dims;
    std::vector<std::size_t> ak_dims{16, 32, 48, 64, 100};
    std::vector<std::size_t> dk_dims{100, 160, 200, 256, 512};
    std::vector<double> ak_temps{1.5, 2.0, 2.5, 3.0, 4.0};
    std::vector<double> dk_temps{4.0, 6.0, 8.0, 10.0, 15.0};
    std::size_t seeds_per_point = 2;
    bool strict = false; ///< fail instead of dropping invalid grid points
};

struct TransferSection {
    DatasetConfig dataset;
    TrainSchedule schedule;
};

struct RunSection {
    std::vector<std::uint64_t> seeds{0};
    std::filesystem::path out = "runs/default";
    double scale = 1.0 / 6.0;
};

struct ExperimentConfig {
    RunSection run;
    DatasetConfig dataset;
    std::optional<TeacherSection> teacher;
    std::optional<StudentSection> student;
    GranularitySection granularity;
    std::optional<SelfAnalyzeSection> self_analyze;
    std::optional<DistillSection> distill;
    std::optional<EvaluateSection> evaluate;
    std::optional<SweepSection> sweep;
    std::optional<TransferSection> transfer;

    std::string source_text; ///< original file contents
    nlohmann::json resolved; ///< parsed tree with CLI overrides applied

    std::size_t num_classes() const { return num_classes_for(dataset); }
    GranularitySpec spec() const { return {granularity.dim_ak, num_classes(), granularity.dim_dk}; }
    DistillTemperatures distill_temperatures() const;
    SelfAnalyzeConfig self_analyze_config(std::uint64_t seed) const;
    DistillConfig distill_config(std::uint64_t seed) const;
    /// FNV-1a 64 of resolved.dump() without run.out, as 16 hex digits.
    std::string hash() const;
};

struct ConfigOverrides {
    std::vector<std::uint64_t> seeds;
    std::optional<std::filesystem::path> out;
    std::optional<double> scale;
    std::optional<std::string> scheme;
    std::optional<std::string> hook;
    std::optional<std::string> sweep_axis;
};

/// Parses and fully validates. Every problem is a ConfigError naming the
/// offending field (e.g. "granularity.dim_ak").
ExperimentConfig parse_config(const std::string& text, const ConfigOverrides& overrides = {});
ExperimentConfig load_config(const std::filesystem::path& path, const ConfigOverrides& overrides = {});

/// Throws ConfigError naming the section when a subcommand needs it.
void require_section(bool present, const std::string& section, const std::string& command);

} // namespace mgkd
