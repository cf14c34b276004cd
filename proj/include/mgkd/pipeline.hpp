#pragma once

// Subcommand implementations. Each writes one run directory under
// run.out and returns its path. A run directory holds
//
//   config.toml   the config file as given
//   metrics.csv   per-epoch records (training commands)
//   *.ckpt        checkpoints
//   *.csv/*.json  command-specific reports
//   summary.json  written last and atomically; its presence marks the
//                 directory complete, and complete directories are never
//                 overwritten
//
// Default locations (relative to run.out):
//   train-teacher/teacher.ckpt
//   self-analyze/teacher_sa.ckpt
//   distill-<scheme>/seed-<s>/{student.ckpt, student_stripped.ckpt}

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mgkd/config.hpp"

namespace mgkd {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitMissingArtifact = 3;
inline constexpr int kExitNumeric = 4;

/// Maps an exception to the documented exit code.
int exit_code_for(const std::exception& e);

struct PipelineOptions {
    std::ostream* log = nullptr; ///< progress lines; null for silence
};

std::filesystem::path teacher_checkpoint_path(const ExperimentConfig& cfg);
std::filesystem::path teacher_sa_checkpoint_path(const ExperimentConfig& cfg);
std::filesystem::path distill_run_dir(const ExperimentConfig& cfg, DistillScheme scheme);
std::filesystem::path student_checkpoint_path(const ExperimentConfig& cfg, DistillScheme scheme, std::uint64_t seed);

std::filesystem::path cmd_train_teacher(const ExperimentConfig& cfg, const PipelineOptions& opt = {});
std::filesystem::path cmd_self_analyze(const ExperimentConfig& cfg, const PipelineOptions& opt = {});
std::filesystem::path cmd_distill(const ExperimentConfig& cfg, const PipelineOptions& opt = {});

struct EvaluateInputs {
    std::optional<std::filesystem::path> teacher;  ///< default: T_SA checkpoint
    std::vector<std::filesystem::path> students;   ///< default: every seed of the configured scheme
};
std::filesystem::path cmd_evaluate(const ExperimentConfig& cfg, const EvaluateInputs& in,
                                   const PipelineOptions& opt = {});

std::filesystem::path cmd_sweep(const ExperimentConfig& cfg, const PipelineOptions& opt = {});

std::filesystem::path cmd_transfer(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& student,
                                   const PipelineOptions& opt = {});

std::filesystem::path cmd_noise(const ExperimentConfig& cfg, const std::optional<std::filesystem::path>& model,
                                const PipelineOptions& opt = {});

/// Runs every stage whose section is present, in pipeline order:
/// train-teacher (when [teacher.train] exists and no teacher checkpoint is
/// found), self-analyze, distill, evaluate, transfer, sweep.
std::vector<std::filesystem::path> cmd_run(const ExperimentConfig& cfg, const PipelineOptions& opt = {});

} // namespace mgkd
