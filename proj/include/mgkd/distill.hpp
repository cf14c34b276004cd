#pragma once

// Student training under a self-analyzed teacher, with either the
// granularity-wise (GWD) or stable-excitation (SE) objective plus a
// pluggable base distillation loss.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mgkd/dataset.hpp"
#include "mgkd/distill_math.hpp"
#include "mgkd/metrics.hpp"
#include "mgkd/model.hpp"
#include "mgkd/optim.hpp"

namespace mgkd {

/// BaseOnly trains with the base hook alone; it is the plain-KD baseline arm.
enum class DistillScheme { GWD, SE, BaseOnly };

std::string to_string(DistillScheme s);
/// Accepts "gwd", "se", "base" (case-insensitive); the error lists them.
DistillScheme scheme_from_string(const std::string& s);

struct DistillTemperatures {
    Temperature tau_ak{2.5};
    Temperature tau_nk{4.0};
    Temperature tau_dk{8.0};

    TemperatureMap as_map() const;
};

struct HookResult {
    double value = 0.0;
    GradMap grads; ///< gradients w.r.t. the student heads it touches
};

struct BaseKDHook {
    std::string name;
    std::function<HookResult(const GranularityOutputs& teacher, const GranularityOutputs& student,
                             const LabelBatch& labels)>
        fn;
};

/// Always 0 with no gradient.
BaseKDHook null_hook();

/// hkd_loss(teacher f_nk, student f_nk, tau_nk) + (optionally) cross
/// entropy of the student f_nk against the labels.
BaseKDHook hkd_reference_hook(Temperature tau_nk, bool include_ce = true);

/// "null" or "hkd"; the error lists both.
BaseKDHook hook_by_name(const std::string& name, Temperature tau_nk, bool include_ce = true);

struct DistillConfig {
    DistillScheme scheme = DistillScheme::SE;
    DistillTemperatures temps;
    TermWeights weights;
    TrainSchedule schedule = default_student_schedule();
    std::uint64_t seed = 0;
    Augmentation augmentation;
};

struct DistillResult {
    StudentBundle student;
    std::vector<MetricsRecord> records;
};

/// Scheme loss on one batch of head outputs; base_kd comes from `hook`.
/// Teacher outputs must carry f_akb and f_dkb for SE.
CompositeLoss distill_batch_loss(DistillScheme scheme, const GranularityOutputs& teacher,
                                 const GranularityOutputs& student, const LabelBatch& labels,
                                 const DistillTemperatures& temps, const BaseKDHook& hook, const TermWeights& w = {});

/// Per epoch: lr, the scheme's loss terms and "total" (sample-weighted
/// training means), train_acc, and when `val` is non-null val_acc and
/// val_loss (total scheme loss on the validation split).
/// Throws InvalidArgument on a teacher/student spec mismatch and
/// NumericFailure as soon as any loss is non-finite.
DistillResult run_distillation(const TeacherBundle& t_sa, StudentBundle student, const DatasetSplit& train,
                               const DatasetSplit* val, const BaseKDHook& hook, const DistillConfig& cfg,
                               const MetricsSink& sink = {});

/// Total scheme loss averaged over a split.
double evaluate_distill_loss(const TeacherBundle& t_sa, const StudentBundle& student, const DatasetSplit& data,
                             const BaseKDHook& hook, const DistillConfig& cfg);

/// Population variance of the first ceil(fraction * size) values.
double early_loss_stability(std::span<const double> values, double fraction);

/// The named column of a record stream; throws if any record lacks it.
std::vector<double> metric_series(const std::vector<MetricsRecord>& records, const std::string& key);

} // namespace mgkd
