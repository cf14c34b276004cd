#pragma once

// Teacher self-analysis: trains the abstracted and detailed branches of a
// TeacherBundle against the frozen teacher's native logits and the ground
// truth, leaving backbone and classifier untouched.

#include <cstdint>
#include <vector>

#include "mgkd/dataset.hpp"
#include "mgkd/distill_math.hpp"
#include "mgkd/metrics.hpp"
#include "mgkd/model.hpp"
#include "mgkd/optim.hpp"

namespace mgkd {

struct SelfAnalyzeConfig {
    Temperature tau_akb{2.5};
    Temperature tau_dkb{8.0};
    TrainSchedule schedule = default_branch_schedule();
    std::uint64_t seed = 0;
    /// Compute the frozen backbone's features once up front instead of per batch.
    bool cache_features = false;

    /// Requires tau_akb < tau_dkb and a valid schedule.
    void validate() const;
};

struct BranchAgreement {
    double akb_agreement = 0.0;
    double dkb_agreement = 0.0;
};

struct SelfAnalysisResult {
    TeacherBundle bundle;
    std::vector<MetricsRecord> records;
};

/// Per epoch: lr, ga_akb, ce_akb, ga_dkb, ce_dkb (sample-weighted means),
/// akb_agreement, dkb_agreement.
SelfAnalysisResult run_self_analysis(TeacherBundle teacher, const DatasetSplit& data, const SelfAnalyzeConfig& cfg,
                                     const MetricsSink& sink = {});

/// Fraction of samples whose branch argmax equals the classifier argmax.
BranchAgreement branch_agreement(const TeacherBundle& bundle, const DatasetSplit& data);

/// Sum over both branches of the self-analysis objective on a fixed batch.
double total_branch_loss(const TeacherBundle& bundle, const Tensor& images, const LabelBatch& labels,
                         const SelfAnalyzeConfig& cfg);

} // namespace mgkd
