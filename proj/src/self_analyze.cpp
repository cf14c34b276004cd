#include "mgkd/self_analyze.hpp"

#include <cmath>
#include <stdexcept>

#include "mgkd/eval.hpp"

namespace mgkd {

void SelfAnalyzeConfig::validate() const {
    if (!(tau_akb.value() < tau_dkb.value()))
        throw InvalidArgument("branch temperatures must satisfy tau_akb < tau_dkb (got " + std::to_string(tau_akb.value()) +
                              ", " + std::to_string(tau_dkb.value()) + ")");
    schedule.validate();
}

SelfAnalysisResult run_self_analysis(TeacherBundle teacher, const DatasetSplit& data, const SelfAnalyzeConfig& cfg,
                                     const MetricsSink& sink) {
    cfg.validate();
    if (data.size() == 0) throw InvalidArgument("self-analysis needs a non-empty training split");
    if (!teacher.frozen_parts.contains(part::kBackbone) || !teacher.frozen_parts.contains(part::kClassifier))
        throw InvalidArgument("self-analysis requires backbone and classifier to be frozen");
    if (data.class_count != teacher.spec.num_classes)
        throw InvalidArgument("dataset has " + std::to_string(data.class_count) + " classes, teacher has " +
                              std::to_string(teacher.spec.num_classes));

    const std::uint64_t frozen_before = teacher.frozen_checksum();
    std::mt19937_64 rng(cfg.seed);
    SelfAnalysisResult result{std::move(teacher), {}};
    TeacherBundle& t = result.bundle;
    Sgd opt(t.trainable_parameters(), cfg.schedule);

    Tensor cached;
    if (cfg.cache_features) cached = extract_features(t.backbone, data.images);
    const double n_total = static_cast<double>(data.size());

    for (int epoch = 0; epoch < cfg.schedule.epochs; ++epoch) {
        opt.set_lr(cfg.schedule.lr_at(epoch));
        double ga_akb = 0, ce_akb = 0, ga_dkb = 0, ce_dkb = 0;
        for (const auto& idx : epoch_batches(data.size(), cfg.schedule.batch_size, rng)) {
            const Tensor f = cfg.cache_features ? gather_samples(cached, idx)
                                                : t.backbone.forward(data.gather(idx));
            const LabelBatch y = data.gather_labels(idx);
            const LogitsBatch nk = model_logits(t.classifier.forward(f).as_matrix(), "classifier");

            opt.zero_grad();
            const Tensor ak = t.ake.forward_train(f);
            const Tensor dk = t.dke.forward_train(f);
            const LogitsBatch akb = model_logits(t.ak_adapter.forward_train(ak).as_matrix(), "AKB");
            const LogitsBatch dkb = model_logits(t.dk_adapter.forward_train(dk).as_matrix(), "DKB");

            // Both branches are optimized in the same step; they share no parameters.
            const LossGrad ga_a = granularity_analysis_loss_grad(nk, akb, cfg.tau_akb);
            const LossGrad ce_a = cross_entropy_grad(akb, y);
            const LossGrad ga_d = granularity_analysis_loss_grad(nk, dkb, cfg.tau_dkb);
            const LossGrad ce_d = cross_entropy_grad(dkb, y);
            const double total = ga_a.value + ce_a.value + ga_d.value + ce_d.value;
            if (!std::isfinite(total)) throw NumericFailure("non-finite self-analysis loss at epoch " + std::to_string(epoch));

            MatrixF g_akb = ga_a.grad.cast<float>();
            MatrixF g_dkb = ga_d.grad.cast<float>();
            for (std::size_t i = 0; i < g_akb.size(); ++i) g_akb.data()[i] += static_cast<float>(ce_a.grad.data()[i]);
            for (std::size_t i = 0; i < g_dkb.size(); ++i) g_dkb.data()[i] += static_cast<float>(ce_d.grad.data()[i]);
            t.ake.backward(t.ak_adapter.backward(Tensor::from_matrix(g_akb)));
            t.dke.backward(t.dk_adapter.backward(Tensor::from_matrix(g_dkb)));
            opt.step();

            const double w = static_cast<double>(idx.size()) / n_total;
            ga_akb += w * ga_a.value;
            ce_akb += w * ce_a.value;
            ga_dkb += w * ga_d.value;
            ce_dkb += w * ce_d.value;
        }
        const BranchAgreement agree = branch_agreement(t, data);
        MetricsRecord rec{epoch, opt.lr(), {}};
        rec.values = {{"ga_akb", ga_akb}, {"ce_akb", ce_akb}, {"ga_dkb", ga_dkb}, {"ce_dkb", ce_dkb},
                      {"akb_agreement", agree.akb_agreement}, {"dkb_agreement", agree.dkb_agreement}};
        if (sink) sink(rec);
        result.records.push_back(std::move(rec));
    }

    if (t.frozen_checksum() != frozen_before)
        throw std::logic_error("self-analysis modified frozen teacher parameters");
    return result;
}

BranchAgreement branch_agreement(const TeacherBundle& bundle, const DatasetSplit& data) {
    if (data.size() == 0) throw InvalidArgument("branch agreement needs a non-empty split");
    std::size_t akb = 0, dkb = 0;
    for (const auto& idx : ordered_batches(data.size(), 256)) {
        const GranularityOutputs out = forward_teacher(bundle, data.gather(idx));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            const std::size_t native = argmax(out.f_nk.row(i));
            if (argmax(out.f_akb->row(i)) == native) ++akb;
            if (argmax(out.f_dkb->row(i)) == native) ++dkb;
        }
    }
    const double n = static_cast<double>(data.size());
    return {static_cast<double>(akb) / n, static_cast<double>(dkb) / n};
}

double total_branch_loss(const TeacherBundle& bundle, const Tensor& images, const LabelBatch& labels,
                         const SelfAnalyzeConfig& cfg) {
    const GranularityOutputs out = forward_teacher(bundle, images);
    const LogitsBatch nk(out.f_nk.cast<double>());
    return self_analyze_loss(nk, LogitsBatch(out.f_akb->cast<double>()), cfg.tau_akb, labels) +
           self_analyze_loss(nk, LogitsBatch(out.f_dkb->cast<double>()), cfg.tau_dkb, labels);
}

} // namespace mgkd
