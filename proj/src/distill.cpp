#include "mgkd/distill.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

#include "mgkd/eval.hpp"

namespace mgkd {
namespace {

LogitsBatch as_logits(const MatrixF& m) { return model_logits(m, "head"); }

MatrixF gather_rows(const MatrixF& m, std::span<const std::size_t> idx) {
    MatrixF out(idx.size(), m.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) std::copy(m.row(idx[i]).begin(), m.row(idx[i]).end(), out.row(i).begin());
    return out;
}

GranularityOutputs gather_outputs(const GranularityOutputs& all, std::span<const std::size_t> idx) {
    GranularityOutputs out;
    out.f_ak = gather_rows(all.f_ak, idx);
    out.f_nk = gather_rows(all.f_nk, idx);
    out.f_dk = gather_rows(all.f_dk, idx);
    if (all.f_akb) out.f_akb = gather_rows(*all.f_akb, idx);
    if (all.f_dkb) out.f_dkb = gather_rows(*all.f_dkb, idx);
    return out;
}

void append_rows(MatrixF& dst, std::size_t at, const MatrixF& src) {
    std::copy(src.storage().begin(), src.storage().end(), dst.data() + at * dst.cols());
}

// Teacher outputs for a whole split, batched.
GranularityOutputs teacher_outputs(const TeacherBundle& t, const Tensor& images) {
    const std::size_t n = images.batch();
    const std::size_t c = t.spec.num_classes;
    GranularityOutputs all;
    all.f_ak = MatrixF(n, t.spec.dim_ak);
    all.f_nk = MatrixF(n, c);
    all.f_dk = MatrixF(n, t.spec.dim_dk);
    all.f_akb = MatrixF(n, c);
    all.f_dkb = MatrixF(n, c);
    for (const auto& idx : ordered_batches(n, 256)) {
        const GranularityOutputs o = forward_teacher(t, gather_samples(images, idx));
        append_rows(all.f_ak, idx.front(), o.f_ak);
        append_rows(all.f_nk, idx.front(), o.f_nk);
        append_rows(all.f_dk, idx.front(), o.f_dk);
        append_rows(*all.f_akb, idx.front(), *o.f_akb);
        append_rows(*all.f_dkb, idx.front(), *o.f_dkb);
    }
    return all;
}

void add_into(GradMap& dst, const GradMap& src) {
    for (const auto& [g, m] : src) {
        auto it = dst.find(g);
        if (it == dst.end()) {
            dst.emplace(g, m);
            continue;
        }
        if (!it->second.same_shape(m)) throw InvalidArgument("hook gradient shape mismatch at " + to_string(g));
        for (std::size_t i = 0; i < m.size(); ++i) it->second.data()[i] += m.data()[i];
    }
}

MatrixF grad_or_zero(const GradMap& grads, Granularity g, std::size_t rows, std::size_t cols) {
    const auto it = grads.find(g);
    if (it == grads.end()) return MatrixF(rows, cols);
    return it->second.cast<float>();
}

void require_finite(double v, const std::string& what) {
    if (!std::isfinite(v)) throw NumericFailure("non-finite " + what);
}

void check_pair(const TeacherBundle& t, const StudentBundle& s, const DatasetSplit& data) {
    if (!(t.spec == s.spec))
        throw InvalidArgument("student heads (" + std::to_string(s.spec.dim_ak) + ", " + std::to_string(s.spec.num_classes) +
                              ", " + std::to_string(s.spec.dim_dk) + ") do not match teacher heads (" +
                              std::to_string(t.spec.dim_ak) + ", " + std::to_string(t.spec.num_classes) + ", " +
                              std::to_string(t.spec.dim_dk) + ")");
    if (data.class_count != t.spec.num_classes)
        throw InvalidArgument("split has " + std::to_string(data.class_count) + " classes, teacher has " +
                              std::to_string(t.spec.num_classes));
}

} // namespace

std::string to_string(DistillScheme s) {
    switch (s) {
    case DistillScheme::GWD: return "gwd";
    case DistillScheme::SE: return "se";
    case DistillScheme::BaseOnly: return "base";
    }
    return "?";
}

DistillScheme scheme_from_string(const std::string& s) {
    std::string k = s;
    std::transform(k.begin(), k.end(), k.begin(), [](unsigned char c) { return std::tolower(c); });
    if (k == "gwd" || k == "mag") return DistillScheme::GWD;
    if (k == "se" || k == "mas") return DistillScheme::SE;
    if (k == "base") return DistillScheme::BaseOnly;
    throw InvalidArgument("unknown scheme \"" + s + "\"; valid options: {gwd, se, base}");
}

TemperatureMap DistillTemperatures::as_map() const {
    return {{Granularity::AK, tau_ak}, {Granularity::NK, tau_nk}, {Granularity::DK, tau_dk}};
}

BaseKDHook null_hook() {
    return {"null", [](const GranularityOutputs&, const GranularityOutputs&, const LabelBatch&) { return HookResult{}; }};
}

BaseKDHook hkd_reference_hook(Temperature tau_nk, bool include_ce) {
    return {include_ce ? "hkd" : "hkd_no_ce",
            [tau_nk, include_ce](const GranularityOutputs& t, const GranularityOutputs& s, const LabelBatch& y) {
                const LogitsBatch student = as_logits(s.f_nk);
                LossGrad kd = hkd_loss_grad(as_logits(t.f_nk), student, tau_nk);
                if (include_ce) {
                    const LossGrad ce = cross_entropy_grad(student, y);
                    kd.value += ce.value;
                    for (std::size_t i = 0; i < kd.grad.size(); ++i) kd.grad.data()[i] += ce.grad.data()[i];
                }
                HookResult r{kd.value, {}};
                r.grads.emplace(Granularity::NK, std::move(kd.grad));
                return r;
            }};
}

BaseKDHook hook_by_name(const std::string& name, Temperature tau_nk, bool include_ce) {
    if (name == "null") return null_hook();
    if (name == "hkd") return hkd_reference_hook(tau_nk, include_ce);
    throw InvalidArgument("unknown hook \"" + name + "\"; valid options: {null, hkd}");
}

CompositeLoss distill_batch_loss(DistillScheme scheme, const GranularityOutputs& teacher,
                                 const GranularityOutputs& student, const LabelBatch& labels,
                                 const DistillTemperatures& temps, const BaseKDHook& hook, const TermWeights& w) {
    const HookResult base = hook.fn ? hook.fn(teacher, student, labels) : HookResult{};
    require_finite(base.value, "base loss from hook \"" + hook.name + "\"");
    if (base.value < 0.0) throw NumericFailure("hook \"" + hook.name + "\" returned a negative loss");

    CompositeLoss out;
    if (scheme == DistillScheme::BaseOnly) {
        out.terms["base_kd"] = base.value;
        out.total = base.value;
    } else {
        const HeadMap t{{Granularity::AK, as_logits(teacher.f_ak)},
                        {Granularity::NK, as_logits(teacher.f_nk)},
                        {Granularity::DK, as_logits(teacher.f_dk)}};
        const HeadMap s{{Granularity::AK, as_logits(student.f_ak)},
                        {Granularity::NK, as_logits(student.f_nk)},
                        {Granularity::DK, as_logits(student.f_dk)}};
        if (scheme == DistillScheme::GWD) {
            out = gwd_loss(t, s, temps.as_map(), base.value, w);
        } else {
            if (!teacher.f_akb || !teacher.f_dkb) throw InvalidArgument("SE needs teacher branch outputs f_akb and f_dkb");
            const BranchLogits branches{as_logits(*teacher.f_akb), as_logits(*teacher.f_dkb)};
            out = se_loss(t, branches, s, temps.as_map(), base.value, w);
        }
    }
    add_into(out.grads, base.grads);
    require_finite(out.total, "distillation loss");
    return out;
}

DistillResult run_distillation(const TeacherBundle& t_sa, StudentBundle student, const DatasetSplit& train,
                               const DatasetSplit* val, const BaseKDHook& hook, const DistillConfig& cfg,
                               const MetricsSink& sink) {
    cfg.schedule.validate();
    if (train.size() == 0) throw InvalidArgument("distillation needs a non-empty training split");
    check_pair(t_sa, student, train);
    if (val && val->size() > 0) check_pair(t_sa, student, *val);

    const std::uint64_t teacher_before = parameter_checksum(t_sa.named_parameters());
    std::mt19937_64 rng(cfg.seed);

    // Without augmentation the teacher sees identical inputs every epoch.
    const bool cache = !cfg.augmentation.enabled();
    GranularityOutputs cached;
    if (cache) cached = teacher_outputs(t_sa, train.images);

    DistillResult result{std::move(student), {}};
    StudentBundle& s = result.student;
    Sgd opt(s.named_parameters(), cfg.schedule);
    const double n_total = static_cast<double>(train.size());
    const GranularitySpec& spec = t_sa.spec;

    for (int epoch = 0; epoch < cfg.schedule.epochs; ++epoch) {
        opt.set_lr(cfg.schedule.lr_at(epoch));
        std::map<std::string, double> sums;
        std::size_t hits = 0;
        for (const auto& idx : epoch_batches(train.size(), cfg.schedule.batch_size, rng)) {
            Tensor x = train.gather(idx);
            augment_in_place(x, cfg.augmentation, rng);
            const LabelBatch y = train.gather_labels(idx);
            const GranularityOutputs t_out = cache ? gather_outputs(cached, idx) : forward_teacher(t_sa, x);

            s.zero_grad();
            const GranularityOutputs s_out = s.forward_train(x);
            CompositeLoss loss;
            try {
                loss = distill_batch_loss(cfg.scheme, t_out, s_out, y, cfg.temps, hook, cfg.weights);
            } catch (const NumericFailure& e) {
                throw NumericFailure(std::string(e.what()) + " at epoch " + std::to_string(epoch));
            }
            const std::size_t n = idx.size();
            s.backward(grad_or_zero(loss.grads, Granularity::AK, n, spec.dim_ak),
                       grad_or_zero(loss.grads, Granularity::NK, n, spec.num_classes),
                       grad_or_zero(loss.grads, Granularity::DK, n, spec.dim_dk));
            opt.step();

            const double w = static_cast<double>(n) / n_total;
            for (const auto& [k, v] : loss.terms) sums[k] += w * v;
            sums["total"] += w * loss.total;
            for (std::size_t i = 0; i < n; ++i)
                if (argmax(s_out.f_nk.row(i)) == static_cast<std::size_t>(y[i])) ++hits;
        }

        MetricsRecord rec{epoch, opt.lr(), std::move(sums)};
        rec.values["train_acc"] = static_cast<double>(hits) / n_total;
        if (val && val->size() > 0) {
            rec.values["val_acc"] = top1_accuracy(strip_encoders(s), *val);
            rec.values["val_loss"] = evaluate_distill_loss(t_sa, s, *val, hook, cfg);
        }
        if (sink) sink(rec);
        result.records.push_back(std::move(rec));
    }

    if (parameter_checksum(t_sa.named_parameters()) != teacher_before)
        throw std::logic_error("distillation modified teacher parameters");
    return result;
}

double evaluate_distill_loss(const TeacherBundle& t_sa, const StudentBundle& student, const DatasetSplit& data,
                             const BaseKDHook& hook, const DistillConfig& cfg) {
    if (data.size() == 0) throw InvalidArgument("distillation loss of an empty split is undefined");
    check_pair(t_sa, student, data);
    double total = 0.0;
    for (const auto& idx : ordered_batches(data.size(), 256)) {
        const Tensor x = data.gather(idx);
        const CompositeLoss l = distill_batch_loss(cfg.scheme, forward_teacher(t_sa, x), forward_student(student, x),
                                                   data.gather_labels(idx), cfg.temps, hook, cfg.weights);
        total += l.total * static_cast<double>(idx.size());
    }
    return total / static_cast<double>(data.size());
}

double early_loss_stability(std::span<const double> values, double fraction) {
    if (values.empty()) throw InvalidArgument("loss stability needs at least one record");
    if (!(fraction > 0.0 && fraction <= 1.0)) throw InvalidArgument("stability fraction must lie in (0, 1]");
    const auto k = std::min(values.size(),
                            static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(values.size()) - 1e-12)));
    const auto prefix = values.first(std::max<std::size_t>(k, 1));
    double mean = 0.0;
    for (double v : prefix) mean += v;
    mean /= static_cast<double>(prefix.size());
    double var = 0.0;
    for (double v : prefix) var += (v - mean) * (v - mean);
    return var / static_cast<double>(prefix.size());
}

std::vector<double> metric_series(const std::vector<MetricsRecord>& records, const std::string& key) {
    std::vector<double> out;
    out.reserve(records.size());
    for (const auto& r : records) {
        const auto it = r.values.find(key);
        if (it == r.values.end()) throw InvalidArgument("epoch " + std::to_string(r.epoch) + " has no \"" + key + "\"");
        out.push_back(it->second);
    }
    return out;
}

} // namespace mgkd
