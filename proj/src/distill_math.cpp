#include "mgkd/distill_math.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mgkd {
namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (!a.same_shape(b))
        throw InvalidArgument(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                              std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                              std::to_string(b.cols()) + ")");
}

const LogitsBatch& head(const HeadMap& m, Granularity g, const char* which) {
    auto it = m.find(g);
    if (it == m.end()) throw InvalidArgument(std::string(which) + " is missing head " + to_string(g));
    return it->second;
}

Temperature temp(const TemperatureMap& m, Granularity g) {
    auto it = m.find(g);
    if (it == m.end()) throw InvalidArgument("temperature map is missing head " + to_string(g));
    return it->second;
}

void add_scaled(Matrix& dst, const Matrix& src, double w) {
    for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += w * src.data()[i];
}

Matrix scaled(Matrix m, double w) {
    for (auto& v : m.storage()) v *= w;
    return m;
}

} // namespace

Temperature::Temperature(double tau) : tau_(tau) {
    if (!(tau > 0.0) || !std::isfinite(tau))
        throw InvalidArgument("temperature must be positive and finite, got " + std::to_string(tau));
}

LogitsBatch::LogitsBatch(Matrix values) : values_(std::move(values)) {
    if (values_.rows() < 1) throw InvalidArgument("logits batch needs at least one row");
    if (values_.cols() < 2) throw InvalidArgument("logits batch needs at least two columns");
    for (double v : values_.storage())
        if (!std::isfinite(v)) throw InvalidArgument("logits batch contains a non-finite value");
}

ProbBatch::ProbBatch(Matrix values) : values_(std::move(values)) {
    if (values_.rows() < 1 || values_.cols() < 1) throw InvalidArgument("empty probability batch");
    for (std::size_t r = 0; r < values_.rows(); ++r) {
        double sum = 0.0;
        for (double v : values_.row(r)) {
            if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("probability outside [0,1]");
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-6)
            throw InvalidArgument("probability row " + std::to_string(r) + " sums to " + std::to_string(sum));
    }
}

LabelBatch::LabelBatch(std::vector<int> labels, std::size_t num_classes)
    : labels_(std::move(labels)), num_classes_(num_classes) {
    for (std::size_t i = 0; i < labels_.size(); ++i)
        if (labels_[i] < 0 || static_cast<std::size_t>(labels_[i]) >= num_classes_)
            throw InvalidArgument("label " + std::to_string(labels_[i]) + " at index " + std::to_string(i) +
                                  " outside [0, " + std::to_string(num_classes_) + ")");
}

std::string to_string(Granularity g) {
    switch (g) {
    case Granularity::AK: return "AK";
    case Granularity::NK: return "NK";
    case Granularity::DK: return "DK";
    }
    return "?";
}

ProbBatch softmax_temp(const LogitsBatch& logits, Temperature tau) {
    const Matrix& x = logits.values();
    Matrix out(x.rows(), x.cols());
    const double inv_tau = 1.0 / tau.value();
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto in = x.row(r);
        auto o = out.row(r);
        const double mx = *std::max_element(in.begin(), in.end());
        double sum = 0.0;
        for (std::size_t c = 0; c < in.size(); ++c) {
            o[c] = std::exp((in[c] - mx) * inv_tau);
            sum += o[c];
        }
        for (double& v : o) v /= sum;
    }
    return ProbBatch(std::move(out));
}

double kl_divergence(const ProbBatch& p, const ProbBatch& q) {
    require_same_shape(p.values(), q.values(), "kl_divergence");
    const Matrix& pm = p.values();
    const Matrix& qm = q.values();
    double total = 0.0;
    for (std::size_t r = 0; r < pm.rows(); ++r) {
        double row = 0.0;
        for (std::size_t c = 0; c < pm.cols(); ++c) {
            const double pc = pm(r, c);
            if (pc == 0.0) continue;
            row += pc * (std::log(pc) - std::log(std::max(qm(r, c), kKlEpsilon)));
        }
        total += row;
    }
    return total / static_cast<double>(pm.rows());
}

double hkd_loss(const LogitsBatch& f_t, const LogitsBatch& f_s, Temperature tau) {
    require_same_shape(f_t.values(), f_s.values(), "hkd_loss");
    const double t = tau.value();
    return t * t * kl_divergence(softmax_temp(f_t, tau), softmax_temp(f_s, tau));
}

LossGrad hkd_loss_grad(const LogitsBatch& f_t, const LogitsBatch& f_s, Temperature tau) {
    require_same_shape(f_t.values(), f_s.values(), "hkd_loss");
    const double t = tau.value();
    const ProbBatch p = softmax_temp(f_t, tau);
    const ProbBatch q = softmax_temp(f_s, tau);
    LossGrad out;
    out.value = t * t * kl_divergence(p, q);
    // d/ds of tau^2 * KL(p || softmax(s / tau)) = tau * (q - p), then / N.
    out.grad = Matrix(f_s.rows(), f_s.cols());
    const double scale = t / static_cast<double>(f_s.rows());
    for (std::size_t i = 0; i < out.grad.size(); ++i)
        out.grad.data()[i] = scale * (q.values().data()[i] - p.values().data()[i]);
    return out;
}

double cross_entropy(const LogitsBatch& f, const LabelBatch& y) { return cross_entropy_grad(f, y).value; }

LossGrad cross_entropy_grad(const LogitsBatch& f, const LabelBatch& y) {
    if (y.size() != f.rows())
        throw InvalidArgument("cross_entropy: " + std::to_string(y.size()) + " labels for " +
                              std::to_string(f.rows()) + " rows");
    for (int label : y.labels())
        if (static_cast<std::size_t>(label) >= f.cols())
            throw InvalidArgument("cross_entropy: label " + std::to_string(label) + " out of range for " +
                                  std::to_string(f.cols()) + " classes");
    const Matrix& x = f.values();
    LossGrad out;
    out.grad = Matrix(x.rows(), x.cols());
    const double inv_n = 1.0 / static_cast<double>(x.rows());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto in = x.row(r);
        const double mx = *std::max_element(in.begin(), in.end());
        double sum = 0.0;
        for (double v : in) sum += std::exp(v - mx);
        const double log_z = mx + std::log(sum);
        const auto label = static_cast<std::size_t>(y[r]);
        out.value += (log_z - in[label]) * inv_n;
        for (std::size_t c = 0; c < in.size(); ++c)
            out.grad(r, c) = (std::exp(in[c] - log_z) - (c == label ? 1.0 : 0.0)) * inv_n;
    }
    return out;
}

double granularity_analysis_loss(const LogitsBatch& f_nk_t, const LogitsBatch& f_b_t, Temperature tau_b) {
    return hkd_loss(f_nk_t, f_b_t, tau_b);
}

LossGrad granularity_analysis_loss_grad(const LogitsBatch& f_nk_t, const LogitsBatch& f_b_t,
                                        Temperature tau_b) {
    return hkd_loss_grad(f_nk_t, f_b_t, tau_b);
}

double self_analyze_loss(const LogitsBatch& f_nk_t, const LogitsBatch& f_b_t, Temperature tau_b,
                         const LabelBatch& y) {
    return granularity_analysis_loss(f_nk_t, f_b_t, tau_b) + cross_entropy(f_b_t, y);
}

LossGrad self_analyze_loss_grad(const LogitsBatch& f_nk_t, const LogitsBatch& f_b_t, Temperature tau_b,
                                const LabelBatch& y) {
    LossGrad ga = granularity_analysis_loss_grad(f_nk_t, f_b_t, tau_b);
    const LossGrad ce = cross_entropy_grad(f_b_t, y);
    ga.value += ce.value;
    add_scaled(ga.grad, ce.grad, 1.0);
    return ga;
}

LogitsBatch ensemble_average(const LogitsBatch& a, const LogitsBatch& n, const LogitsBatch& d) {
    require_same_shape(a.values(), n.values(), "ensemble_average");
    require_same_shape(a.values(), d.values(), "ensemble_average");
    Matrix out(a.rows(), a.cols());
    for (std::size_t i = 0; i < out.size(); ++i)
        out.data()[i] = (a.values().data()[i] + n.values().data()[i] + d.values().data()[i]) / 3.0;
    return LogitsBatch(std::move(out));
}

CompositeLoss gwd_loss(const HeadMap& teacher_outs, const HeadMap& student_outs, const TemperatureMap& temps,
                       double base_kd, const TermWeights& w) {
    CompositeLoss out;
    const std::pair<Granularity, double> heads[] = {
        {Granularity::AK, w.ak}, {Granularity::NK, w.nk}, {Granularity::DK, w.dk}};
    for (const auto& [g, weight] : heads) {
        const LossGrad lh = hkd_loss_grad(head(teacher_outs, g, "teacher outputs"),
                                          head(student_outs, g, "student outputs"), temp(temps, g));
        out.terms["lh_" + std::string(g == Granularity::AK ? "ak" : g == Granularity::NK ? "nk" : "dk")] = lh.value;
        out.total += weight * lh.value;
        out.grads.emplace(g, scaled(lh.grad, weight));
    }
    out.terms["base_kd"] = base_kd;
    out.total += base_kd;
    return out;
}

LossGrad ensemble_loss_grad(const BranchLogits& branches, const LogitsBatch& f_nk_t, const LogitsBatch& f_nk_s,
                            Temperature tau_nk) {
    const LogitsBatch ensemble = ensemble_average(branches.akb, f_nk_t, branches.dkb);
    return hkd_loss_grad(ensemble, f_nk_s, tau_nk);
}

CompositeLoss se_loss(const HeadMap& teacher_outs, const BranchLogits& teacher_branch_outs,
                      const HeadMap& student_outs, const TemperatureMap& temps, double base_kd,
                      const TermWeights& w) {
    CompositeLoss out;
    const LossGrad lh_ak = hkd_loss_grad(head(teacher_outs, Granularity::AK, "teacher outputs"),
                                         head(student_outs, Granularity::AK, "student outputs"),
                                         temp(temps, Granularity::AK));
    const LossGrad lh_dk = hkd_loss_grad(head(teacher_outs, Granularity::DK, "teacher outputs"),
                                         head(student_outs, Granularity::DK, "student outputs"),
                                         temp(temps, Granularity::DK));
    const LossGrad l_en = ensemble_loss_grad(teacher_branch_outs, head(teacher_outs, Granularity::NK, "teacher outputs"),
                                             head(student_outs, Granularity::NK, "student outputs"),
                                             temp(temps, Granularity::NK));
    out.terms["lh_ak"] = lh_ak.value;
    out.terms["lh_dk"] = lh_dk.value;
    out.terms["l_en"] = l_en.value;
    out.terms["base_kd"] = base_kd;
    out.total = w.ak * lh_ak.value + w.dk * lh_dk.value + w.en * l_en.value + base_kd;
    out.grads.emplace(Granularity::AK, scaled(lh_ak.grad, w.ak));
    out.grads.emplace(Granularity::NK, scaled(l_en.grad, w.en));
    out.grads.emplace(Granularity::DK, scaled(lh_dk.grad, w.dk));
    return out;
}

LogitsBatch model_logits(const MatrixF& outputs, const std::string& what) {
    for (float v : outputs.storage())
        if (!std::isfinite(v)) throw NumericFailure("non-finite " + what + " outputs (training diverged)");
    return LogitsBatch(outputs.cast<double>());
}

} // namespace mgkd
