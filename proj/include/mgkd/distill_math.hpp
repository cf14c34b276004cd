#pragma once

// Distillation objectives over logit matrices. Everything here is pure and
// evaluated in double precision. Functions returning LossGrad also return the
// analytic gradient with respect to the student-side argument; the teacher
// side is always treated as constant supervision.

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "mgkd/matrix.hpp"

namespace mgkd {

/// Lower clamp on the student probability inside the KL log-ratio.
inline constexpr double kKlEpsilon = 1e-12;

class Temperature {
public:
    explicit Temperature(double tau);
    double value() const noexcept { return tau_; }

private:
    double tau_;
};

/// N x d pre-softmax scores; N >= 1, d >= 2, all finite.
class LogitsBatch {
public:
    explicit LogitsBatch(Matrix values);
    LogitsBatch(std::initializer_list<std::initializer_list<double>> init)
        : LogitsBatch(Matrix(init)) {}

    const Matrix& values() const noexcept { return values_; }
    std::size_t rows() const noexcept { return values_.rows(); }
    std::size_t cols() const noexcept { return values_.cols(); }

private:
    Matrix values_;
};

/// LogitsBatch from float model outputs. Non-finite entries raise
/// NumericFailure (a diverged model) rather than InvalidArgument.
LogitsBatch model_logits(const MatrixF& outputs, const std::string& what);

/// N x d row-stochastic matrix (rows sum to 1 within 1e-6).
class ProbBatch {
public:
    explicit ProbBatch(Matrix values);
    ProbBatch(std::initializer_list<std::initializer_list<double>> init)
        : ProbBatch(Matrix(init)) {}

    const Matrix& values() const noexcept { return values_; }
    std::size_t rows() const noexcept { return values_.rows(); }
    std::size_t cols() const noexcept { return values_.cols(); }

private:
    Matrix values_;
};

/// Integer class labels, each in [0, num_classes).
class LabelBatch {
public:
    LabelBatch(std::vector<int> labels, std::size_t num_classes);

    const std::vector<int>& labels() const noexcept { return labels_; }
    std::size_t size() const noexcept { return labels_.size(); }
    std::size_t num_classes() const noexcept { return num_classes_; }
    int operator[](std::size_t i) const { return labels_[i]; }

private:
    std::vector<int> labels_;
    std::size_t num_classes_;
};

struct LossGrad {
    double value = 0.0;
    Matrix grad; ///< d(value)/d(student logits), same shape as the student input
};

enum class Granularity { AK, NK, DK };

std::string to_string(Granularity g);

using HeadMap = std::map<Granularity, LogitsBatch>;
using TemperatureMap = std::map<Granularity, Temperature>;
using GradMap = std::map<Granularity, Matrix>;

/// Teacher branch outputs (adapter outputs, N x C each).
struct BranchLogits {
    LogitsBatch akb;
    LogitsBatch dkb;
};

/// Value of a composite objective with its term decomposition and the
/// gradient for every student head that appears in it.
struct CompositeLoss {
    double total = 0.0;
    std::map<std::string, double> terms;
    GradMap grads;
};

ProbBatch softmax_temp(const LogitsBatch& logits, Temperature tau);

/// Mean over rows of sum_c p_c ln(p_c / max(q_c, kKlEpsilon)); 0 ln 0 = 0.
double kl_divergence(const ProbBatch& p, const ProbBatch& q);

/// tau^2 / N * sum_i KL(softmax(f_t_i / tau) || softmax(f_s_i / tau)).
double hkd_loss(const LogitsBatch& f_t, const LogitsBatch& f_s, Temperature tau);
LossGrad hkd_loss_grad(const LogitsBatch& f_t, const LogitsBatch& f_s, Temperature tau);

/// Mean negative log-likelihood of the labelled class.
double cross_entropy(const LogitsBatch& f, const LabelBatch& y);
LossGrad cross_entropy_grad(const LogitsBatch& f, const LabelBatch& y);

/// Branch-vs-native distillation term; identical to hkd_loss by definition.
double granularity_analysis_loss(const LogitsBatch& f_nk_t, const LogitsBatch& f_b_t, Temperature tau_b);
LossGrad granularity_analysis_loss_grad(const LogitsBatch& f_nk_t, const LogitsBatch& f_b_t,
                                        Temperature tau_b);

/// granularity_analysis_loss + cross_entropy on the branch output.
double self_analyze_loss(const LogitsBatch& f_nk_t, const LogitsBatch& f_b_t, Temperature tau_b,
                         const LabelBatch& y);
LossGrad self_analyze_loss_grad(const LogitsBatch& f_nk_t, const LogitsBatch& f_b_t,
                                Temperature tau_b, const LabelBatch& y);

/// Elementwise mean of three equally shaped logit matrices.
LogitsBatch ensemble_average(const LogitsBatch& a, const LogitsBatch& n, const LogitsBatch& d);

/// Optional per-term multipliers; all default to 1.
struct TermWeights {
    double ak = 1.0;
    double nk = 1.0;
    double dk = 1.0;
    double en = 1.0;
};

/// Granularity-wise objective: sum over {AK, NK, DK} of hkd_loss + base_kd.
/// Terms: "lh_ak", "lh_nk", "lh_dk", "base_kd".
CompositeLoss gwd_loss(const HeadMap& teacher_outs, const HeadMap& student_outs,
                       const TemperatureMap& temps, double base_kd, const TermWeights& w = {});

/// Ensemble distillation term: hkd_loss(avg(akb, nk_t, dkb), nk_s, tau_nk).
LossGrad ensemble_loss_grad(const BranchLogits& branches, const LogitsBatch& f_nk_t,
                            const LogitsBatch& f_nk_s, Temperature tau_nk);

/// Stable-excitation objective: hkd_loss at {AK, DK} + ensemble term + base_kd.
/// Terms: "lh_ak", "lh_dk", "l_en", "base_kd".
CompositeLoss se_loss(const HeadMap& teacher_outs, const BranchLogits& teacher_branch_outs,
                      const HeadMap& student_outs, const TemperatureMap& temps, double base_kd,
                      const TermWeights& w = {});

} // namespace mgkd
