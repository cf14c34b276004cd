#include "mgkd/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "mgkd/supervised.hpp"

namespace mgkd {
namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Kc = H K H for H = I - 11^T/n.
Matrix center(const Matrix& k) {
    const std::size_t n = k.rows();
    std::vector<double> row_mean(n, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) row_mean[i] += k(i, j);
        total += row_mean[i];
        row_mean[i] /= static_cast<double>(n);
    }
    total /= static_cast<double>(n * n);
    Matrix out(n, n);
    // K is symmetric, so column means equal row means.
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) out(i, j) = k(i, j) - row_mean[i] - row_mean[j] + total;
    return out;
}

double hsic_centered(const Matrix& kc, const Matrix& lc) {
    double s = 0.0;
    for (std::size_t i = 0; i < kc.size(); ++i) s += kc.data()[i] * lc.data()[i];
    const double n1 = static_cast<double>(kc.rows() - 1);
    return s / (n1 * n1);
}

void check_representation(const Matrix& x, const char* what) {
    if (x.rows() < 2) throw DegenerateInput(std::string(what) + " needs at least 2 samples");
    for (double v : x.storage())
        if (!std::isfinite(v)) throw InvalidArgument(std::string(what) + " contains non-finite values");
}

struct Moments {
    double mean_x = 0, mean_y = 0, var_x = 0, var_y = 0, cov = 0;
};

Moments moments(std::span<const double> x, std::span<const double> y) {
    Moments m;
    const double n = static_cast<double>(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        m.mean_x += x[i];
        m.mean_y += y[i];
    }
    m.mean_x /= n;
    m.mean_y /= n;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - m.mean_x, dy = y[i] - m.mean_y;
        m.var_x += dx * dx;
        m.var_y += dy * dy;
        m.cov += dx * dy;
    }
    m.var_x /= n;
    m.var_y /= n;
    m.cov /= n;
    return m;
}

double mean_or_nan(double sum, std::size_t used) {
    return used ? sum / static_cast<double>(used) : std::numeric_limits<double>::quiet_NaN();
}

std::uint64_t backbone_checksum(const Backbone& b) { return parameter_checksum(b.named_parameters()); }

} // namespace

Tensor extract_features(const Backbone& backbone, const Tensor& images, std::size_t batch) {
    const std::size_t n = images.batch();
    if (n == 0) return Tensor(Shape4{0, backbone.feature_dim()});
    Tensor out(Shape4{n, backbone.feature_dim()});
    for (const auto& idx : ordered_batches(n, batch)) {
        const Tensor f = backbone.forward(gather_samples(images, idx));
        std::copy(f.storage().begin(), f.storage().end(), out.data() + idx.front() * out.features());
    }
    return out;
}

MatrixF predict_logits(const Network& net, const Tensor& images, std::size_t batch) {
    const std::size_t n = images.batch();
    MatrixF out(n, net.num_classes());
    for (const auto& idx : ordered_batches(n, batch)) {
        const Tensor z = net.logits(gather_samples(images, idx));
        std::copy(z.storage().begin(), z.storage().end(), out.data() + idx.front() * out.cols());
    }
    return out;
}

double top1_accuracy(const MatrixF& logits, const std::vector<int>& labels) {
    if (labels.empty()) throw InvalidArgument("accuracy of an empty split is undefined");
    if (logits.rows() != labels.size()) throw InvalidArgument("logit/label count mismatch");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (argmax(logits.row(i)) == static_cast<std::size_t>(labels[i])) ++hits;
    return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double top1_accuracy(const Network& net, const DatasetSplit& split) {
    if (split.size() == 0) throw InvalidArgument("accuracy of an empty split is undefined");
    return top1_accuracy(predict_logits(net, split.images), split.labels);
}

Matrix gram_matrix(const Matrix& x, CkaKernel kernel) {
    const std::size_t n = x.rows();
    Matrix g(n, n);
    if (kernel == CkaKernel::Linear) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j <= i; ++j) {
                double s = 0.0;
                for (std::size_t c = 0; c < x.cols(); ++c) s += x(i, c) * x(j, c);
                g(i, j) = g(j, i) = s;
            }
        return g;
    }
    Matrix d2(n, n);
    std::vector<double> dists;
    dists.reserve(n * (n - 1) / 2);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < i; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < x.cols(); ++c) {
                const double d = x(i, c) - x(j, c);
                s += d * d;
            }
            d2(i, j) = d2(j, i) = s;
            dists.push_back(std::sqrt(s));
        }
    std::sort(dists.begin(), dists.end());
    const std::size_t m = dists.size();
    const double median = (m % 2) ? dists[m / 2] : 0.5 * (dists[m / 2 - 1] + dists[m / 2]);
    if (!(median > 0.0)) throw DegenerateInput("RBF bandwidth is zero: median pairwise distance vanishes");
    const double inv = 1.0 / (2.0 * median * median);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) g(i, j) = std::exp(-d2(i, j) * inv);
    return g;
}

double cka_similarity(const Matrix& x, const Matrix& y, CkaKernel kernel) {
    check_representation(x, "CKA input x");
    check_representation(y, "CKA input y");
    if (x.rows() != y.rows())
        throw InvalidArgument("CKA inputs need the same sample count (" + std::to_string(x.rows()) + " vs " +
                              std::to_string(y.rows()) + ")");
    const Matrix kc = center(gram_matrix(x, kernel));
    const Matrix lc = center(gram_matrix(y, kernel));
    const double kk = hsic_centered(kc, kc);
    const double ll = hsic_centered(lc, lc);
    if (!(kk > 0.0) || !(ll > 0.0)) throw DegenerateInput("CKA input has zero variance after centering");
    const double v = hsic_centered(kc, lc) / std::sqrt(kk * ll);
    return std::clamp(v, 0.0, 1.0);
}

SimilarityReport knowledge_similarity(const Matrix& t_out, const Matrix& s_out) {
    if (!t_out.same_shape(s_out))
        throw InvalidArgument("knowledge similarity needs equal shapes (" + std::to_string(t_out.rows()) + "x" +
                              std::to_string(t_out.cols()) + " vs " + std::to_string(s_out.rows()) + "x" +
                              std::to_string(s_out.cols()) + ")");
    if (t_out.rows() == 0 || t_out.cols() == 0) throw InvalidArgument("knowledge similarity needs non-empty outputs");

    SimilarityReport r;
    double ssim = 0, cosine = 0, pearson = 0, l2 = 0;
    std::size_t n_ssim = 0, n_cos = 0, n_pear = 0;
    for (std::size_t i = 0; i < t_out.rows(); ++i) {
        const auto t = t_out.row(i);
        const auto s = s_out.row(i);
        const Moments m = moments(t, s);

        double dot = 0, nt = 0, ns = 0, dist = 0;
        for (std::size_t c = 0; c < t.size(); ++c) {
            dot += t[c] * s[c];
            nt += t[c] * t[c];
            ns += s[c] * s[c];
            dist += (t[c] - s[c]) * (t[c] - s[c]);
        }
        l2 += std::sqrt(dist);

        if (nt > 0 && ns > 0) {
            cosine += dot / std::sqrt(nt * ns);
            ++n_cos;
        } else {
            ++r.skipped_cosine;
        }

        if (m.var_x > 0 && m.var_y > 0) {
            pearson += m.cov / std::sqrt(m.var_x * m.var_y);
            ++n_pear;
        } else {
            ++r.skipped_pearson;
        }

        const auto [lo, hi] = std::minmax_element(t.begin(), t.end());
        const double range = *hi - *lo;
        const double c1 = (0.01 * range) * (0.01 * range);
        const double c2 = (0.03 * range) * (0.03 * range);
        const double den = (m.mean_x * m.mean_x + m.mean_y * m.mean_y + c1) * (m.var_x + m.var_y + c2);
        if (den > 0) {
            ssim += (2 * m.mean_x * m.mean_y + c1) * (2 * m.cov + c2) / den;
            ++n_ssim;
        } else {
            ++r.skipped_ssim;
        }
    }
    r.ssim = mean_or_nan(ssim, n_ssim);
    r.cosine = mean_or_nan(cosine, n_cos);
    r.pearson = mean_or_nan(pearson, n_pear);
    r.l2 = l2 / static_cast<double>(t_out.rows());
    return r;
}

Matrix column_correlation(const Matrix& probs, bool* degenerate) {
    const std::size_t n = probs.rows(), c = probs.cols();
    std::vector<double> mean(c, 0.0), sd(c, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < c; ++k) mean[k] += probs(i, k);
    for (auto& m : mean) m /= static_cast<double>(n);
    Matrix centered(n, c);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < c; ++k) {
            centered(i, k) = probs(i, k) - mean[k];
            sd[k] += centered(i, k) * centered(i, k);
        }
    bool flat = false;
    for (auto& s : sd) {
        s = std::sqrt(s);
        if (!(s > 0)) flat = true;
    }
    Matrix r(c, c);
    for (std::size_t a = 0; a < c; ++a)
        for (std::size_t b = 0; b <= a; ++b) {
            if (!(sd[a] > 0) || !(sd[b] > 0)) continue;
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += centered(i, a) * centered(i, b);
            r(a, b) = r(b, a) = s / (sd[a] * sd[b]);
        }
    if (degenerate) *degenerate = flat;
    return r;
}

CorrelationDifference correlation_matrix_difference(const LogitsBatch& t_logits, const LogitsBatch& s_logits) {
    if (t_logits.rows() != s_logits.rows() || t_logits.cols() != s_logits.cols())
        throw InvalidArgument("teacher and student logits must have equal shapes");
    if (t_logits.rows() < 2) throw InvalidArgument("correlation matrices need at least 2 samples");
    const Temperature unit(1.0);
    bool dt = false, ds = false;
    const Matrix ct = column_correlation(softmax_temp(t_logits, unit).values(), &dt);
    const Matrix cs = column_correlation(softmax_temp(s_logits, unit).values(), &ds);
    CorrelationDifference out{Matrix(ct.rows(), ct.cols()), dt || ds};
    for (std::size_t i = 0; i < ct.size(); ++i) out.difference.data()[i] = ct.data()[i] - cs.data()[i];
    return out;
}

std::vector<double> default_noise_grid() {
    std::vector<double> g;
    for (int i = 0; i <= 15; ++i) g.push_back(0.02 * i);
    return g;
}

NoiseCurve noise_robustness_sweep(const Network& net, const DatasetSplit& split, std::span<const double> sigmas,
                                  std::uint64_t seed) {
    if (sigmas.empty()) throw InvalidArgument("noise sweep needs at least one sigma");
    if (sigmas.front() != 0.0) throw InvalidArgument("noise sweep must start at sigma = 0");
    for (std::size_t i = 0; i < sigmas.size(); ++i) {
        if (!(sigmas[i] >= 0.0) || !std::isfinite(sigmas[i]))
            throw InvalidArgument("noise sigma must be non-negative, got " + std::to_string(sigmas[i]));
        if (i > 0 && !(sigmas[i] > sigmas[i - 1])) throw InvalidArgument("noise sigmas must be strictly increasing");
    }
    NoiseCurve curve;
    curve.sigmas.assign(sigmas.begin(), sigmas.end());
    for (std::size_t i = 0; i < sigmas.size(); ++i) {
        const double acc = sigmas[i] == 0.0 ? top1_accuracy(net, split)
                                            : top1_accuracy(net, add_gaussian_noise(split, sigmas[i], splitmix(seed + i)));
        curve.accuracy.push_back(acc);
        curve.accuracy_delta.push_back(i == 0 ? 0.0 : 100.0 * (acc - curve.accuracy.front()));
    }
    double mean = 0.0;
    for (double d : curve.accuracy_delta) mean += d;
    mean /= static_cast<double>(curve.accuracy_delta.size());
    for (double d : curve.accuracy_delta) curve.variance += (d - mean) * (d - mean);
    curve.variance /= static_cast<double>(curve.accuracy_delta.size());
    return curve;
}

TransferResult transfer_finetune(const Network& student, Linear classifier, const DatasetSplit& target_train,
                                 const DatasetSplit& target_test, const TrainSchedule& schedule, std::uint64_t seed) {
    if (classifier.out_features() != target_train.class_count)
        throw InvalidArgument("classifier has " + std::to_string(classifier.out_features()) + " outputs, target has " +
                              std::to_string(target_train.class_count) + " classes");
    if (classifier.in_features() != student.backbone.feature_dim())
        throw InvalidArgument("classifier input " + std::to_string(classifier.in_features()) +
                              " does not match backbone features " + std::to_string(student.backbone.feature_dim()));
    if (target_test.class_count != target_train.class_count)
        throw InvalidArgument("target train/test class counts differ");

    TransferResult r;
    r.backbone_checksum_before = backbone_checksum(student.backbone);
    const MatrixF feats = extract_features(student.backbone, target_train.images).as_matrix();
    fit_linear_head(classifier, feats, target_train.labels, target_train.class_count, schedule, seed);
    r.model = Network{student.backbone, std::move(classifier)};
    r.backbone_checksum_after = backbone_checksum(r.model.backbone);
    r.accuracy = top1_accuracy(r.model, target_test);
    return r;
}

TransferResult transfer_finetune(const Network& student, const DatasetSplit& target_train,
                                 const DatasetSplit& target_test, const TrainSchedule& schedule, std::uint64_t seed) {
    Linear head(student.backbone.feature_dim(), target_train.class_count);
    std::mt19937_64 rng(splitmix(seed));
    head.init_fan_in(rng);
    return transfer_finetune(student, std::move(head), target_train, target_test, schedule, seed);
}

} // namespace mgkd
