#pragma once

// Central finite-difference checks for every distillation objective.
// Shared by the unit tests and the acceptance runner.

#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <string>

#include "mgkd/distill_math.hpp"

namespace mgkd::testing {

inline constexpr double kFdStep = 1e-4;

/// ||analytic - numeric|| / (||analytic|| + ||numeric||), 0 when both vanish.
inline double fd_relative_error(const Matrix& analytic, const std::function<double(const Matrix&)>& f, Matrix x,
                                double h = kFdStep) {
    double diff = 0, na = 0, nn = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x.data()[i];
        x.data()[i] = keep + h;
        const double up = f(x);
        x.data()[i] = keep - h;
        const double down = f(x);
        x.data()[i] = keep;
        const double num = (up - down) / (2 * h);
        const double a = analytic.data()[i];
        diff += (a - num) * (a - num);
        na += a * a;
        nn += num * num;
    }
    const double den = std::sqrt(na) + std::sqrt(nn);
    return den < 1e-12 ? 0.0 : std::sqrt(diff) / den;
}

inline Matrix random_logits(std::size_t n, std::size_t d, std::mt19937_64& rng, double scale = 3.0) {
    std::uniform_real_distribution<double> u(-scale, scale);
    Matrix m(n, d);
    for (auto& v : m.storage()) v = u(rng);
    return m;
}

inline LabelBatch random_labels(std::size_t n, std::size_t c, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> u(0, static_cast<int>(c) - 1);
    std::vector<int> y(n);
    for (auto& v : y) v = u(rng);
    return LabelBatch(std::move(y), c);
}

/// Worst relative error per objective over `instances` random draws
/// (N in [1,4], head widths in [2,8], temperatures in [0.5, 10]).
inline std::map<std::string, double> gradient_suite(int instances, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> rows(1, 4), width(2, 8);
    std::uniform_real_distribution<double> temp(0.5, 10.0), base(0.0, 2.0);
    std::map<std::string, double> worst;
    auto note = [&](const std::string& k, double e) { worst[k] = std::max(worst[k], e); };

    for (int it = 0; it < instances; ++it) {
        const std::size_t n = rows(rng), c = width(rng), da = width(rng), dd = width(rng);
        const Temperature tau(temp(rng)), tau_ak(temp(rng)), tau_nk(temp(rng)), tau_dk(temp(rng));
        const LogitsBatch t_nk(random_logits(n, c, rng));
        const Matrix s_nk = random_logits(n, c, rng);
        const LabelBatch y = random_labels(n, c, rng);

        note("L_H", fd_relative_error(hkd_loss_grad(t_nk, LogitsBatch(s_nk), tau).grad,
                                      [&](const Matrix& m) { return hkd_loss(t_nk, LogitsBatch(m), tau); }, s_nk));
        note("L_CE", fd_relative_error(cross_entropy_grad(LogitsBatch(s_nk), y).grad,
                                       [&](const Matrix& m) { return cross_entropy(LogitsBatch(m), y); }, s_nk));
        note("L_GA", fd_relative_error(granularity_analysis_loss_grad(t_nk, LogitsBatch(s_nk), tau).grad,
                                       [&](const Matrix& m) {
                                           return granularity_analysis_loss(t_nk, LogitsBatch(m), tau);
                                       },
                                       s_nk));
        note("L_SA", fd_relative_error(self_analyze_loss_grad(t_nk, LogitsBatch(s_nk), tau, y).grad,
                                       [&](const Matrix& m) { return self_analyze_loss(t_nk, LogitsBatch(m), tau, y); },
                                       s_nk));

        const BranchLogits branches{LogitsBatch(random_logits(n, c, rng)), LogitsBatch(random_logits(n, c, rng))};
        note("L_EN", fd_relative_error(ensemble_loss_grad(branches, t_nk, LogitsBatch(s_nk), tau_nk).grad,
                                       [&](const Matrix& m) {
                                           return ensemble_loss_grad(branches, t_nk, LogitsBatch(m), tau_nk).value;
                                       },
                                       s_nk));

        const HeadMap teacher{{Granularity::AK, LogitsBatch(random_logits(n, da, rng))},
                              {Granularity::NK, t_nk},
                              {Granularity::DK, LogitsBatch(random_logits(n, dd, rng))}};
        const std::map<Granularity, Matrix> student{{Granularity::AK, random_logits(n, da, rng)},
                                                    {Granularity::NK, s_nk},
                                                    {Granularity::DK, random_logits(n, dd, rng)}};
        const TemperatureMap temps{{Granularity::AK, tau_ak}, {Granularity::NK, tau_nk}, {Granularity::DK, tau_dk}};
        const double b = base(rng);
        auto heads_with = [&](Granularity g, const Matrix& m) {
            HeadMap h;
            for (const auto& [k, v] : student) h.emplace(k, LogitsBatch(k == g ? m : v));
            return h;
        };
        const HeadMap s_heads = heads_with(Granularity::NK, s_nk);
        const CompositeLoss gwd = gwd_loss(teacher, s_heads, temps, b);
        const CompositeLoss se = se_loss(teacher, branches, s_heads, temps, b);
        for (const auto& [g, m] : student) {
            note("L_GWD", fd_relative_error(gwd.grads.at(g),
                                            [&](const Matrix& x) {
                                                return gwd_loss(teacher, heads_with(g, x), temps, b).total;
                                            },
                                            m));
            note("L_SE", fd_relative_error(se.grads.at(g),
                                           [&](const Matrix& x) {
                                               return se_loss(teacher, branches, heads_with(g, x), temps, b).total;
                                           },
                                           m));
        }
    }
    return worst;
}

} // namespace mgkd::testing
