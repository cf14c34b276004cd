#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "mgkd/distill.hpp"
#include "mgkd/self_analyze.hpp"
#include "support/fixtures.hpp"

using namespace mgkd;
using namespace mgkd::testing;

namespace {

constexpr double kHookPairY1 = 0.7753788447782326; // tests/oracles/derive.py

const GranularitySpec kSpec{2, 3, 8};

struct Fixture {
    DatasetSplit train = separable_split(3, 40, 8, 11);
    DatasetSplit val = separable_split(3, 10, 8, 12);
    TeacherBundle t_sa;

    Fixture() {
        SelfAnalyzeConfig c;
        c.schedule = short_schedule(10, 0.05);
        t_sa = run_self_analysis(attach_branches(separable_teacher(train, 1), kSpec, 2), train, c).bundle;
        t_sa.frozen_parts = {part::kBackbone, part::kClassifier, part::kAke, part::kDke, part::kAkAdapter,
                             part::kDkAdapter};
    }
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

StudentBundle small_student(std::uint64_t seed) { return make_student({BackboneKind::Mlp, 8, 1, 1, {6}}, kSpec, seed); }

DistillConfig config(DistillScheme scheme, int epochs = 3, double lr = 0.02) {
    DistillConfig c;
    c.scheme = scheme;
    c.temps = {Temperature(2.5), Temperature(4.0), Temperature(8.0)};
    c.schedule = short_schedule(epochs, lr);
    c.seed = 5;
    return c;
}

GranularityOutputs outputs(const Matrix& ak, const Matrix& nk, const Matrix& dk) {
    GranularityOutputs o;
    o.f_ak = ak.cast<float>();
    o.f_nk = nk.cast<float>();
    o.f_dk = dk.cast<float>();
    return o;
}

GranularityOutputs with_branches(GranularityOutputs o, const Matrix& akb, const Matrix& dkb) {
    o.f_akb = akb.cast<float>();
    o.f_dkb = dkb.cast<float>();
    return o;
}

const LabelBatch kY({0, 1}, 3);
const Matrix kAk{{0.5, -0.5}, {1.0, 0.0}};
const Matrix kNk{{2.0, 0.0, -1.0}, {0.0, 1.0, 0.5}};
const Matrix kDk{{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8}, {0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1}};
const DistillTemperatures kTemps{Temperature(2.5), Temperature(4.0), Temperature(8.0)};

} // namespace

TEST(Scheme, NamesRoundTrip) {
    for (DistillScheme s : {DistillScheme::GWD, DistillScheme::SE, DistillScheme::BaseOnly})
        EXPECT_EQ(scheme_from_string(to_string(s)), s);
    EXPECT_EQ(scheme_from_string("SE"), DistillScheme::SE);
    try {
        scheme_from_string("fancy");
        FAIL();
    } catch (const InvalidArgument& e) {
        EXPECT_NE(std::string(e.what()).find("{gwd, se, base}"), std::string::npos);
    }
    EXPECT_THROW(hook_by_name("dkd", Temperature(4.0)), InvalidArgument);
    EXPECT_EQ(hook_by_name("null", Temperature(4.0)).name, "null");
}

TEST(BatchLoss, GwdZeroAtMatchWithNullHook) {
    const GranularityOutputs t = outputs(kAk, kNk, kDk);
    const CompositeLoss l = distill_batch_loss(DistillScheme::GWD, t, t, kY, kTemps, null_hook());
    EXPECT_NEAR(l.total, 0.0, 1e-6);
}

TEST(BatchLoss, SeEnsembleIdempotence) {
    const GranularityOutputs t = with_branches(outputs(kAk, kNk, kDk), kNk, kNk);
    const Matrix s_nk{{0.0, 1.0, 0.0}, {1.0, 0.0, 0.0}};
    const GranularityOutputs s = outputs(kAk, s_nk, kDk);
    const CompositeLoss l = distill_batch_loss(DistillScheme::SE, t, s, kY, kTemps, null_hook());
    EXPECT_EQ(l.terms.at("l_en"), hkd_loss(LogitsBatch(kNk.cast<float>().cast<double>()),
                                           LogitsBatch(s_nk.cast<float>().cast<double>()), Temperature(4.0)));
    EXPECT_THROW(distill_batch_loss(DistillScheme::SE, outputs(kAk, kNk, kDk), s, kY, kTemps, null_hook()),
                 InvalidArgument);
}

TEST(Hook, DecomposesIntoHkdAndCrossEntropy) {
    const GranularityOutputs t = outputs(kAk, kNk, kDk);
    const Matrix s_nk{{0.3, 1.0, -0.2}, {1.0, 0.1, 0.0}};
    const GranularityOutputs s = outputs(kAk, s_nk, kDk);
    const LogitsBatch tl(t.f_nk.cast<double>()), sl(s.f_nk.cast<double>());
    const HookResult h = hkd_reference_hook(Temperature(4.0)).fn(t, s, kY);
    EXPECT_NEAR(h.value, hkd_loss(tl, sl, Temperature(4.0)) + cross_entropy(sl, kY), 1e-14);
    ASSERT_EQ(h.grads.size(), 1u);
    EXPECT_TRUE(h.grads.contains(Granularity::NK));
    const HookResult no_ce = hkd_reference_hook(Temperature(4.0), false).fn(t, s, kY);
    EXPECT_NEAR(no_ce.value, hkd_loss(tl, sl, Temperature(4.0)), 1e-14);
}

TEST(Hook, WorkedPair) {
    GranularityOutputs t, s;
    t.f_nk = MatrixF{{1.0f, 0.0f}};
    s.f_nk = MatrixF{{0.0f, 1.0f}};
    EXPECT_NEAR(hkd_reference_hook(Temperature(1.0)).fn(t, s, LabelBatch({1}, 2)).value, kHookPairY1, 1e-7);
}

TEST(Hook, NearZeroWhenStudentMatchesConfidentTeacher) {
    GranularityOutputs t;
    t.f_nk = MatrixF{{40.0f, 0.0f, 0.0f}, {0.0f, 40.0f, 0.0f}};
    EXPECT_NEAR(hkd_reference_hook(Temperature(4.0)).fn(t, t, kY).value, 0.0, 1e-6);
}

TEST(BatchLoss, SchemeSeparationAndHookIsolation) {
    const GranularityOutputs t = with_branches(outputs(kAk, kNk, kDk), kNk, Matrix{{1.0, 0.0, 0.0}, {0.0, 0.0, 1.0}});
    const GranularityOutputs s = outputs(Matrix{{0.0, 0.1}, {0.2, 0.0}}, Matrix{{0.0, 0.0, 0.0}, {0.3, 0.2, 0.1}},
                                         Matrix(2, 8, 0.25));
    const CompositeLoss g = distill_batch_loss(DistillScheme::GWD, t, s, kY, kTemps, null_hook());
    const CompositeLoss e = distill_batch_loss(DistillScheme::SE, t, s, kY, kTemps, null_hook());
    EXPECT_EQ(g.terms.at("lh_ak"), e.terms.at("lh_ak"));
    EXPECT_EQ(g.terms.at("lh_dk"), e.terms.at("lh_dk"));
    EXPECT_TRUE(g.terms.contains("lh_nk"));
    EXPECT_FALSE(g.terms.contains("l_en"));
    EXPECT_TRUE(e.terms.contains("l_en"));
    EXPECT_FALSE(e.terms.contains("lh_nk"));

    const CompositeLoss eh = distill_batch_loss(DistillScheme::SE, t, s, kY, kTemps, hkd_reference_hook(Temperature(4.0)));
    for (const auto& [k, v] : e.terms)
        if (k != "base_kd") EXPECT_EQ(eh.terms.at(k), v) << k;
    EXPECT_GT(eh.terms.at("base_kd"), 0.0);
    EXPECT_NEAR(eh.total - e.total, eh.terms.at("base_kd"), 1e-14);

    const CompositeLoss base = distill_batch_loss(DistillScheme::BaseOnly, t, s, kY, kTemps, hkd_reference_hook(Temperature(4.0)));
    EXPECT_EQ(base.terms.size(), 1u);
    EXPECT_EQ(base.total, eh.terms.at("base_kd"));
}

TEST(BatchLoss, BadHookValuesAbort) {
    const GranularityOutputs t = outputs(kAk, kNk, kDk);
    const BaseKDHook nan_hook{"nan", [](auto&, auto&, auto&) {
                                  return HookResult{std::numeric_limits<double>::quiet_NaN(), {}};
                              }};
    const BaseKDHook negative{"neg", [](auto&, auto&, auto&) { return HookResult{-1.0, {}}; }};
    EXPECT_THROW(distill_batch_loss(DistillScheme::GWD, t, t, kY, kTemps, nan_hook), NumericFailure);
    EXPECT_THROW(distill_batch_loss(DistillScheme::GWD, t, t, kY, kTemps, negative), NumericFailure);
}

TEST(RunDistillation, TeacherUntouchedAndRecordsComplete) {
    const Fixture& f = fixture();
    const std::uint64_t before = parameter_checksum(f.t_sa.named_parameters());
    for (DistillScheme s : {DistillScheme::GWD, DistillScheme::SE, DistillScheme::BaseOnly}) {
        const DistillResult r =
            run_distillation(f.t_sa, small_student(3), f.train, &f.val, hkd_reference_hook(Temperature(4.0)), config(s));
        EXPECT_EQ(parameter_checksum(f.t_sa.named_parameters()), before);
        ASSERT_EQ(r.records.size(), 3u);
        for (const char* k : {"total", "base_kd", "train_acc", "val_acc", "val_loss"})
            EXPECT_TRUE(r.records[0].values.contains(k)) << to_string(s) << " " << k;
        for (const auto& rec : r.records)
            for (const auto& [k, v] : rec.values) EXPECT_TRUE(std::isfinite(v)) << k;
    }
}

TEST(RunDistillation, LearnsTheSeparableTask) {
    const Fixture& f = fixture();
    const DistillResult r = run_distillation(f.t_sa, small_student(4), f.train, &f.val,
                                             hkd_reference_hook(Temperature(4.0)), config(DistillScheme::SE, 15));
    EXPECT_GE(top1_accuracy(strip_encoders(r.student), f.val), 0.9);
    const auto loss = metric_series(r.records, "total");
    EXPECT_LT(loss.back(), loss.front());
}

TEST(RunDistillation, DeterministicUnderFixedSeed) {
    const Fixture& f = fixture();
    const auto run = [&] {
        return run_distillation(f.t_sa, small_student(5), f.train, nullptr, hkd_reference_hook(Temperature(4.0)),
                                config(DistillScheme::GWD, 2));
    };
    const DistillResult a = run(), b = run();
    EXPECT_EQ(parameter_checksum(a.student.named_parameters()), parameter_checksum(b.student.named_parameters()));
    EXPECT_EQ(metric_series(a.records, "total"), metric_series(b.records, "total"));
}

TEST(RunDistillation, SpecMismatchIsRejected) {
    const Fixture& f = fixture();
    const StudentBundle wrong = make_student({BackboneKind::Mlp, 8, 1, 1, {6}}, {2, 3, 9}, 1);
    EXPECT_THROW(run_distillation(f.t_sa, wrong, f.train, nullptr, null_hook(), config(DistillScheme::SE)),
                 InvalidArgument);
}

TEST(RunDistillation, DivergenceAbortsWithNumericFailure) {
    const Fixture& f = fixture();
    EXPECT_THROW(run_distillation(f.t_sa, small_student(6), f.train, nullptr, hkd_reference_hook(Temperature(4.0)),
                                  config(DistillScheme::GWD, 20, 1e4)),
                 NumericFailure);
}

TEST(Stability, PrefixVariance) {
    const std::vector<double> flat(8, 2.0);
    EXPECT_EQ(early_loss_stability(flat, 0.25), 0.0);
    const std::vector<double> two{1.0, 3.0};
    EXPECT_DOUBLE_EQ(early_loss_stability(two, 1.0), 1.0);
    const std::vector<double> seq{1.0, 3.0, 100.0, 100.0, 100.0, 100.0, 100.0};
    EXPECT_DOUBLE_EQ(early_loss_stability(seq, 0.25), 1.0); // ceil(1.75) = 2
    EXPECT_EQ(early_loss_stability(std::vector<double>{5.0}, 0.1), 0.0);
    EXPECT_THROW(early_loss_stability(std::vector<double>{}, 0.25), InvalidArgument);
    EXPECT_THROW(early_loss_stability(two, 0.0), InvalidArgument);
    EXPECT_THROW(early_loss_stability(two, 1.5), InvalidArgument);
}

TEST(Stability, MetricSeriesNeedsEveryRecord) {
    std::vector<MetricsRecord> recs{{0, 0.1, {{"val_loss", 1.0}}}, {1, 0.1, {{"val_loss", 0.5}}}};
    EXPECT_EQ(metric_series(recs, "val_loss"), (std::vector<double>{1.0, 0.5}));
    recs.push_back({2, 0.1, {}});
    EXPECT_THROW(metric_series(recs, "val_loss"), InvalidArgument);
}
