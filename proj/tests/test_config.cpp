#include <gtest/gtest.h>

#include "mgkd/config.hpp"

using namespace mgkd;

namespace {

const std::string kMinimal = R"(
[dataset]
name = "synthetic"

[granularity]
dim_ak = 3
dim_dk = 16
)";

std::string field_of(const std::string& text, const ConfigOverrides& o = {}) {
    try {
        parse_config(text, o);
    } catch (const ConfigError& e) {
        return e.field();
    }
    return "<no error>";
}

} // namespace

TEST(Toml, ScalarsArraysTablesAndComments) {
    const auto j = parse_toml(R"(# header
top = 1
[a]
s = "x \"y\"\tz" # trailing
f = 2.5e-1
neg = -3
big = 1_000
yes = true
no = false
[a.b]
arr = [
  1, 2,   # inline comment
  3,
]
mixed = ["p", 0.5]
)");
    EXPECT_EQ(j["top"], 1);
    EXPECT_EQ(j["a"]["s"], "x \"y\"\tz");
    EXPECT_DOUBLE_EQ(j["a"]["f"].get<double>(), 0.25);
    EXPECT_EQ(j["a"]["neg"], -3);
    EXPECT_EQ(j["a"]["big"], 1000);
    EXPECT_TRUE(j["a"]["yes"].is_boolean());
    EXPECT_EQ(j["a"]["no"], false);
    EXPECT_EQ(j["a"]["b"]["arr"], nlohmann::json({1, 2, 3}));
    EXPECT_EQ(j["a"]["b"]["mixed"][1], 0.5);
    EXPECT_TRUE(j["a"]["f"].is_number_float());
    EXPECT_TRUE(j["a"]["neg"].is_number_integer());
}

TEST(Toml, ErrorsNameTheLine) {
    const std::pair<const char*, const char*> bad[] = {
        {"a = 1\na = 2\n", "line 2"},
        {"[t]\nx = 1\n[t]\n", "line 3"},
        {"x = \"open\n", "line 1"},
        {"x = 1 2\n", "line 1"},
        {"\n\nx = [1, 2\ny = 3\n", "line 4"},
        {"x = \"\\q\"\n", "line 1"},
        {"= 4\n", "line 1"},
        {"x = nope\n", "line 1"},
    };
    for (const auto& [text, where] : bad) {
        try {
            parse_toml(text);
            ADD_FAILURE() << "accepted: " << text;
        } catch (const ConfigError& e) {
            EXPECT_EQ(e.field(), where) << text;
        }
    }
}

TEST(Config, DeskFileParsesAndScalesSchedules) {
    const ExperimentConfig c = load_config(std::filesystem::path(MGKD_SOURCE_DIR) / "configs" / "desk.toml");
    EXPECT_EQ(c.run.seeds, (std::vector<std::uint64_t>{0, 1, 2}));
    EXPECT_EQ(c.spec(), (GranularitySpec{6, 10, 24}));
    ASSERT_TRUE(c.teacher && c.student && c.self_analyze && c.distill && c.evaluate && c.sweep);
    EXPECT_FALSE(c.transfer);
    EXPECT_EQ(c.distill->schedule.epochs, 40);
    EXPECT_EQ(c.distill->schedule.milestones, (std::vector<int>{25, 30, 35}));
    EXPECT_EQ(c.self_analyze->schedule.epochs, 10);
    EXPECT_EQ(c.distill->scheme, DistillScheme::SE);
    EXPECT_EQ(c.evaluate->cka, CkaChoice::Both);
    EXPECT_EQ(c.evaluate->noise_sigmas.size(), 16u);

    const DistillTemperatures t = c.distill_temperatures();
    EXPECT_EQ(t.tau_ak.value(), 2.5);
    EXPECT_EQ(t.tau_nk.value(), 4.0);
    EXPECT_EQ(t.tau_dk.value(), 8.0);
    EXPECT_EQ(c.distill_config(7).seed, 7u);
    EXPECT_EQ(c.self_analyze_config(3).tau_akb.value(), 2.5);
    EXPECT_EQ(c.hash().size(), 16u);
}

TEST(Config, DefaultsForMinimalFile) {
    const ExperimentConfig c = parse_config(kMinimal);
    EXPECT_EQ(c.run.seeds, (std::vector<std::uint64_t>{0}));
    EXPECT_NEAR(c.run.scale, 1.0 / 6.0, 1e-15);
    EXPECT_FALSE(c.distill);
    const DistillConfig d = c.distill_config(0);
    EXPECT_EQ(d.scheme, DistillScheme::SE);
    EXPECT_EQ(d.schedule.epochs, 40);
    EXPECT_EQ(c.self_analyze_config(0).schedule.epochs, 10);
}

TEST(Config, UnknownKeysNameTheField) {
    EXPECT_EQ(field_of(kMinimal + "\n[run]\nseedz = [1]\n"), "run.seedz");
    EXPECT_EQ(field_of(kMinimal + "\n[distill.schedule]\nlearning_rate = 0.1\n"), "distill.schedule.learning_rate");
    EXPECT_EQ(field_of(kMinimal + "\n[bogus]\nx = 1\n"), "bogus");
}

TEST(Config, ValidationNamesTheField) {
    const std::string base = R"(
[dataset]
name = "synthetic"
)";
    EXPECT_EQ(field_of(base + "[granularity]\ndim_ak = 12\ndim_dk = 16\n"), "granularity.dim_ak");
    EXPECT_EQ(field_of(base + "[granularity]\ndim_ak = 3\ndim_dk = 16\ntau_akb = 9.0\n"), "granularity.tau_akb");
    EXPECT_EQ(field_of(base + "[student]\narch = \"cnn\"\nwidths = [4]\n"), "granularity");
    EXPECT_EQ(field_of(kMinimal + "[distill]\nscheme = \"fancy\"\n"), "distill.scheme");
    EXPECT_EQ(field_of(kMinimal + "[distill]\nhook = \"dkd\"\n"), "distill.hook");
    EXPECT_EQ(field_of(kMinimal + "[distill]\ntau_nk = 0.0\n"), "distill.tau_nk");
    EXPECT_EQ(field_of(kMinimal + "[distill]\nweight_en = -1.0\n"), "distill.weight_en");
    EXPECT_EQ(field_of(kMinimal + "[distill.schedule]\nmilestones = [30, 20]\n"), "distill.schedule");
    EXPECT_EQ(field_of(kMinimal + "[evaluate]\nnoise_sigmas = [0.1, 0.2]\n"), "evaluate.noise_sigmas");
    EXPECT_EQ(field_of(kMinimal + "[evaluate]\ncka_kernel = \"poly\"\n"), "evaluate.cka_kernel");
    EXPECT_EQ(field_of(kMinimal + "[student]\narch = \"resnet\"\n"), "student.arch");
    EXPECT_EQ(field_of(kMinimal + "[run]\nscale = 0\n"), "run.scale");
    EXPECT_EQ(field_of(kMinimal + "[run]\nseeds = \"zero\"\n"), "run.seeds");
    EXPECT_EQ(field_of(R"([dataset]
name = "mnist"
)"), "dataset.name");
}

TEST(Config, OverridesApplyAndChangeTheHash) {
    const ExperimentConfig plain = parse_config(kMinimal);
    ConfigOverrides o;
    o.seeds = {4, 5};
    o.out = "elsewhere";
    o.scale = 0.5;
    o.scheme = "gwd";
    const ExperimentConfig c = parse_config(kMinimal, o);
    EXPECT_EQ(c.run.seeds, (std::vector<std::uint64_t>{4, 5}));
    EXPECT_EQ(c.run.out, "elsewhere");
    EXPECT_EQ(c.run.scale, 0.5);
    ASSERT_TRUE(c.distill);
    EXPECT_EQ(c.distill->scheme, DistillScheme::GWD);
    EXPECT_EQ(c.distill->schedule.epochs, 120);
    EXPECT_NE(c.hash(), plain.hash());
    EXPECT_EQ(parse_config(kMinimal).hash(), plain.hash());

    ConfigOverrides moved;
    moved.out = "elsewhere";
    EXPECT_EQ(parse_config(kMinimal, moved).hash(), plain.hash());

    ConfigOverrides bad;
    bad.scheme = "fancy";
    EXPECT_EQ(field_of(kMinimal, bad), "distill.scheme");
}

TEST(Config, MissingFileAndRequiredSections) {
    EXPECT_THROW(load_config("/nonexistent/mgkd.toml"), NotFound);
    EXPECT_THROW(require_section(false, "teacher", "train-teacher"), ConfigError);
    EXPECT_NO_THROW(require_section(true, "teacher", "train-teacher"));
}
