#include <gtest/gtest.h>

#include "n2c/config.hpp"
#include "n2c/error.hpp"
#include "test_util.hpp"

using namespace n2c;
using nlohmann::json;

namespace {

json minimal()
{
    return json::parse(R"({
        "global_seed": 7,
        "phantom": {"dims": [8, 16, 16]},
        "noise": [{"sigma": 30}],
        "model": {"levels": 2, "base_features": 2},
        "methods": ["noisy", "n2c_s"]
    })");
}

std::string error_of(const json& j)
{
    try {
        parse_config(j);
    } catch (const ValidationError& e) {
        return e.what();
    }
    return "";
}

bool mentions(const std::string& msg, const std::string& needle) { return msg.find(needle) != std::string::npos; }

} // namespace

TEST(Config, MinimalDocumentParses)
{
    const auto c = parse_config(minimal());
    EXPECT_EQ(c.global_seed, 7u);
    EXPECT_EQ(c.phantom.dims.slices, 8u);
    ASSERT_EQ(c.noise.size(), 1u);
    EXPECT_EQ(c.noise[0].label, "sigma30");
    EXPECT_EQ(c.methods, (std::vector<std::string>{"noisy", "n2c_s"}));
    EXPECT_EQ(c.threads, 1u);
}

TEST(Config, ErrorsNameTheOffendingField)
{
    auto j = minimal();
    j["noise"].push_back({{"sigma", -3}});
    EXPECT_TRUE(mentions(error_of(j), "config.noise[1]")) << error_of(j);

    j = minimal();
    j["phantom"]["dims"] = {8, 16};
    EXPECT_TRUE(mentions(error_of(j), "config.phantom.dims")) << error_of(j);

    j = minimal();
    j["methods"] = {"noisy", "bm3d"};
    EXPECT_TRUE(mentions(error_of(j), "config.methods[1]")) << error_of(j);

    j = minimal();
    j["train"] = {{"lr", "fast"}};
    EXPECT_TRUE(mentions(error_of(j), "config.train.lr")) << error_of(j);

    j = minimal();
    j.erase("noise");
    EXPECT_TRUE(mentions(error_of(j), "config.noise")) << error_of(j);

    j = minimal();
    j["verify"] = {{"coupling_model", "oracle"}};
    EXPECT_TRUE(mentions(error_of(j), "config.verify.coupling_model")) << error_of(j);
}

TEST(Config, UnknownFieldsRejected)
{
    auto j = minimal();
    j["phantom"]["radius"] = 3;
    EXPECT_TRUE(mentions(error_of(j), "config.phantom.radius")) << error_of(j);
    j = minimal();
    j["epochs"] = 3;
    EXPECT_TRUE(mentions(error_of(j), "config.epochs")) << error_of(j);
}

TEST(Config, SliceSizeMustMatchNetworkDepth)
{
    auto j = minimal();
    j["phantom"]["dims"] = {8, 18, 18};
    j["model"]["levels"] = 3;
    EXPECT_TRUE(mentions(error_of(j), "divisible")) << error_of(j);
}

TEST(Config, DuplicateLabelsAndMethodsRejected)
{
    auto j = minimal();
    j["noise"].push_back({{"sigma", 30}});
    EXPECT_TRUE(mentions(error_of(j), "duplicate")) << error_of(j);
    j = minimal();
    j["methods"] = {"tv", "tv"};
    EXPECT_TRUE(mentions(error_of(j), "duplicate")) << error_of(j);
}

TEST(Config, SeedsDeriveFromGlobalUnlessPinned)
{
    auto a = parse_config(minimal());
    auto j = minimal();
    j["global_seed"] = 8;
    const auto b = parse_config(j);
    EXPECT_NE(a.phantom.seed, b.phantom.seed);
    EXPECT_NE(a.noise[0].spec.seed, b.noise[0].spec.seed);
    EXPECT_NE(a.noise[0].spec.seed, a.phantom.seed);

    j = minimal();
    j["phantom"]["seed"] = 99;
    auto pinned = parse_config(j);
    pinned.apply_global_seed(1234);
    EXPECT_EQ(pinned.phantom.seed, 99u);
    EXPECT_EQ(pinned.global_seed, 1234u);

    a.apply_global_seed(8);
    EXPECT_EQ(a.phantom.seed, b.phantom.seed);
    EXPECT_EQ(a.hash(), b.hash());
}

TEST(Config, DerivedSeedsAreStableAndRoleSpecific)
{
    EXPECT_EQ(derive_seed(1, "phantom"), derive_seed(1, "phantom"));
    EXPECT_NE(derive_seed(1, "phantom"), derive_seed(1, "tuning/phantom"));
    EXPECT_NE(derive_seed(1, "phantom"), derive_seed(2, "phantom"));
    // Reference 64-bit FNV-1a values.
    EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ull);
    EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cull);
}

TEST(Config, HashIgnoresOutputDirAndThreads)
{
    auto j = minimal();
    const auto base = parse_config(j).hash();
    j["output_dir"] = "elsewhere";
    j["threads"] = 4;
    EXPECT_EQ(parse_config(j).hash(), base);
    j["train"] = {{"epochs", 3}};
    EXPECT_NE(parse_config(j).hash(), base);
}

TEST(Config, LoadResolvesPathsAgainstConfigDirectory)
{
    test::TempDir dir;
    auto j = minimal();
    j["output_dir"] = "runs/x";
    j["thresholds"] = "th.json";
    test::write_json(dir.path / "c.json", j);
    const auto c = load_config(dir.path / "c.json");
    EXPECT_EQ(c.output_dir, dir.path / "runs/x");
    EXPECT_EQ(c.thresholds, dir.path / "th.json");
    EXPECT_THROW(load_config(dir.path / "missing.json"), ValidationError);
    std::ofstream(dir.path / "bad.json") << "{ not json";
    EXPECT_THROW(load_config(dir.path / "bad.json"), ValidationError);
}

TEST(Thresholds, MissingFileRejectedAndValuesLoaded)
{
    test::TempDir dir;
    EXPECT_THROW(load_thresholds(dir.path / "nope.json"), ValidationError);
    EXPECT_THROW(load_thresholds(""), ValidationError);
    test::write_json(dir.path / "t.json", json{{"defect_max", 0.03}});
    const auto t = load_thresholds(dir.path / "t.json");
    EXPECT_DOUBLE_EQ(t.defect_max, 0.03);
    EXPECT_DOUBLE_EQ(t.identity_rel_residual, 1e-9);
}
