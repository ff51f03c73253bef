#include <gtest/gtest.h>

#include <cstdlib>
#include <map>

#include <sys/wait.h>

#include "n2c/config.hpp"
#include "n2c/error.hpp"
#include "n2c/harness.hpp"
#include "n2c/trainer.hpp"
#include "test_util.hpp"

using namespace n2c;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json small_config()
{
    return json::parse(R"({
        "global_seed": 3,
        "phantom": {"dims": [8, 16, 16], "n_ellipsoids": 4},
        "noise": [{"sigma": 30}],
        "model": {"levels": 2, "base_features": 2, "convs_per_level": 1},
        "train": {"lr": 1e-3, "epochs": 1},
        "corpus": {"size": 2, "epochs": 1},
        "baselines": {"nlm_h": [10, 20], "tv_weight": [10, 20], "tuning_slices": 2},
        "verify": {"identity_triplets": 20, "coupling_samples": 1000, "control_samples": 100,
                   "gradient_trials": 1, "defect_realizations": 2},
        "methods": ["noisy", "nlm", "tv", "n2c_s", "n2c_m", "supervised"],
        "output_dir": "work",
        "thresholds": "thresholds.json"
    })");
}

/// Writes the config and default thresholds into `dir`, returns the config path.
fs::path write_setup(const fs::path& dir, const json& cfg = small_config())
{
    test::write_json(dir / "config.json", cfg);
    test::write_json(dir / "thresholds.json", json::parse(Thresholds{}.to_json().dump()));
    return dir / "config.json";
}

Context quiet_context(const fs::path& config, const std::optional<fs::path>& out = {})
{
    Context ctx = make_context(config, out);
    ctx.quiet = true;
    return ctx;
}

bool has_provenance(const json& j)
{
    if (j.is_object()) {
        if (j.contains("provenance") && j["provenance"].contains("config_hash")) return true;
        for (const auto& [k, v] : j.items()) {
            if (has_provenance(v)) return true;
        }
    }
    if (j.is_string()) {
        const auto& s = j.get_ref<const std::string&>();
        if (s.find("\"provenance\"") != std::string::npos) return has_provenance(json::parse(s));
    }
    return false;
}

std::map<std::string, std::uint64_t> tree_hashes(const fs::path& root)
{
    std::map<std::string, std::uint64_t> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) out[fs::relative(e.path(), root).generic_string()] = fnv1a64_file(e.path());
    }
    return out;
}

int run_cli(const std::string& args)
{
    const std::string cmd = std::string(N2C_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST(Harness, PipelineOutputsCarryProvenanceAndRerunIsIdentical)
{
    test::TempDir dir;
    const auto cfg = write_setup(dir.path);
    const Context a = quiet_context(cfg, dir.path / "a");
    run_pipeline(a);

    const fs::path w = a.work;
    const Volume noisy = load_volume(w / layout::noisy("sigma30"));
    EXPECT_EQ(noisy.dims(), load_volume(w / layout::clean()).dims());
    for (const char* m : {"n2c_s", "n2c_m", "supervised"}) {
        EXPECT_TRUE(fs::exists(w / layout::model_dir(m, "sigma30") / "checkpoint.n2c")) << m;
        EXPECT_TRUE(fs::exists(w / layout::model_dir(m, "sigma30") / "train_log.csv")) << m;
        const auto ck = load_checkpoint(w / layout::model_dir(m, "sigma30") / "checkpoint.n2c");
        EXPECT_TRUE(ck.info.extra.contains("provenance")) << m;
    }
    for (const char* m : {"nlm", "tv", "n2c_s", "n2c_m", "supervised"}) {
        EXPECT_TRUE(fs::exists(w / volume_sidecar_path(layout::denoised(m, "sigma30")))) << m;
    }

    std::size_t json_files = 0;
    for (const auto& e : fs::recursive_directory_iterator(w)) {
        const auto p = e.path();
        if (!e.is_regular_file()) continue;
        if (p.extension() == ".json") {
            ++json_files;
            EXPECT_TRUE(has_provenance(test::read_json(p))) << p;
        } else if (p.extension() == ".csv" || p.extension() == ".md") {
            EXPECT_TRUE(fs::exists(p.string() + ".prov.json")) << p;
        }
    }
    EXPECT_GT(json_files, 10u);

    const auto report = test::read_json(w / "report.json");
    EXPECT_EQ(report["provenance"]["config_hash"], a.config.hash());

    const Context b = quiet_context(cfg, dir.path / "b");
    run_pipeline(b);
    auto ha = tree_hashes(a.work), hb = tree_hashes(b.work);
    // Training logs record wall time; everything else must match bit for bit.
    for (auto* h : {&ha, &hb}) std::erase_if(*h, [](const auto& kv) { return kv.first.ends_with("train_log.csv"); });
    EXPECT_EQ(ha, hb);
}

TEST(Harness, MissingInputsNameTheProducer)
{
    test::TempDir dir;
    const Context ctx = quiet_context(write_setup(dir.path));
    try {
        cmd_train(ctx);
        FAIL() << "expected ValidationError";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("n2c corrupt"), std::string::npos) << e.what();
    }
    cmd_phantom(ctx);
    EXPECT_THROW(cmd_denoise(ctx), ValidationError);
    EXPECT_THROW(cmd_report(ctx), ValidationError);
}

TEST(Harness, ReportRefusesMetricsWithoutProvenance)
{
    test::TempDir dir;
    json cfg = small_config();
    cfg["methods"] = {"noisy", "tv"};
    const Context ctx = quiet_context(write_setup(dir.path, cfg));
    cmd_phantom(ctx);
    cmd_corrupt(ctx);
    cmd_denoise(ctx);
    cmd_eval(ctx);
    cmd_report(ctx);
    test::rewrite_json(ctx.work / "metrics.json", [](json& j) { j.erase("provenance"); });
    EXPECT_THROW(cmd_report(ctx), ValidationError);
}

TEST(Harness, VerifyDetectsBrokenDecomposition)
{
    test::TempDir dir;
    const Context ctx = quiet_context(write_setup(dir.path));
    const auto good = cmd_verify(ctx);
    ASSERT_EQ(good.checks.size(), 4u);
    EXPECT_EQ(good.checks[0].name, "loss_identity");
    EXPECT_TRUE(good.checks[0].passed);
    EXPECT_TRUE(good.checks[2].passed) << good.checks[2].details.dump();
    EXPECT_TRUE(fs::exists(ctx.work / "verify.json"));

    auto flipped = [](const SliceTriplet& t, const Image& f) {
        TermBreakdown b = decompose(t, f);
        b.t_cross_x = -b.t_cross_x;
        b.residual = b.lhs - (b.t_sup + b.t_cross_f + b.t_cross_x + b.t_const);
        return b;
    };
    const auto bad = cmd_verify(ctx, flipped);
    EXPECT_FALSE(bad.checks[0].passed);
    EXPECT_FALSE(bad.passed());
    EXPECT_FALSE(test::read_json(ctx.work / "verify.json")["passed"].get<bool>());
}

TEST(Harness, ContextOverrides)
{
    test::TempDir dir;
    const auto cfg = write_setup(dir.path);
    const Context base = make_context(cfg);
    EXPECT_EQ(base.work, dir.path / "work");
    const Context seeded = make_context(cfg, dir.path / "x", 77, 2u);
    EXPECT_EQ(seeded.work, dir.path / "x");
    EXPECT_EQ(seeded.config.global_seed, 77u);
    EXPECT_EQ(seeded.config.threads, 2u);
    EXPECT_NE(seeded.config.phantom.seed, base.config.phantom.seed);
    EXPECT_EQ(seeded.config.hash(), make_context(cfg, {}, 77).config.hash());
    EXPECT_THROW(make_context(cfg, {}, {}, 0u), ValidationError);
}

TEST(Cli, ExitCodes)
{
    test::TempDir dir;
    const auto cfg = write_setup(dir.path);
    const std::string c = " --config " + cfg.string() + " -q";
    EXPECT_EQ(run_cli(""), 1);
    EXPECT_EQ(run_cli("phantom --config " + (dir.path / "none.json").string()), 1);
    EXPECT_EQ(run_cli("train" + c), 1);
    EXPECT_EQ(run_cli("phantom" + c), 0);
    EXPECT_EQ(run_cli("corrupt" + c), 0);
    EXPECT_EQ(run_cli("--version"), 0);

    json diverge = small_config();
    diverge["model"]["output_init_gain"] = 1.0;
    diverge["train"]["lr"] = 1e30;
    diverge["train"]["epochs"] = 20;
    diverge["methods"] = {"n2c_s"};
    test::write_json(dir.path / "diverge.json", diverge);
    EXPECT_EQ(run_cli("train --config " + (dir.path / "diverge.json").string() + " -q"), 2);

    json strict = Thresholds{}.to_json();
    strict["gradient_rel_error"] = 1e-300;
    test::write_json(dir.path / "thresholds.json", strict);
    EXPECT_EQ(run_cli("verify" + c), 3);
}
