// Acceptance run: one PASS/FAIL line per criterion. Usage: n2c_acceptance [work_dir]
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "n2c/baselines.hpp"
#include "n2c/harness.hpp"
#include "n2c/metrics.hpp"
#include "n2c/report.hpp"

using namespace n2c;
namespace fs = std::filesystem;

namespace {

// Pinned tolerances.
constexpr double kIdentitySeconds = 5.0;
constexpr double kGradientSeconds = 60.0;
constexpr double kCouplingSeconds = 300.0;
constexpr double kSeedRunSeconds = 15 * 60.0;
constexpr double kRmseGainRatio = 0.7;
constexpr double kSupervisedSlackHu = 2.0;
constexpr double kTransferRel = 0.2;
constexpr int kSeeds = 5;
constexpr int kSeedQuorum = 4;
constexpr std::uint64_t kFirstSeed = 2024;
constexpr const char* kLevel = "sigma30";

int failures = 0;

void line(bool ok, const std::string& name, const std::string& detail)
{
    if (!ok) ++failures;
    std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
}

std::string num(double v, int digits = 3)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct MethodScores {
    double rmse = 0, ssim = 0;
};

struct SeedRun {
    std::uint64_t seed = 0;
    double seconds = 0;
    std::map<std::string, MethodScores> scores;
};

Context seed_context(const fs::path& config, const fs::path& work, std::uint64_t seed)
{
    Context ctx = make_context(config, work, seed);
    ctx.quiet = true;
    std::erase_if(ctx.config.noise, [](const NoiseLevel& l) { return l.label != kLevel; });
    return ctx;
}

SeedRun run_seed(const fs::path& config, const fs::path& work, std::uint64_t seed)
{
    const Context ctx = seed_context(config, work, seed);
    const auto t0 = std::chrono::steady_clock::now();
    run_pipeline(ctx);
    SeedRun r{seed, seconds_since(t0), {}};
    std::ifstream in(ctx.work / "metrics.json");
    for (const auto& lvl : levels_from_metrics_json(nlohmann::json::parse(in))) {
        for (const auto& rec : lvl.records) r.scores[rec.method] = {rec.rmse_mean, rec.ssim_mean};
    }
    return r;
}

std::map<std::string, std::uint64_t> tree_hashes(const fs::path& root)
{
    std::map<std::string, std::uint64_t> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        const auto rel = fs::relative(e.path(), root).generic_string();
        // Training logs carry wall-clock time per step.
        if (e.is_regular_file() && !rel.ends_with("train_log.csv")) out[rel] = fnv1a64_file(e.path());
    }
    return out;
}

const CheckResult& check(const VerifyReport& rep, const std::string& name)
{
    for (const auto& c : rep.checks) {
        if (c.name == name) return c;
    }
    throw std::runtime_error("verify report lacks " + name);
}

void verification_criteria(const fs::path& config, const fs::path& work)
{
    Context ctx = make_context(config, work / "verify");
    ctx.quiet = true;
    const auto rep = cmd_verify(ctx);

    const auto& id = check(rep, "loss_identity");
    const double id_s = id.details["seconds"].get<double>();
    line(id.passed && id_s < kIdentitySeconds, "loss_identity",
         "max rel residual " + num(id.details["max_rel_residual"].get<double>()) + " / "
             + num(id.details["max_rel_residual4"].get<double>()) + " in " + num(id_s) + " s");

    const auto& gr = check(rep, "gradients");
    const double gr_s = gr.details["seconds"].get<double>();
    double worst = 0;
    for (const auto& p : gr.details["primitives"]) worst = std::max(worst, p["max_rel_error"].get<double>());
    line(gr.passed && gr_s < kGradientSeconds, "gradient_oracle",
         std::to_string(gr.details["primitives"].size()) + " primitives, max rel error " + num(worst) + " in "
             + num(gr_s) + " s");

    const auto& co = check(rep, "noise_coupling");
    const double co_s = co.details["seconds"].get<double>();
    const auto& prev = co.details["independent"]["prev"];
    const auto& ctl = co.details["correlated_control"]["prev"];
    line(co.passed && co_s < kCouplingSeconds, "noise_coupling",
         "normalized mean " + num(prev["normalized_mean"].get<double>()) + " (" + num(prev["mean"].get<double>() / prev["std_error"].get<double>())
             + " SE), decade SE ratios " + prev["decade_se_ratios"].dump() + ", control "
             + num(ctl["mean"].get<double>() / ctl["std_error"].get<double>()) + " SE, " + num(co_s) + " s");

    const auto& de = check(rep, "equivalence_defect");
    line(de.passed, "equivalence_defect",
         "similarity " + num(de.details["mean_similarity_defect"].get<double>()) + ", defect "
             + num(de.details["defect"].get<double>()) + ", control/independent "
             + num(de.details["control_ratio"].get<double>()));
}

void seed_criteria(const std::vector<SeedRun>& runs)
{
    int gain = 0, ordered = 0, both_beat = 0, transfer = 0, baselines = 0;
    double slowest = 0;
    std::string gain_d, order_d, transfer_d, base_d;
    for (const auto& r : runs) {
        const auto& s = r.scores;
        const auto& noisy = s.at("noisy");
        const auto& n2c = s.at("n2c_s");
        const auto& sup = s.at("supervised");
        const auto& m = s.at("n2c_m");
        slowest = std::max(slowest, r.seconds);
        const double ratio = n2c.rmse / noisy.rmse;
        gain += ratio <= kRmseGainRatio && n2c.ssim > noisy.ssim;
        gain_d += " " + num(ratio);
        ordered += sup.rmse <= n2c.rmse + kSupervisedSlackHu;
        both_beat += sup.rmse < noisy.rmse && n2c.rmse < noisy.rmse;
        order_d += " " + num(sup.rmse, 4) + "/" + num(n2c.rmse, 4);
        const double rel = std::abs(m.rmse - n2c.rmse) / n2c.rmse;
        transfer += rel <= kTransferRel;
        transfer_d += " " + num(rel);
        baselines += s.at("nlm").rmse < noisy.rmse && s.at("tv").rmse < noisy.rmse;
        base_d += " " + num(s.at("nlm").rmse, 4) + "/" + num(s.at("tv").rmse, 4) + "<" + num(noisy.rmse, 4);
    }
    const int n = static_cast<int>(runs.size());
    line(gain >= kSeedQuorum && slowest <= kSeedRunSeconds, "end_to_end_gain",
         std::to_string(gain) + "/" + std::to_string(n) + " seeds; rmse ratio n2c_s/noisy" + gain_d
             + "; slowest seed pipeline " + num(slowest) + " s");
    line(ordered >= kSeedQuorum && both_beat == n, "method_ordering",
         "supervised <= n2c_s + 2 HU on " + std::to_string(ordered) + "/" + std::to_string(n) + ", both beat noisy on "
             + std::to_string(both_beat) + "/" + std::to_string(n) + "; rmse supervised/n2c_s" + order_d);
    line(transfer >= kSeedQuorum, "n2c_m_transfer",
         std::to_string(transfer) + "/" + std::to_string(n) + " seeds within 20%; |n2c_m - n2c_s| / n2c_s" + transfer_d);
    // Baseline RMSE gains are recorded per seed; the sanity criterion needs them on every seed.
    line(baselines == n, "baselines_reduce_rmse",
         std::to_string(baselines) + "/" + std::to_string(n) + " seeds; rmse nlm/tv<noisy" + base_d);
}

void baseline_criteria()
{
    PhantomSpec p;
    p.seed = derive_seed(kFirstSeed, "acceptance/baselines");
    const Volume clean = generate_phantom(p);
    std::mt19937_64 rng(p.seed);
    std::normal_distribution<double> noise(0.0, 30.0);
    bool monotone = true, shrinks = true;
    for (int k = 0; k < 10; ++k) {
        Image y = clean.slice_image(static_cast<std::size_t>(3 + 6 * k));
        for (auto& v : y.pixels) v += noise(rng);
        TvParams tp;
        tp.weight = 20;
        tp.record_trace = true;
        const auto r = tv_denoise(y, tp);
        for (std::size_t i = 5; i < r.objective_trace.size(); ++i) {
            monotone = monotone && r.objective_trace[i] <= r.objective_trace[i - 1] * (1 + 1e-12);
        }
        for (double w : {1.0, 10.0, 100.0}) {
            tp.weight = w;
            tp.record_trace = false;
            shrinks = shrinks && total_variation(tv_denoise(y, tp).image) <= total_variation(y);
        }
    }
    line(monotone, "tv_objective_monotone", "10 noisy desk slices, objective non-increasing after iterate 5");
    line(shrinks, "tv_reduces_tv", "TV(output) <= TV(input) for lambda in {1, 10, 100} on 10 slices");
    const Image flat(32, 32, 37.0);
    line(nlm_denoise(flat, {}) == flat, "nlm_constant_fixed_point", "32x32 constant slice returned unchanged");
}

void metric_criteria()
{
    bool ok = true;
    const Image a(1, 4, 0.0);
    const Image b(1, 4, {1, 2, 3, 4});
    Image shifted = b;
    for (auto& v : shifted.pixels) v += 5.0;
    ok = ok && rmse(b, b) == 0.0 && std::abs(rmse(b, shifted) - 5.0) < 1e-12
         && std::abs(rmse(a, b) - std::sqrt(7.5)) < 1e-12;

    PhantomSpec p;
    p.dims = {16, 64, 64};
    p.seed = derive_seed(kFirstSeed, "acceptance/metrics");
    const Image x = generate_phantom(p).slice_image(8);
    std::mt19937_64 rng(p.seed);
    std::uniform_real_distribution<double> u(-1000, 1000);
    Image r1(32, 32), r2(32, 32);
    for (auto& v : r1.pixels) v = u(rng);
    for (auto& v : r2.pixels) v = u(rng);
    const bool ssim_ok = std::abs(ssim(x, x) - 1.0) < 1e-12 && std::abs(ssim(r1, r2) - ssim(r2, r1)) < 1e-12
                              && std::abs(ssim(r1, r2)) <= 1.0 + 1e-12;
    std::vector<double> probe;
    for (double sigma : {5.0, 15.0, 45.0}) {
        std::mt19937_64 g(17);
        std::normal_distribution<double> n(0.0, sigma);
        Image y = x;
        for (auto& v : y.pixels) v += n(g);
        probe.push_back(ssim(y, x));
    }
    const bool monotone = probe[0] > probe[1] && probe[1] > probe[2];
    line(ok && ssim_ok && monotone, "metrics",
         std::string("rmse examples ") + (ok ? "ok" : "bad") + ", ssim identity/symmetry " + (ssim_ok ? "ok" : "bad")
             + ", ssim at sigma 5/15/45: " + num(probe[0], 4) + " > " + num(probe[1], 4) + " > " + num(probe[2], 4));
}

} // namespace

int main(int argc, char** argv)
{
    const fs::path config = fs::path(N2C_SOURCE_DIR) / "config" / "desk.json";
    const fs::path work = argc > 1 ? fs::path(argv[1]) : fs::temp_directory_path() / "n2c_acceptance";
    fs::remove_all(work);
    try {
        verification_criteria(config, work);

        std::vector<SeedRun> runs;
        for (int k = 0; k < kSeeds; ++k) {
            const std::uint64_t seed = kFirstSeed + static_cast<std::uint64_t>(k);
            runs.push_back(run_seed(config, work / ("seed" + std::to_string(seed)), seed));
            std::cerr << "seed " << seed << " done in " << num(runs.back().seconds) << " s" << std::endl;
        }
        seed_criteria(runs);
        baseline_criteria();
        metric_criteria();

        const fs::path again = work / "rerun";
        run_seed(config, again, kFirstSeed);
        const auto a = tree_hashes(work / ("seed" + std::to_string(kFirstSeed)));
        const auto b = tree_hashes(again);
        std::size_t differing = 0;
        for (const auto& [k, v] : a) differing += !b.contains(k) || b.at(k) != v;
        line(a == b, "determinism",
             std::to_string(a.size()) + " output files compared, " + std::to_string(differing) + " differ");
    } catch (const std::exception& e) {
        std::cout << "FAIL acceptance_run: " << e.what() << std::endl;
        return 2;
    }
    return failures == 0 ? 0 : 1;
}
