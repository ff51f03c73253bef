#include "n2c/harness.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>

#include "n2c/baselines.hpp"
#include "n2c/error.hpp"
#include "n2c/gradcheck.hpp"
#include "n2c/metrics.hpp"
#include "n2c/report.hpp"
#include "n2c/trainer.hpp"

namespace n2c {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace layout {
fs::path clean() { return "clean"; }
fs::path noisy(const std::string& level) { return "noisy_" + level; }
fs::path noise(const std::string& level) { return "noise_" + level; }
fs::path corpus_clean(int j) { return fs::path("corpus") / ("clean_" + std::to_string(j)); }
fs::path corpus_noisy(int j, const std::string& level)
{
    return fs::path("corpus") / ("noisy_" + std::to_string(j) + "_" + level);
}
fs::path corpus_noise(int j, const std::string& level)
{
    return fs::path("corpus") / ("noise_" + std::to_string(j) + "_" + level);
}
fs::path tuning_clean() { return fs::path("tuning") / "clean"; }
fs::path tuning_noisy(const std::string& level) { return fs::path("tuning") / ("noisy_" + level); }
fs::path model_dir(const std::string& method, const std::string& level)
{
    return fs::path("models") / (method + "_" + level);
}
fs::path denoised(const std::string& method, const std::string& level)
{
    return fs::path("denoised") / (method + "_" + level);
}
} // namespace layout

bool is_learned(const std::string& m) { return m == "n2c_s" || m == "n2c_m" || m == "supervised"; }

namespace {

bool needs_corpus(const ExperimentConfig& c) { return c.has_method("n2c_m") || c.has_method("supervised"); }
bool needs_tuning(const ExperimentConfig& c) { return c.has_method("nlm") || c.has_method("tv"); }

void say(const Context& ctx, const std::string& msg)
{
    if (!ctx.quiet) std::cerr << "[n2c] " << msg << std::endl;
}

fs::path need(const Context& ctx, const fs::path& rel, const char* producer)
{
    const fs::path p = ctx.work / rel;
    if (!fs::exists(p)) {
        throw ValidationError("missing input " + p.string() + " (run `n2c " + producer + "` first)");
    }
    return p;
}

Volume need_volume(const Context& ctx, const fs::path& rel, const char* producer)
{
    need(ctx, volume_payload_path(rel), producer);
    need(ctx, volume_sidecar_path(rel), producer);
    return load_volume(ctx.work / rel);
}

std::vector<fs::path> volume_files(const fs::path& rel) { return {volume_payload_path(rel), volume_sidecar_path(rel)}; }

ojson provenance(const Context& ctx, const std::string& command, const std::vector<fs::path>& inputs, ojson seeds)
{
    ojson in = ojson::array();
    for (const auto& rel : inputs) {
        in.push_back({{"path", rel.generic_string()}, {"fnv1a64", hex64(fnv1a64_file(ctx.work / rel))}});
    }
    return {{"command", command},
            {"tool_version", kToolVersion},
            {"config_hash", ctx.config.hash()},
            {"global_seed", ctx.config.global_seed},
            {"seeds", std::move(seeds)},
            {"inputs", std::move(in)}};
}

void write_text(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path.string());
    out << text;
}

void write_json(const fs::path& path, const ojson& j) { write_text(path, j.dump(2) + "\n"); }

void write_prov_sidecar(const fs::path& file, const ojson& prov)
{
    write_json(fs::path(file.string() + ".prov.json"), ojson{{"provenance", prov}});
}

void save_with_provenance(const Context& ctx, const Volume& v, const fs::path& rel, const ojson& prov, ojson extra = {})
{
    if (extra.is_null()) extra = ojson::object();
    extra["provenance"] = prov;
    const fs::path base = ctx.work / rel;
    fs::create_directories(base.parent_path());
    save_volume(v, base, extra.dump());
}

double mean_of(const std::vector<double>& v)
{
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

PhantomSpec corpus_phantom(const ExperimentConfig& c, int j)
{
    PhantomSpec p = c.phantom;
    p.seed = derive_seed(c.global_seed, "corpus/" + std::to_string(j) + "/phantom");
    return p;
}

PhantomSpec tuning_phantom(const ExperimentConfig& c)
{
    PhantomSpec p = c.phantom;
    p.seed = derive_seed(c.global_seed, "tuning/phantom");
    return p;
}

NoiseSpec reseeded(const NoiseSpec& s, std::uint64_t seed)
{
    NoiseSpec out = s;
    out.seed = seed;
    return out;
}

ojson noise_json(const NoiseSpec& s)
{
    return {{"model", to_string(s.model)}, {"sigma", s.sigma}, {"coupling", s.coupling}, {"seed", s.seed}};
}

} // namespace

Context make_context(const fs::path& config_path, const std::optional<fs::path>& out,
                     const std::optional<std::uint64_t>& seed, const std::optional<unsigned>& threads)
{
    Context ctx{load_config(config_path), {}, false};
    if (seed) ctx.config.apply_global_seed(*seed);
    if (threads) {
        if (*threads < 1) throw ValidationError("--threads must be >= 1");
        ctx.config.threads = *threads;
    }
    ctx.work = out ? *out : ctx.config.output_dir;
    return ctx;
}

// ---------------------------------------------------------------------------

void cmd_phantom(const Context& ctx)
{
    const auto& c = ctx.config;
    auto emit = [&](const PhantomSpec& spec, const fs::path& rel, const std::string& role) {
        const Volume v = generate_phantom(spec);
        const ojson extra{{"phantom", {{"n_ellipsoids", spec.n_ellipsoids},
                                       {"hu_range", {spec.hu_range[0], spec.hu_range[1]}},
                                       {"z_smoothness", spec.z_smoothness},
                                       {"body_radius_fraction", spec.body_radius_fraction}}},
                          {"mean_similarity_defect", mean_of(slice_similarity(v))}};
        save_with_provenance(ctx, v, rel, provenance(ctx, "phantom", {}, {{role, spec.seed}}), extra);
        say(ctx, "wrote " + (ctx.work / rel).string());
    };
    emit(c.phantom, layout::clean(), "phantom");
    if (needs_corpus(c)) {
        for (int j = 0; j < c.corpus.size; ++j) emit(corpus_phantom(c, j), layout::corpus_clean(j), "corpus_phantom");
    }
    if (needs_tuning(c)) emit(tuning_phantom(c), layout::tuning_clean(), "tuning_phantom");
}

void cmd_corrupt(const Context& ctx)
{
    const auto& c = ctx.config;
    auto emit = [&](const fs::path& clean_rel, const NoiseSpec& spec, const fs::path& noisy_rel, const fs::path& noise_rel) {
        const Volume clean = need_volume(ctx, clean_rel, "phantom");
        const auto pair = add_noise(clean, spec);
        const auto prov = provenance(ctx, "corrupt", volume_files(clean_rel), {{"noise", spec.seed}});
        const ojson extra{{"noise", noise_json(spec)}};
        save_with_provenance(ctx, pair.noisy, noisy_rel, prov, extra);
        save_with_provenance(ctx, pair.noise, noise_rel, prov, extra);
        say(ctx, "wrote " + (ctx.work / noisy_rel).string());
    };
    for (std::size_t i = 0; i < c.noise.size(); ++i) {
        const auto& lvl = c.noise[i];
        emit(layout::clean(), lvl.spec, layout::noisy(lvl.label), layout::noise(lvl.label));
        if (needs_corpus(c)) {
            for (int j = 0; j < c.corpus.size; ++j) {
                const auto seed = derive_seed(c.global_seed, "corpus/" + std::to_string(j) + "/noise/" + std::to_string(i));
                emit(layout::corpus_clean(j), reseeded(lvl.spec, seed), layout::corpus_noisy(j, lvl.label),
                     layout::corpus_noise(j, lvl.label));
            }
        }
        if (needs_tuning(c)) {
            const auto seed = derive_seed(c.global_seed, "tuning/noise/" + std::to_string(i));
            emit(layout::tuning_clean(), reseeded(lvl.spec, seed), layout::tuning_noisy(lvl.label),
                 fs::path("tuning") / ("noise_" + lvl.label));
        }
    }
}

void cmd_train(const Context& ctx)
{
    const auto& c = ctx.config;
    for (const auto& lvl : c.noise) {
        for (const auto& method : c.methods) {
            if (!is_learned(method)) continue;
            TrainConfig tc = c.train;
            std::vector<fs::path> inputs;
            std::vector<Volume> volumes;
            std::vector<VolumePair> pairs;
            if (method == "n2c_s") {
                tc.mode = TrainMode::n2c;
                volumes.push_back(need_volume(ctx, layout::noisy(lvl.label), "corrupt"));
                inputs = volume_files(layout::noisy(lvl.label));
            } else {
                tc.epochs = c.corpus.epochs;
                tc.mode = method == "n2c_m" ? TrainMode::n2c : TrainMode::supervised;
                for (int j = 0; j < c.corpus.size; ++j) {
                    const auto nrel = layout::corpus_noisy(j, lvl.label);
                    Volume noisy = need_volume(ctx, nrel, "corrupt");
                    for (const auto& f : volume_files(nrel)) inputs.push_back(f);
                    if (method == "n2c_m") {
                        volumes.push_back(std::move(noisy));
                    } else {
                        const auto crel = layout::corpus_clean(j);
                        for (const auto& f : volume_files(crel)) inputs.push_back(f);
                        pairs.push_back({std::move(noisy), need_volume(ctx, crel, "phantom")});
                    }
                }
            }
            say(ctx, "training " + method + " at " + lvl.label + " (" + std::to_string(tc.epochs) + " epochs)");
            ModelState model = build(c.model, c.model_init_seed());
            auto on_epoch = [&](const EpochRecord& e) {
                if (e.epoch == 0 || (e.epoch + 1) % 5 == 0 || e.epoch + 1 == tc.epochs) {
                    say(ctx, "  epoch " + std::to_string(e.epoch + 1) + " mean loss " + std::to_string(e.mean_loss));
                }
            };
            TrainResult res = tc.mode == TrainMode::supervised ? train_supervised(pairs, std::move(model), tc, on_epoch)
                                                               : train_n2c(volumes, std::move(model), tc, on_epoch);
            const auto prov = provenance(ctx, "train", inputs,
                                         {{"init", c.model_init_seed()}, {"shuffle", tc.shuffle_seed}});
            const fs::path dir = ctx.work / layout::model_dir(method, lvl.label);
            fs::create_directories(dir);
            CheckpointInfo info{to_string(tc.mode), static_cast<int>(res.log.epochs.size()), res.log.total_steps,
                                res.log.final_epoch_loss,
                                ojson{{"method", method}, {"level", lvl.label}, {"provenance", prov}}};
            save_checkpoint(res.model, dir / "checkpoint.n2c", info);
            res.log.write_csv(dir / "train_log.csv");
            write_prov_sidecar(dir / "train_log.csv", prov);
            say(ctx, "wrote " + (dir / "checkpoint.n2c").string());
        }
    }
}

void cmd_denoise(const Context& ctx)
{
    const auto& c = ctx.config;
    ojson tuning = ojson::object();
    for (const auto& lvl : c.noise) {
        const auto noisy_rel = layout::noisy(lvl.label);
        const Volume noisy = need_volume(ctx, noisy_rel, "corrupt");
        for (const auto& method : c.methods) {
            if (method == "noisy") continue;
            std::vector<fs::path> inputs = volume_files(noisy_rel);
            ojson extra = {{"method", method}, {"level", lvl.label}};
            Volume out = noisy;
            if (is_learned(method)) {
                const fs::path ck = layout::model_dir(method, lvl.label) / "checkpoint.n2c";
                need(ctx, ck, "train");
                inputs.push_back(ck);
                const auto loaded = load_checkpoint(ctx.work / ck, &c.model);
                out = denoise_volume(loaded.model, noisy, c.threads);
            } else {
                const Volume tclean = need_volume(ctx, layout::tuning_clean(), "phantom");
                const Volume tnoisy = need_volume(ctx, layout::tuning_noisy(lvl.label), "corrupt");
                for (const auto& f : volume_files(layout::tuning_clean())) inputs.push_back(f);
                for (const auto& f : volume_files(layout::tuning_noisy(lvl.label))) inputs.push_back(f);
                std::vector<Image> tn, tc;
                const auto S = static_cast<int>(tclean.slices());
                const int k = std::min(c.baselines.tuning_slices, S);
                for (int i = 0; i < k; ++i) {
                    const auto s = static_cast<std::size_t>((2 * i + 1) * S / (2 * k));
                    tn.push_back(tnoisy.slice_image(s));
                    tc.push_back(tclean.slice_image(s));
                }
                std::function<Image(const Image&, double)> fn;
                std::vector<double> grid;
                if (method == "nlm") {
                    grid = c.baselines.nlm_h;
                    fn = [&](const Image& img, double h) {
                        NlmParams p{h, c.baselines.patch_size, c.baselines.search_window,
                                    estimate_noise_sigma(img)};
                        return nlm_denoise(img, p);
                    };
                } else {
                    grid = c.baselines.tv_weight;
                    fn = [&](const Image& img, double w) {
                        TvParams p;
                        p.weight = w;
                        p.max_iter = c.baselines.tv_max_iter;
                        return tv_denoise(img, p).image;
                    };
                }
                const auto tr = tune_parameter(grid, tn, tc, fn);
                tuning[lvl.label][method] = {{"parameter", method == "nlm" ? "h" : "weight"},
                                             {"candidates", tr.values},
                                             {"mean_ssim", tr.scores},
                                             {"chosen", tr.best_value}};
                extra["parameter"] = tr.best_value;
                say(ctx, method + " at " + lvl.label + ": chose " + std::to_string(tr.best_value));
                const double best = tr.best_value;
                out = denoise_volume_with([&](const Image& img) { return fn(img, best); }, noisy, c.threads);
            }
            save_with_provenance(ctx, out, layout::denoised(method, lvl.label), provenance(ctx, "denoise", inputs, {}),
                                 extra);
            say(ctx, "wrote " + (ctx.work / layout::denoised(method, lvl.label)).string());
        }
    }
    if (needs_tuning(c)) {
        ojson doc{{"tuning", tuning}, {"provenance", provenance(ctx, "denoise", {}, {})}};
        write_json(ctx.work / "tuning.json", doc);
    }
}

void cmd_eval(const Context& ctx)
{
    const auto& c = ctx.config;
    const Volume clean = need_volume(ctx, layout::clean(), "phantom");
    std::vector<LevelMetrics> levels;
    std::vector<fs::path> all_inputs = volume_files(layout::clean());
    for (const auto& lvl : c.noise) {
        LevelMetrics lm{lvl.label, lvl.spec.sigma, {}};
        std::vector<fs::path> inputs = volume_files(layout::clean());
        for (const auto& method : c.methods) {
            const fs::path rel = method == "noisy" ? layout::noisy(lvl.label) : layout::denoised(method, lvl.label);
            const Volume v = need_volume(ctx, rel, method == "noisy" ? "corrupt" : "denoise");
            for (const auto& f : volume_files(rel)) {
                inputs.push_back(f);
                all_inputs.push_back(f);
            }
            lm.records.push_back(evaluate_volume(v, clean, method));
        }
        const fs::path csv = ctx.work / "metrics" / (lvl.label + ".csv");
        write_metrics_csv(lm.records, csv);
        write_prov_sidecar(csv, provenance(ctx, "eval", inputs, {}));
        levels.push_back(std::move(lm));
    }
    ojson doc{{"levels", metrics_json(levels)}, {"provenance", provenance(ctx, "eval", all_inputs, {})}};
    write_json(ctx.work / "metrics.json", doc);
    say(ctx, "wrote " + (ctx.work / "metrics.json").string());
}

void cmd_report(const Context& ctx)
{
    const fs::path rel = "metrics.json";
    const fs::path path = need(ctx, rel, "eval");
    nlohmann::json j;
    try {
        std::ifstream in(path);
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    if (!j.contains("provenance") || !j["provenance"].is_object()) {
        throw ValidationError(path.string() + " lacks a provenance stanza; refusing to report on it");
    }
    const auto levels = levels_from_metrics_json(j);
    const auto table = build_report(levels);
    const auto prov = provenance(ctx, "report", {rel}, {});
    write_text(ctx.work / "report.md", render_markdown(table));
    write_prov_sidecar(ctx.work / "report.md", prov);
    ojson doc = to_json(table);
    doc["provenance"] = prov;
    write_json(ctx.work / "report.json", doc);
    say(ctx, "wrote " + (ctx.work / "report.md").string());
}

void run_pipeline(const Context& ctx)
{
    cmd_phantom(ctx);
    cmd_corrupt(ctx);
    cmd_train(ctx);
    cmd_denoise(ctx);
    cmd_eval(ctx);
    cmd_report(ctx);
}

// ---------------------------------------------------------------------------
// verify

bool VerifyReport::passed() const
{
    return !checks.empty() && std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

ojson VerifyReport::to_json() const
{
    ojson arr = ojson::array();
    for (const auto& c : checks) arr.push_back({{"name", c.name}, {"passed", c.passed}, {"details", c.details}});
    return {{"passed", passed()}, {"checks", arr}};
}

namespace {

using SliceMap = std::function<Volume(const Volume&)>;

SliceMap verify_model(const Context& ctx, const std::string& kind)
{
    if (kind == "identity") return [](const Volume& v) { return v; };
    UNetConfig cfg = ctx.config.model;
    cfg.output_init_gain = 1.0;
    auto model = std::make_shared<ModelState>(build(cfg, derive_seed(ctx.config.global_seed, "verify/model")));
    const unsigned threads = ctx.config.threads;
    return [model, threads](const Volume& v) { return denoise_volume(*model, v, threads); };
}

CheckResult identity_check(const Context& ctx, const Thresholds& th, const DecomposeFn& fn)
{
    std::mt19937_64 rng(derive_seed(ctx.config.global_seed, "verify/identity"));
    std::uniform_real_distribution<double> hu(-1000.0, 1000.0);
    std::normal_distribution<double> noise(0.0, 30.0);
    std::normal_distribution<double> err(0.0, 50.0);
    double worst3 = 0, worst4 = 0;
    for (std::size_t t = 0; t < ctx.config.verify.identity_triplets; ++t) {
        SliceTriplet tr;
        tr.s = t + 1;
        std::array<Image, 3> x, n;
        for (int i = 0; i < 3; ++i) {
            x[i] = Image(16, 16);
            n[i] = Image(16, 16);
            tr.y[i] = Image(16, 16);
            for (std::size_t p = 0; p < 256; ++p) {
                x[i].pixels[p] = hu(rng);
                n[i].pixels[p] = noise(rng);
                tr.y[i].pixels[p] = x[i].pixels[p] + n[i].pixels[p];
            }
        }
        Image f(16, 16);
        for (std::size_t p = 0; p < 256; ++p) f.pixels[p] = x[1].pixels[p] + err(rng);
        tr.x = x;
        tr.n = n;
        const TermBreakdown b = fn(tr, f);
        worst3 = std::max(worst3, std::abs(b.residual) / std::abs(b.lhs));
        worst4 = std::max(worst4, std::abs(b.residual4) / std::abs(b.lhs));
    }
    CheckResult r{"loss_identity", worst3 <= th.identity_rel_residual && worst4 <= th.identity_rel_residual, {}};
    r.details = {{"triplets", ctx.config.verify.identity_triplets},
                 {"max_rel_residual", worst3},
                 {"max_rel_residual4", worst4},
                 {"threshold", th.identity_rel_residual}};
    return r;
}

std::pair<CouplingEstimate, CouplingEstimate> sample_coupling(const Context& ctx, const Volume& clean,
                                                              const NoiseSpec& base, const std::string& role,
                                                              const SliceMap& model, std::size_t samples)
{
    CouplingAccumulator acc;
    for (int r = 0; acc.count() < samples; ++r) {
        const auto pair = add_noise(clean, reseeded(base, derive_seed(ctx.config.global_seed, role + std::to_string(r))));
        const Volume f = model(pair.noisy);
        for (const auto& t : extract_triplets(pair.noisy, &clean, &pair.noise)) {
            if (acc.count() >= samples) break;
            acc.add(t, f.slice_image(t.s));
        }
    }
    return acc.finish();
}

CheckResult coupling_check(const Context& ctx, const Thresholds& th, const Volume& clean, double sigma)
{
    const auto& v = ctx.config.verify;
    const NoiseSpec independent{NoiseModel::gaussian, sigma, 0.0, 0};
    const auto [prev, next] = sample_coupling(ctx, clean, independent, "verify/coupling/",
                                              verify_model(ctx, v.coupling_model), v.coupling_samples);
    const NoiseSpec correlated{NoiseModel::correlated_control, sigma, 1.0, 0};
    const auto [cprev, cnext] = sample_coupling(ctx, clean, correlated, "verify/control/", verify_model(ctx, "identity"),
                                                v.control_samples);

    auto ratios_ok = [&](const CouplingEstimate& e) {
        const auto r = e.decade_ratios();
        return !r.empty() && std::all_of(r.begin(), r.end(), [&](double x) { return x >= th.se_ratio_min && x <= th.se_ratio_max; });
    };
    const bool vanish = prev.vanishes(th.coupling_z) && next.vanishes(th.coupling_z);
    const bool scaling = ratios_ok(prev) && ratios_ok(next);
    const bool control_flagged = !cprev.vanishes(th.control_z) && !cnext.vanishes(th.control_z);
    CheckResult r{"noise_coupling", vanish && scaling && control_flagged, {}};
    r.details = {{"model", v.coupling_model},
                 {"vanishes", vanish},
                 {"prefix_scaling_ok", scaling},
                 {"control_flagged", control_flagged},
                 {"independent", {{"prev", prev.to_json()}, {"next", next.to_json()}}},
                 {"correlated_control", {{"prev", cprev.to_json()}, {"next", cnext.to_json()}}},
                 {"z", th.coupling_z},
                 {"se_ratio_range", {th.se_ratio_min, th.se_ratio_max}}};
    return r;
}

CheckResult gradient_check(const Context& ctx, const Thresholds& th)
{
    ad::GradCheckOptions opt;
    opt.tolerance = th.gradient_rel_error;
    const auto results = ad::gradient_suite(derive_seed(ctx.config.global_seed, "verify/gradient"),
                                            ctx.config.verify.gradient_trials, opt);
    CheckResult r{"gradients", true, {}};
    ojson arr = ojson::array();
    for (const auto& g : results) {
        r.passed = r.passed && g.passed;
        arr.push_back(ad::to_json(g));
    }
    r.details = {{"step", opt.step}, {"tolerance", opt.tolerance}, {"primitives", arr}};
    return r;
}

CheckResult defect_check(const Context& ctx, const Thresholds& th, const DecomposeFn& fn, const Volume& clean,
                         double sigma)
{
    const auto& v = ctx.config.verify;
    const double similarity = mean_of(slice_similarity(clean));
    const SliceMap model = verify_model(ctx, v.defect_model);
    auto run = [&](const NoiseSpec& base) {
        EquivalenceAccumulator acc(fn);
        for (int r = 0; r < v.defect_realizations; ++r) {
            const auto pair = add_noise(clean, reseeded(base, derive_seed(ctx.config.global_seed, "verify/defect/" + std::to_string(r))));
            const Volume f = model(pair.noisy);
            for (const auto& t : extract_triplets(pair.noisy, &clean, &pair.noise)) acc.add(t, f.slice_image(t.s));
        }
        return acc.finish();
    };
    const auto ind = run({NoiseModel::gaussian, sigma, 0.0, 0});
    const auto ctl = run({NoiseModel::correlated_control, sigma, 1.0, 0});
    const bool similar = similarity < th.similarity_max;
    const bool small = ind.defect < th.defect_max;
    const bool separated = ctl.defect >= th.control_defect_factor * ind.defect;
    CheckResult r{"equivalence_defect", similar && small && separated, {}};
    r.details = {{"model", v.defect_model},
                 {"mean_similarity_defect", similarity},
                 {"defect", ind.defect},
                 {"control_defect", ctl.defect},
                 {"control_ratio", ind.defect > 0 ? ctl.defect / ind.defect : INFINITY},
                 {"thresholds", {{"similarity_max", th.similarity_max},
                                 {"defect_max", th.defect_max},
                                 {"control_defect_factor", th.control_defect_factor}}},
                 {"independent", ind.to_json()},
                 {"correlated_control", ctl.to_json()}};
    return r;
}

} // namespace

VerifyReport cmd_verify(const Context& ctx, const DecomposeFn& decompose_fn)
{
    const Thresholds th = load_thresholds(ctx.config.thresholds);
    const Volume clean = generate_phantom(ctx.config.phantom);
    const double sigma = ctx.config.verify.sigma;
    VerifyReport rep;
    auto timed = [&](auto&& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        CheckResult r = fn();
        r.details["seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        say(ctx, "verify " + r.name + ": " + (r.passed ? "pass" : "FAIL"));
        rep.checks.push_back(std::move(r));
    };
    timed([&] { return identity_check(ctx, th, decompose_fn); });
    timed([&] { return coupling_check(ctx, th, clean, sigma); });
    timed([&] { return gradient_check(ctx, th); });
    timed([&] { return defect_check(ctx, th, decompose_fn, clean, sigma); });

    ojson doc = rep.to_json();
    doc["thresholds"] = th.to_json();
    doc["provenance"] = provenance(ctx, "verify", {}, {{"phantom", ctx.config.phantom.seed}});
    write_json(ctx.work / "verify.json", doc);
    return rep;
}

} // namespace n2c
