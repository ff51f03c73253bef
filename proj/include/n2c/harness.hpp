/**
 * @file harness.hpp
 * @brief File-in/file-out experiment commands behind the `n2c` CLI.
 *
 * Work directory layout (all relative to Context::work):
 *
 *   clean.{vol,json}                     test phantom
 *   noisy_<level>.{vol,json}             corrupted test volume per noise level
 *   noise_<level>.{vol,json}             the noise that was added
 *   corpus/clean_<j>, corpus/noisy_<j>_<level>, corpus/noise_<j>_<level>
 *   tuning/clean, tuning/noisy_<level>   held-out phantom for baseline tuning
 *   models/<method>_<level>/checkpoint.n2c, train_log.csv
 *   denoised/<method>_<level>.{vol,json}
 *   tuning.json, metrics.json, metrics/<level>.csv, report.{md,json}, verify.json
 *
 * Every output carries a provenance stanza: embedded for JSON, volume sidecars
 * and checkpoints, in `<file>.prov.json` for CSV and markdown.
 */
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "n2c/config.hpp"
#include "n2c/losses.hpp"

namespace n2c {

struct Context {
    ExperimentConfig config;
    std::filesystem::path work;
    bool quiet = false;
};

/// Loads the config and applies CLI overrides (--out, --seed, --threads).
Context make_context(const std::filesystem::path& config_path, const std::optional<std::filesystem::path>& out = {},
                     const std::optional<std::uint64_t>& seed = {}, const std::optional<unsigned>& threads = {});

void cmd_phantom(const Context& ctx);
void cmd_corrupt(const Context& ctx);
void cmd_train(const Context& ctx);
void cmd_denoise(const Context& ctx);
void cmd_eval(const Context& ctx);
void cmd_report(const Context& ctx);

struct CheckResult {
    std::string name;
    bool passed = false;
    nlohmann::ordered_json details;
};

struct VerifyReport {
    std::vector<CheckResult> checks;
    [[nodiscard]] bool passed() const;
    [[nodiscard]] nlohmann::ordered_json to_json() const;
};

/// The four derivation checks against the thresholds file; writes verify.json.
/// `decompose_fn` exists so tests can inject a faulty decomposition.
VerifyReport cmd_verify(const Context& ctx, const DecomposeFn& decompose_fn = decompose);

/// phantom, corrupt, train, denoise, eval, report.
void run_pipeline(const Context& ctx);

/// Relative paths used by the commands.
namespace layout {
std::filesystem::path clean();
std::filesystem::path noisy(const std::string& level);
std::filesystem::path noise(const std::string& level);
std::filesystem::path corpus_clean(int j);
std::filesystem::path corpus_noisy(int j, const std::string& level);
std::filesystem::path corpus_noise(int j, const std::string& level);
std::filesystem::path tuning_clean();
std::filesystem::path tuning_noisy(const std::string& level);
std::filesystem::path model_dir(const std::string& method, const std::string& level);
std::filesystem::path denoised(const std::string& method, const std::string& level);
} // namespace layout

/// Methods trained by cmd_train.
bool is_learned(const std::string& method);

} // namespace n2c
