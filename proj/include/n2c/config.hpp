#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "n2c/trainer.hpp"
#include "n2c/unet.hpp"
#include "n2c/volume.hpp"

namespace n2c {

inline constexpr const char* kToolVersion = "0.1.0";

std::uint64_t fnv1a64(std::string_view bytes);
std::uint64_t fnv1a64_file(const std::filesystem::path& path);
std::string hex64(std::uint64_t v);

/// Independent stream seed for a named role, derived from the global seed.
std::uint64_t derive_seed(std::uint64_t global_seed, std::string_view role);

inline const std::vector<std::string> kKnownMethods = {"noisy", "nlm", "tv", "n2c_s", "n2c_m", "supervised"};

struct NoiseLevel {
    NoiseSpec spec;
    std::string label; ///< file-name stem, "sigma30" by default
    bool explicit_seed = false;
};

struct CorpusConfig {
    int size = 4;
    int epochs = 8; ///< epochs for the corpus-trained methods (n2c_m, supervised)
};

struct BaselineConfig {
    std::vector<double> nlm_h = {10, 15, 20, 30, 45};
    std::vector<double> tv_weight = {5, 10, 20, 30, 45};
    int patch_size = 5;
    int search_window = 11;
    int tv_max_iter = 200;
    int tuning_slices = 16;
};

struct VerifyConfig {
    std::size_t identity_triplets = 100;
    std::size_t coupling_samples = 10000;
    std::size_t control_samples = 1000;
    int gradient_trials = 10;
    int defect_realizations = 20;
    double sigma = 30.0; ///< gaussian noise SD for the coupling and defect checks, HU
    std::string coupling_model = "random"; ///< random | identity
    std::string defect_model = "identity"; ///< random | identity
};

struct ExperimentConfig {
    PhantomSpec phantom;
    bool explicit_phantom_seed = false;
    std::vector<NoiseLevel> noise;
    UNetConfig model;
    std::optional<std::uint64_t> init_seed;
    TrainConfig train;
    bool explicit_shuffle_seed = false;
    CorpusConfig corpus;
    BaselineConfig baselines;
    VerifyConfig verify;
    std::vector<std::string> methods;
    std::filesystem::path output_dir = "runs/desk";
    std::uint64_t global_seed = 0;
    unsigned threads = 1;
    std::filesystem::path thresholds; ///< resolved against the config file's directory

    [[nodiscard]] bool has_method(const std::string& m) const;
    [[nodiscard]] std::uint64_t model_init_seed() const;
    /// Re-derives every seed that the config did not pin explicitly.
    void apply_global_seed(std::uint64_t seed);
    /// Canonical JSON of everything that affects results (no paths, no thread count).
    [[nodiscard]] nlohmann::ordered_json canonical_json() const;
    [[nodiscard]] std::string hash() const;
};

/// Field-level validation; errors name the offending key path (config.noise[1].sigma).
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = ".");
ExperimentConfig load_config(const std::filesystem::path& path);

struct Thresholds {
    double identity_rel_residual = 1e-9;
    double gradient_rel_error = 1e-6;
    double coupling_z = 5.0;
    double se_ratio_min = 0.2;
    double se_ratio_max = 0.5;
    double control_z = 5.0;
    double similarity_max = 0.05;
    double defect_max = 0.02;
    double control_defect_factor = 5.0;

    [[nodiscard]] nlohmann::ordered_json to_json() const;
};

Thresholds load_thresholds(const std::filesystem::path& path);

} // namespace n2c
