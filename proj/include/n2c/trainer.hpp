#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "n2c/unet.hpp"
#include "n2c/volume.hpp"

namespace n2c {

enum class TrainMode { n2c, supervised };

std::string to_string(TrainMode mode);
TrainMode train_mode_from_string(const std::string& name);

struct EarlyStop {
    int patience = 3;
    double min_delta = 0.0;
};

struct TrainConfig {
    TrainMode mode = TrainMode::n2c;
    double lr = 1e-4;
    std::size_t batch_size = 1;
    int epochs = 30;
    std::uint64_t shuffle_seed = 0;
    std::size_t log_every = 1;
    std::optional<EarlyStop> early_stop;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

void validate(const TrainConfig& cfg);

struct StepRecord {
    std::uint64_t step = 0;
    int epoch = 0;
    double loss = 0;
    double wall_time_s = 0;
};

struct EpochRecord {
    int epoch = 0;
    double mean_loss = 0;
    std::uint64_t steps = 0;
    double wall_time_s = 0;
};

struct TrainLog {
    std::vector<StepRecord> steps; ///< every log_every-th step
    std::vector<EpochRecord> epochs;
    std::uint64_t total_steps = 0;
    double initial_epoch_loss = 0;
    double final_epoch_loss = 0;
    bool stopped_early = false;

    /// CSV columns step,epoch,loss,wall_time_s.
    void write_csv(const std::filesystem::path& path) const;
};

struct TrainResult {
    ModelState model;
    TrainLog log;
};

struct VolumePair {
    Volume noisy;
    Volume clean;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Interior slices of every volume, seeded shuffle per epoch, loss mse(F,y_prev)+mse(F,y_next).
TrainResult train_n2c(std::span<const Volume> volumes, ModelState model, const TrainConfig& cfg,
                      const EpochCallback& on_epoch = {});

/// Every slice (boundaries included), loss mse(F(y_s), x_s).
TrainResult train_supervised(std::span<const VolumePair> pairs, ModelState model, const TrainConfig& cfg,
                             const EpochCallback& on_epoch = {});

/// Maps every slice through the model. Outputs are clamped to the valid HU range.
Volume denoise_volume(const ModelState& model, const Volume& noisy, unsigned threads = 1);

/// Maps every slice through an arbitrary slice denoiser.
Volume denoise_volume_with(const std::function<Image(const Image&)>& denoiser, const Volume& noisy,
                           unsigned threads = 1);

} // namespace n2c
