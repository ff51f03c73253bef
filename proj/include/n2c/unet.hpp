/**
 * @file unet.hpp
 * @brief Single-channel U-Net denoiser and its checkpoint format.
 *
 * Each encoder level applies convs_per_level x (conv3x3 + relu) and halves
 * the resolution with 2x2 max pooling; the feature count doubles per level.
 * The decoder mirrors it with nearest-neighbour upsampling and channel
 * concatenation of the matching encoder output. A final 3x3 conv maps to one
 * channel with no activation.
 *
 * Inputs and outputs are in HU. Inside the network slices are mapped to
 * [0, 1] through the fixed window [window_min, window_max]. With the residual
 * flag on, the network output (rescaled to HU) is added to the input, so a
 * network whose conv parameters are all zero is exactly the identity.
 */
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "n2c/autodiff.hpp"
#include "n2c/image.hpp"

namespace n2c {

struct UNetConfig {
    int levels = 3;
    int base_features = 8;
    int convs_per_level = 2;
    int in_channels = 1;
    int out_channels = 1;
    bool residual = true;
    double window_min = -1000.0;
    double window_max = 2000.0;
    /// Multiplier on the He standard deviation of the final conv kernel. Zero starts the residual
    /// network exactly at the identity.
    double output_init_gain = 0.0;

    bool operator==(const UNetConfig&) const = default;
};

void validate(const UNetConfig& config);
nlohmann::ordered_json to_json(const UNetConfig& config);
UNetConfig unet_config_from_json(const nlohmann::json& j);

struct ParamSpec {
    std::string name;
    ad::Shape shape;
    std::size_t fan_in = 0; ///< 0 for biases
};

/// Names and shapes of every parameter, in storage order.
std::vector<ParamSpec> parameter_layout(const UNetConfig& config);

template <typename T>
struct Network {
    UNetConfig config;
    std::vector<std::string> names;
    std::vector<ad::Tensor<T>> params;
    std::uint64_t init_seed = 0;

    [[nodiscard]] std::size_t parameter_count() const;
    void zero_grad();

    /// Deep copy in another precision. The copy owns fresh leaf tensors.
    template <typename U>
    [[nodiscard]] Network<U> cast() const
    {
        Network<U> out{config, names, {}, init_seed};
        for (const auto& p : params) {
            std::vector<U> v(p.values().begin(), p.values().end());
            out.params.push_back(ad::Tensor<U>::parameter(p.shape(), std::move(v)));
        }
        return out;
    }
};

using ModelState = Network<float>;

/// He initialization for kernels (normal, variance 2/fan_in), zero biases. The final conv kernel
/// is scaled by config.output_init_gain.
ModelState build(const UNetConfig& config, std::uint64_t seed);

/// Sets every parameter to `value` (zero gives the identity when residual is on).
template <typename T>
void fill_parameters(Network<T>& model, T value);

/// batch is [B,1,H,W] in HU with H, W divisible by 2^(levels-1).
template <typename T>
ad::Tensor<T> forward(const Network<T>& model, const ad::Tensor<T>& batch);

/// Convenience single-slice inference in HU.
Image denoise_slice(const ModelState& model, const Image& slice);

struct CheckpointInfo {
    std::string mode;
    int epochs = 0;
    std::uint64_t steps = 0;
    double final_loss = 0.0;
    nlohmann::ordered_json extra = nlohmann::ordered_json::object(); ///< provenance etc.
};

struct LoadedCheckpoint {
    ModelState model;
    CheckpointInfo info;
};

/// Binary layout: "N2CCKPT\0", u32 version, u64 header length, JSON header
/// (config, seed, tensor table, training info), little-endian float32 payloads.
void save_checkpoint(const ModelState& model, const std::filesystem::path& path, const CheckpointInfo& info = {});
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const UNetConfig* expected = nullptr);

} // namespace n2c
