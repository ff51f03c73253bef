#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "n2c/image.hpp"
#include "n2c/volume.hpp"

namespace n2c {

/// Window width used as the SSIM dynamic range.
inline constexpr double kDefaultDataRange = 3000.0;

double rmse(const Image& a, const Image& b);

/// Gaussian-window SSIM (sigma 1.5, 11x11, K1 0.01, K2 0.03), averaged over the
/// positions where the window fits entirely inside the image.
double ssim(const Image& a, const Image& b, double data_range = kDefaultDataRange);

struct MetricRecord {
    std::string method;
    std::vector<double> rmse; ///< per slice, HU
    std::vector<double> ssim; ///< per slice
    double rmse_mean = 0;
    double rmse_sd = 0; ///< population SD; 0 for one slice
    double ssim_mean = 0;
    double ssim_sd = 0;

    [[nodiscard]] nlohmann::ordered_json summary_json() const;
};

/// Mean and population SD.
std::pair<double, double> mean_sd(std::span<const double> values);

MetricRecord evaluate_volume(const Volume& denoised, const Volume& clean, const std::string& method,
                             double data_range = kDefaultDataRange);

/// method,slice,rmse_hu,ssim
void write_metrics_csv(std::span<const MetricRecord> records, const std::filesystem::path& path);

} // namespace n2c
