#pragma once

#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "n2c/metrics.hpp"

namespace n2c {

struct LevelMetrics {
    std::string label;
    double sigma = 0;
    std::vector<MetricRecord> records; ///< one per method
};

struct ReportRow {
    std::string method;
    double rmse_mean = 0, rmse_sd = 0;
    double ssim_mean = 0, ssim_sd = 0;
    int rmse_rank = 0; ///< 1 = lowest RMSE
    int ssim_rank = 0; ///< 1 = highest SSIM
};

struct ReportLevel {
    std::string label;
    double sigma = 0;
    std::vector<ReportRow> rows; ///< in configured method order
};

struct ReportTable {
    std::vector<std::string> methods;
    std::vector<ReportLevel> levels;
};

/// Ranks methods per noise level. Every level must carry the same method set.
ReportTable build_report(std::span<const LevelMetrics> levels);

/// Markdown table of MEAN +- SD with "(best)" / "(2nd)" markers.
std::string render_markdown(const ReportTable& table);
nlohmann::ordered_json to_json(const ReportTable& table);

nlohmann::ordered_json metrics_json(std::span<const LevelMetrics> levels);
std::vector<LevelMetrics> levels_from_metrics_json(const nlohmann::json& j);

} // namespace n2c
