#include "n2c/report.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <sstream>

#include "n2c/error.hpp"

namespace n2c {

namespace {

/// 1-based ranks; ties share the better rank.
std::vector<int> ranks(const std::vector<double>& values, bool lower_is_better)
{
    std::vector<int> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        int better = 0;
        for (double v : values) {
            if (lower_is_better ? v < values[i] : v > values[i]) ++better;
        }
        out[i] = better + 1;
    }
    return out;
}

std::string marker(int rank)
{
    if (rank == 1) return " (best)";
    if (rank == 2) return " (2nd)";
    return "";
}

std::string fixed(double v, int digits)
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", digits, v);
    return buf;
}

} // namespace

ReportTable build_report(std::span<const LevelMetrics> levels)
{
    if (levels.empty()) throw ValidationError("report: no metric records");
    ReportTable table;
    for (const auto& r : levels.front().records) table.methods.push_back(r.method);
    if (table.methods.empty()) throw ValidationError("report: level '" + levels.front().label + "' has no methods");
    const std::set<std::string> reference(table.methods.begin(), table.methods.end());
    if (reference.size() != table.methods.size()) {
        throw ValidationError("report: duplicate method in level '" + levels.front().label + "'");
    }

    for (const auto& lvl : levels) {
        std::set<std::string> names;
        for (const auto& r : lvl.records) names.insert(r.method);
        if (names != reference || lvl.records.size() != reference.size()) {
            std::string have, want;
            for (const auto& n : names) have += " " + n;
            for (const auto& n : reference) want += " " + n;
            throw ValidationError("report: inconsistent method sets across noise levels; level '" + lvl.label
                                  + "' has {" + have + " } but '" + levels.front().label + "' has {" + want + " }");
        }
        ReportLevel out{lvl.label, lvl.sigma, {}};
        std::vector<double> rm, ss;
        for (const auto& m : table.methods) {
            const auto& r = *std::find_if(lvl.records.begin(), lvl.records.end(),
                                          [&](const MetricRecord& x) { return x.method == m; });
            out.rows.push_back({m, r.rmse_mean, r.rmse_sd, r.ssim_mean, r.ssim_sd, 0, 0});
            rm.push_back(r.rmse_mean);
            ss.push_back(r.ssim_mean);
        }
        const auto rr = ranks(rm, true);
        const auto sr = ranks(ss, false);
        for (std::size_t i = 0; i < out.rows.size(); ++i) {
            out.rows[i].rmse_rank = rr[i];
            out.rows[i].ssim_rank = sr[i];
        }
        table.levels.push_back(std::move(out));
    }
    return table;
}

std::string render_markdown(const ReportTable& t)
{
    std::ostringstream os;
    os << "# Denoising results\n\n"
       << "Each noise level is a Gaussian noise SD on the synthetic phantom; the SD sweep stands in for a "
          "tube-current sweep (lower current, higher SD). Entries are MEAN ± SD over slices of one "
          "volume. (best) and (2nd) mark the best and second-best method per column.\n\n";
    os << "| Method |";
    for (const auto& l : t.levels) os << " RMSE (HU) " << l.label << " | SSIM " << l.label << " |";
    os << "\n|---|";
    for (std::size_t i = 0; i < t.levels.size(); ++i) os << "---|---|";
    os << '\n';
    for (std::size_t m = 0; m < t.methods.size(); ++m) {
        os << "| " << t.methods[m] << " |";
        for (const auto& l : t.levels) {
            const auto& r = l.rows[m];
            os << ' ' << fixed(r.rmse_mean, 2) << " ± " << fixed(r.rmse_sd, 2) << marker(r.rmse_rank) << " | "
               << fixed(r.ssim_mean, 4) << " ± " << fixed(r.ssim_sd, 4) << marker(r.ssim_rank) << " |";
        }
        os << '\n';
    }
    os << "\nSD is the population standard deviation over slices (0 for a single slice). "
          "SSIM uses an 11x11 Gaussian window (sigma 1.5) with a 3000 HU dynamic range.\n";
    return os.str();
}

nlohmann::ordered_json to_json(const ReportTable& t)
{
    nlohmann::ordered_json j;
    j["methods"] = t.methods;
    auto& levels = j["levels"] = nlohmann::ordered_json::array();
    for (const auto& l : t.levels) {
        nlohmann::ordered_json rows = nlohmann::ordered_json::array();
        for (const auto& r : l.rows) {
            rows.push_back({{"method", r.method},
                            {"rmse_mean", r.rmse_mean},
                            {"rmse_sd", r.rmse_sd},
                            {"ssim_mean", r.ssim_mean},
                            {"ssim_sd", r.ssim_sd},
                            {"rmse_rank", r.rmse_rank},
                            {"ssim_rank", r.ssim_rank}});
        }
        levels.push_back({{"label", l.label}, {"sigma", l.sigma}, {"rows", rows}});
    }
    return j;
}

nlohmann::ordered_json metrics_json(std::span<const LevelMetrics> levels)
{
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& l : levels) {
        nlohmann::ordered_json methods = nlohmann::ordered_json::array();
        for (const auto& r : l.records) {
            auto s = r.summary_json();
            s["per_slice"] = {{"rmse_hu", r.rmse}, {"ssim", r.ssim}};
            methods.push_back(s);
        }
        arr.push_back({{"label", l.label}, {"sigma", l.sigma}, {"methods", methods}});
    }
    return arr;
}

std::vector<LevelMetrics> levels_from_metrics_json(const nlohmann::json& j)
{
    std::vector<LevelMetrics> out;
    try {
        for (const auto& l : j.at("levels")) {
            LevelMetrics lm;
            lm.label = l.at("label").get<std::string>();
            lm.sigma = l.at("sigma").get<double>();
            for (const auto& m : l.at("methods")) {
                MetricRecord r;
                r.method = m.at("method").get<std::string>();
                r.rmse = m.at("per_slice").at("rmse_hu").get<std::vector<double>>();
                r.ssim = m.at("per_slice").at("ssim").get<std::vector<double>>();
                std::tie(r.rmse_mean, r.rmse_sd) = mean_sd(r.rmse);
                std::tie(r.ssim_mean, r.ssim_sd) = mean_sd(r.ssim);
                lm.records.push_back(std::move(r));
            }
            out.push_back(std::move(lm));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("metrics file: ") + e.what());
    }
    return out;
}

} // namespace n2c
