#include <gtest/gtest.h>

#include "n2c/error.hpp"
#include "n2c/report.hpp"

using namespace n2c;

namespace {

MetricRecord record(const std::string& method, double rmse, double ssim)
{
    MetricRecord r;
    r.method = method;
    r.rmse = {rmse - 1, rmse + 1};
    r.ssim = {ssim, ssim};
    std::tie(r.rmse_mean, r.rmse_sd) = mean_sd(r.rmse);
    std::tie(r.ssim_mean, r.ssim_sd) = mean_sd(r.ssim);
    return r;
}

std::vector<LevelMetrics> two_levels()
{
    return {{"sigma15", 15, {record("noisy", 15, 0.80), record("tv", 6, 0.95), record("n2c_s", 8, 0.93)}},
            {"sigma30", 30, {record("noisy", 30, 0.60), record("tv", 10, 0.90), record("n2c_s", 9, 0.91)}}};
}

} // namespace

TEST(Report, RanksPerLevel)
{
    const auto t = build_report(two_levels());
    ASSERT_EQ(t.methods, (std::vector<std::string>{"noisy", "tv", "n2c_s"}));
    const auto& l0 = t.levels[0].rows;
    EXPECT_EQ(l0[1].rmse_rank, 1);
    EXPECT_EQ(l0[2].rmse_rank, 2);
    EXPECT_EQ(l0[0].rmse_rank, 3);
    EXPECT_EQ(l0[1].ssim_rank, 1);
    const auto& l1 = t.levels[1].rows;
    EXPECT_EQ(l1[2].rmse_rank, 1);
    EXPECT_EQ(l1[2].ssim_rank, 1);
    EXPECT_EQ(l1[1].rmse_rank, 2);
}

TEST(Report, ExactlyOneBestPerColumn)
{
    const auto md = render_markdown(build_report(two_levels()));
    std::size_t best = 0;
    for (std::size_t p = md.find(" (best) |"); p != std::string::npos; p = md.find(" (best) |", p + 1)) ++best;
    EXPECT_EQ(best, 4u); // two levels x two metrics
    EXPECT_NE(md.find("| tv | 6.00 ± 1.00 (best) | 0.9500 ± 0.0000 (best) |"), std::string::npos) << md;
    EXPECT_NE(md.find("population standard deviation"), std::string::npos);
}

TEST(Report, InconsistentMethodSetsRejected)
{
    auto lv = two_levels();
    lv[1].records.pop_back();
    try {
        build_report(lv);
        FAIL() << "expected rejection";
    } catch (const ValidationError& e) {
        EXPECT_NE(std::string(e.what()).find("sigma30"), std::string::npos) << e.what();
    }
    EXPECT_THROW(build_report(std::vector<LevelMetrics>{}), ValidationError);
}

TEST(Report, MetricsJsonRoundTrip)
{
    const auto lv = two_levels();
    nlohmann::json doc{{"levels", metrics_json(lv)}};
    const auto back = levels_from_metrics_json(doc);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[1].label, "sigma30");
    EXPECT_EQ(back[1].records[2].method, "n2c_s");
    EXPECT_NEAR(back[1].records[2].rmse_mean, 9.0, 1e-12);
    EXPECT_THROW(levels_from_metrics_json(nlohmann::json::object()), FormatError);
}
