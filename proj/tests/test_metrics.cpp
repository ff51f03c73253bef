#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <random>

#include "n2c/error.hpp"
#include "n2c/metrics.hpp"
#include "n2c/volume.hpp"
#include "test_util.hpp"

using namespace n2c;

namespace {

Image random_image(std::size_t r, std::size_t c, double lo, double hi, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Image img(r, c);
    for (auto& p : img.pixels) p = u(rng);
    return img;
}

Volume phantom(std::size_t S, std::size_t M, std::uint64_t seed)
{
    PhantomSpec p;
    p.dims = {S, M, M};
    p.seed = seed;
    return generate_phantom(p);
}

} // namespace

TEST(Rmse, Examples)
{
    const Image a = random_image(5, 6, -100, 100, 1);
    EXPECT_EQ(rmse(a, a), 0.0);
    Image b = a;
    for (auto& p : b.pixels) p += 5.0;
    EXPECT_NEAR(rmse(a, b), 5.0, 1e-12);
    EXPECT_NEAR(rmse(Image(1, 4, 0.0), Image(1, 4, {1, 2, 3, 4})), std::sqrt(30.0 / 4.0), 1e-12);
}

TEST(Rmse, TriangleInequalityOnRandomTriples)
{
    for (std::uint64_t s = 0; s < 50; ++s) {
        const Image a = random_image(7, 9, -500, 500, 3 * s);
        const Image b = random_image(7, 9, -500, 500, 3 * s + 1);
        const Image c = random_image(7, 9, -500, 500, 3 * s + 2);
        EXPECT_LE(rmse(a, c), rmse(a, b) + rmse(b, c) + 1e-12);
    }
}

TEST(Rmse, RejectsShapeMismatch)
{
    EXPECT_THROW(rmse(Image(3, 4), Image(4, 3)), ValidationError);
    EXPECT_THROW(rmse(Image(), Image()), ValidationError);
}

TEST(Ssim, IdenticalInputsGiveOne)
{
    for (std::uint64_t s = 0; s < 5; ++s) {
        const Image x = random_image(16, 20, -1000, 1000, s);
        EXPECT_NEAR(ssim(x, x), 1.0, 1e-12);
    }
    const Image flat(12, 12, 7.0);
    EXPECT_NEAR(ssim(flat, flat), 1.0, 1e-12);
}

TEST(Ssim, SymmetricAndBounded)
{
    for (std::uint64_t s = 0; s < 20; ++s) {
        const Image a = random_image(16, 16, -1000, 1000, 2 * s);
        const Image b = random_image(16, 16, -1000, 1000, 2 * s + 1);
        const double ab = ssim(a, b), ba = ssim(b, a);
        EXPECT_NEAR(ab, ba, 1e-12);
        EXPECT_LE(std::abs(ab), 1.0 + 1e-12);
        Image neg = a;
        for (auto& p : neg.pixels) p = -p;
        EXPECT_LE(std::abs(ssim(a, neg)), 1.0 + 1e-12);
        EXPECT_LT(ssim(a, neg), 1.0);
    }
}

TEST(Ssim, DecreasesWithNoiseLevel)
{
    const Image clean = phantom(16, 64, 3).slice_image(8);
    std::vector<double> scores;
    for (double sigma : {5.0, 15.0, 45.0}) {
        std::mt19937_64 rng(17);
        std::normal_distribution<double> n(0.0, sigma);
        Image y = clean;
        for (auto& p : y.pixels) p += n(rng);
        scores.push_back(ssim(y, clean));
    }
    EXPECT_GT(scores[0], scores[1]);
    EXPECT_GT(scores[1], scores[2]);
    EXPECT_LT(scores[0], 1.0);
}

TEST(Ssim, RejectsInvalidInput)
{
    EXPECT_THROW(ssim(Image(16, 16), Image(16, 17)), ValidationError);
    EXPECT_THROW(ssim(Image(16, 16), Image(16, 16), 0.0), ValidationError);
    EXPECT_THROW(ssim(Image(8, 16), Image(8, 16)), ValidationError);
}

TEST(EvaluateVolume, CleanAgainstItself)
{
    const Volume v = phantom(6, 16, 4);
    const auto r = evaluate_volume(v, v, "clean");
    EXPECT_EQ(r.rmse.size(), 6u);
    EXPECT_EQ(r.rmse_mean, 0.0);
    EXPECT_NEAR(r.ssim_mean, 1.0, 1e-12);
    EXPECT_EQ(r.rmse_sd, 0.0);
    EXPECT_NEAR(r.ssim_sd, 0.0, 1e-12);
}

TEST(EvaluateVolume, SingleSliceHasZeroSd)
{
    const std::vector<Image> c{phantom(3, 16, 4).slice_image(1)};
    const Volume clean = volume_from_slices(c, VolumeKind::clean);
    const Volume y = add_noise(clean, {NoiseModel::gaussian, 20, 0, 5}).noisy;
    const auto r = evaluate_volume(y, clean, "noisy");
    EXPECT_GT(r.rmse_mean, 0.0);
    EXPECT_EQ(r.rmse_sd, 0.0);
    EXPECT_EQ(r.ssim_sd, 0.0);
}

TEST(EvaluateVolume, AggregatesMatchDirectRecomputation)
{
    const Volume clean = phantom(7, 16, 6);
    const Volume y = add_noise(clean, {NoiseModel::gaussian, 25, 0, 7}).noisy;
    const auto r = evaluate_volume(y, clean, "noisy");
    ASSERT_EQ(r.rmse.size(), 7u);
    ASSERT_EQ(r.ssim.size(), 7u);
    double sum = 0, ssum = 0;
    for (std::size_t s = 0; s < 7; ++s) {
        const Image a = y.slice_image(s), b = clean.slice_image(s);
        double acc = 0;
        for (std::size_t i = 0; i < a.size(); ++i) acc += (a.pixels[i] - b.pixels[i]) * (a.pixels[i] - b.pixels[i]);
        const double direct = std::sqrt(acc / static_cast<double>(a.size()));
        EXPECT_NEAR(r.rmse[s], direct, 1e-9);
        sum += r.rmse[s];
        ssum += r.ssim[s];
    }
    const double mean = sum / 7.0;
    EXPECT_NEAR(r.rmse_mean, mean, 1e-12);
    EXPECT_NEAR(r.ssim_mean, ssum / 7.0, 1e-12);
    double var = 0;
    for (double v : r.rmse) var += (v - mean) * (v - mean);
    EXPECT_NEAR(r.rmse_sd, std::sqrt(var / 7.0), 1e-12);
    for (double v : r.rmse) EXPECT_GE(v, 0.0);
}

TEST(EvaluateVolume, RejectsDimensionMismatch)
{
    EXPECT_THROW(evaluate_volume(phantom(4, 16, 1), phantom(5, 16, 1), "x"), ValidationError);
}

TEST(MetricsCsv, OneRowPerSlicePerMethod)
{
    test::TempDir dir;
    const Volume clean = phantom(3, 16, 8);
    const Volume y = add_noise(clean, {NoiseModel::gaussian, 25, 0, 9}).noisy;
    const std::vector<MetricRecord> recs{evaluate_volume(y, clean, "noisy"), evaluate_volume(clean, clean, "oracle")};
    write_metrics_csv(recs, dir.path / "m.csv");
    std::ifstream in(dir.path / "m.csv");
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "method,slice,rmse_hu,ssim");
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        EXPECT_EQ(line.rfind(rows < 3 ? "noisy," : "oracle,", 0), 0u) << line;
        ++rows;
    }
    EXPECT_EQ(rows, 6u);
}

TEST(MeanSd, PopulationConvention)
{
    const std::vector<double> v{1, 2, 3, 4};
    const auto [m, sd] = mean_sd(v);
    EXPECT_DOUBLE_EQ(m, 2.5);
    EXPECT_DOUBLE_EQ(sd, std::sqrt(1.25));
}
