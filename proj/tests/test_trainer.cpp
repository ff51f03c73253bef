#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "n2c/error.hpp"
#include "n2c/losses.hpp"
#include "n2c/metrics.hpp"
#include "n2c/trainer.hpp"
#include "test_util.hpp"

using namespace n2c;

namespace {

UNetConfig tiny_net()
{
    UNetConfig c;
    c.levels = 2;
    c.base_features = 4;
    return c;
}

Volume phantom(std::size_t S, std::size_t M, std::uint64_t seed)
{
    PhantomSpec p;
    p.dims = {S, M, M};
    p.seed = seed;
    return generate_phantom(p);
}

Volume noisy(const Volume& clean, double sigma, std::uint64_t seed)
{
    return add_noise(clean, {NoiseModel::gaussian, sigma, 0.0, seed}).noisy;
}

TrainConfig cfg(TrainMode mode, int epochs, std::uint64_t shuffle = 1)
{
    TrainConfig t;
    t.mode = mode;
    t.epochs = epochs;
    t.shuffle_seed = shuffle;
    t.lr = 1e-3;
    return t;
}

std::vector<float> flat(const ModelState& m)
{
    std::vector<float> out;
    for (const auto& p : m.params) out.insert(out.end(), p.values().begin(), p.values().end());
    return out;
}

} // namespace

TEST(TrainN2c, OneStepPerInteriorSlice)
{
    const std::vector<Volume> v3{noisy(phantom(3, 16, 1), 30, 2)};
    const auto r = train_n2c(v3, build(tiny_net(), 0), cfg(TrainMode::n2c, 1));
    EXPECT_EQ(r.log.total_steps, 1u);

    const std::vector<Volume> vs{noisy(phantom(5, 16, 1), 30, 2), noisy(phantom(7, 16, 3), 30, 4)};
    const auto r2 = train_n2c(vs, build(tiny_net(), 0), cfg(TrainMode::n2c, 2));
    EXPECT_EQ(r2.log.total_steps, 2u * ((5 - 2) + (7 - 2)));
    ASSERT_EQ(r2.log.epochs.size(), 2u);
    EXPECT_EQ(r2.log.epochs[0].steps, 8u);
}

TEST(TrainN2c, DeterministicForFixedSeeds)
{
    const std::vector<Volume> v{noisy(phantom(8, 16, 1), 30, 2)};
    const auto a = train_n2c(v, build(tiny_net(), 5), cfg(TrainMode::n2c, 2, 9));
    const auto b = train_n2c(v, build(tiny_net(), 5), cfg(TrainMode::n2c, 2, 9));
    EXPECT_EQ(flat(a.model), flat(b.model));
    ASSERT_EQ(a.log.steps.size(), b.log.steps.size());
    for (std::size_t i = 0; i < a.log.steps.size(); ++i) EXPECT_EQ(a.log.steps[i].loss, b.log.steps[i].loss);
    const auto c = train_n2c(v, build(tiny_net(), 5), cfg(TrainMode::n2c, 2, 10));
    EXPECT_NE(flat(a.model), flat(c.model));
}

TEST(TrainN2c, LogStepsIncreaseAndLossesFinite)
{
    const std::vector<Volume> v{noisy(phantom(6, 16, 1), 30, 2)};
    TrainConfig t = cfg(TrainMode::n2c, 3);
    t.log_every = 2;
    const auto r = train_n2c(v, build(tiny_net(), 0), t);
    ASSERT_FALSE(r.log.steps.empty());
    for (std::size_t i = 1; i < r.log.steps.size(); ++i) EXPECT_GT(r.log.steps[i].step, r.log.steps[i - 1].step);
    for (const auto& s : r.log.steps) EXPECT_TRUE(std::isfinite(s.loss));
    EXPECT_EQ(r.log.steps.size(), 6u);
}

TEST(TrainN2c, LossStaysAboveClosedFormFloor)
{
    // For any F, mse(F,a)+mse(F,b) >= mse(a,b)/2, attained at F=(a+b)/2.
    const Volume vol = noisy(phantom(10, 16, 1), 30, 2);
    const std::vector<Volume> v{vol};
    const auto r = train_n2c(v, build(tiny_net(), 0), cfg(TrainMode::n2c, 6));
    double floor = 0;
    const auto ts = extract_triplets(vol);
    for (const auto& t : ts) floor += supervised_loss(t.y_prev(), t.y_next()) / 2.0;
    floor /= static_cast<double>(ts.size());
    EXPECT_GE(r.log.final_epoch_loss, 0.9 * floor);
}

TEST(TrainN2c, RejectsInvalidInput)
{
    const std::vector<Volume> v{noisy(phantom(6, 16, 1), 30, 2)};
    EXPECT_THROW(train_n2c(v, build(tiny_net(), 0), cfg(TrainMode::supervised, 1)), ValidationError);
    EXPECT_THROW(train_n2c(std::vector<Volume>{}, build(tiny_net(), 0), cfg(TrainMode::n2c, 1)), ValidationError);
    TrainConfig bad = cfg(TrainMode::n2c, 0);
    EXPECT_THROW(train_n2c(v, build(tiny_net(), 0), bad), ValidationError);
    const std::vector<Volume> odd{noisy(phantom(6, 17, 1), 30, 2)};
    EXPECT_THROW(train_n2c(odd, build(tiny_net(), 0), cfg(TrainMode::n2c, 1)), ValidationError);
}

TEST(TrainN2c, DivergenceAbortsWithDiagnostic)
{
    const std::vector<Volume> v{noisy(phantom(8, 16, 1), 30, 2)};
    UNetConfig c = tiny_net();
    c.output_init_gain = 1.0;
    TrainConfig t = cfg(TrainMode::n2c, 50);
    t.lr = 1e30;
    try {
        train_n2c(v, build(c, 0), t);
        FAIL() << "expected divergence";
    } catch (const ComputeError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("step"), std::string::npos) << msg;
        EXPECT_NE(msg.find("lr"), std::string::npos) << msg;
    }
}

TEST(TrainN2c, EarlyStopHaltsOnPlateau)
{
    const std::vector<Volume> v{noisy(phantom(6, 16, 1), 30, 2)};
    TrainConfig t = cfg(TrainMode::n2c, 40);
    t.early_stop = EarlyStop{2, 1e9};
    const auto r = train_n2c(v, build(tiny_net(), 0), t);
    EXPECT_TRUE(r.log.stopped_early);
    EXPECT_EQ(r.log.epochs.size(), 3u);
}

TEST(TrainSupervised, EveryVoxelSliceIsAStep)
{
    const Volume clean = phantom(3, 16, 1);
    const std::vector<VolumePair> p{{noisy(clean, 30, 2), clean}};
    const auto r = train_supervised(p, build(tiny_net(), 0), cfg(TrainMode::supervised, 1));
    EXPECT_EQ(r.log.total_steps, 3u);
}

TEST(TrainSupervised, CleanInputStaysNearIdentity)
{
    const Volume clean = phantom(8, 16, 1);
    const std::vector<VolumePair> p{{clean.relabel(VolumeKind::noisy, std::nullopt), clean}};
    UNetConfig c = tiny_net();
    c.output_init_gain = 0.1;
    TrainConfig t = cfg(TrainMode::supervised, 1);
    t.lr = 1e-4;
    auto mean_loss = [&](const ModelState& m) {
        double acc = 0;
        for (std::size_t s = 0; s < clean.slices(); ++s) {
            acc += supervised_loss(denoise_slice(m, clean.slice_image(s)), clean.slice_image(s));
        }
        return acc / static_cast<double>(clean.slices());
    };
    const ModelState m0 = build(c, 3);
    const double init = mean_loss(m0);
    ASSERT_GT(init, 0.0);
    const auto r = train_supervised(p, m0, t);
    EXPECT_LE(mean_loss(r.model), 1.1 * init);
}

TEST(TrainSupervised, DeterministicAndShapeChecked)
{
    const Volume clean = phantom(5, 16, 1);
    const std::vector<VolumePair> p{{noisy(clean, 30, 2), clean}};
    const auto a = train_supervised(p, build(tiny_net(), 1), cfg(TrainMode::supervised, 2));
    const auto b = train_supervised(p, build(tiny_net(), 1), cfg(TrainMode::supervised, 2));
    EXPECT_EQ(flat(a.model), flat(b.model));
    const std::vector<VolumePair> bad{{noisy(clean, 30, 2), phantom(6, 16, 1)}};
    EXPECT_THROW(train_supervised(bad, build(tiny_net(), 1), cfg(TrainMode::supervised, 1)), ValidationError);
}

TEST(Denoise, ZeroModelIsIdentityAndKeepsMetadata)
{
    const Volume v = noisy(phantom(6, 16, 1), 30, 2);
    auto m = build(tiny_net(), 0);
    fill_parameters(m, 0.0f);
    for (unsigned threads : {1u, 3u}) {
        const Volume out = denoise_volume(m, v, threads);
        EXPECT_EQ(out.kind(), VolumeKind::denoised);
        EXPECT_EQ(out.dims(), v.dims());
        EXPECT_EQ(out.geometry(), v.geometry());
        EXPECT_TRUE(std::equal(out.data().begin(), out.data().end(), v.data().begin()));
    }
}

TEST(Denoise, ThreadCountDoesNotChangeOutput)
{
    UNetConfig c = tiny_net();
    c.output_init_gain = 1.0;
    const auto m = build(c, 4);
    const Volume v = noisy(phantom(6, 16, 1), 30, 2);
    EXPECT_EQ(denoise_volume(m, v, 1), denoise_volume(m, v, 4));
}

TEST(Denoise, RejectsIndivisibleSlices)
{
    UNetConfig c;
    c.levels = 3;
    const Volume v = noisy(phantom(4, 18, 1), 30, 2);
    EXPECT_THROW(denoise_volume(build(c, 0), v), ValidationError);
}

TEST(TrainLogCsv, HasHeaderAndOneRowPerLoggedStep)
{
    test::TempDir dir;
    const std::vector<Volume> v{noisy(phantom(5, 16, 1), 30, 2)};
    const auto r = train_n2c(v, build(tiny_net(), 0), cfg(TrainMode::n2c, 2));
    r.log.write_csv(dir.path / "log.csv");
    std::ifstream in(dir.path / "log.csv");
    std::string line;
    std::getline(in, line);
    EXPECT_EQ(line, "step,epoch,loss,wall_time_s");
    std::size_t rows = 0;
    while (std::getline(in, line)) ++rows;
    EXPECT_EQ(rows, r.log.steps.size());
}

TEST(DeskTraining, LossDropsAndDenoiserBeatsInput)
{
    // Desk reference run: 64^3 phantom, sigma 30, levels 3 / base 8, 30 epochs, lr 1e-4.
    PhantomSpec p;
    p.dims = {64, 64, 64};
    p.seed = 11;
    const Volume clean = generate_phantom(p);
    const Volume y = noisy(clean, 30, 12);
    TrainConfig t;
    t.epochs = 30;
    t.shuffle_seed = 13;
    const std::vector<Volume> v{y};
    const auto r = train_n2c(v, build(UNetConfig{}, 14), t);
    // Oracle run: final / initial epoch loss = 0.60. An identity start bounds the ratio
    // below by the noise floor, so the bound sits above the oracle value.
    EXPECT_LT(r.log.final_epoch_loss, 0.7 * r.log.initial_epoch_loss);
    const Volume d = denoise_volume(r.model, y);
    EXPECT_LT(evaluate_volume(d, clean, "n2c_s").rmse_mean, evaluate_volume(y, clean, "noisy").rmse_mean);
}
