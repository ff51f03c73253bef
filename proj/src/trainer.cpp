#include "n2c/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

#include "n2c/error.hpp"
#include "n2c/losses.hpp"

namespace n2c {

std::string to_string(TrainMode mode) { return mode == TrainMode::n2c ? "n2c" : "supervised"; }

TrainMode train_mode_from_string(const std::string& name)
{
    if (name == "n2c") return TrainMode::n2c;
    if (name == "supervised") return TrainMode::supervised;
    throw ValidationError("unknown training mode '" + name + "' (expected n2c or supervised)");
}

void validate(const TrainConfig& cfg)
{
    if (cfg.epochs < 1) throw ValidationError("TrainConfig.epochs must be >= 1");
    if (cfg.batch_size < 1) throw ValidationError("TrainConfig.batch_size must be >= 1");
    if (!(cfg.lr > 0.0)) throw ValidationError("TrainConfig.lr must be > 0");
    if (cfg.log_every < 1) throw ValidationError("TrainConfig.log_every must be >= 1");
    if (cfg.early_stop && cfg.early_stop->patience < 1) {
        throw ValidationError("TrainConfig.early_stop.patience must be >= 1");
    }
}

void TrainLog::write_csv(const std::filesystem::path& path) const
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("TrainLog: cannot write " + path.string());
    out << "step,epoch,loss,wall_time_s\n";
    out.precision(10);
    for (const auto& r : steps) {
        out << r.step << ',' << r.epoch << ',' << r.loss << ',' << r.wall_time_s << '\n';
    }
}

namespace {

struct Sample {
    const float* input;
    const float* target_a;
    const float* target_b; ///< null for supervised
};

std::size_t bounded(std::mt19937_64& rng, std::size_t n)
{
    return static_cast<std::size_t>((static_cast<unsigned __int128>(rng()) * n) >> 64);
}

TrainResult run_training(std::vector<Sample> samples, std::size_t rows, std::size_t cols, ModelState model,
                         const TrainConfig& cfg, const EpochCallback& on_epoch)
{
    validate(cfg);
    if (samples.empty()) throw ValidationError("training: no samples");
    const bool n2c = cfg.mode == TrainMode::n2c;
    const std::size_t plane = rows * cols;

    ad::AdamState<float> adam;
    adam.hyper = {cfg.lr, cfg.beta1, cfg.beta2, cfg.eps};
    std::mt19937_64 rng(cfg.shuffle_seed);
    std::vector<std::size_t> order(samples.size());

    TrainLog log;
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };
    std::vector<double> tail;
    double best = std::numeric_limits<double>::infinity();
    int stale = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[bounded(rng, i)]);

        double epoch_sum = 0;
        std::uint64_t epoch_steps = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t B = std::min(cfg.batch_size, order.size() - start);
            std::vector<float> in(B * plane), ta(B * plane), tb(n2c ? B * plane : 0);
            for (std::size_t b = 0; b < B; ++b) {
                const Sample& s = samples[order[start + b]];
                std::copy_n(s.input, plane, in.data() + b * plane);
                std::copy_n(s.target_a, plane, ta.data() + b * plane);
                if (n2c) std::copy_n(s.target_b, plane, tb.data() + b * plane);
            }
            const ad::Shape shape{B, 1, rows, cols};
            const auto x = ad::Tensor<float>::constant(shape, std::move(in));
            const auto out = forward(model, x);
            const auto loss = n2c ? n2c_loss(out, ad::Tensor<float>::constant(shape, std::move(ta)),
                                              ad::Tensor<float>::constant(shape, std::move(tb)))
                                  : supervised_loss(out, ad::Tensor<float>::constant(shape, std::move(ta)));
            const double value = loss.item();
            if (!std::isfinite(value)) {
                std::ostringstream os;
                os << "training diverged: non-finite loss at step " << log.total_steps + 1 << " (epoch " << epoch
                   << ", lr " << cfg.lr << "); recent losses:";
                for (double v : tail) os << ' ' << v;
                throw ComputeError(os.str());
            }
            model.zero_grad();
            ad::backward(loss);
            ad::adam_step<float>(model.params, adam);

            ++log.total_steps;
            ++epoch_steps;
            epoch_sum += value;
            tail.push_back(value);
            if (tail.size() > 8) tail.erase(tail.begin());
            if ((log.total_steps - 1) % cfg.log_every == 0) {
                log.steps.push_back({log.total_steps, epoch, value, elapsed()});
            }
        }
        const EpochRecord rec{epoch, epoch_sum / static_cast<double>(epoch_steps), epoch_steps, elapsed()};
        log.epochs.push_back(rec);
        if (on_epoch) on_epoch(rec);

        if (cfg.early_stop) {
            if (best - rec.mean_loss > cfg.early_stop->min_delta) {
                best = rec.mean_loss;
                stale = 0;
            } else if (++stale >= cfg.early_stop->patience) {
                log.stopped_early = true;
                break;
            }
        }
    }
    model.zero_grad();
    log.initial_epoch_loss = log.epochs.front().mean_loss;
    log.final_epoch_loss = log.epochs.back().mean_loss;
    return {std::move(model), std::move(log)};
}

void require_common_slice_shape(std::size_t& rows, std::size_t& cols, const Volume& v)
{
    if (rows == 0) {
        rows = v.rows();
        cols = v.cols();
    } else if (v.rows() != rows || v.cols() != cols) {
        throw ValidationError("training: all volumes must share the slice size");
    }
}

} // namespace

TrainResult train_n2c(std::span<const Volume> volumes, ModelState model, const TrainConfig& cfg,
                      const EpochCallback& on_epoch)
{
    if (cfg.mode != TrainMode::n2c) throw ValidationError("train_n2c: TrainConfig.mode must be n2c");
    if (volumes.empty()) throw ValidationError("train_n2c: no volumes");
    std::vector<Sample> samples;
    std::size_t rows = 0, cols = 0;
    for (const auto& v : volumes) {
        if (v.slices() < 3) {
            throw ValidationError("train_n2c: volume with S=" + std::to_string(v.slices())
                                  + " has no interior slice; at least 3 are required");
        }
        require_common_slice_shape(rows, cols, v);
        for (std::size_t s = 1; s + 1 < v.slices(); ++s) {
            samples.push_back({v.slice(s).data(), v.slice(s - 1).data(), v.slice(s + 1).data()});
        }
    }
    return run_training(std::move(samples), rows, cols, std::move(model), cfg, on_epoch);
}

TrainResult train_supervised(std::span<const VolumePair> pairs, ModelState model, const TrainConfig& cfg,
                             const EpochCallback& on_epoch)
{
    if (cfg.mode != TrainMode::supervised) {
        throw ValidationError("train_supervised: TrainConfig.mode must be supervised");
    }
    if (pairs.empty()) throw ValidationError("train_supervised: no volume pairs");
    std::vector<Sample> samples;
    std::size_t rows = 0, cols = 0;
    for (const auto& p : pairs) {
        if (p.noisy.dims() != p.clean.dims()) {
            throw ValidationError("train_supervised: noisy/clean dims differ");
        }
        require_common_slice_shape(rows, cols, p.noisy);
        for (std::size_t s = 0; s < p.noisy.slices(); ++s) {
            samples.push_back({p.noisy.slice(s).data(), p.clean.slice(s).data(), nullptr});
        }
    }
    return run_training(std::move(samples), rows, cols, std::move(model), cfg, on_epoch);
}

Volume denoise_volume_with(const std::function<Image(const Image&)>& denoiser, const Volume& noisy,
                           unsigned threads)
{
    const std::size_t S = noisy.slices();
    std::vector<Image> out(S);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        ad::NoGradGuard no_grad;
        for (std::size_t s = next++; s < S; s = next++) {
            try {
                Image img = denoiser(noisy.slice_image(s));
                if (img.rows != noisy.rows() || img.cols != noisy.cols()) {
                    throw ValidationError("denoise_volume: denoiser changed the slice shape");
                }
                for (auto& v : img.pixels) v = std::clamp(v, kHuMin, kHuMax);
                out[s] = std::move(img);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = S;
            }
        }
    };
    const unsigned n = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(S)));
    if (n == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < n; ++i) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    return volume_from_slices(out, VolumeKind::denoised, noisy.geometry(), noisy.seed());
}

Volume denoise_volume(const ModelState& model, const Volume& noisy, unsigned threads)
{
    const std::size_t div = std::size_t{1} << (model.config.levels - 1);
    if (noisy.rows() % div != 0 || noisy.cols() % div != 0) {
        throw ValidationError("denoise_volume: slice size " + std::to_string(noisy.rows()) + "x"
                              + std::to_string(noisy.cols()) + " is not divisible by " + std::to_string(div));
    }
    return denoise_volume_with([&](const Image& img) { return denoise_slice(model, img); }, noisy, threads);
}

} // namespace n2c
