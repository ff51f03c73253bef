#include "n2c/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "n2c/error.hpp"
#include "n2c/unet.hpp"

namespace n2c::ad {

namespace {

struct Probe {
    double value;
    std::uint64_t fingerprint;
};

Probe evaluate(const ScalarFn& fn, const std::vector<Tensor<double>>& inputs)
{
    NoGradGuard no_grad;
    KinkTrace trace;
    const auto out = fn(inputs);
    return {out.item(), trace.fingerprint()};
}

} // namespace

GradCheckResult gradcheck(const std::string& name, const ScalarFn& fn, std::vector<Tensor<double>> inputs,
                          const GradCheckOptions& options)
{
    GradCheckResult res;
    res.name = name;
    for (auto& t : inputs) {
        if (!t.requires_grad() || !t.is_leaf()) {
            throw ValidationError("gradcheck(" + name + "): inputs must be parameter tensors");
        }
        t.zero_grad();
    }
    backward(fn(inputs));
    const Probe base = evaluate(fn, inputs);

    for (auto& t : inputs) {
        const std::vector<double> analytic(t.grad().begin(), t.grad().end());
        auto values = t.mutable_values();
        for (std::size_t i = 0; i < values.size(); ++i) {
            const double saved = values[i];
            values[i] = saved + options.step;
            const Probe plus = evaluate(fn, inputs);
            values[i] = saved - options.step;
            const Probe minus = evaluate(fn, inputs);
            values[i] = saved;
            if (plus.fingerprint != base.fingerprint || minus.fingerprint != base.fingerprint) {
                ++res.skipped;
                continue;
            }
            const double numeric = (plus.value - minus.value) / (2.0 * options.step);
            const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
            res.max_rel_error = std::max(res.max_rel_error, std::abs(analytic[i] - numeric) / denom);
            ++res.checked;
        }
    }
    res.passed = res.checked > 0 && res.max_rel_error <= options.tolerance;
    return res;
}

namespace {

class Sampler {
public:
    explicit Sampler(std::uint64_t seed) : rng_(seed) {}

    std::size_t pick(std::size_t lo, std::size_t hi)
    {
        return std::uniform_int_distribution<std::size_t>(lo, hi)(rng_);
    }

    Tensor<double> param(const Shape& shape, double spread = 1.0)
    {
        std::uniform_real_distribution<double> u(-spread, spread);
        std::vector<double> v(numel(shape));
        for (auto& x : v) x = u(rng_);
        return Tensor<double>::parameter(shape, std::move(v));
    }

    /// Fixed random projection turning a tensor into a scalar with a generic gradient.
    Tensor<double> weights(const Shape& shape)
    {
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        std::vector<double> v(numel(shape));
        for (auto& x : v) x = u(rng_);
        return Tensor<double>::constant(shape, std::move(v));
    }

private:
    std::mt19937_64 rng_;
};

void merge(GradCheckResult& total, const GradCheckResult& one)
{
    total.checked += one.checked;
    total.skipped += one.skipped;
    total.max_rel_error = std::max(total.max_rel_error, one.max_rel_error);
    total.passed = total.passed && one.passed;
}

} // namespace

std::vector<GradCheckResult> gradient_suite(std::uint64_t seed, int trials, const GradCheckOptions& options)
{
    Sampler s(seed);
    std::vector<GradCheckResult> out;
    auto run = [&](const std::string& name, const std::function<GradCheckResult()>& trial) {
        GradCheckResult total;
        total.name = name;
        total.passed = true;
        for (int t = 0; t < trials; ++t) merge(total, trial());
        out.push_back(total);
    };

    run("conv2d", [&] {
        const std::size_t k = s.pick(0, 1) ? 3 : 1;
        const int stride = static_cast<int>(s.pick(1, 2));
        const int padding = static_cast<int>(s.pick(0, 1));
        // Input sizes chosen so the strided window tiles the padded input exactly.
        auto extent = [&](std::size_t o) { return (o - 1) * stride + k - 2 * padding; };
        std::size_t oh = s.pick(1, 4), ow = s.pick(1, 4);
        while (static_cast<std::ptrdiff_t>(extent(oh)) < 1 || extent(oh) > 64) ++oh;
        while (static_cast<std::ptrdiff_t>(extent(ow)) < 1 || extent(ow) > 64) ++ow;
        const Shape in{s.pick(1, 2), s.pick(1, 3), extent(oh), extent(ow)};
        const Shape ker{s.pick(1, 3), in[1], k, k};
        const auto w = s.weights({in[0], ker[0], oh, ow});
        return gradcheck("conv2d",
                         [&](const auto& x) { return dot(conv2d(x[0], x[1], x[2], stride, padding), w); },
                         {s.param(in), s.param(ker), s.param({ker[0]})}, options);
    });
    run("relu", [&] {
        const Shape sh{s.pick(1, 2), s.pick(1, 3), s.pick(2, 5), s.pick(2, 5)};
        const auto w = s.weights(sh);
        return gradcheck("relu", [&](const auto& x) { return dot(relu(x[0]), w); }, {s.param(sh)}, options);
    });
    run("downsample2x", [&] {
        const Shape sh{s.pick(1, 2), s.pick(1, 3), 2 * s.pick(1, 3), 2 * s.pick(1, 3)};
        const auto w = s.weights({sh[0], sh[1], sh[2] / 2, sh[3] / 2});
        return gradcheck("downsample2x", [&](const auto& x) { return dot(downsample2x(x[0]), w); }, {s.param(sh)},
                         options);
    });
    run("upsample2x", [&] {
        const Shape sh{s.pick(1, 2), s.pick(1, 3), s.pick(1, 4), s.pick(1, 4)};
        const auto w = s.weights({sh[0], sh[1], sh[2] * 2, sh[3] * 2});
        return gradcheck("upsample2x", [&](const auto& x) { return dot(upsample2x(x[0]), w); }, {s.param(sh)},
                         options);
    });
    run("concat_channels", [&] {
        const Shape a{s.pick(1, 2), s.pick(1, 3), s.pick(1, 4), s.pick(1, 4)};
        const Shape b{a[0], s.pick(1, 3), a[2], a[3]};
        const auto w = s.weights({a[0], a[1] + b[1], a[2], a[3]});
        return gradcheck("concat_channels", [&](const auto& x) { return dot(concat_channels(x[0], x[1]), w); },
                         {s.param(a), s.param(b)}, options);
    });
    run("add", [&] {
        const Shape sh{s.pick(1, 2), s.pick(1, 3), s.pick(1, 4), s.pick(1, 4)};
        const auto w = s.weights(sh);
        return gradcheck("add", [&](const auto& x) { return dot(add(x[0], x[1]), w); }, {s.param(sh), s.param(sh)},
                         options);
    });
    run("scale", [&] {
        const Shape sh{s.pick(1, 2), s.pick(1, 3), s.pick(1, 4), s.pick(1, 4)};
        const auto w = s.weights(sh);
        const double alpha = 0.5 + static_cast<double>(s.pick(0, 10)) * 0.3;
        return gradcheck("scale", [&](const auto& x) { return dot(scale(x[0], alpha), w); }, {s.param(sh)}, options);
    });
    run("dot", [&] {
        const Shape sh{s.pick(1, 2), s.pick(1, 3), s.pick(1, 4), s.pick(1, 4)};
        return gradcheck("dot", [&](const auto& x) { return dot(x[0], x[1]); }, {s.param(sh), s.param(sh)}, options);
    });
    run("mse_mean", [&] {
        const Shape sh{s.pick(1, 2), s.pick(1, 3), s.pick(1, 4), s.pick(1, 4)};
        return gradcheck("mse_mean", [&](const auto& x) { return mse_mean(x[0], x[1]); }, {s.param(sh), s.param(sh)},
                         options);
    });

    // Tiny U-Net: gradient of mse_mean(forward(model, x), target) w.r.t. every parameter.
    GradCheckResult net_total;
    net_total.name = "unet";
    net_total.passed = true;
    for (int t = 0; t < std::max(1, trials / 5); ++t) {
        UNetConfig cfg;
        cfg.levels = 2;
        cfg.base_features = 2;
        cfg.convs_per_level = 1 + t % 2;
        cfg.output_init_gain = 1.0;
        const auto model = build(cfg, seed + 101 + static_cast<std::uint64_t>(t)).cast<double>();
        const auto batch = Tensor<double>::constant({1, 1, 8, 8}, [&] {
            std::vector<double> v(64);
            std::uniform_real_distribution<double> u(-200.0, 200.0);
            std::mt19937_64 rng(seed + 7 + static_cast<std::uint64_t>(t));
            for (auto& x : v) x = u(rng);
            return v;
        }());
        const auto target = Tensor<double>::constant({1, 1, 8, 8}, std::vector<double>(64, 10.0));
        auto fn = [&](const std::vector<Tensor<double>>& p) {
            Network<double> m{model.config, model.names, p, model.init_seed};
            return mse_mean(forward(m, batch), target);
        };
        merge(net_total, gradcheck("unet", fn, model.params, options));
    }
    out.push_back(net_total);
    return out;
}

nlohmann::ordered_json to_json(const GradCheckResult& r)
{
    return {{"name", r.name},
            {"checked", r.checked},
            {"skipped", r.skipped},
            {"max_rel_error", r.max_rel_error},
            {"passed", r.passed}};
}

} // namespace n2c::ad
