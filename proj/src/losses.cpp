#include "n2c/losses.hpp"

#include <cmath>

#include "n2c/error.hpp"

namespace n2c {

template <typename T>
ad::Tensor<T> supervised_loss(const ad::Tensor<T>& f_out, const ad::Tensor<T>& clean)
{
    return ad::mse_mean(f_out, clean);
}

template <typename T>
ad::Tensor<T> n2c_loss(const ad::Tensor<T>& f_out, const ad::Tensor<T>& y_prev, const ad::Tensor<T>& y_next)
{
    return ad::add(ad::mse_mean(f_out, y_prev), ad::mse_mean(f_out, y_next));
}

template ad::Tensor<float> supervised_loss(const ad::Tensor<float>&, const ad::Tensor<float>&);
template ad::Tensor<double> supervised_loss(const ad::Tensor<double>&, const ad::Tensor<double>&);
template ad::Tensor<float> n2c_loss(const ad::Tensor<float>&, const ad::Tensor<float>&, const ad::Tensor<float>&);
template ad::Tensor<double> n2c_loss(const ad::Tensor<double>&, const ad::Tensor<double>&, const ad::Tensor<double>&);

namespace {

double mse(const Image& a, const Image& b)
{
    double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.pixels[i] - b.pixels[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

double dot(const Image& a, const Image& b)
{
    double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a.pixels[i] * b.pixels[i];
    return acc;
}

double rel(double residual, double scale) { return scale == 0.0 ? std::abs(residual) : std::abs(residual) / std::abs(scale); }

} // namespace

double supervised_loss(const Image& f_out, const Image& clean)
{
    require_same_shape(f_out, clean, "supervised_loss");
    if (f_out.size() == 0) throw ValidationError("supervised_loss: empty images");
    return mse(f_out, clean);
}

double n2c_loss(const Image& f_out, const Image& y_prev, const Image& y_next)
{
    require_same_shape(f_out, y_prev, "n2c_loss");
    require_same_shape(f_out, y_next, "n2c_loss");
    if (f_out.size() == 0) throw ValidationError("n2c_loss: empty images");
    return mse(f_out, y_prev) + mse(f_out, y_next);
}

TermBreakdown decompose(const SliceTriplet& t, const Image& f)
{
    if (!t.x || !t.n) {
        throw ValidationError("decompose: triplet at slice " + std::to_string(t.s) + " lacks clean/noise fields");
    }
    const auto& y = t.y;
    const auto& x = *t.x;
    const auto& n = *t.n;
    for (const auto* img : {&y[0], &y[1], &y[2], &x[0], &x[1], &x[2], &n[0], &n[1], &n[2]}) {
        require_same_shape(f, *img, "decompose");
    }
    TermBreakdown b;
    for (std::size_t i = 0; i < f.size(); ++i) {
        const double fi = f.pixels[i];
        const double yp = y[0].pixels[i], yn = y[2].pixels[i];
        const double xp = x[0].pixels[i], xc = x[1].pixels[i], xn = x[2].pixels[i];
        const double np = n[0].pixels[i], nn = n[2].pixels[i];
        const double dp = fi - yp, dn = fi - yn, ds = fi - xc;
        const double context = 2.0 * xc - yp - yn;
        b.lhs += dp * dp + dn * dn;
        b.t_sup += 2.0 * ds * ds;
        b.t_cross_f += 2.0 * context * fi;
        b.t_cross_x -= 2.0 * context * xc;
        b.t_const += (xc - yp) * (xc - yp) + (xc - yn) * (xc - yn);
        b.curvature += 2.0 * (2.0 * xc - xp - xn) * fi;
        b.noise_prev -= 2.0 * np * fi;
        b.noise_next -= 2.0 * nn * fi;
    }
    b.residual = b.lhs - (b.t_sup + b.t_cross_f + b.t_cross_x + b.t_const);
    b.residual4 = b.t_cross_f - (b.curvature + b.noise_prev + b.noise_next);
    return b;
}

// ---------------------------------------------------------------------------
// Coupling

bool CouplingEstimate::vanishes(double z) const { return std::abs(mean) <= z * std_error; }

std::vector<double> CouplingEstimate::decade_ratios() const
{
    std::vector<double> out;
    for (std::size_t i = 1; i < prefixes.size(); ++i) {
        if (prefixes[i].count == prefixes[i - 1].count * 10 && prefixes[i - 1].std_error > 0) {
            out.push_back(prefixes[i].std_error / prefixes[i - 1].std_error);
        }
    }
    return out;
}

nlohmann::ordered_json CouplingEstimate::to_json() const
{
    nlohmann::ordered_json j{{"sample_count", sample_count},
                             {"mean", mean},
                             {"std_error", std_error},
                             {"sigma", sigma},
                             {"mean_f_norm", mean_f_norm},
                             {"normalized_mean", normalized_mean},
                             {"normalized_std_error", normalized_std_error},
                             {"ci95", {mean - 1.96 * std_error, mean + 1.96 * std_error}},
                             {"vanishes_at_5se", vanishes(5.0)}};
    auto& pre = j["prefixes"] = nlohmann::ordered_json::array();
    for (const auto& p : prefixes) pre.push_back({{"count", p.count}, {"mean", p.mean}, {"std_error", p.std_error}});
    j["decade_se_ratios"] = decade_ratios();
    return j;
}

void CouplingAccumulator::add(const SliceTriplet& t, const Image& f)
{
    if (!t.n) {
        throw ValidationError("estimate_noise_coupling: triplet at slice " + std::to_string(t.s) + " lacks noise fields");
    }
    const auto& n = *t.n;
    require_same_shape(f, n[0], "estimate_noise_coupling");
    require_same_shape(f, n[2], "estimate_noise_coupling");
    prev_.push_back(dot(n[0], f));
    next_.push_back(dot(n[2], f));
    for (std::size_t i = 0; i < f.size(); ++i) {
        noise_sq_ += n[0].pixels[i] * n[0].pixels[i] + n[2].pixels[i] * n[2].pixels[i];
    }
    noise_count_ += 2 * f.size();
    f_norm_sum_ += std::sqrt(dot(f, f));
}

namespace {

CouplingEstimate summarize(const std::vector<double>& samples, double sigma, double mean_f_norm)
{
    CouplingEstimate e;
    e.sample_count = samples.size();
    e.sigma = sigma;
    e.mean_f_norm = mean_f_norm;
    // Welford running moments; snapshot at each decade.
    double mean = 0, m2 = 0;
    std::size_t next_mark = 100;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double k = static_cast<double>(i + 1);
        const double d = samples[i] - mean;
        mean += d / k;
        m2 += d * (samples[i] - mean);
        const std::size_t count = i + 1;
        const bool last = count == samples.size();
        if (count == next_mark || last) {
            const double se = count > 1 ? std::sqrt(m2 / (k - 1.0) / k) : 0.0;
            if (e.prefixes.empty() || e.prefixes.back().count != count) e.prefixes.push_back({count, mean, se});
            if (count == next_mark) next_mark *= 10;
        }
        if (last) {
            e.mean = mean;
            e.std_error = count > 1 ? std::sqrt(m2 / (k - 1.0) / k) : 0.0;
        }
    }
    const double norm = sigma * mean_f_norm;
    e.normalized_mean = norm > 0 ? e.mean / norm : 0.0;
    e.normalized_std_error = norm > 0 ? e.std_error / norm : 0.0;
    return e;
}

} // namespace

std::pair<CouplingEstimate, CouplingEstimate> CouplingAccumulator::finish() const
{
    if (prev_.size() < kMinCouplingSamples) {
        throw ValidationError("estimate_noise_coupling: " + std::to_string(prev_.size()) + " samples, at least "
                              + std::to_string(kMinCouplingSamples) + " are required");
    }
    const double sigma = std::sqrt(noise_sq_ / static_cast<double>(noise_count_));
    const double mean_f = f_norm_sum_ / static_cast<double>(prev_.size());
    return {summarize(prev_, sigma, mean_f), summarize(next_, sigma, mean_f)};
}

std::pair<CouplingEstimate, CouplingEstimate> estimate_noise_coupling(const Denoiser& model,
                                                                      std::span<const SliceTriplet> triplets)
{
    if (triplets.size() < kMinCouplingSamples) {
        throw ValidationError("estimate_noise_coupling: " + std::to_string(triplets.size())
                              + " triplets, at least " + std::to_string(kMinCouplingSamples) + " are required");
    }
    CouplingAccumulator acc;
    for (const auto& t : triplets) acc.add(t, model(t.y_center()));
    return acc.finish();
}

// ---------------------------------------------------------------------------
// Equivalence

void EquivalenceAccumulator::add(const SliceTriplet& t, const Image& f)
{
    const TermBreakdown b = decompose_(t, f);
    ++acc_.triplets;
    acc_.sum_lhs += b.lhs;
    acc_.sum_sup += b.t_sup;
    acc_.sum_cross_f += b.t_cross_f;
    acc_.sum_cross_x += b.t_cross_x;
    acc_.sum_const += b.t_const;
    acc_.sum_curvature += b.curvature;
    acc_.sum_noise_prev += b.noise_prev;
    acc_.sum_noise_next += b.noise_next;
    acc_.max_rel_residual = std::max(acc_.max_rel_residual, rel(b.residual, b.lhs));
    acc_.max_rel_residual4 = std::max(acc_.max_rel_residual4, rel(b.residual4, b.lhs));
    coupling_.add(t, f);
}

EquivalenceReport EquivalenceAccumulator::finish() const
{
    if (acc_.triplets == 0) throw ValidationError("equivalence_report: empty dataset");
    EquivalenceReport r = acc_;
    const double numerator = std::abs(r.sum_lhs - r.sum_sup - r.sum_const - r.sum_cross_x);
    // A zero loss with a zero deviation (noise-free constant stack) counts as no defect.
    r.defect = numerator == 0.0 ? 0.0 : numerator / r.sum_lhs;
    if (coupling_.count() >= kMinCouplingSamples) {
        std::tie(r.coupling_prev, r.coupling_next) = coupling_.finish();
    }
    return r;
}

nlohmann::ordered_json EquivalenceReport::to_json() const
{
    return {{"triplets", triplets},
            {"sum_lhs", sum_lhs},
            {"sum_sup", sum_sup},
            {"sum_cross_f", sum_cross_f},
            {"sum_cross_x", sum_cross_x},
            {"sum_const", sum_const},
            {"sum_curvature", sum_curvature},
            {"sum_noise_prev", sum_noise_prev},
            {"sum_noise_next", sum_noise_next},
            {"max_rel_residual", max_rel_residual},
            {"max_rel_residual4", max_rel_residual4},
            {"defect", defect},
            {"coupling", {{"prev", coupling_prev.to_json()}, {"next", coupling_next.to_json()}}}};
}

EquivalenceReport equivalence_report(const Denoiser& model, std::span<const SliceTriplet> triplets)
{
    EquivalenceAccumulator acc;
    for (const auto& t : triplets) acc.add(t, model(t.y_center()));
    return acc.finish();
}

} // namespace n2c
