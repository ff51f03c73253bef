#include "n2c/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "n2c/error.hpp"
#include "n2c/metrics.hpp"

namespace n2c {

void validate(const NlmParams& p)
{
    if (!(p.h > 0.0)) throw ValidationError("NlmParams.h must be > 0");
    if (p.patch_size < 1 || p.patch_size % 2 == 0) throw ValidationError("NlmParams.patch_size must be odd and >= 1");
    if (p.search_window < 1 || p.search_window % 2 == 0) {
        throw ValidationError("NlmParams.search_window must be odd and >= 1");
    }
    if (p.patch_size > p.search_window) throw ValidationError("NlmParams.patch_size must not exceed search_window");
    if (!(p.sigma >= 0.0)) throw ValidationError("NlmParams.sigma must be >= 0");
}

Image nlm_denoise(const Image& slice, const NlmParams& p)
{
    validate(p);
    const auto M = static_cast<std::ptrdiff_t>(slice.rows);
    const auto N = static_cast<std::ptrdiff_t>(slice.cols);
    if (M == 0 || N == 0) return slice;
    const std::ptrdiff_t rp = p.patch_size / 2;
    const std::ptrdiff_t rs = p.search_window / 2;
    const std::ptrdiff_t pad = rp + rs;
    const std::ptrdiff_t PM = M + 2 * pad;
    const std::ptrdiff_t PN = N + 2 * pad;

    std::vector<double> padded(static_cast<std::size_t>(PM * PN));
    for (std::ptrdiff_t r = 0; r < PM; ++r) {
        const auto sr = std::clamp<std::ptrdiff_t>(r - pad, 0, M - 1);
        for (std::ptrdiff_t c = 0; c < PN; ++c) {
            const auto sc = std::clamp<std::ptrdiff_t>(c - pad, 0, N - 1);
            padded[static_cast<std::size_t>(r * PN + c)] = slice.at(static_cast<std::size_t>(sr), static_cast<std::size_t>(sc));
        }
    }
    auto P = [&](std::ptrdiff_t r, std::ptrdiff_t c) { return padded[static_cast<std::size_t>(r * PN + c)]; };

    // Patch distances for one offset come from a box sum over the squared-difference map, which
    // only needs the region covering the patches of every output pixel.
    const std::ptrdiff_t QM = M + 2 * rp;
    const std::ptrdiff_t QN = N + 2 * rp;
    std::vector<double> integral(static_cast<std::size_t>((QM + 1) * (QN + 1)));
    auto I = [&](std::ptrdiff_t r, std::ptrdiff_t c) -> double& {
        return integral[static_cast<std::size_t>(r * (QN + 1) + c)];
    };

    const double patch_area = static_cast<double>(p.patch_size * p.patch_size);
    const double offset = 2.0 * p.sigma * p.sigma;
    const double inv_h2 = 1.0 / (p.h * p.h);
    std::vector<double> acc(static_cast<std::size_t>(M * N), 0.0);
    std::vector<double> wsum(static_cast<std::size_t>(M * N), 0.0);

    for (std::ptrdiff_t dy = -rs; dy <= rs; ++dy) {
        for (std::ptrdiff_t dx = -rs; dx <= rs; ++dx) {
            for (std::ptrdiff_t r = 0; r < QM; ++r) {
                double row = 0;
                for (std::ptrdiff_t c = 0; c < QN; ++c) {
                    const std::ptrdiff_t pr = r + rs;
                    const std::ptrdiff_t pc = c + rs;
                    const double d = P(pr, pc) - P(pr + dy, pc + dx);
                    row += d * d;
                    I(r + 1, c + 1) = I(r, c + 1) + row;
                }
            }
            for (std::ptrdiff_t r = 0; r < M; ++r) {
                for (std::ptrdiff_t c = 0; c < N; ++c) {
                    const double box = I(r + 2 * rp + 1, c + 2 * rp + 1) - I(r, c + 2 * rp + 1)
                                       - I(r + 2 * rp + 1, c) + I(r, c);
                    const double d2 = std::max(box, 0.0) / patch_area;
                    const double w = std::exp(-std::max(d2 - offset, 0.0) * inv_h2);
                    const auto i = static_cast<std::size_t>(r * N + c);
                    acc[i] += w * P(r + pad + dy, c + pad + dx);
                    wsum[i] += w;
                }
            }
        }
    }
    Image out(slice.rows, slice.cols);
    for (std::size_t i = 0; i < out.size(); ++i) out.pixels[i] = acc[i] / wsum[i];
    return out;
}

void validate(const TvParams& p)
{
    if (!(p.weight > 0.0)) throw ValidationError("TvParams.weight must be > 0");
    if (p.max_iter < 1) throw ValidationError("TvParams.max_iter must be >= 1");
    if (!(p.tol >= 0.0)) throw ValidationError("TvParams.tol must be >= 0");
    if (!(p.tau > 0.0 && p.tau <= 0.25)) throw ValidationError("TvParams.tau must lie in (0, 0.25]");
}

namespace {

void gradient(const Image& u, std::vector<double>& gx, std::vector<double>& gy)
{
    const std::size_t M = u.rows, N = u.cols;
    for (std::size_t r = 0; r < M; ++r) {
        for (std::size_t c = 0; c < N; ++c) {
            const std::size_t i = r * N + c;
            gx[i] = c + 1 < N ? u.pixels[i + 1] - u.pixels[i] : 0.0;
            gy[i] = r + 1 < M ? u.pixels[i + N] - u.pixels[i] : 0.0;
        }
    }
}

/// Negative adjoint of the forward-difference gradient.
void divergence(const std::vector<double>& px, const std::vector<double>& py, std::size_t M, std::size_t N,
                Image& out)
{
    for (std::size_t r = 0; r < M; ++r) {
        for (std::size_t c = 0; c < N; ++c) {
            const std::size_t i = r * N + c;
            double d = 0;
            if (c + 1 < N) d += px[i];
            if (c > 0) d -= px[i - 1];
            if (r + 1 < M) d += py[i];
            if (r > 0) d -= py[i - N];
            out.pixels[i] = d;
        }
    }
}

} // namespace

double total_variation(const Image& img)
{
    std::vector<double> gx(img.size()), gy(img.size());
    gradient(img, gx, gy);
    double tv = 0;
    for (std::size_t i = 0; i < img.size(); ++i) tv += std::sqrt(gx[i] * gx[i] + gy[i] * gy[i]);
    return tv;
}

double tv_objective(const Image& u, const Image& y, double weight)
{
    require_same_shape(u, y, "tv_objective");
    double fit = 0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double d = u.pixels[i] - y.pixels[i];
        fit += d * d;
    }
    return 0.5 * fit + weight * total_variation(u);
}

TvResult tv_denoise(const Image& slice, const TvParams& p)
{
    validate(p);
    const std::size_t M = slice.rows, N = slice.cols, n = slice.size();
    std::vector<double> px(n, 0.0), py(n, 0.0), gx(n), gy(n);
    Image div(M, N), work(M, N);
    TvResult res;
    res.image = slice;

    for (int it = 1; it <= p.max_iter; ++it) {
        divergence(px, py, M, N, div);
        for (std::size_t i = 0; i < n; ++i) work.pixels[i] = div.pixels[i] - slice.pixels[i] / p.weight;
        gradient(work, gx, gy);
        double change = 0, norm = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double scale = 1.0 + p.tau * std::sqrt(gx[i] * gx[i] + gy[i] * gy[i]);
            const double nx = (px[i] + p.tau * gx[i]) / scale;
            const double ny = (py[i] + p.tau * gy[i]) / scale;
            change += (nx - px[i]) * (nx - px[i]) + (ny - py[i]) * (ny - py[i]);
            norm += nx * nx + ny * ny;
            px[i] = nx;
            py[i] = ny;
        }
        divergence(px, py, M, N, div);
        for (std::size_t i = 0; i < n; ++i) res.image.pixels[i] = slice.pixels[i] - p.weight * div.pixels[i];
        res.iterations = it;
        const bool done = change == 0.0 || std::sqrt(change) <= p.tol * std::sqrt(norm) || it == p.max_iter;
        if (p.record_trace || done) res.objective_trace.push_back(tv_objective(res.image, slice, p.weight));
        if (done) break;
    }
    res.objective = res.objective_trace.back();
    return res;
}

double estimate_noise_sigma(const Image& img)
{
    if (img.rows < 3 || img.cols < 3) throw ValidationError("estimate_noise_sigma: image smaller than 3x3");
    std::vector<double> mags;
    mags.reserve((img.rows - 2) * (img.cols - 2));
    for (std::size_t r = 1; r + 1 < img.rows; ++r) {
        for (std::size_t c = 1; c + 1 < img.cols; ++c) {
            const double v = img.at(r - 1, c - 1) - 2 * img.at(r - 1, c) + img.at(r - 1, c + 1)
                             - 2 * img.at(r, c - 1) + 4 * img.at(r, c) - 2 * img.at(r, c + 1)
                             + img.at(r + 1, c - 1) - 2 * img.at(r + 1, c) + img.at(r + 1, c + 1);
            mags.push_back(std::abs(v));
        }
    }
    // The mask has unit-noise gain 6; the median of |N(0,1)| is 0.6745.
    const auto mid = mags.begin() + static_cast<std::ptrdiff_t>(mags.size() / 2);
    std::nth_element(mags.begin(), mid, mags.end());
    return *mid / (6.0 * 0.6744897501960817);
}

TuningResult tune_parameter(std::span<const double> candidates, std::span<const Image> noisy,
                            std::span<const Image> clean,
                            const std::function<Image(const Image&, double)>& denoise)
{
    if (candidates.empty()) throw ValidationError("tune_parameter: no candidates");
    if (noisy.empty() || noisy.size() != clean.size()) {
        throw ValidationError("tune_parameter: need equally many noisy and clean slices");
    }
    TuningResult out;
    out.best_score = -std::numeric_limits<double>::infinity();
    for (double v : candidates) {
        double score = 0;
        for (std::size_t i = 0; i < noisy.size(); ++i) score += ssim(denoise(noisy[i], v), clean[i]);
        score /= static_cast<double>(noisy.size());
        out.values.push_back(v);
        out.scores.push_back(score);
        if (score > out.best_score) {
            out.best_score = score;
            out.best_value = v;
        }
    }
    return out;
}

} // namespace n2c
