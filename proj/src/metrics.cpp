#include "n2c/metrics.hpp"

#include <array>
#include <cmath>
#include <fstream>

#include "n2c/error.hpp"

namespace n2c {

namespace {

constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kK1 = 0.01;
constexpr double kK2 = 0.03;

std::array<double, kWindow> gaussian_taps()
{
    std::array<double, kWindow> g{};
    double sum = 0;
    for (int i = 0; i < kWindow; ++i) {
        const double x = i - kWindow / 2;
        g[static_cast<std::size_t>(i)] = std::exp(-x * x / (2 * kSigma * kSigma));
        sum += g[static_cast<std::size_t>(i)];
    }
    for (auto& v : g) v /= sum;
    return g;
}

/// Separable valid-mode Gaussian filter.
std::vector<double> filter_valid(const std::vector<double>& img, std::size_t M, std::size_t N)
{
    static const auto g = gaussian_taps();
    const std::size_t VM = M - kWindow + 1, VN = N - kWindow + 1;
    std::vector<double> tmp(M * VN), out(VM * VN);
    for (std::size_t r = 0; r < M; ++r) {
        for (std::size_t c = 0; c < VN; ++c) {
            double s = 0;
            for (std::size_t k = 0; k < kWindow; ++k) s += g[k] * img[r * N + c + k];
            tmp[r * VN + c] = s;
        }
    }
    for (std::size_t r = 0; r < VM; ++r) {
        for (std::size_t c = 0; c < VN; ++c) {
            double s = 0;
            for (std::size_t k = 0; k < kWindow; ++k) s += g[k] * tmp[(r + k) * VN + c];
            out[r * VN + c] = s;
        }
    }
    return out;
}

} // namespace

double rmse(const Image& a, const Image& b)
{
    require_same_shape(a, b, "rmse");
    if (a.size() == 0) throw ValidationError("rmse: empty images");
    double acc = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.pixels[i] - b.pixels[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(a.size()));
}

double ssim(const Image& a, const Image& b, double data_range)
{
    require_same_shape(a, b, "ssim");
    if (!(data_range > 0.0)) throw ValidationError("ssim: data_range must be > 0");
    if (a.rows < kWindow || a.cols < kWindow) {
        throw ValidationError("ssim: images must be at least 11x11, got " + std::to_string(a.rows) + "x"
                              + std::to_string(a.cols));
    }
    const std::size_t M = a.rows, N = a.cols, n = a.size();
    std::vector<double> aa(n), bb(n), ab(n);
    for (std::size_t i = 0; i < n; ++i) {
        aa[i] = a.pixels[i] * a.pixels[i];
        bb[i] = b.pixels[i] * b.pixels[i];
        ab[i] = a.pixels[i] * b.pixels[i];
    }
    const auto mu_a = filter_valid(a.pixels, M, N);
    const auto mu_b = filter_valid(b.pixels, M, N);
    const auto e_aa = filter_valid(aa, M, N);
    const auto e_bb = filter_valid(bb, M, N);
    const auto e_ab = filter_valid(ab, M, N);
    const double c1 = (kK1 * data_range) * (kK1 * data_range);
    const double c2 = (kK2 * data_range) * (kK2 * data_range);
    double total = 0;
    for (std::size_t i = 0; i < mu_a.size(); ++i) {
        const double ma = mu_a[i], mb = mu_b[i];
        const double va = e_aa[i] - ma * ma;
        const double vb = e_bb[i] - mb * mb;
        const double cov = e_ab[i] - ma * mb;
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    return total / static_cast<double>(mu_a.size());
}

std::pair<double, double> mean_sd(std::span<const double> values)
{
    if (values.empty()) return {0.0, 0.0};
    double mean = 0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    if (values.size() == 1) return {mean, 0.0};
    double var = 0;
    for (double v : values) var += (v - mean) * (v - mean);
    return {mean, std::sqrt(var / static_cast<double>(values.size()))};
}

nlohmann::ordered_json MetricRecord::summary_json() const
{
    return {{"method", method},
            {"slices", rmse.size()},
            {"rmse_hu", {{"mean", rmse_mean}, {"sd", rmse_sd}}},
            {"ssim", {{"mean", ssim_mean}, {"sd", ssim_sd}}}};
}

MetricRecord evaluate_volume(const Volume& denoised, const Volume& clean, const std::string& method,
                             double data_range)
{
    if (denoised.dims() != clean.dims()) {
        throw ValidationError("evaluate_volume: denoised and clean volumes have different dims");
    }
    MetricRecord rec;
    rec.method = method;
    for (std::size_t s = 0; s < clean.slices(); ++s) {
        const Image d = denoised.slice_image(s);
        const Image c = clean.slice_image(s);
        rec.rmse.push_back(rmse(d, c));
        rec.ssim.push_back(ssim(d, c, data_range));
    }
    std::tie(rec.rmse_mean, rec.rmse_sd) = mean_sd(rec.rmse);
    std::tie(rec.ssim_mean, rec.ssim_sd) = mean_sd(rec.ssim);
    return rec;
}

void write_metrics_csv(std::span<const MetricRecord> records, const std::filesystem::path& path)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("write_metrics_csv: cannot write " + path.string());
    out.precision(10);
    out << "method,slice,rmse_hu,ssim\n";
    for (const auto& r : records) {
        for (std::size_t s = 0; s < r.rmse.size(); ++s) {
            out << r.method << ',' << s << ',' << r.rmse[s] << ',' << r.ssim[s] << '\n';
        }
    }
}

} // namespace n2c
