/**
 * @file losses.hpp
 * @brief Supervised and neighbour-slice losses plus the loss-equivalence analyzer.
 *
 * Training losses use the mean reduction. The analyzer works with sums
 * (inner products) so the algebraic decomposition of the neighbour loss is
 * term-exact:
 *
 *   |F - y_{s-1}|^2 + |F - y_{s+1}|^2
 *     = 2|F - x_s|^2 + 2(2x_s - y_{s-1} - y_{s+1})'F - 2(2x_s - y_{s-1} - y_{s+1})'x_s
 *       + |x_s - y_{s-1}|^2 + |x_s - y_{s+1}|^2
 *
 * and, with y = x + n, the F-dependent cross term splits into a slice
 * curvature part and two noise-coupling parts.
 */
#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "n2c/autodiff.hpp"
#include "n2c/image.hpp"
#include "n2c/volume.hpp"

namespace n2c {

template <typename T>
ad::Tensor<T> supervised_loss(const ad::Tensor<T>& f_out, const ad::Tensor<T>& clean);

/// mse(F, y_prev) + mse(F, y_next).
template <typename T>
ad::Tensor<T> n2c_loss(const ad::Tensor<T>& f_out, const ad::Tensor<T>& y_prev, const ad::Tensor<T>& y_next);

double supervised_loss(const Image& f_out, const Image& clean);
double n2c_loss(const Image& f_out, const Image& y_prev, const Image& y_next);

struct TermBreakdown {
    double lhs = 0;        ///< |F - y_{s-1}|^2 + |F - y_{s+1}|^2
    double t_sup = 0;      ///< 2|F - x_s|^2
    double t_cross_f = 0;  ///< 2(2x_s - y_{s-1} - y_{s+1})'F
    double t_cross_x = 0;  ///< -2(2x_s - y_{s-1} - y_{s+1})'x_s
    double t_const = 0;    ///< |x_s - y_{s-1}|^2 + |x_s - y_{s+1}|^2
    double residual = 0;   ///< lhs - (t_sup + t_cross_f + t_cross_x + t_const)
    double curvature = 0;  ///< 2(2x_s - x_{s-1} - x_{s+1})'F
    double noise_prev = 0; ///< -2 n_{s-1}'F
    double noise_next = 0; ///< -2 n_{s+1}'F
    double residual4 = 0;  ///< t_cross_f - (curvature + noise_prev + noise_next)
};

/// Sum-reduced decomposition of one triplet. Requires clean and noise fields.
TermBreakdown decompose(const SliceTriplet& triplet, const Image& f_out);

using DecomposeFn = std::function<TermBreakdown(const SliceTriplet&, const Image&)>;
/// HU slice -> HU slice.
using Denoiser = std::function<Image(const Image&)>;

struct CouplingPrefix {
    std::size_t count = 0;
    double mean = 0;
    double std_error = 0;
};

/// Monte Carlo estimate of E[n_{s+-1}' F(y_s)].
struct CouplingEstimate {
    std::size_t sample_count = 0;
    double mean = 0;
    double std_error = 0;
    double sigma = 0;       ///< RMS of the neighbour noise used
    double mean_f_norm = 0; ///< E|F(y_s)|_2
    double normalized_mean = 0;
    double normalized_std_error = 0;
    std::vector<CouplingPrefix> prefixes; ///< at 10^2, 10^3, ... samples and at the full count

    /// |mean| <= z * std_error.
    [[nodiscard]] bool vanishes(double z = 5.0) const;
    /// Ratio of consecutive prefix standard errors, one per decade.
    [[nodiscard]] std::vector<double> decade_ratios() const;
    [[nodiscard]] nlohmann::ordered_json to_json() const;
};

/// Streaming accumulator so large sample counts need not be held in memory.
class CouplingAccumulator {
public:
    void add(const SliceTriplet& triplet, const Image& f_out);
    [[nodiscard]] std::size_t count() const { return prev_.size(); }
    [[nodiscard]] std::pair<CouplingEstimate, CouplingEstimate> finish() const;

private:
    std::vector<double> prev_;
    std::vector<double> next_;
    double noise_sq_ = 0;
    std::size_t noise_count_ = 0;
    double f_norm_sum_ = 0;
};

inline constexpr std::size_t kMinCouplingSamples = 30;

/// (estimate for n_{s-1}, estimate for n_{s+1}).
std::pair<CouplingEstimate, CouplingEstimate> estimate_noise_coupling(const Denoiser& model,
                                                                      std::span<const SliceTriplet> triplets);

struct EquivalenceReport {
    std::size_t triplets = 0;
    double sum_lhs = 0;
    double sum_sup = 0;
    double sum_cross_f = 0;
    double sum_cross_x = 0;
    double sum_const = 0;
    double sum_curvature = 0;
    double sum_noise_prev = 0;
    double sum_noise_next = 0;
    double max_rel_residual = 0;
    double max_rel_residual4 = 0;
    /// |sum_lhs - sum_sup - sum_const - sum_cross_x| / sum_lhs
    double defect = 0;
    CouplingEstimate coupling_prev;
    CouplingEstimate coupling_next;

    [[nodiscard]] nlohmann::ordered_json to_json() const;
};

class EquivalenceAccumulator {
public:
    explicit EquivalenceAccumulator(DecomposeFn fn = decompose) : decompose_(std::move(fn)) {}
    void add(const SliceTriplet& triplet, const Image& f_out);
    [[nodiscard]] EquivalenceReport finish() const;

private:
    DecomposeFn decompose_;
    EquivalenceReport acc_;
    CouplingAccumulator coupling_;
};

EquivalenceReport equivalence_report(const Denoiser& model, std::span<const SliceTriplet> triplets);

} // namespace n2c
