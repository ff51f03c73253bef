#pragma once

#include <functional>
#include <span>
#include <vector>

#include "n2c/image.hpp"

namespace n2c {

struct NlmParams {
    double h = 20.0; ///< filtering strength, HU
    int patch_size = 5;
    int search_window = 11;
    double sigma = 0.0; ///< noise SD estimate subtracted from patch distances, HU
};

void validate(const NlmParams& p);

/// Non-local means on one slice. Weights exp(-max(d2 - 2 sigma^2, 0) / h^2), d2 the mean squared
/// patch distance; edge-replicated borders.
Image nlm_denoise(const Image& slice, const NlmParams& p);

struct TvParams {
    double weight = 20.0; ///< lambda, HU
    int max_iter = 200;
    double tol = 1e-4; ///< relative change of the dual field
    double tau = 0.25;
    bool record_trace = false; ///< keep the objective of every iterate
};

void validate(const TvParams& p);

struct TvResult {
    Image image;
    int iterations = 0;
    double objective = 0;
    std::vector<double> objective_trace; ///< per iterate if record_trace, else the final value only
};

/// argmin_u 0.5|u - y|^2 + weight * TV(u), isotropic TV with forward differences and Neumann
/// boundaries, by dual projection.
TvResult tv_denoise(const Image& slice, const TvParams& p);

/// Isotropic total variation with forward differences.
double total_variation(const Image& img);

/// 0.5|u - y|^2 + weight * TV(u).
double tv_objective(const Image& u, const Image& y, double weight);

/// Noise SD from the median response of a Laplacian-difference mask; robust to sparse edges.
double estimate_noise_sigma(const Image& img);

struct TuningResult {
    double best_value = 0;
    double best_score = 0;
    std::vector<double> values;
    std::vector<double> scores; ///< mean SSIM against the clean slices
};

/// Picks the candidate maximizing mean SSIM over the given slice pairs.
TuningResult tune_parameter(std::span<const double> candidates, std::span<const Image> noisy,
                            std::span<const Image> clean,
                            const std::function<Image(const Image&, double)>& denoise);

} // namespace n2c
