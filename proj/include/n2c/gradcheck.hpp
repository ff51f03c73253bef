#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "n2c/autodiff.hpp"

namespace n2c::ad {

struct GradCheckResult {
    std::string name;
    std::size_t checked = 0;
    std::size_t skipped = 0; ///< coordinates whose +-h probe crossed a relu/max-pool kink
    double max_rel_error = 0;
    bool passed = false;
};

struct GradCheckOptions {
    double step = 1e-3;
    double tolerance = 1e-6;
};

using ScalarFn = std::function<Tensor<double>(const std::vector<Tensor<double>>&)>;

/// Central finite differences of `fn` with respect to every coordinate of every input, compared
/// with the reverse-mode gradient. Inputs must be parameter tensors. Relative error is
/// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
GradCheckResult gradcheck(const std::string& name, const ScalarFn& fn, std::vector<Tensor<double>> inputs,
                          const GradCheckOptions& options = {});

/// Every primitive on `trials` random shapes each, plus the loss of a tiny U-Net (levels 2,
/// base 2, 8x8 input).
std::vector<GradCheckResult> gradient_suite(std::uint64_t seed, int trials = 10, const GradCheckOptions& options = {});

nlohmann::ordered_json to_json(const GradCheckResult& r);

} // namespace n2c::ad
