#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "xlir/array.hpp"

namespace xlir::numeric {

// Adam with bias correction. First and second moments are allocated on the
// first step to match the parameter shapes.
struct AdamState {
    std::vector<Array> m;
    std::vector<Array> v;
    std::int64_t t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

void adam_step(std::vector<Array>& params, const std::vector<Array>& grads, AdamState& state,
               double lr);

// Evaluates the loss at `params`. When `grads_out` is non-null the callback
// must also fill it with one gradient per parameter (analytic, via a tape).
using LossFn = std::function<double(std::span<const Array> params, std::vector<Array>* grads_out)>;

// Central-difference check of analytic gradients. Returns the maximum over
// checked coordinates of |g_a - g_fd| / max(1e-8, |g_a| + |g_fd|).
// max_coords_per_param < 0 checks every coordinate; otherwise that many are
// sampled per parameter with `coord_seed`.
double grad_check(const LossFn& loss, std::vector<Array> params, double h = 1e-4,
                  std::int64_t max_coords_per_param = -1, std::uint64_t coord_seed = 0);

}  // namespace xlir::numeric
