#include "xlir/optim.hpp"

#include <algorithm>
#include <cmath>

#include "xlir/common.hpp"

namespace xlir::numeric {

void adam_step(std::vector<Array>& params, const std::vector<Array>& grads, AdamState& state,
               double lr) {
    if (params.size() != grads.size()) {
        throw ContractError("adam_step: parameter/gradient count mismatch");
    }
    if (state.t == 0) {
        state.m.clear();
        state.v.clear();
        for (const Array& p : params) {
            state.m.emplace_back(p.shape());
            state.v.emplace_back(p.shape());
        }
    }
    if (state.m.size() != params.size()) {
        throw ContractError("adam_step: state does not match parameter count");
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t p = 0; p < params.size(); ++p) {
        Array& theta = params[p];
        const Array& g = grads[p];
        if (!theta.same_shape(g)) {
            throw ContractError("adam_step: gradient shape " + shape_string(g.shape()) +
                                " does not match parameter " + shape_string(theta.shape()));
        }
        Array& m = state.m[p];
        Array& v = state.v[p];
        for (std::int64_t i = 0; i < theta.size(); ++i) {
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            theta[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

double grad_check(const LossFn& loss, std::vector<Array> params, double h,
                  std::int64_t max_coords_per_param, std::uint64_t coord_seed) {
    if (h <= 0) throw ContractError("grad_check: step size must be positive");
    std::vector<Array> analytic;
    loss(params, &analytic);
    if (analytic.size() != params.size()) {
        throw ContractError("grad_check: loss returned wrong gradient count");
    }
    Rng rng(coord_seed);
    double worst = 0.0;
    for (std::size_t p = 0; p < params.size(); ++p) {
        if (!analytic[p].same_shape(params[p])) {
            throw ContractError("grad_check: gradient shape mismatch on parameter " +
                                std::to_string(p));
        }
        const std::int64_t n = params[p].size();
        std::vector<std::int64_t> coords;
        if (max_coords_per_param < 0 || max_coords_per_param >= n) {
            coords.resize(static_cast<std::size_t>(n));
            for (std::int64_t i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
        } else {
            for (std::size_t draw :
                 rng.sample_indices(static_cast<std::size_t>(n),
                                    static_cast<std::size_t>(max_coords_per_param))) {
                coords.push_back(static_cast<std::int64_t>(draw));
            }
        }
        for (std::int64_t i : coords) {
            const double orig = params[p][i];
            params[p][i] = orig + h;
            const double up = loss(params, nullptr);
            params[p][i] = orig - h;
            const double down = loss(params, nullptr);
            params[p][i] = orig;
            const double fd = (up - down) / (2.0 * h);
            const double ga = analytic[p][i];
            const double rel = std::abs(ga - fd) / std::max(1e-8, std::abs(ga) + std::abs(fd));
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace xlir::numeric
