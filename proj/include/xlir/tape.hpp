#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "xlir/array.hpp"

namespace xlir::numeric {

// Handle into a Tape. Only valid for the tape that created it.
struct Var {
    std::int32_t id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode autodiff over a linear record of primitive ops. Ops append
// nodes in topological order; backward() sweeps the record in reverse.
// Every forward output is checked finite. Single-threaded by design.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Array value, bool requires_grad);
    Var constant(Array value) { return leaf(std::move(value), false); }
    Var param(Array value) { return leaf(std::move(value), true); }

    // Elementwise; shapes must match exactly (no broadcasting).
    Var add(Var a, Var b);
    Var mul(Var a, Var b);
    // alpha * x + beta, elementwise.
    Var axpb(Var x, double alpha, double beta);

    Var matmul(Var a, Var b);          // [n,k] x [k,m] -> [n,m]
    Var affine(Var x, Var w, Var b);   // x [k] or [n,k]; w [k,m]; b [m]

    Var relu(Var x);
    Var tanh(Var x);
    Var exp(Var x);
    Var log(Var x);  // input clamped below at kLogClamp
    Var softmax(Var x);                // 1-D, max-shifted
    Var reduce_sum(Var x, int axis);   // 2-D only; axis 0 -> [m], axis 1 -> [n]
    Var sum_all(Var x);                // -> [1]

    Var stack(std::span<const Var> scalars);   // n size-1 vars -> [n]
    Var concat(std::span<const Var> vectors);  // 1-D vars -> [sum]
    Var reshape(Var x, std::vector<std::int64_t> shape);

    Var conv1d(Var x, Var filters, Var bias);  // x [n,d], f [F,h,d], b [F] -> [n-h+1,F], valid
    Var conv2d(Var x, Var filters, Var bias);  // x [C,H,W], f [K,C,kh,kw], b [K], valid
    Var maxpool2d(Var x, int ph, int pw);      // stride = window, remainder dropped
    Var adaptive_maxpool2d(Var x, int out_h, int out_w);
    Var pad2d(Var x, std::int64_t out_h, std::int64_t out_w);  // zero-pad bottom/right

    // Row-wise cosine similarity, a [n,d] x b [m,d] -> [n,m]; rows with
    // (near-)zero norm produce 0 entries and receive no gradient.
    Var cosine_matrix(Var a, Var b);

    // phi_k = sum_i log(max(kLogClamp, sum_j exp(-(M_ij - mu_k)^2 / (2 sigma_k^2)))).
    Var gaussian_kernel_pool(Var m, std::span<const double> mu, std::span<const double> sigma);

    // Accumulates gradients for every recorded node reachable from `loss`,
    // which must be size-1. Resets previous gradients first.
    void backward(Var loss);

    const Array& value(Var v) const;
    // Gradient after backward(); zeros-shaped if the node was not reached.
    const Array& grad(Var v) const;

    std::size_t node_count() const { return values_.size(); }

    static constexpr double kLogClamp = 1e-10;
    static constexpr double kNormEps = 1e-12;

private:
    struct BackStep {
        std::int32_t node;
        std::function<void(Tape&)> fn;
    };

    Var push(Array value, bool requires_grad, const char* op);
    void check(Var v) const;
    bool needs_grad(Var v) const { return requires_grad_[v.id]; }
    Array& grad_buf(Var v);

    std::vector<Array> values_;
    std::vector<Array> grads_;       // empty Array until backward touches the node
    std::vector<bool> requires_grad_;
    std::vector<BackStep> steps_;    // only for nodes that require grad
    bool grads_valid_ = false;
};

}  // namespace xlir::numeric
