#include "xlir/tape.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "xlir/common.hpp"

namespace xlir::numeric {

namespace {

void check_finite(const Array& a, const char* op) {
    if (!a.all_finite()) {
        throw ContractError(std::string("non-finite value in output of ") + op);
    }
}

[[noreturn]] void shape_fail(const char* op, const Array& a) {
    throw ContractError(std::string(op) + ": unexpected shape " + shape_string(a.shape()));
}

[[noreturn]] void shape_fail2(const char* op, const Array& a, const Array& b) {
    throw ContractError(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) +
                        " and " + shape_string(b.shape()));
}

}  // namespace

Var Tape::push(Array value, bool requires_grad, const char* op) {
    check_finite(value, op);
    Var v{static_cast<std::int32_t>(values_.size())};
    values_.push_back(std::move(value));
    grads_.emplace_back();
    requires_grad_.push_back(requires_grad);
    return v;
}

void Tape::check(Var v) const {
    if (v.id < 0 || v.id >= static_cast<std::int32_t>(values_.size())) {
        throw ContractError("Tape: invalid var handle");
    }
}

Array& Tape::grad_buf(Var v) {
    Array& g = grads_[v.id];
    if (g.size() == 0) g = Array(values_[v.id].shape());
    return g;
}

const Array& Tape::value(Var v) const {
    check(v);
    return values_[v.id];
}

const Array& Tape::grad(Var v) const {
    check(v);
    if (!grads_valid_) throw ContractError("Tape::grad: backward has not run");
    Array& g = const_cast<Tape*>(this)->grads_[v.id];
    if (g.size() == 0) g = Array(values_[v.id].shape());  // unreached: zero gradient
    return g;
}

Var Tape::leaf(Array value, bool requires_grad) {
    return push(std::move(value), requires_grad, "leaf");
}

Var Tape::add(Var a, Var b) {
    check(a);
    check(b);
    const Array& av = values_[a.id];
    const Array& bv = values_[b.id];
    if (!av.same_shape(bv)) shape_fail2("add", av, bv);
    Array out(av.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    Var y = push(std::move(out), needs_grad(a) || needs_grad(b), "add");
    if (requires_grad_[y.id]) {
        steps_.push_back({y.id, [y, a, b](Tape& t) {
                              const Array& g = t.grads_[y.id];
                              if (t.needs_grad(a)) {
                                  Array& da = t.grad_buf(a);
                                  for (std::int64_t i = 0; i < g.size(); ++i) da[i] += g[i];
                              }
                              if (t.needs_grad(b)) {
                                  Array& db = t.grad_buf(b);
                                  for (std::int64_t i = 0; i < g.size(); ++i) db[i] += g[i];
                              }
                          }});
    }
    return y;
}

Var Tape::mul(Var a, Var b) {
    check(a);
    check(b);
    const Array& av = values_[a.id];
    const Array& bv = values_[b.id];
    if (!av.same_shape(bv)) shape_fail2("mul", av, bv);
    Array out(av.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    Var y = push(std::move(out), needs_grad(a) || needs_grad(b), "mul");
    if (requires_grad_[y.id]) {
        steps_.push_back({y.id, [y, a, b](Tape& t) {
                              const Array& g = t.grads_[y.id];
                              const Array& av = t.values_[a.id];
                              const Array& bv = t.values_[b.id];
                              if (t.needs_grad(a)) {
                                  Array& da = t.grad_buf(a);
                                  for (std::int64_t i = 0; i < g.size(); ++i) da[i] += g[i] * bv[i];
                              }
                              if (t.needs_grad(b)) {
                                  Array& db = t.grad_buf(b);
                                  for (std::int64_t i = 0; i < g.size(); ++i) db[i] += g[i] * av[i];
                              }
                          }});
    }
    return y;
}

Var Tape::axpb(Var x, double alpha, double beta) {
    check(x);
    const Array& xv = values_[x.id];
    Array out(xv.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = alpha * xv[i] + beta;
    Var y = push(std::move(out), needs_grad(x), "axpb");
    if (requires_grad_[y.id]) {
        steps_.push_back({y.id, [y, x, alpha](Tape& t) {
                              const Array& g = t.grads_[y.id];
                              Array& dx = t.grad_buf(x);
                              for (std::int64_t i = 0; i < g.size(); ++i) dx[i] += alpha * g[i];
                          }});
    }
    return y;
}

Var Tape::matmul(Var a, Var b) {
    check(a);
    check(b);
    const Array& av = values_[a.id];
    const Array& bv = values_[b.id];
    if (av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[0]) {
        shape_fail2("matmul", av, bv);
    }
    const std::int64_t n = av.shape()[0], k = av.shape()[1], m = bv.shape()[1];
    Array out({n, m});
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t p = 0; p < k; ++p) {
            const double aip = av.at(i, p);
            for (std::int64_t j = 0; j < m; ++j) out.at(i, j) += aip * bv.at(p, j);
        }
    }
    Var y = push(std::move(out), needs_grad(a) || needs_grad(b), "matmul");
    if (requires_grad_[y.id]) {
        steps_.push_back({y.id, [y, a, b, n, k, m](Tape& t) {
                              const Array& g = t.grads_[y.id];
                              const Array& av = t.values_[a.id];
                              const Array& bv = t.values_[b.id];
                              if (t.needs_grad(a)) {
                                  Array& da = t.grad_buf(a);
                                  for (std::int64_t i = 0; i < n; ++i)
                                      for (std::int64_t j = 0; j < m; ++j) {
                                          const double gij = g.at(i, j);
                                          for (std::int64_t p = 0; p < k; ++p)
                                              da.at(i, p) += gij * bv.at(p, j);
                                      }
                              }
                              if (t.needs_grad(b)) {
                                  Array& db = t.grad_buf(b);
                                  for (std::int64_t i = 0; i < n; ++i)
                                      for (std::int64_t p = 0; p < k; ++p) {
                                          const double aip = av.at(i, p);
                                          for (std::int64_t j = 0; j < m; ++j)
                                              db.at(p, j) += aip * g.at(i, j);
                                      }
                              }
                          }});
    }
    return y;
}

Var Tape::affine(Var x, Var w, Var b) {
    check(x);
    check(w);
    check(b);
    const Array& xv = values_[x.id];
    const Array& wv = values_[w.id];
    const Array& bv = values_[b.id];
    if (wv.rank() != 2) shape_fail("affine: weight", wv);
    const std::int64_t k = wv.shape()[0], m = wv.shape()[1];
    if (bv.rank() != 1 || bv.shape()[0] != m) shape_fail("affine: bias", bv);
    const bool vector_input = xv.rank() == 1;
    const std::int64_t n = vector_input ? 1 : xv.shape()[0];
    if ((vector_input && xv.shape()[0] != k) ||
        (!vector_input && (xv.rank() != 2 || xv.shape()[1] != k))) {
        shape_fail2("affine", xv, wv);
    }
    Array out(vector_input ? std::vector<std::int64_t>{m} : std::vector<std::int64_t>{n, m});
    for (std::int64_t i = 0; i < n; ++i) {
        for (std::int64_t j = 0; j < m; ++j) out[i * m + j] = bv[j];
        for (std::int64_t p = 0; p < k; ++p) {
            const double xip = xv[i * k + p];
            for (std::int64_t j = 0; j < m; ++j) out[i * m + j] += xip * wv.at(p, j);
        }
    }
    Var y = push(std::move(out), needs_grad(x) || needs_grad(w) || needs_grad(b), "affine");
    if (requires_grad_[y.id]) {
        steps_.push_back({y.id, [y, x, w, b, n, k, m](Tape& t) {
                              const Array& g = t.grads_[y.id];
                              const Array& xv = t.values_[x.id];
                              const Array& wv = t.values_[w.id];
                              if (t.needs_grad(x)) {
                                  Array& dx = t.grad_buf(x);
                                  for (std::int64_t i = 0; i < n; ++i)
                                      for (std::int64_t j = 0; j < m; ++j) {
                                          const double gij = g[i * m + j];
                                          for (std::int64_t p = 0; p < k; ++p)
                                              dx[i * k + p] += gij * wv.at(p, j);
                                      }
                              }
                              if (t.needs_grad(w)) {
                                  Array& dw = t.grad_buf(w);
                                  for (std::int64_t i = 0; i < n; ++i)
                                      for (std::int64_t p = 0; p < k; ++p) {
                                          const double xip = xv[i * k + p];
                                          for (std::int64_t j = 0; j < m; ++j)
                                              dw.at(p, j) += xip * g[i * m + j];
                                      }
                              }
                              if (t.needs_grad(b)) {
                                  Array& db = t.grad_buf(b);
                                  for (std::int64_t i = 0; i < n; ++i)
                                      for (std::int64_t j = 0; j < m; ++j) db[j] += g[i * m + j];
                              }
                          }});
    }
    return y;
}

Var Tape::relu(Var x) {
    check(x);
    const Array& xv = values_[x.id];
    Array out(xv.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0 ? xv[i] : 0.0;
    Var y = push(std::move(out), needs_grad(x), "relu");
    if (requires_grad_[y.id]) {
        steps_.push_back({y.id, [y, x](Tape& t) {
                              const Array& g = t.grads_[y.id];
                              const Array& xv = t.values_[x.id];
                              Array& dx = t.grad_buf(x);
                              for (std::int64_t i = 0; i < g.size(); ++i)
                                  if (xv[i] > 0) dx[i] += g[i];
                          }});
    }
    return y;
}

Var Tape::tanh(Var x) {
    check(x);
    const Array& xv = values_[x.id];
    Array out(xv.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xv[i]);
    Var y = push(std::move(out), needs_grad(x), "tanh");
    if (requires_grad_[y.id]) {
        steps_.push_back({y.id, [y, x](Tape& t) {
                              const Array& g = t.grads_[y.id];
                              const Array& yv = t.values_[y.id];
                              Array& dx = t.grad_buf(x);
                              for (std::int64_t i = 0; i < g.size(); ++i)
                                  dx[i] += g[i] * (1.0 - yv[i] * yv[i]);
                          }});
    }
    return y;
}

Var Tape::exp(Var x) {
    check(x);
    const Array& xv = values_[x.id];
    Array out(xv.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::exp(xv[i]);
    Var y = push(std::move(out), needs_grad(x), "exp");
    if (requires_grad_[y.id]) {
        steps_.push_back({y.id, [y, x](Tape& t) {
                              const Array& g = t.grads_[y.id];
                              const Array& yv = t.values_[y.id];
                              Array& dx = t.grad_buf(x);
                              for (std::int64_t i = 0; i < g.size(); ++i) dx[i] += g[i] * yv[i];
                          }});
    }
    return y;
}

Var Tape::log(Var x) {
    check(x);
    const Array& xv = values_[x.id];
    Array out(xv.shape());
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::log(std::max(kLogClamp, xv[i]));
    Var y = push(std::move(out), needs_grad(x), "log");
    if (requires_grad_[y.id]) {
        steps_.push_back({y.id, [y, x](Tape& t) {
                              const Array& g = t.grads_[y.id];
                              const Array& xv = t.values_[x.id];
                              Array& dx = t.grad_buf(x);
                              for (std::int64_t i = 0; i < g.size(); ++i)
                                  if (xv[i] > kLogClamp) dx[i] += g[i] / xv[i];
                          }});
    }
    return y;
}

Var Tape::softmax(Var x) {
    check(x);
    const Array& xv = values_[x.id];
    if (xv.rank() != 1) shape_fail("softmax", xv);
    Array out(xv.shape());
    double mx = xv[0];
    for (std::int64_t i = 1; i < xv.size(); ++i) mx = std::max(mx, xv[i]);
    double denom = 0;
    for (std::int64_t i = 0; i < xv.size(); ++i) {
        out[i] = std::exp(xv[i] - mx);
        denom += out[i];
    }
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] /= denom;
    Var y = push(std::move(out), needs_grad(x), "softmax");
    if (requires_grad_[y.id]) {
        steps_.push_back({y.id, [y, x](Tape& t) {
                              const Array& g = t.grads_[y.id];
                              const Array& yv = t.values_[y.id];
                              Array& dx = t.grad_buf(x);
                              double dot = 0;
                              for (std::int64_t i = 0; i < g.size(); ++i) dot += g[i] * yv[i];
                              for (std::int64_t i = 0; i < g.size(); ++i)
                                  dx[i] += yv[i] * (g[i] - dot);
                          }});
    }
    return y;
}

Var Tape::reduce_sum(Var x, int axis) {
    check(x);
    const Array& xv = values_[x.id];
    if (xv.rank() != 2 || (axis != 0 && axis != 1)) shape_fail("reduce_sum", xv);
    const std::int64_t n = xv.shape()[0], m = xv.shape()[1];
    Array out({axis == 0 ? m : n});
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < m; ++j) out[axis == 0 ? j : i] += xv.at(i, j);
    Var y = push(std::move(out), needs_grad(x), "reduce_sum");
    if (requires_grad_[y.id]) {
        steps_.push_back({y.id, [y, x, axis, n, m](Tape& t) {
                              const Array& g = t.grads_[y.id];
                              Array& dx = t.grad_buf(x);
                              for (std::int64_t i = 0; i < n; ++i)
                                  for (std::int64_t j = 0; j < m; ++j)
                                      dx.at(i, j) += g[axis == 0 ? j : i];
                          }});
    }
    return y;
}

Var Tape::sum_all(Var x) {
    check(x);
    const Array& xv = values_[x.id];
    double s = 0;
    for (std::int64_t i = 0; i < xv.size(); ++i) s += xv[i];
    Var y = push(Array::scalar(s), needs_grad(x), "sum_all");
    if (requires_grad_[y.id]) {
        steps_.push_back({y.id, [y, x](Tape& t) {
                              const double g = t.grads_[y.id][0];
                              Array& dx = t.grad_buf(x);
                              for (std::int64_t i = 0; i < dx.size(); ++i) dx[i] += g;
                          }});
    }
    return y;
}

Var Tape::stack(std::span<const Var> scalars) {
    if (scalars.empty()) throw ContractError("stack: need at least one input");
    Array out({static_cast<std::int64_t>(scalars.size())});
    bool any_grad = false;
    for (std::size_t i = 0; i < scalars.size(); ++i) {
        check(scalars[i]);
        const Array& v = values_[scalars[i].id];
        if (v.size() != 1) shape_fail("stack", v);
        out[static_cast<std::int64_t>(i)] = v[0];
        any_grad = any_grad || needs_grad(scalars[i]);
    }
    std::vector<Var> inputs(scalars.begin(), scalars.end());
    Var y = push(std::move(out), any_grad, "stack");
    if (requires_grad_[y.id]) {
        steps_.push_back({y.id, [y, inputs](Tape& t) {
                              const Array& g = t.grads_[y.id];
                              for (std::size_t i = 0; i < inputs.size(); ++i) {
                                  if (t.needs_grad(inputs[i]))
                                      t.grad_buf(inputs[i])[0] += g[static_cast<std::int64_t>(i)];
                              }
                          }});
    }
    return y;
}

Var Tape::concat(std::span<const Var> vectors) {
    if (vectors.empty()) throw ContractError("concat: need at least one input");
    std::int64_t total = 0;
    bool any_grad = false;
    for (Var v : vectors) {
        check(v);
        const Array& a = values_[v.id];
        if (a.rank() != 1) shape_fail("concat", a);
        total += a.size();
        any_grad = any_grad || needs_grad(v);
    }
    Array out({total});
    std::int64_t pos = 0;
    for (Var v : vectors) {
        const Array& a = values_[v.id];
        std::copy(a.data(), a.data() + a.size(), out.data() + pos);
        pos += a.size();
    }
    std::vector<Var> inputs(vectors.begin(), vectors.end());
    Var y = push(std::move(out), any_grad, "concat");
    if (requires_grad_[y.id]) {
        steps_.push_back({y.id, [y, inputs](Tape& t) {
                              const Array& g = t.grads_[y.id];
                              std::int64_t pos = 0;
                              for (Var v : inputs) {
                                  const std::int64_t n = t.values_[v.id].size();
                                  if (t.needs_grad(v)) {
                                      Array& dv = t.grad_buf(v);
                                      for (std::int64_t i = 0; i < n; ++i) dv[i] += g[pos + i];
                                  }
                                  pos += n;
                              }
                          }});
    }
    return y;
}

Var Tape::reshape(Var x, std::vector<std::int64_t> shape) {
    check(x);
    const Array& xv = values_[x.id];
    if (shape_size(shape) != xv.size()) {
        throw ContractError("reshape: size mismatch " + shape_string(xv.shape()) + " -> " +
                            shape_string(shape));
    }
    Array out(std::move(shape), xv.vec());
    Var y = push(std::move(out), needs_grad(x), "reshape");
    if (requires_grad_[y.id]) {
        steps_.push_back({y.id, [y, x](Tape& t) {
                              const Array& g = t.grads_[y.id];
                              Array& dx = t.grad_buf(x);
                              for (std::int64_t i = 0; i < g.size(); ++i) dx[i] += g[i];
                          }});
    }
    return y;
}

Var Tape::conv1d(Var x, Var filters, Var bias) {
    check(x);
    check(filters);
    check(bias);
    const Array& xv = values_[x.id];
    const Array& fv = values_[filters.id];
    const Array& bv = values_[bias.id];
    if (xv.rank() != 2) shape_fail("conv1d: input", xv);
    if (fv.rank() != 3) shape_fail("conv1d: filters", fv);
    const std::int64_t n = xv.shape()[0], d = xv.shape()[1];
    const std::int64_t nf = fv.shape()[0], h = fv.shape()[1];
    if (fv.shape()[2] != d) shape_fail2("conv1d", xv, fv);
    if (bv.rank() != 1 || bv.shape()[0] != nf) shape_fail("conv1d: bias", bv);
    if (h > n) {
        throw ContractError("conv1d: filter width " + std::to_string(h) +
                            " exceeds input length " + std::to_string(n));
    }
    const std::int64_t on = n - h + 1;
    Array out({on, nf});
    for (std::int64_t i = 0; i < on; ++i) {
        for (std::int64_t f = 0; f < nf; ++f) {
            double s = bv[f];
            for (std::int64_t j = 0; j < h; ++j)
                for (std::int64_t c = 0; c < d; ++c) s += xv.at(i + j, c) * fv.at(f, j, c);
            out.at(i, f) = s;
        }
    }
    Var y = push(std::move(out), needs_grad(x) || needs_grad(filters) || needs_grad(bias), "conv1d");
    if (requires_grad_[y.id]) {
        steps_.push_back({y.id, [y, x, filters, bias, on, nf, h, d](Tape& t) {
                              const Array& g = t.grads_[y.id];
                              const Array& xv = t.values_[x.id];
                              const Array& fv = t.values_[filters.id];
                              const bool gx = t.needs_grad(x);
                              const bool gf = t.needs_grad(filters);
                              const bool gb = t.needs_grad(bias);
                              Array* dx = gx ? &t.grad_buf(x) : nullptr;
                              Array* df = gf ? &t.grad_buf(filters) : nullptr;
                              Array* db = gb ? &t.grad_buf(bias) : nullptr;
                              for (std::int64_t i = 0; i < on; ++i)
                                  for (std::int64_t f = 0; f < nf; ++f) {
                                      const double gif = g.at(i, f);
                                      if (gif == 0.0) continue;
                                      if (db) (*db)[f] += gif;
                                      for (std::int64_t j = 0; j < h; ++j)
                                          for (std::int64_t c = 0; c < d; ++c) {
                                              if (dx) dx->at(i + j, c) += gif * fv.at(f, j, c);
                                              if (df) df->at(f, j, c) += gif * xv.at(i + j, c);
                                          }
                                  }
                          }});
    }
    return y;
}

Var Tape::conv2d(Var x, Var filters, Var bias) {
    check(x);
    check(filters);
    check(bias);
    const Array& xv = values_[x.id];
    const Array& fv = values_[filters.id];
    const Array& bv = values_[bias.id];
    if (xv.rank() != 3) shape_fail("conv2d: input", xv);
    if (fv.rank() != 4) shape_fail("conv2d: filters", fv);
    const std::int64_t c_in = xv.shape()[0], ih = xv.shape()[1], iw = xv.shape()[2];
    const std::int64_t k = fv.shape()[0], kh = fv.shape()[2], kw = fv.shape()[3];
    if (fv.shape()[1] != c_in) shape_fail2("conv2d", xv, fv);
    if (bv.rank() != 1 || bv.shape()[0] != k) shape_fail("conv2d: bias", bv);
    if (kh > ih || kw > iw) {
        throw ContractError("conv2d: kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                            " exceeds input " + std::to_string(ih) + "x" + std::to_string(iw));
    }
    const std::int64_t oh = ih - kh + 1, ow = iw - kw + 1;
    Array out({k, oh, ow});
    for (std::int64_t f = 0; f < k; ++f) {
        for (std::int64_t i = 0; i < oh; ++i)
            for (std::int64_t j = 0; j < ow; ++j) {
                double s = bv[f];
                for (std::int64_t c = 0; c < c_in; ++c)
                    for (std::int64_t u = 0; u < kh; ++u)
                        for (std::int64_t v = 0; v < kw; ++v)
                            s += xv.at(c, i + u, j + v) * fv.at(f, c, u, v);
                out.at(f, i, j) = s;
            }
    }
    Var y = push(std::move(out), needs_grad(x) || needs_grad(filters) || needs_grad(bias), "conv2d");
    if (requires_grad_[y.id]) {
        steps_.push_back(
            {y.id, [y, x, filters, bias, k, oh, ow, c_in, kh, kw](Tape& t) {
                 const Array& g = t.grads_[y.id];
                 const Array& xv = t.values_[x.id];
                 const Array& fv = t.values_[filters.id];
                 Array* dx = t.needs_grad(x) ? &t.grad_buf(x) : nullptr;
                 Array* df = t.needs_grad(filters) ? &t.grad_buf(filters) : nullptr;
                 Array* db = t.needs_grad(bias) ? &t.grad_buf(bias) : nullptr;
                 for (std::int64_t f = 0; f < k; ++f)
                     for (std::int64_t i = 0; i < oh; ++i)
                         for (std::int64_t j = 0; j < ow; ++j) {
                             const double gfij = g.at(f, i, j);
                             if (gfij == 0.0) continue;
                             if (db) (*db)[f] += gfij;
                             for (std::int64_t c = 0; c < c_in; ++c)
                                 for (std::int64_t u = 0; u < kh; ++u)
                                     for (std::int64_t v = 0; v < kw; ++v) {
                                         if (dx) dx->at(c, i + u, j + v) += gfij * fv.at(f, c, u, v);
                                         if (df) df->at(f, c, u, v) += gfij * xv.at(c, i + u, j + v);
                                     }
                         }
             }});
    }
    return y;
}

Var Tape::maxpool2d(Var x, int ph, int pw) {
    check(x);
    if (ph < 1 || pw < 1) throw ContractError("maxpool2d: window must be positive");
    const Array& xv = values_[x.id];
    if (xv.rank() != 3) shape_fail("maxpool2d", xv);
    const std::int64_t c_in = xv.shape()[0], ih = xv.shape()[1], iw = xv.shape()[2];
    const std::int64_t oh = ih / ph, ow = iw / pw;
    if (oh < 1 || ow < 1) {
        throw ContractError("maxpool2d: window " + std::to_string(ph) + "x" + std::to_string(pw) +
                            " exceeds input " + std::to_string(ih) + "x" + std::to_string(iw));
    }
    Array out({c_in, oh, ow});
    std::vector<std::int64_t> argmax(static_cast<std::size_t>(c_in * oh * ow));
    std::int64_t cell = 0;
    for (std::int64_t c = 0; c < c_in; ++c)
        for (std::int64_t i = 0; i < oh; ++i)
            for (std::int64_t j = 0; j < ow; ++j, ++cell) {
                double best = -std::numeric_limits<double>::infinity();
                std::int64_t best_idx = 0;
                for (std::int64_t u = 0; u < ph; ++u)
                    for (std::int64_t v = 0; v < pw; ++v) {
                        const std::int64_t idx = (c * ih + i * ph + u) * iw + j * pw + v;
                        if (xv[idx] > best) {
                            best = xv[idx];
                            best_idx = idx;
                        }
                    }
                out[cell] = best;
                argmax[static_cast<std::size_t>(cell)] = best_idx;
            }
    Var y = push(std::move(out), needs_grad(x), "maxpool2d");
    if (requires_grad_[y.id]) {
        steps_.push_back({y.id, [y, x, argmax = std::move(argmax)](Tape& t) {
                              const Array& g = t.grads_[y.id];
                              Array& dx = t.grad_buf(x);
                              for (std::int64_t i = 0; i < g.size(); ++i)
                                  dx[argmax[static_cast<std::size_t>(i)]] += g[i];
                          }});
    }
    return y;
}

Var Tape::adaptive_maxpool2d(Var x, int out_h, int out_w) {
    check(x);
    if (out_h < 1 || out_w < 1) throw ContractError("adaptive_maxpool2d: grid must be positive");
    const Array& xv = values_[x.id];
    if (xv.rank() != 3) shape_fail("adaptive_maxpool2d", xv);
    const std::int64_t c_in = xv.shape()[0], ih = xv.shape()[1], iw = xv.shape()[2];
    if (ih < out_h || iw < out_w) {
        throw ContractError("adaptive_maxpool2d: input " + std::to_string(ih) + "x" +
                            std::to_string(iw) + " smaller than grid " + std::to_string(out_h) +
                            "x" + std::to_string(out_w));
    }
    const std::int64_t oh = out_h, ow = out_w;
    Array out({c_in, oh, ow});
    std::vector<std::int64_t> argmax(static_cast<std::size_t>(c_in * oh * ow));
    std::int64_t cell = 0;
    for (std::int64_t c = 0; c < c_in; ++c)
        for (std::int64_t i = 0; i < oh; ++i) {
            const std::int64_t r0 = i * ih / oh, r1 = (i + 1) * ih / oh;
            for (std::int64_t j = 0; j < ow; ++j, ++cell) {
                const std::int64_t c0 = j * iw / ow, c1 = (j + 1) * iw / ow;
                double best = -std::numeric_limits<double>::infinity();
                std::int64_t best_idx = 0;
                for (std::int64_t u = r0; u < r1; ++u)
                    for (std::int64_t v = c0; v < c1; ++v) {
                        const std::int64_t idx = (c * ih + u) * iw + v;
                        if (xv[idx] > best) {
                            best = xv[idx];
                            best_idx = idx;
                        }
                    }
                out[cell] = best;
                argmax[static_cast<std::size_t>(cell)] = best_idx;
            }
        }
    Var y = push(std::move(out), needs_grad(x), "adaptive_maxpool2d");
    if (requires_grad_[y.id]) {
        steps_.push_back({y.id, [y, x, argmax = std::move(argmax)](Tape& t) {
                              const Array& g = t.grads_[y.id];
                              Array& dx = t.grad_buf(x);
                              for (std::int64_t i = 0; i < g.size(); ++i)
                                  dx[argmax[static_cast<std::size_t>(i)]] += g[i];
                          }});
    }
    return y;
}

Var Tape::pad2d(Var x, std::int64_t out_h, std::int64_t out_w) {
    check(x);
    const Array& xv = values_[x.id];
    if (xv.rank() != 2) shape_fail("pad2d", xv);
    const std::int64_t ih = xv.shape()[0], iw = xv.shape()[1];
    if (ih > out_h || iw > out_w) {
        throw ContractError("pad2d: input " + std::to_string(ih) + "x" + std::to_string(iw) +
                            " exceeds canvas " + std::to_string(out_h) + "x" + std::to_string(out_w));
    }
    Array out({out_h, out_w});
    for (std::int64_t i = 0; i < ih; ++i)
        for (std::int64_t j = 0; j < iw; ++j) out.at(i, j) = xv.at(i, j);
    Var y = push(std::move(out), needs_grad(x), "pad2d");
    if (requires_grad_[y.id]) {
        steps_.push_back({y.id, [y, x, ih, iw](Tape& t) {
                              const Array& g = t.grads_[y.id];
                              Array& dx = t.grad_buf(x);
                              for (std::int64_t i = 0; i < ih; ++i)
                                  for (std::int64_t j = 0; j < iw; ++j) dx.at(i, j) += g.at(i, j);
                          }});
    }
    return y;
}

Var Tape::cosine_matrix(Var a, Var b) {
    check(a);
    check(b);
    const Array& av = values_[a.id];
    const Array& bv = values_[b.id];
    if (av.rank() != 2 || bv.rank() != 2 || av.shape()[1] != bv.shape()[1]) {
        shape_fail2("cosine_matrix", av, bv);
    }
    const std::int64_t n = av.shape()[0], m = bv.shape()[0], d = av.shape()[1];
    std::vector<double> na(static_cast<std::size_t>(n)), nb(static_cast<std::size_t>(m));
    for (std::int64_t i = 0; i < n; ++i) {
        double s = 0;
        for (std::int64_t c = 0; c < d; ++c) s += av.at(i, c) * av.at(i, c);
        na[static_cast<std::size_t>(i)] = std::sqrt(s);
    }
    for (std::int64_t j = 0; j < m; ++j) {
        double s = 0;
        for (std::int64_t c = 0; c < d; ++c) s += bv.at(j, c) * bv.at(j, c);
        nb[static_cast<std::size_t>(j)] = std::sqrt(s);
    }
    Array out({n, m});
    for (std::int64_t i = 0; i < n; ++i)
        for (std::int64_t j = 0; j < m; ++j) {
            const double nn = na[static_cast<std::size_t>(i)] * nb[static_cast<std::size_t>(j)];
            if (na[static_cast<std::size_t>(i)] <= kNormEps ||
                nb[static_cast<std::size_t>(j)] <= kNormEps) {
                out.at(i, j) = 0.0;
            } else {
                double dot = 0;
                for (std::int64_t c = 0; c < d; ++c) dot += av.at(i, c) * bv.at(j, c);
                out.at(i, j) = dot / nn;
            }
        }
    Var y = push(std::move(out), needs_grad(a) || needs_grad(b), "cosine_matrix");
    if (requires_grad_[y.id]) {
        steps_.push_back(
            {y.id, [y, a, b, n, m, d, na = std::move(na), nb = std::move(nb)](Tape& t) {
                 const Array& g = t.grads_[y.id];
                 const Array& av = t.values_[a.id];
                 const Array& bv = t.values_[b.id];
                 const Array& yv = t.values_[y.id];
                 Array* da = t.needs_grad(a) ? &t.grad_buf(a) : nullptr;
                 Array* db = t.needs_grad(b) ? &t.grad_buf(b) : nullptr;
                 for (std::int64_t i = 0; i < n; ++i) {
                     const double nai = na[static_cast<std::size_t>(i)];
                     if (nai <= kNormEps) continue;
                     for (std::int64_t j = 0; j < m; ++j) {
                         const double nbj = nb[static_cast<std::size_t>(j)];
                         if (nbj <= kNormEps) continue;
                         const double gij = g.at(i, j);
                         if (gij == 0.0) continue;
                         const double c = yv.at(i, j);
                         const double inv = 1.0 / (nai * nbj);
                         for (std::int64_t p = 0; p < d; ++p) {
                             if (da)
                                 da->at(i, p) +=
                                     gij * (bv.at(j, p) * inv - c * av.at(i, p) / (nai * nai));
                             if (db)
                                 db->at(j, p) +=
                                     gij * (av.at(i, p) * inv - c * bv.at(j, p) / (nbj * nbj));
                         }
                     }
                 }
             }});
    }
    return y;
}

Var Tape::gaussian_kernel_pool(Var m, std::span<const double> mu, std::span<const double> sigma) {
    check(m);
    const Array& mv = values_[m.id];
    if (mv.rank() != 2) shape_fail("gaussian_kernel_pool", mv);
    if (mu.size() != sigma.size() || mu.empty()) {
        throw ContractError("gaussian_kernel_pool: mu/sigma size mismatch");
    }
    const std::int64_t rows = mv.shape()[0], cols = mv.shape()[1];
    const std::int64_t nk = static_cast<std::int64_t>(mu.size());
    const bool track = needs_grad(m);

    Array out({nk});
    // Row sums per kernel, and (when grads flow) the individual exp terms.
    std::vector<double> row_sums(static_cast<std::size_t>(nk * rows));
    std::vector<double> exps;
    if (track) exps.resize(static_cast<std::size_t>(nk * rows * cols));
    for (std::int64_t k = 0; k < nk; ++k) {
        const double mk = mu[static_cast<std::size_t>(k)];
        const double inv_two_s2 = 1.0 / (2.0 * sigma[static_cast<std::size_t>(k)] *
                                         sigma[static_cast<std::size_t>(k)]);
        double phi = 0;
        for (std::int64_t i = 0; i < rows; ++i) {
            double s = 0;
            for (std::int64_t j = 0; j < cols; ++j) {
                const double diff = mv.at(i, j) - mk;
                const double e = std::exp(-diff * diff * inv_two_s2);
                if (track) exps[static_cast<std::size_t>((k * rows + i) * cols + j)] = e;
                s += e;
            }
            row_sums[static_cast<std::size_t>(k * rows + i)] = s;
            phi += std::log(std::max(kLogClamp, s));
        }
        out[k] = phi;
    }
    std::vector<double> mus(mu.begin(), mu.end());
    std::vector<double> sigmas(sigma.begin(), sigma.end());
    Var y = push(std::move(out), track, "gaussian_kernel_pool");
    if (requires_grad_[y.id]) {
        steps_.push_back(
            {y.id, [y, m, rows, cols, nk, mus = std::move(mus), sigmas = std::move(sigmas),
                    row_sums = std::move(row_sums), exps = std::move(exps)](Tape& t) {
                 const Array& g = t.grads_[y.id];
                 const Array& mv = t.values_[m.id];
                 Array& dm = t.grad_buf(m);
                 for (std::int64_t k = 0; k < nk; ++k) {
                     const double gk = g[k];
                     if (gk == 0.0) continue;
                     const double mk = mus[static_cast<std::size_t>(k)];
                     const double inv_s2 = 1.0 / (sigmas[static_cast<std::size_t>(k)] *
                                                  sigmas[static_cast<std::size_t>(k)]);
                     for (std::int64_t i = 0; i < rows; ++i) {
                         const double s = row_sums[static_cast<std::size_t>(k * rows + i)];
                         if (s <= kLogClamp) continue;  // clamped: flat region
                         const double coeff = gk / s;
                         for (std::int64_t j = 0; j < cols; ++j) {
                             const double e =
                                 exps[static_cast<std::size_t>((k * rows + i) * cols + j)];
                             dm.at(i, j) += coeff * e * (-(mv.at(i, j) - mk) * inv_s2);
                         }
                     }
                 }
             }});
    }
    return y;
}

void Tape::backward(Var loss) {
    check(loss);
    if (values_[loss.id].size() != 1) {
        throw ContractError("backward: loss must be scalar, got " +
                            shape_string(values_[loss.id].shape()));
    }
    for (auto& g : grads_) g = Array();
    grad_buf(loss)[0] = 1.0;
    for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) {
        if (it->node > loss.id) continue;          // recorded after the loss
        if (grads_[it->node].size() == 0) continue;  // not reached from the loss
        it->fn(*this);
    }
    grads_valid_ = true;
}

}  // namespace xlir::numeric
