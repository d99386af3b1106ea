#include "prognet/numerics/ops.hpp"

#include <algorithm>
#include <cblas.h>
#include <cmath>
#include <limits>
#include <string>

namespace prognet::nn {

namespace {

// C = alpha * op(A) op(B) + beta * C, row-major.
void gemm(bool ta, bool tb, int m, int n, int k, float alpha, const float* a, const float* b,
          float beta, float* c) {
    cblas_sgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m,
                n, k, alpha, a, ta ? m : k, b, tb ? k : n, beta, c, n);
}
void gemm(bool ta, bool tb, int m, int n, int k, double alpha, const double* a, const double* b,
          double beta, double* c) {
    cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans, m,
                n, k, alpha, a, ta ? m : k, b, tb ? k : n, beta, c, n);
}

template <class T>
Node<T>* parent(Node<T>& self, std::size_t i) {
    Node<T>* p = self.parents[i].get();
    if (!p->requires_grad) return nullptr;
    p->ensure_grad();
    return p;
}

void require(bool ok, const std::string& msg) {
    if (!ok) throw ShapeError(msg);
}

struct AxisSplit {
    std::size_t outer, extent, inner;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
    require(axis < s.size(), "axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    AxisSplit r{1, s[axis], 1};
    for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
    for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
    return r;
}

template <class T>
Tensor<T> unary(const Tensor<T>& x, const char* name, T (*f)(T), T (*df)(T, T)) {
    std::vector<T> out(x.numel());
    auto xv = x.data();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
    return make_result<T>(name, x.shape(), std::move(out), {x}, [df](Node<T>& self) {
        if (auto* p = parent(self, 0)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i)
                p->grad[i] += self.grad[i] * df(p->value[i], self.value[i]);
        }
    });
}

// Gathers receptive fields of image `n` into cols[C*K*K, Ho*Wo].
template <class T>
void im2col(const T* img, std::size_t c, std::size_t h, std::size_t w, int k, int stride, int pad,
            std::size_t ho, std::size_t wo, T* cols) {
    for (std::size_t ci = 0; ci < c; ++ci)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                T* row = cols + ((ci * k + ky) * k + kx) * ho * wo;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                    const long iy = static_cast<long>(oy) * stride - pad + ky;
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                        const long ix = static_cast<long>(ox) * stride - pad + kx;
                        row[oy * wo + ox] =
                            (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w))
                                ? T(0)
                                : img[(ci * h + iy) * w + ix];
                    }
                }
            }
}

template <class T>
void col2im_add(const T* cols, std::size_t c, std::size_t h, std::size_t w, int k, int stride,
                int pad, std::size_t ho, std::size_t wo, T* img) {
    for (std::size_t ci = 0; ci < c; ++ci)
        for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
                const T* row = cols + ((ci * k + ky) * k + kx) * ho * wo;
                for (std::size_t oy = 0; oy < ho; ++oy) {
                    const long iy = static_cast<long>(oy) * stride - pad + ky;
                    if (iy < 0 || iy >= static_cast<long>(h)) continue;
                    for (std::size_t ox = 0; ox < wo; ++ox) {
                        const long ix = static_cast<long>(ox) * stride - pad + kx;
                        if (ix < 0 || ix >= static_cast<long>(w)) continue;
                        img[(ci * h + iy) * w + ix] += row[oy * wo + ox];
                    }
                }
            }
}

}  // namespace

template <class T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.shape() == b.shape(), "add: shape mismatch " + shape_str(a.shape()) + " vs " +
                                        shape_str(b.shape()));
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
    return make_result<T>("add", a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
        for (std::size_t k = 0; k < 2; ++k)
            if (auto* p = parent(self, k))
                for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    });
}

template <class T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.shape() == b.shape(), "sub: shape mismatch " + shape_str(a.shape()) + " vs " +
                                        shape_str(b.shape()));
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
    return make_result<T>("sub", a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
        if (auto* p = parent(self, 0))
            for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
        if (auto* p = parent(self, 1))
            for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] -= self.grad[i];
    });
}

template <class T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.shape() == b.shape(), "mul: shape mismatch " + shape_str(a.shape()) + " vs " +
                                        shape_str(b.shape()));
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    return make_result<T>("mul", a.shape(), std::move(out), {a, b}, [](Node<T>& self) {
        Node<T>* pa = self.parents[0].get();
        Node<T>* pb = self.parents[1].get();
        if (auto* p = parent(self, 0))
            for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i] * pb->value[i];
        if (auto* p = parent(self, 1))
            for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i] * pa->value[i];
    });
}

template <class T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
    std::vector<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * factor;
    return make_result<T>("scale", a.shape(), std::move(out), {a}, [factor](Node<T>& self) {
        if (auto* p = parent(self, 0))
            for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i] * factor;
    });
}

template <class T>
Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias) {
    require(x.rank() == 2 || x.rank() == 4, "add_bias: expected rank 2 or 4, got " + shape_str(x.shape()));
    require(bias.numel() == x.dim(1), "add_bias: bias length " + std::to_string(bias.numel()) +
                                          " does not match channels of " + shape_str(x.shape()));
    const auto s = split_axis(x.shape(), 1);
    std::vector<T> out(x.numel());
    auto xv = x.data();
    auto bv = bias.data();
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t c = 0; c < s.extent; ++c)
            for (std::size_t i = 0; i < s.inner; ++i) {
                const std::size_t k = (o * s.extent + c) * s.inner + i;
                out[k] = xv[k] + bv[c];
            }
    return make_result<T>("add_bias", x.shape(), std::move(out), {x, bias}, [s](Node<T>& self) {
        if (auto* p = parent(self, 0))
            for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
        if (auto* p = parent(self, 1))
            for (std::size_t o = 0; o < s.outer; ++o)
                for (std::size_t c = 0; c < s.extent; ++c)
                    for (std::size_t i = 0; i < s.inner; ++i)
                        p->grad[c] += self.grad[(o * s.extent + c) * s.inner + i];
    });
}

template <class T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    require(a.rank() == 2 && b.rank() == 2, "matmul: expected rank-2 operands");
    require(a.dim(1) == b.dim(0), "matmul: inner dimensions differ " + shape_str(a.shape()) +
                                      " x " + shape_str(b.shape()));
    const int m = static_cast<int>(a.dim(0));
    const int k = static_cast<int>(a.dim(1));
    const int n = static_cast<int>(b.dim(1));
    std::vector<T> out(static_cast<std::size_t>(m) * n);
    gemm(false, false, m, n, k, T(1), a.data().data(), b.data().data(), T(0), out.data());
    return make_result<T>("matmul", Shape{a.dim(0), b.dim(1)}, std::move(out), {a, b},
                          [m, n, k](Node<T>& self) {
                              Node<T>* pa = self.parents[0].get();
                              Node<T>* pb = self.parents[1].get();
                              if (auto* p = parent(self, 0))
                                  gemm(false, true, m, k, n, T(1), self.grad.data(),
                                       pb->value.data(), T(1), p->grad.data());
                              if (auto* p = parent(self, 1))
                                  gemm(true, false, k, n, m, T(1), pa->value.data(),
                                       self.grad.data(), T(1), p->grad.data());
                          });
}

template <class T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
    return add_bias(matmul(x, w), b);
}

template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, int stride, int pad) {
    require(x.rank() == 4 && w.rank() == 4, "conv2d: expected [N,C,H,W] input and [O,C,K,K] kernel");
    if (stride != 1 && stride != 2) throw std::invalid_argument("conv2d: stride must be 1 or 2");
    if (pad < 0) throw std::invalid_argument("conv2d: padding must be non-negative");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::size_t o = w.dim(0);
    const int k = static_cast<int>(w.dim(2));
    require(w.dim(1) == c, "conv2d: kernel channels " + std::to_string(w.dim(1)) +
                               " do not match input channels " + std::to_string(c));
    require(w.dim(3) == w.dim(2), "conv2d: kernel must be square");
    if (static_cast<std::size_t>(k) > h + 2 * pad || static_cast<std::size_t>(k) > wd + 2 * pad)
        throw std::invalid_argument("conv2d: kernel larger than padded input");
    const std::size_t ho = (h + 2 * pad - k) / stride + 1;
    const std::size_t wo = (wd + 2 * pad - k) / stride + 1;
    const std::size_t ckk = c * k * k, hw = ho * wo;

    std::vector<T> out(n * o * hw);
    std::vector<T> cols(ckk * hw);
    for (std::size_t i = 0; i < n; ++i) {
        im2col(x.data().data() + i * c * h * wd, c, h, wd, k, stride, pad, ho, wo, cols.data());
        gemm(false, false, static_cast<int>(o), static_cast<int>(hw), static_cast<int>(ckk), T(1),
             w.data().data(), cols.data(), T(0), out.data() + i * o * hw);
    }
    return make_result<T>(
        "conv2d", Shape{n, o, ho, wo}, std::move(out), {x, w},
        [=](Node<T>& self) {
            Node<T>* px = self.parents[0].get();
            Node<T>* pw = self.parents[1].get();
            Node<T>* gx = parent(self, 0);
            Node<T>* gw = parent(self, 1);
            std::vector<T> buf(ckk * hw);
            std::vector<T> dcols(gx ? ckk * hw : 0);
            for (std::size_t i = 0; i < n; ++i) {
                const T* gout = self.grad.data() + i * o * hw;
                if (gw) {
                    im2col(px->value.data() + i * c * h * wd, c, h, wd, k, stride, pad, ho, wo,
                           buf.data());
                    gemm(false, true, static_cast<int>(o), static_cast<int>(ckk),
                         static_cast<int>(hw), T(1), gout, buf.data(), T(1), gw->grad.data());
                }
                if (gx) {
                    gemm(true, false, static_cast<int>(ckk), static_cast<int>(hw),
                         static_cast<int>(o), T(1), pw->value.data(), gout, T(0), dcols.data());
                    col2im_add(dcols.data(), c, h, wd, k, stride, pad, ho, wo,
                               gx->grad.data() + i * c * h * wd);
                }
            }
        });
}

template <class T>
Tensor<T> max_pool2d(const Tensor<T>& x, int kernel, int stride, int pad) {
    require(x.rank() == 4, "max_pool2d: expected [N,C,H,W], got " + shape_str(x.shape()));
    if (kernel < 1 || stride < 1 || pad < 0 || pad >= kernel)
        throw std::invalid_argument("max_pool2d: invalid kernel/stride/pad");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    require(static_cast<std::size_t>(kernel) <= h + 2 * pad, "max_pool2d: kernel larger than input");
    const std::size_t ho = (h + 2 * pad - kernel) / stride + 1;
    const std::size_t wo = (w + 2 * pad - kernel) / stride + 1;
    std::vector<T> out(n * c * ho * wo);
    std::vector<std::size_t> argmax(out.size());
    auto xv = x.data();
    for (std::size_t plane = 0; plane < n * c; ++plane) {
        const std::size_t base = plane * h * w;
        for (std::size_t oy = 0; oy < ho; ++oy)
            for (std::size_t ox = 0; ox < wo; ++ox) {
                T best = -std::numeric_limits<T>::infinity();
                std::size_t best_idx = base;
                for (int ky = 0; ky < kernel; ++ky) {
                    const long iy = static_cast<long>(oy) * stride - pad + ky;
                    if (iy < 0 || iy >= static_cast<long>(h)) continue;
                    for (int kx = 0; kx < kernel; ++kx) {
                        const long ix = static_cast<long>(ox) * stride - pad + kx;
                        if (ix < 0 || ix >= static_cast<long>(w)) continue;
                        const std::size_t idx = base + iy * w + ix;
                        if (xv[idx] > best) {
                            best = xv[idx];
                            best_idx = idx;
                        }
                    }
                }
                const std::size_t k = (plane * ho + oy) * wo + ox;
                out[k] = best;
                argmax[k] = best_idx;
            }
    }
    return make_result<T>("max_pool2d", Shape{n, c, ho, wo}, std::move(out), {x},
                          [argmax = std::move(argmax)](Node<T>& self) {
                              if (auto* p = parent(self, 0))
                                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                                      p->grad[argmax[i]] += self.grad[i];
                          });
}

template <class T>
Tensor<T> global_avgpool(const Tensor<T>& x) {
    require(x.rank() == 4, "global_avgpool: expected [N,C,H,W], got " + shape_str(x.shape()));
    const std::size_t nc = x.dim(0) * x.dim(1), hw = x.dim(2) * x.dim(3);
    std::vector<T> out(nc);
    auto xv = x.data();
    for (std::size_t i = 0; i < nc; ++i) {
        T acc = 0;
        for (std::size_t j = 0; j < hw; ++j) acc += xv[i * hw + j];
        out[i] = acc / static_cast<T>(hw);
    }
    return make_result<T>("global_avgpool", Shape{x.dim(0), x.dim(1)}, std::move(out), {x},
                          [nc, hw](Node<T>& self) {
                              if (auto* p = parent(self, 0))
                                  for (std::size_t i = 0; i < nc; ++i) {
                                      const T g = self.grad[i] / static_cast<T>(hw);
                                      for (std::size_t j = 0; j < hw; ++j) p->grad[i * hw + j] += g;
                                  }
                          });
}

template <class T>
Tensor<T> relu(const Tensor<T>& x) {
    return unary<T>(
        x, "relu", [](T v) { return v > T(0) ? v : T(0); },
        [](T in, T) { return in > T(0) ? T(1) : T(0); });
}

template <class T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    return unary<T>(
        x, "sigmoid",
        [](T v) {
            if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
            const T e = std::exp(v);
            return e / (T(1) + e);
        },
        [](T, T out) { return out * (T(1) - out); });
}

template <class T>
Tensor<T> tanh(const Tensor<T>& x) {
    return unary<T>(
        x, "tanh", [](T v) { return std::tanh(v); }, [](T, T out) { return T(1) - out * out; });
}

template <class T>
Tensor<T> abs(const Tensor<T>& x) {
    // Subgradient 0 at the kink.
    return unary<T>(
        x, "abs", [](T v) { return std::abs(v); },
        [](T in, T) { return in > T(0) ? T(1) : (in < T(0) ? T(-1) : T(0)); });
}

template <class T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
    const auto s = split_axis(x.shape(), axis);
    std::vector<T> out(x.numel());
    auto xv = x.data();
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.inner; ++i) {
            auto at = [&](std::size_t a) { return (o * s.extent + a) * s.inner + i; };
            T mx = xv[at(0)];
            for (std::size_t a = 1; a < s.extent; ++a) mx = std::max(mx, xv[at(a)]);
            T total = 0;
            for (std::size_t a = 0; a < s.extent; ++a) {
                out[at(a)] = std::exp(xv[at(a)] - mx);
                total += out[at(a)];
            }
            for (std::size_t a = 0; a < s.extent; ++a) out[at(a)] /= total;
        }
    return make_result<T>("softmax", x.shape(), std::move(out), {x}, [s](Node<T>& self) {
        auto* p = parent(self, 0);
        if (!p) return;
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t i = 0; i < s.inner; ++i) {
                auto at = [&](std::size_t a) { return (o * s.extent + a) * s.inner + i; };
                T dot = 0;
                for (std::size_t a = 0; a < s.extent; ++a) dot += self.grad[at(a)] * self.value[at(a)];
                for (std::size_t a = 0; a < s.extent; ++a)
                    p->grad[at(a)] += self.value[at(a)] * (self.grad[at(a)] - dot);
            }
    });
}

template <class T>
Tensor<T> dropout(const Tensor<T>& x, double rate, bool train, std::mt19937_64& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) throw std::invalid_argument("dropout: rate must be in [0,1)");
    if (!train || rate == 0.0) return x;
    std::bernoulli_distribution keep(1.0 - rate);
    const T factor = static_cast<T>(1.0 / (1.0 - rate));
    std::vector<T> mask(x.numel());
    for (auto& m : mask) m = keep(rng) ? factor : T(0);
    std::vector<T> out(x.numel());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.data()[i] * mask[i];
    return make_result<T>("dropout", x.shape(), std::move(out), {x},
                          [mask = std::move(mask)](Node<T>& self) {
                              if (auto* p = parent(self, 0))
                                  for (std::size_t i = 0; i < self.grad.size(); ++i)
                                      p->grad[i] += self.grad[i] * mask[i];
                          });
}

template <class T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis) {
    require(!parts.empty(), "concat: no inputs");
    Shape out_shape = parts[0].shape();
    require(axis < out_shape.size(), "concat: axis out of range");
    std::vector<std::size_t> extents;
    std::size_t total = 0;
    for (const auto& t : parts) {
        require(t.rank() == out_shape.size(), "concat: rank mismatch");
        for (std::size_t d = 0; d < out_shape.size(); ++d)
            if (d != axis)
                require(t.dim(d) == out_shape[d], "concat: shape mismatch " + shape_str(t.shape()) +
                                                      " vs " + shape_str(out_shape));
        extents.push_back(t.dim(axis));
        total += t.dim(axis);
    }
    out_shape[axis] = total;
    const auto s = split_axis(out_shape, axis);
    std::vector<T> out(shape_numel(out_shape));
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        auto pv = parts[k].data();
        const std::size_t e = extents[k];
        for (std::size_t o = 0; o < s.outer; ++o)
            std::copy_n(pv.data() + o * e * s.inner, e * s.inner,
                        out.data() + (o * total + offset) * s.inner);
        offset += e;
    }
    return make_result<T>("concat", out_shape, std::move(out), parts,
                          [s, extents, total](Node<T>& self) {
                              std::size_t offset = 0;
                              for (std::size_t k = 0; k < extents.size(); ++k) {
                                  const std::size_t e = extents[k];
                                  if (auto* p = parent(self, k))
                                      for (std::size_t o = 0; o < s.outer; ++o)
                                          for (std::size_t j = 0; j < e * s.inner; ++j)
                                              p->grad[o * e * s.inner + j] +=
                                                  self.grad[(o * total + offset) * s.inner + j];
                                  offset += e;
                              }
                          });
}

template <class T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length) {
    const auto s = split_axis(x.shape(), axis);
    require(length > 0 && start + length <= s.extent, "slice: range out of bounds for " +
                                                          shape_str(x.shape()));
    Shape out_shape = x.shape();
    out_shape[axis] = length;
    std::vector<T> out(shape_numel(out_shape));
    auto xv = x.data();
    for (std::size_t o = 0; o < s.outer; ++o)
        std::copy_n(xv.data() + (o * s.extent + start) * s.inner, length * s.inner,
                    out.data() + o * length * s.inner);
    return make_result<T>("slice", out_shape, std::move(out), {x}, [s, start, length](Node<T>& self) {
        if (auto* p = parent(self, 0))
            for (std::size_t o = 0; o < s.outer; ++o)
                for (std::size_t j = 0; j < length * s.inner; ++j)
                    p->grad[(o * s.extent + start) * s.inner + j] += self.grad[o * length * s.inner + j];
    });
}

template <class T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    require(shape_numel(shape) == x.numel(), "reshape: " + shape_str(x.shape()) + " -> " +
                                                 shape_str(shape) + " changes element count");
    std::vector<T> out(x.data().begin(), x.data().end());
    return make_result<T>("reshape", std::move(shape), std::move(out), {x}, [](Node<T>& self) {
        if (auto* p = parent(self, 0))
            for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
    });
}

template <class T>
Tensor<T> flatten(const Tensor<T>& x) {
    if (x.rank() == 2) return x;
    return reshape(x, Shape{x.dim(0), x.numel() / x.dim(0)});
}

template <class T>
Tensor<T> sum(const Tensor<T>& x) {
    T acc = 0;
    for (T v : x.data()) acc += v;
    return make_result<T>("sum", Shape{1}, std::vector<T>{acc}, {x}, [](Node<T>& self) {
        if (auto* p = parent(self, 0))
            for (auto& g : p->grad) g += self.grad[0];
    });
}

template <class T>
Tensor<T> mean(const Tensor<T>& x) {
    return scale(sum(x), T(1) / static_cast<T>(x.numel()));
}

template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels) {
    require(logits.rank() == 2, "cross_entropy: expected [N,n] logits, got " + shape_str(logits.shape()));
    const std::size_t n = logits.dim(0), classes = logits.dim(1);
    require(labels.size() == n, "cross_entropy: " + std::to_string(labels.size()) +
                                    " labels for batch of " + std::to_string(n));
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= classes)
            throw std::out_of_range("cross_entropy: label " + std::to_string(y) + " outside [0," +
                                    std::to_string(classes) + ")");
    auto xv = logits.data();
    std::vector<T> probs(n * classes);
    T loss = 0;
    for (std::size_t r = 0; r < n; ++r) {
        const T* row = xv.data() + r * classes;
        const T mx = *std::max_element(row, row + classes);
        T total = 0;
        for (std::size_t a = 0; a < classes; ++a) total += std::exp(row[a] - mx);
        const T log_total = std::log(total);
        for (std::size_t a = 0; a < classes; ++a)
            probs[r * classes + a] = std::exp(row[a] - mx - log_total);
        loss += -(row[labels[r]] - mx - log_total);
    }
    loss /= static_cast<T>(n);
    std::vector<int> lab(labels.begin(), labels.end());
    return make_result<T>("cross_entropy", Shape{1}, std::vector<T>{loss}, {logits},
                          [probs = std::move(probs), lab = std::move(lab), n, classes](Node<T>& self) {
                              auto* p = parent(self, 0);
                              if (!p) return;
                              const T g = self.grad[0] / static_cast<T>(n);
                              for (std::size_t r = 0; r < n; ++r)
                                  for (std::size_t a = 0; a < classes; ++a) {
                                      const T onehot = static_cast<int>(a) == lab[r] ? T(1) : T(0);
                                      p->grad[r * classes + a] += g * (probs[r * classes + a] - onehot);
                                  }
                          });
}

template <class T>
std::vector<int> argmax_rows(const Tensor<T>& x) {
    require(x.rank() == 2, "argmax_rows: expected rank 2");
    const std::size_t n = x.dim(0), k = x.dim(1);
    std::vector<int> out(n);
    for (std::size_t r = 0; r < n; ++r) {
        const T* row = x.data().data() + r * k;
        out[r] = static_cast<int>(std::max_element(row, row + k) - row);
    }
    return out;
}

#define PROGNET_INSTANTIATE_OPS(T)                                                            \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                               \
    template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                               \
    template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                               \
    template Tensor<T> scale(const Tensor<T>&, T);                                            \
    template Tensor<T> add_bias(const Tensor<T>&, const Tensor<T>&);                          \
    template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                            \
    template Tensor<T> linear(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);          \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, int, int);                  \
    template Tensor<T> max_pool2d(const Tensor<T>&, int, int, int);                           \
    template Tensor<T> global_avgpool(const Tensor<T>&);                                      \
    template Tensor<T> relu(const Tensor<T>&);                                                \
    template Tensor<T> sigmoid(const Tensor<T>&);                                             \
    template Tensor<T> tanh(const Tensor<T>&);                                                \
    template Tensor<T> abs(const Tensor<T>&);                                                 \
    template Tensor<T> softmax(const Tensor<T>&, std::size_t);                                \
    template Tensor<T> dropout(const Tensor<T>&, double, bool, std::mt19937_64&);             \
    template Tensor<T> concat(const std::vector<Tensor<T>>&, std::size_t);                    \
    template Tensor<T> slice(const Tensor<T>&, std::size_t, std::size_t, std::size_t);        \
    template Tensor<T> reshape(const Tensor<T>&, Shape);                                      \
    template Tensor<T> flatten(const Tensor<T>&);                                             \
    template Tensor<T> sum(const Tensor<T>&);                                                 \
    template Tensor<T> mean(const Tensor<T>&);                                                \
    template Tensor<T> cross_entropy(const Tensor<T>&, std::span<const int>);                 \
    template std::vector<int> argmax_rows(const Tensor<T>&);

PROGNET_INSTANTIATE_OPS(float)
PROGNET_INSTANTIATE_OPS(double)

}  // namespace prognet::nn
