#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "prognet/numerics/tensor.hpp"

// Differentiable primitives. All ops check shapes eagerly and throw ShapeError;
// results are checked for finiteness (NonFiniteError).
namespace prognet::nn {

template <class T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <class T> Tensor<T> scale(const Tensor<T>& a, T factor);

// Adds a per-channel bias along axis 1 (rank 2 [N,F] or rank 4 [N,C,H,W]).
template <class T> Tensor<T> add_bias(const Tensor<T>& x, const Tensor<T>& bias);

template <class T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// x[N,in] · w[in,out] + b[out]
template <class T> Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b);

// Cross-correlation of x[N,C,H,W] with w[O,C,K,K]; output extent floor((H+2p-K)/s)+1.
template <class T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, int stride, int pad);

template <class T>
Tensor<T> max_pool2d(const Tensor<T>& x, int kernel, int stride, int pad);
// 2×2 stride-2 max pooling.
template <class T> Tensor<T> maxpool2(const Tensor<T>& x) { return max_pool2d(x, 2, 2, 0); }
// [N,C,H,W] -> [N,C]
template <class T> Tensor<T> global_avgpool(const Tensor<T>& x);

template <class T> Tensor<T> relu(const Tensor<T>& x);
template <class T> Tensor<T> sigmoid(const Tensor<T>& x);
template <class T> Tensor<T> tanh(const Tensor<T>& x);
template <class T> Tensor<T> abs(const Tensor<T>& x);
template <class T> Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);

// Inverted dropout: identity when !train, otherwise zeroes with probability
// `rate` and scales survivors by 1/(1-rate).
template <class T>
Tensor<T> dropout(const Tensor<T>& x, double rate, bool train, std::mt19937_64& rng);

template <class T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, std::size_t axis);
template <class T>
Tensor<T> slice(const Tensor<T>& x, std::size_t axis, std::size_t start, std::size_t length);
template <class T> Tensor<T> reshape(const Tensor<T>& x, Shape shape);
// [N,...] -> [N, prod(rest)]
template <class T> Tensor<T> flatten(const Tensor<T>& x);

template <class T> Tensor<T> sum(const Tensor<T>& x);
template <class T> Tensor<T> mean(const Tensor<T>& x);

// Mean over the batch of -log softmax(logits)[label]; logits [N,n].
template <class T>
Tensor<T> cross_entropy(const Tensor<T>& logits, std::span<const int> labels);

// Row-wise argmax of a [N,n] tensor.
template <class T> std::vector<int> argmax_rows(const Tensor<T>& x);

}  // namespace prognet::nn
