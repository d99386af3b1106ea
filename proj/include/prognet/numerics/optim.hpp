#pragma once

#include <random>
#include <span>
#include <string>
#include <vector>

#include "prognet/numerics/tensor.hpp"

namespace prognet::nn {

template <class T>
struct Parameter {
    std::string name;
    Tensor<T> tensor;
    std::vector<T> momentum_buffer;

    Parameter() = default;
    Parameter(std::string n, Shape shape)
        : name(std::move(n)), tensor(std::move(shape), T(0), true),
          momentum_buffer(tensor.numel(), T(0)) {}
};

struct SgdOptions {
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;
};

struct MissingGradientError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// v <- momentum*v + grad + weight_decay*w ; w <- w - lr*v ; grads cleared.
template <class T>
void sgd_step(std::span<Parameter<T>* const> params, const SgdOptions& opt);

// He-style fan-in uniform: U(-sqrt(6/fan_in), +sqrt(6/fan_in)).
template <class T>
void fan_in_uniform(Tensor<T>& t, std::size_t fan_in, std::mt19937_64& rng);

template <class T>
void uniform_fill(Tensor<T>& t, double bound, std::mt19937_64& rng);

}  // namespace prognet::nn
