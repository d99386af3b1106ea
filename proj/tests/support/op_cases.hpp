#pragma once

// Randomized finite-difference cases, one per differentiable op. Shared by the
// unit suite and the acceptance gate.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "prognet/numerics/lstm.hpp"
#include "prognet/numerics/ops.hpp"

namespace testing {

struct GradCase {
    std::string op;
    std::vector<Tensor<double>> inputs;
    std::function<Tensor<double>(std::vector<Tensor<double>>&)> f;
};

inline std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

// Moves values away from zero so kinked ops (relu, abs) are not probed at the kink.
inline Tensor<double> away_from_zero(Tensor<double> t) {
    for (auto& v : t.data())
        if (std::abs(v) < 0.05) v += v < 0 ? -0.1 : 0.1;
    return t;
}

inline std::vector<GradCase> make_grad_cases(std::mt19937_64& rng) {
    namespace nn = prognet::nn;
    std::vector<GradCase> cases;
    const std::size_t n = pick(rng, 1, 3), m = pick(rng, 2, 5), k = pick(rng, 2, 5);

    cases.push_back({"add", {random_tensor({n, m}, rng), random_tensor({n, m}, rng)},
                     [](auto& v) { return project(nn::add(v[0], v[1])); }});
    cases.push_back({"sub", {random_tensor({n, m}, rng), random_tensor({n, m}, rng)},
                     [](auto& v) { return project(nn::sub(v[0], v[1])); }});
    cases.push_back({"mul", {random_tensor({n, m}, rng), random_tensor({n, m}, rng)},
                     [](auto& v) { return project(nn::mul(v[0], v[1])); }});
    cases.push_back({"scale", {random_tensor({m}, rng)},
                     [](auto& v) { return project(nn::scale(v[0], 1.7)); }});
    cases.push_back({"add_bias", {random_tensor({n, m, 2, 3}, rng), random_tensor({m}, rng)},
                     [](auto& v) { return project(nn::add_bias(v[0], v[1])); }});
    cases.push_back({"matmul", {random_tensor({n, m}, rng), random_tensor({m, k}, rng)},
                     [](auto& v) { return project(nn::matmul(v[0], v[1])); }});
    cases.push_back({"linear",
                     {random_tensor({n, m}, rng), random_tensor({m, k}, rng), random_tensor({k}, rng)},
                     [](auto& v) { return project(nn::linear(v[0], v[1], v[2])); }});
    {
        const std::size_t c = pick(rng, 1, 3), o = pick(rng, 1, 3), hw = pick(rng, 4, 6);
        const int stride = static_cast<int>(pick(rng, 1, 2)), pad = static_cast<int>(pick(rng, 0, 1));
        cases.push_back({"conv2d", {random_tensor({n, c, hw, hw}, rng), random_tensor({o, c, 3, 3}, rng)},
                         [stride, pad](auto& v) { return project(nn::conv2d(v[0], v[1], stride, pad)); }});
    }
    cases.push_back({"max_pool2d", {random_tensor({n, 2, 5, 5}, rng)},
                     [](auto& v) { return project(nn::max_pool2d(v[0], 3, 2, 1)); }});
    cases.push_back({"global_avgpool", {random_tensor({n, m, 3, 2}, rng)},
                     [](auto& v) { return project(nn::global_avgpool(v[0])); }});
    cases.push_back({"relu", {away_from_zero(random_tensor({n, m}, rng))},
                     [](auto& v) { return project(nn::relu(v[0])); }});
    cases.push_back({"sigmoid", {random_tensor({n, m}, rng, -3, 3)},
                     [](auto& v) { return project(nn::sigmoid(v[0])); }});
    cases.push_back({"tanh", {random_tensor({n, m}, rng, -2, 2)},
                     [](auto& v) { return project(nn::tanh(v[0])); }});
    cases.push_back({"abs", {away_from_zero(random_tensor({n, m}, rng))},
                     [](auto& v) { return project(nn::abs(v[0])); }});
    cases.push_back({"softmax", {random_tensor({n, m}, rng, -2, 2)},
                     [](auto& v) { return project(nn::softmax(v[0], 1)); }});
    {
        const std::uint64_t seed = rng();
        cases.push_back({"dropout", {random_tensor({n, m}, rng)}, [seed](auto& v) {
                             std::mt19937_64 local(seed);
                             return project(nn::dropout(v[0], 0.3, true, local));
                         }});
    }
    cases.push_back({"concat", {random_tensor({n, m}, rng), random_tensor({n, k}, rng)},
                     [](auto& v) { return project(nn::concat<double>({v[0], v[1]}, 1)); }});
    cases.push_back({"slice", {random_tensor({n, m + 2}, rng)},
                     [](auto& v) { return project(nn::slice(v[0], 1, 1, 2)); }});
    cases.push_back({"reshape", {random_tensor({n, m, 2}, rng)},
                     [](auto& v) { return project(nn::flatten(v[0])); }});
    cases.push_back({"mean", {random_tensor({n, m}, rng)},
                     [](auto& v) { return nn::mean(nn::mul(v[0], v[0])); }});
    {
        std::vector<int> labels(n);
        for (auto& y : labels) y = static_cast<int>(pick(rng, 0, m - 1));
        cases.push_back({"cross_entropy", {random_tensor({n, m}, rng, -2, 2)},
                         [labels](auto& v) { return nn::cross_entropy<double>(v[0], labels); }});
    }
    {
        const std::size_t in = pick(rng, 2, 4), hidden = pick(rng, 2, 4);
        auto stack = std::make_shared<nn::LstmStack<double>>(in, hidden, 3, 0.2);
        std::mt19937_64 init_rng(rng());
        stack->init(init_rng);
        std::vector<Tensor<double>> inputs;
        for (int s = 0; s < 3; ++s) inputs.push_back(random_tensor({n, in}, rng));
        for (auto* p : stack->parameters()) inputs.push_back(p->tensor);
        const std::uint64_t seed = rng();
        cases.push_back({"lstm_stack_step", inputs, [stack, n, seed](auto& v) {
                             std::mt19937_64 local(seed);
                             auto state = stack->zero_state(n);
                             Tensor<double> out;
                             for (int s = 0; s < 3; ++s) {
                                 auto [h, next] = stack->step(v[s], state, true, local);
                                 out = h;
                                 state = std::move(next);
                             }
                             return project(out);
                         }});
    }
    return cases;
}

}  // namespace testing
