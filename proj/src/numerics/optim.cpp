#include "prognet/numerics/optim.hpp"

#include <cmath>

namespace prognet::nn {

template <class T>
void sgd_step(std::span<Parameter<T>* const> params, const SgdOptions& opt) {
    for (Parameter<T>* p : params) {
        if (!p->tensor.has_grad()) throw MissingGradientError("no gradient for parameter " + p->name);
    }
    const T lr = static_cast<T>(opt.lr);
    const T mom = static_cast<T>(opt.momentum);
    const T wd = static_cast<T>(opt.weight_decay);
    for (Parameter<T>* p : params) {
        auto w = p->tensor.data();
        auto g = p->tensor.grad();
        auto& v = p->momentum_buffer;
        for (std::size_t i = 0; i < w.size(); ++i) {
            v[i] = mom * v[i] + g[i] + wd * w[i];
            w[i] -= lr * v[i];
        }
        check_finite<T>(w, "sgd_step(" + p->name + ")");
        p->tensor.zero_grad();
    }
}

template <class T>
void uniform_fill(Tensor<T>& t, double bound, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : t.data()) v = static_cast<T>(dist(rng));
}

template <class T>
void fan_in_uniform(Tensor<T>& t, std::size_t fan_in, std::mt19937_64& rng) {
    uniform_fill(t, std::sqrt(6.0 / static_cast<double>(fan_in)), rng);
}

template void sgd_step<float>(std::span<Parameter<float>* const>, const SgdOptions&);
template void sgd_step<double>(std::span<Parameter<double>* const>, const SgdOptions&);
template void uniform_fill<float>(Tensor<float>&, double, std::mt19937_64&);
template void uniform_fill<double>(Tensor<double>&, double, std::mt19937_64&);
template void fan_in_uniform<float>(Tensor<float>&, std::size_t, std::mt19937_64&);
template void fan_in_uniform<double>(Tensor<double>&, std::size_t, std::mt19937_64&);

}  // namespace prognet::nn
