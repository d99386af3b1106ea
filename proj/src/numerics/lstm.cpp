#include "prognet/numerics/lstm.hpp"

#include <cmath>
#include <string>

#include "prognet/numerics/ops.hpp"

namespace prognet::nn {

template <class T>
LstmStack<T>::LstmStack(std::size_t input_size, std::size_t hidden_size, std::size_t layers,
                        double dropout_rate)
    : input_(input_size), hidden_(hidden_size), dropout_(dropout_rate) {
    if (layers == 0 || hidden_size == 0 || input_size == 0)
        throw std::invalid_argument("LstmStack: sizes must be positive");
    if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
        throw std::invalid_argument("LstmStack: dropout rate must be in [0,1)");
    for (std::size_t l = 0; l < layers; ++l) {
        const std::size_t in = l == 0 ? input_size : hidden_size;
        const std::string prefix = "lstm." + std::to_string(l) + ".";
        w_x_.emplace_back(prefix + "w_x", Shape{in, 4 * hidden_size});
        w_h_.emplace_back(prefix + "w_h", Shape{hidden_size, 4 * hidden_size});
        bias_.emplace_back(prefix + "bias", Shape{4 * hidden_size});
    }
}

template <class T>
void LstmStack<T>::init(std::mt19937_64& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden_));
    for (std::size_t l = 0; l < layers(); ++l) {
        uniform_fill(w_x_[l].tensor, bound, rng);
        uniform_fill(w_h_[l].tensor, bound, rng);
        uniform_fill(bias_[l].tensor, bound, rng);
        auto b = bias_[l].tensor.data();
        for (std::size_t j = hidden_; j < 2 * hidden_; ++j) b[j] = T(1);
    }
}

template <class T>
LstmState<T> LstmStack<T>::zero_state(std::size_t batch) const {
    LstmState<T> s;
    for (std::size_t l = 0; l < layers(); ++l) {
        s.h.emplace_back(Shape{batch, hidden_});
        s.c.emplace_back(Shape{batch, hidden_});
    }
    return s;
}

template <class T>
std::pair<Tensor<T>, LstmState<T>> LstmStack<T>::step(const Tensor<T>& x,
                                                      const LstmState<T>& state, bool train,
                                                      std::mt19937_64& rng) const {
    if (state.h.size() != layers() || state.c.size() != layers())
        throw ShapeError("lstm: state has " + std::to_string(state.h.size()) +
                         " layers, stack has " + std::to_string(layers()));
    if (x.rank() != 2 || x.dim(1) != input_)
        throw ShapeError("lstm: input " + shape_str(x.shape()) + " does not match input size " +
                         std::to_string(input_));
    const std::size_t batch = x.dim(0);
    LstmState<T> next;
    Tensor<T> input = x;
    for (std::size_t l = 0; l < layers(); ++l) {
        const auto& h = state.h[l];
        const auto& c = state.c[l];
        if (h.shape() != Shape{batch, hidden_} || c.shape() != Shape{batch, hidden_})
            throw ShapeError("lstm: state shape mismatch at layer " + std::to_string(l));
        if (l > 0) input = dropout(input, dropout_, train, rng);
        auto gates = add_bias(add(matmul(input, w_x_[l].tensor), matmul(h, w_h_[l].tensor)),
                              bias_[l].tensor);
        auto i_gate = sigmoid(slice(gates, 1, 0, hidden_));
        auto f_gate = sigmoid(slice(gates, 1, hidden_, hidden_));
        auto g_cand = tanh(slice(gates, 1, 2 * hidden_, hidden_));
        auto o_gate = sigmoid(slice(gates, 1, 3 * hidden_, hidden_));
        auto c_new = add(mul(f_gate, c), mul(i_gate, g_cand));
        auto h_new = mul(o_gate, tanh(c_new));
        next.h.push_back(h_new);
        next.c.push_back(c_new);
        input = h_new;
    }
    return {input, std::move(next)};
}

template <class T>
std::vector<Parameter<T>*> LstmStack<T>::parameters() {
    std::vector<Parameter<T>*> out;
    for (std::size_t l = 0; l < layers(); ++l) {
        out.push_back(&w_x_[l]);
        out.push_back(&w_h_[l]);
        out.push_back(&bias_[l]);
    }
    return out;
}

template class LstmStack<float>;
template class LstmStack<double>;

}  // namespace prognet::nn
