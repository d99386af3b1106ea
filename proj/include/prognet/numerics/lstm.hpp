#pragma once

#include <random>
#include <utility>
#include <vector>

#include "prognet/numerics/optim.hpp"
#include "prognet/numerics/tensor.hpp"

namespace prognet::nn {

template <class T>
struct LstmState {
    std::vector<Tensor<T>> h;  // per layer, [batch, hidden]
    std::vector<Tensor<T>> c;
};

// Stack of gated recurrent cells with inverted dropout between consecutive layers.
// Gate layout along the 4H axis: input, forget, candidate, output.
template <class T>
class LstmStack {
public:
    LstmStack(std::size_t input_size, std::size_t hidden_size, std::size_t layers,
              double dropout_rate);

    // Forget-gate bias 1, everything else U(-1/sqrt(H), 1/sqrt(H)).
    void init(std::mt19937_64& rng);

    [[nodiscard]] LstmState<T> zero_state(std::size_t batch) const;

    // Returns the top-layer hidden output and the full new state.
    [[nodiscard]] std::pair<Tensor<T>, LstmState<T>> step(const Tensor<T>& x,
                                                          const LstmState<T>& state, bool train,
                                                          std::mt19937_64& rng) const;

    [[nodiscard]] std::vector<Parameter<T>*> parameters();
    [[nodiscard]] std::size_t input_size() const { return input_; }
    [[nodiscard]] std::size_t hidden_size() const { return hidden_; }
    [[nodiscard]] std::size_t layers() const { return w_x_.size(); }
    [[nodiscard]] double dropout_rate() const { return dropout_; }

private:
    std::size_t input_;
    std::size_t hidden_;
    double dropout_;
    std::vector<Parameter<T>> w_x_;
    std::vector<Parameter<T>> w_h_;
    std::vector<Parameter<T>> bias_;
};

extern template class LstmStack<float>;
extern template class LstmStack<double>;

}  // namespace prognet::nn
