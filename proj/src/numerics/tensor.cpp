#include "prognet/numerics/tensor.hpp"

#include <cmath>
#include <sstream>
#include <unordered_set>

namespace prognet::nn {

namespace {
thread_local bool g_grad_enabled = true;
}

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (auto e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

template <class T>
void check_finite(std::span<const T> values, const std::string& op) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            throw NonFiniteError("non-finite value produced by " + op + " at index " +
                                 std::to_string(i));
        }
    }
}

template <class T>
Tensor<T>::Tensor(Shape shape, T fill, bool requires_grad) {
    for (auto e : shape) {
        if (e == 0) throw ShapeError("tensor extents must be positive: " + shape_str(shape));
    }
    node_ = std::make_shared<Node<T>>();
    node_->value.assign(shape_numel(shape), fill);
    node_->shape = std::move(shape);
    node_->requires_grad = requires_grad;
    node_->op = "leaf";
}

template <class T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data, bool requires_grad) {
    for (auto e : shape) {
        if (e == 0) throw ShapeError("tensor extents must be positive: " + shape_str(shape));
    }
    if (shape_numel(shape) != data.size()) {
        throw ShapeError("data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
    }
    check_finite<T>(data, "leaf");
    node_ = std::make_shared<Node<T>>();
    node_->shape = std::move(shape);
    node_->value = std::move(data);
    node_->requires_grad = requires_grad;
    node_->op = "leaf";
}

template <class T>
T Tensor<T>::item() const {
    if (numel() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape()));
    return node_->value[0];
}

template <class T>
void Tensor<T>::backward() const {
    if (numel() != 1) throw ShapeError("backward() requires a scalar, got " + shape_str(shape()));
    Tape<T> tape(*this);
    tape.replay();
}

template <class T>
Tensor<T> Tensor<T>::clone() const {
    Tensor<T> t(node_->shape, node_->value, node_->requires_grad);
    return t;
}

template <class T>
Tensor<T> Tensor<T>::detach() const {
    return Tensor<T>(node_->shape, node_->value, false);
}

template <class T>
Tape<T>::Tape(const Tensor<T>& root) : root_(root.node().get()) {
    // Iterative post-order DFS so deep recurrent graphs do not overflow the stack.
    std::unordered_set<Node<T>*> visited;
    std::vector<std::pair<Node<T>*, std::size_t>> stack;
    stack.emplace_back(root_, 0);
    visited.insert(root_);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* parent = node->parents[next++].get();
            if (parent->requires_grad && visited.insert(parent).second) {
                stack.emplace_back(parent, 0);
            }
        } else {
            order_.push_back(node);
            stack.pop_back();
        }
    }
}

template <class T>
void Tape<T>::replay() {
    if (!root_->requires_grad) return;
    root_->ensure_grad();
    for (auto& g : root_->grad) g = T(1);
    for (auto it = order_.rbegin(); it != order_.rend(); ++it) {
        Node<T>* node = *it;
        if (node->backward_fn && !node->grad.empty()) node->backward_fn(*node);
    }
    // Interior grads are scratch; only leaves keep theirs.
    for (Node<T>* node : order_) {
        if (!node->parents.empty()) std::vector<T>().swap(node->grad);
    }
}

template <class T>
Tensor<T> make_result(std::string op, Shape shape, std::vector<T> value,
                      std::vector<Tensor<T>> parents,
                      std::function<void(Node<T>&)> backward_fn) {
    check_finite<T>(value, op);
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    node->op = std::move(op);
    bool needs = false;
    if (grad_enabled()) {
        for (const auto& p : parents) needs = needs || p.requires_grad();
    }
    if (needs) {
        node->requires_grad = true;
        for (auto& p : parents) node->parents.push_back(p.node());
        node->backward_fn = std::move(backward_fn);
    }
    return Tensor<T>::from_node(std::move(node));
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;
template void check_finite<float>(std::span<const float>, const std::string&);
template void check_finite<double>(std::span<const double>, const std::string&);
template Tensor<float> make_result<float>(std::string, Shape, std::vector<float>,
                                          std::vector<Tensor<float>>,
                                          std::function<void(Node<float>&)>);
template Tensor<double> make_result<double>(std::string, Shape, std::vector<double>,
                                            std::vector<Tensor<double>>,
                                            std::function<void(Node<double>&)>);

}  // namespace prognet::nn
