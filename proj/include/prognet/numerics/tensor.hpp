#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace prognet::nn {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Raised when an op produces NaN or Inf. Values are never propagated silently.
struct NonFiniteError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

template <class T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // empty until populated by a backward pass
    bool requires_grad = false;
    std::string op;
    std::vector<std::shared_ptr<Node>> parents;
    // Reads this node's grad and accumulates into the parents' grads.
    std::function<void(Node&)> backward_fn;

    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), T(0));
    }
};

// Dense row-major tensor handle. Copies share storage; use clone() for a deep copy.
template <class T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0), bool requires_grad = false);
    Tensor(Shape shape, std::vector<T> data, bool requires_grad = false);

    static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

    [[nodiscard]] bool defined() const { return node_ != nullptr; }
    [[nodiscard]] const Shape& shape() const { return node_->shape; }
    [[nodiscard]] std::size_t dim(std::size_t axis) const { return node_->shape.at(axis); }
    [[nodiscard]] std::size_t rank() const { return node_->shape.size(); }
    [[nodiscard]] std::size_t numel() const { return node_->value.size(); }

    [[nodiscard]] std::span<T> data() { return node_->value; }
    [[nodiscard]] std::span<const T> data() const { return node_->value; }
    [[nodiscard]] T item() const;
    [[nodiscard]] T at(std::size_t flat) const { return node_->value.at(flat); }

    [[nodiscard]] bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool on) { node_->requires_grad = on; }
    [[nodiscard]] bool has_grad() const { return !node_->grad.empty(); }
    [[nodiscard]] std::span<const T> grad() const { return node_->grad; }
    [[nodiscard]] std::span<T> mutable_grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    void zero_grad() { node_->grad.clear(); }

    // Runs reverse-mode differentiation from this scalar.
    void backward() const;

    [[nodiscard]] Tensor clone() const;
    [[nodiscard]] Tensor detach() const;

    [[nodiscard]] const std::shared_ptr<Node<T>>& node() const { return node_; }
    static Tensor from_node(std::shared_ptr<Node<T>> node) {
        Tensor t;
        t.node_ = std::move(node);
        return t;
    }

private:
    std::shared_ptr<Node<T>> node_;
};

// Ordered record of the primitive ops reachable from a root, in topological order.
template <class T>
class Tape {
public:
    explicit Tape(const Tensor<T>& root);

    [[nodiscard]] std::size_t size() const { return order_.size(); }
    [[nodiscard]] const std::vector<Node<T>*>& ops() const { return order_; }

    // Seeds d(root)/d(root) = 1 and replays backward functions in reverse order.
    void replay();

private:
    Node<T>* root_;
    std::vector<Node<T>*> order_;
};

// Disables graph construction on the current thread while alive.
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

bool grad_enabled();

// Creates the result node of an op. The node records parents only when some
// parent requires grad and graph construction is enabled.
template <class T>
Tensor<T> make_result(std::string op, Shape shape, std::vector<T> value,
                      std::vector<Tensor<T>> parents,
                      std::function<void(Node<T>&)> backward_fn);

template <class T>
void check_finite(std::span<const T> values, const std::string& op);

extern template class Tensor<float>;
extern template class Tensor<double>;
extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace prognet::nn
