#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "hgclr/error.hpp"
#include "hgclr/rng.hpp"

namespace hgclr {

using Shape = std::vector<std::int64_t>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto d : s) {
        if (d < 0) throw ShapeError("negative dimension in shape");
        n *= d;
    }
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

inline std::atomic<std::uint64_t>& node_seq_counter() {
    static std::atomic<std::uint64_t> c{0};
    return c;
}

// Thread-local switch that disables graph recording (evaluation paths).
inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}

struct NoGradGuard {
    NoGradGuard() : prev_(grad_mode_flag()) { grad_mode_flag() = false; }
    ~NoGradGuard() { grad_mode_flag() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

  private:
    bool prev_;
};

template <class S>
struct TensorNode {
    Shape shape;
    std::vector<S> value;
    std::vector<S> grad;  // sized lazily, same length as value
    bool requires_grad = false;
    bool grad_live = false;  // set once any gradient has been accumulated
    std::uint64_t seq = 0;
    const char* op = "leaf";
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;

    S* grad_data() {
        if (grad.size() != value.size()) grad.assign(value.size(), S(0));
        return grad.data();
    }
    void mark_grad_live() { grad_live = true; }
};

template <class S>
class Tensor {
  public:
    using Node = TensorNode<S>;

    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node> n) : n_(std::move(n)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return filled(std::move(shape), S(0), requires_grad);
    }

    static Tensor filled(Shape shape, S v, bool requires_grad = false) {
        auto n = std::make_shared<Node>();
        n->value.assign(static_cast<std::size_t>(shape_numel(shape)), v);
        n->shape = std::move(shape);
        n->requires_grad = requires_grad;
        n->seq = ++node_seq_counter();
        return Tensor(std::move(n));
    }

    static Tensor from_data(Shape shape, std::vector<S> data, bool requires_grad = false) {
        if (static_cast<std::int64_t>(data.size()) != shape_numel(shape))
            throw ShapeError("from_data: data length " + std::to_string(data.size()) +
                             " does not match shape " + shape_str(shape));
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        n->value = std::move(data);
        n->requires_grad = requires_grad;
        n->seq = ++node_seq_counter();
        for (S v : n->value)
            if (!std::isfinite(static_cast<double>(v))) throw NumericError("from_data: non-finite value");
        return Tensor(std::move(n));
    }

    static Tensor scalar(S v) { return filled({}, v); }

    static Tensor randn(Shape shape, RngStream& rng, double stdev, bool requires_grad = false) {
        auto t = zeros(std::move(shape), requires_grad);
        for (auto& v : t.n_->value) v = static_cast<S>(rng.normal() * stdev);
        return t;
    }

    bool defined() const { return static_cast<bool>(n_); }
    const Shape& shape() const { return n_->shape; }
    std::int64_t rank() const { return static_cast<std::int64_t>(n_->shape.size()); }
    std::int64_t dim(std::size_t i) const { return n_->shape.at(i); }
    std::int64_t numel() const { return static_cast<std::int64_t>(n_->value.size()); }
    bool requires_grad() const { return n_->requires_grad; }
    void set_requires_grad(bool rg) { n_->requires_grad = rg; }

    const std::vector<S>& values() const { return n_->value; }
    std::vector<S>& mutable_values() { return n_->value; }
    S* data() { return n_->value.data(); }
    const S* data() const { return n_->value.data(); }

    S item() const {
        if (numel() != 1) throw ShapeError("item: tensor has " + std::to_string(numel()) + " elements");
        return n_->value[0];
    }

    S at(std::int64_t i) const { return n_->value.at(static_cast<std::size_t>(i)); }
    S at(std::int64_t i, std::int64_t j) const {
        return n_->value.at(static_cast<std::size_t>(i * dim(1) + j));
    }
    S at(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return n_->value.at(static_cast<std::size_t>((i * dim(1) + j) * dim(2) + k));
    }

    const std::vector<S>& grad() const {
        if (n_->grad.size() != n_->value.size())
            const_cast<Node*>(n_.get())->grad.assign(n_->value.size(), S(0));
        return n_->grad;
    }
    S grad_at(std::int64_t i) const { return grad().at(static_cast<std::size_t>(i)); }

    void zero_grad() {
        n_->grad.assign(n_->value.size(), S(0));
        n_->grad_live = false;
    }

    // Value copy with no history; gradients never flow through the result.
    Tensor detach() const {
        auto n = std::make_shared<Node>();
        n->shape = n_->shape;
        n->value = n_->value;
        n->requires_grad = false;
        n->seq = ++node_seq_counter();
        n->op = "detach";
        return Tensor(std::move(n));
    }

    std::shared_ptr<Node> node() const { return n_; }
    Node* raw() const { return n_.get(); }

  private:
    std::shared_ptr<Node> n_;
};

// Reverse pass from a scalar root. Reachable nodes are replayed strictly in
// decreasing creation order, which is a reverse topological order of the
// recorded primitives and fixes the gradient accumulation order.
template <class S>
inline void backward(const Tensor<S>& root) {
    if (root.numel() != 1) throw ShapeError("backward: root must be scalar");
    auto* rn = root.raw();
    if (!rn->requires_grad) throw InvalidArgument("backward: root does not require grad");

    std::vector<TensorNode<S>*> order;
    std::unordered_set<TensorNode<S>*> seen;
    std::vector<TensorNode<S>*> stack{rn};
    seen.insert(rn);
    while (!stack.empty()) {
        auto* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (auto& p : n->parents)
            if (seen.insert(p.get()).second) stack.push_back(p.get());
    }
    std::sort(order.begin(), order.end(),
              [](const TensorNode<S>* a, const TensorNode<S>* b) { return a->seq > b->seq; });

    rn->grad_data()[0] = S(1);
    rn->mark_grad_live();
    for (auto* n : order) {
        if (n->grad_live && n->backward_fn) n->backward_fn(*n);
    }
}

using Tensor32 = Tensor<float>;
using Tensor64 = Tensor<double>;

}  // namespace hgclr
