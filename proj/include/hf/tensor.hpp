#ifndef HF_TENSOR_HPP
#define HF_TENSOR_HPP

#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace hf {

using Shape = std::vector<int>;

inline std::int64_t numel(const Shape& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

inline std::string shape_str(const Shape& shape) {
    std::string s = "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + ")";
}

[[noreturn]] inline void fail(const std::string& msg) { throw std::invalid_argument(msg); }

// One recorded node of the differentiation tape. A node owns its forward
// values and (while a backward pass is running) its gradient buffer.
// `parents` lists only the inputs that gradients must reach, so reachability
// from a loss node is exactly "participates in its backward pass".
template <typename T>
struct TensorNode {
    Shape shape;
    std::vector<T> values;
    std::vector<T> grad;
    bool requires_grad = false;
    std::uint64_t seq = 0;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;

    std::int64_t size() const { return static_cast<std::int64_t>(values.size()); }

    void ensure_grad() {
        if (grad.empty()) grad.assign(values.size(), T(0));
    }

    void zero_grad() { grad.assign(values.size(), T(0)); }

    void drop_grad() { std::vector<T>().swap(grad); }
};

namespace detail {
inline std::uint64_t next_seq() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
}
}  // namespace detail

// Dense n-d array of scalars, shape layout [N,C,H,W] for image-like data.
// Copying a Tensor copies a handle; the node (values + tape links) is shared.
template <typename T>
class Tensor {
public:
    using Scalar = T;

    Tensor() = default;

    static Tensor zeros(Shape shape) {
        Tensor t;
        t.node_ = std::make_shared<TensorNode<T>>();
        t.node_->shape = std::move(shape);
        t.node_->values.assign(static_cast<std::size_t>(numel(t.node_->shape)), T(0));
        t.node_->seq = detail::next_seq();
        return t;
    }

    static Tensor full(Shape shape, T value) {
        Tensor t = zeros(std::move(shape));
        for (auto& v : t.node_->values) v = value;
        return t;
    }

    static Tensor from_data(Shape shape, std::vector<T> values) {
        if (numel(shape) != static_cast<std::int64_t>(values.size()))
            fail("Tensor: shape " + shape_str(shape) + " does not match " +
                 std::to_string(values.size()) + " values");
        Tensor t;
        t.node_ = std::make_shared<TensorNode<T>>();
        t.node_->shape = std::move(shape);
        t.node_->values = std::move(values);
        t.node_->seq = detail::next_seq();
        return t;
    }

    static Tensor scalar(T value) { return from_data({1}, {value}); }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::int64_t size() const { return node_->size(); }

    T* data() { return node_->values.data(); }
    const T* data() const { return node_->values.data(); }
    std::vector<T>& values() { return node_->values; }
    const std::vector<T>& values() const { return node_->values; }

    // Gradient buffer; empty if this node never received one.
    const std::vector<T>& grad() const { return node_->grad; }
    bool has_grad() const { return !node_->grad.empty(); }
    std::vector<T> grad_or_zeros() const {
        if (node_->grad.empty()) return std::vector<T>(node_->values.size(), T(0));
        return node_->grad;
    }

    T item() const {
        if (size() != 1) fail("item: tensor " + shape_str(shape()) + " is not scalar");
        return node_->values[0];
    }

    T at(std::initializer_list<int> idx) const { return node_->values[flat(idx)]; }
    T& at_ref(std::initializer_list<int> idx) { return node_->values[flat(idx)]; }

    bool requires_grad() const { return node_ && node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }

    void zero_grad() { node_->zero_grad(); }

    // Same values, cut off from the tape: no gradient flows from consumers of
    // the result into producers of this tensor.
    Tensor detach() const {
        Tensor t = from_data(node_->shape, node_->values);
        return t;
    }

    Tensor clone_values() const { return detach(); }

    const std::shared_ptr<TensorNode<T>>& node() const { return node_; }

    std::size_t flat(std::initializer_list<int> idx) const {
        const Shape& s = node_->shape;
        if (idx.size() != s.size()) fail("index rank mismatch for " + shape_str(s));
        std::size_t off = 0;
        std::size_t k = 0;
        for (int i : idx) {
            off = off * static_cast<std::size_t>(s[k]) + static_cast<std::size_t>(i);
            ++k;
        }
        return off;
    }

private:
    std::shared_ptr<TensorNode<T>> node_;
};

namespace detail {

// Registers `out` as the result of an op over `inputs`. Gradient-needing
// inputs are captured at record time so freezing a parameter affects ops
// recorded while the freeze is active, not ops recorded before it.
template <typename T, typename Fn>
void record(Tensor<T>& out, std::initializer_list<Tensor<T>> inputs, Fn&& backward) {
    bool needs = false;
    for (const auto& in : inputs)
        if (in.requires_grad()) needs = true;
    if (!needs) return;
    auto& node = *out.node();
    node.requires_grad = true;
    for (const auto& in : inputs)
        if (in.requires_grad()) node.parents.push_back(in.node());
    node.backward_fn = std::forward<Fn>(backward);
}

template <typename T>
void accumulate(const std::shared_ptr<TensorNode<T>>& node, const T* src, std::size_t n) {
    node->ensure_grad();
    T* dst = node->grad.data();
    for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
}

}  // namespace detail

// Reverse-mode pass from a scalar loss. Interior gradients are freed as soon
// as they have been propagated; leaf gradients accumulate across calls.
template <typename T>
void backward(const Tensor<T>& loss) {
    if (!loss.defined() || numel(loss.shape()) != 1)
        fail("backward: loss must be a scalar, got " +
             (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
    auto root = loss.node();
    if (!root->requires_grad) return;

    // The order vector holds owning references: releasing closures and parent
    // links mid-pass must not destroy nodes that are still scheduled.
    std::vector<std::shared_ptr<TensorNode<T>>> order;
    std::unordered_set<TensorNode<T>*> seen;
    std::vector<std::shared_ptr<TensorNode<T>>> stack{root};
    seen.insert(root.get());
    while (!stack.empty()) {
        std::shared_ptr<TensorNode<T>> n = std::move(stack.back());
        stack.pop_back();
        for (const auto& p : n->parents)
            if (seen.insert(p.get()).second) stack.push_back(p);
        order.push_back(std::move(n));
    }
    // seq increases with creation order, so descending seq is a reverse
    // topological order of the recorded graph.
    std::sort(order.begin(), order.end(),
              [](const std::shared_ptr<TensorNode<T>>& a,
                 const std::shared_ptr<TensorNode<T>>& b) { return a->seq > b->seq; });

    root->ensure_grad();
    root->grad[0] += T(1);
    for (const auto& n : order) {
        if (!n->backward_fn) continue;
        n->ensure_grad();
        n->backward_fn(*n);
        n->backward_fn = nullptr;
        n->drop_grad();
        n->parents.clear();
    }
}

}  // namespace hf

#endif  // HF_TENSOR_HPP
