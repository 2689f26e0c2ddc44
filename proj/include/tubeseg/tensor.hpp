#pragma once

// Dense NCHW tensors with reverse-mode automatic differentiation, carrying
// exactly the operator set the segmentation network needs. Values are
// immutable once produced by an operation; leaf tensors (parameters) may be
// updated in place between training steps. Gradients are computed by
// replaying a GradientTape in reverse order.
//
// The scalar type is a template parameter: double for gradient checks and
// oracle tests, float for training. The pipeline selects the instantiation
// through a single precision switch.

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace tubeseg {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // allocated lazily by backward()
    bool requires_grad = false;
    std::uint64_t id = 0;

    std::span<T> ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), T(0));
        return grad;
    }
};

}  // namespace detail

template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, T fill = T(0), bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<T> data, bool requires_grad = false);

    const Shape& shape() const { return node_->shape; }
    std::int64_t numel() const { return static_cast<std::int64_t>(node_->value.size()); }
    bool defined() const { return node_ != nullptr; }

    std::span<const T> values() const { return node_->value; }
    // In-place access; intended for leaves (parameter updates, input filling).
    std::span<T> values_mut() { return node_->value; }

    bool has_grad() const { return !node_->grad.empty(); }
    std::span<const T> grad() const { return node_->grad; }
    std::span<T> grad_mut() { return node_->ensure_grad(); }
    void zero_grad() { node_->grad.clear(); }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }

    std::uint64_t id() const { return node_->id; }

    // Scalar extraction; tensor must hold exactly one element.
    T item() const;

    // Row-major NCHW accessor for tests and debugging.
    T at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const;

    std::shared_ptr<detail::Node<T>> node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::Node<T>> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::Node<T>> node_;

    template <typename U> friend class GradientTape;
    template <typename U> friend Tensor<U> make_op_output(Shape, bool);
};

// Ordered record of executed operations. While a tape is active (constructed
// and not yet destroyed) on the current thread, every operation involving a
// requires-grad tensor appends one entry holding the inputs, the output and
// the gradient rule. Entries are appended in execution order, so the record
// is always a valid topological order; backward() replays it in reverse and
// sums gradient contributions into shared inputs.
template <typename T>
class GradientTape {
public:
    struct Entry {
        const char* op;
        std::vector<std::uint64_t> input_ids;
        std::uint64_t output_id;
        std::function<void()> apply;  // reads output grad, accumulates into inputs
    };

    GradientTape();
    ~GradientTape();
    GradientTape(const GradientTape&) = delete;
    GradientTape& operator=(const GradientTape&) = delete;

    static GradientTape* current();

    void record(Entry entry) { entries_.push_back(std::move(entry)); }

    // Seeds d(loss)/d(loss) = 1 and replays the record in reverse.
    void backward(const Tensor<T>& loss);

    std::size_t size() const { return entries_.size(); }
    const std::vector<Entry>& entries() const { return entries_; }

private:
    std::vector<Entry> entries_;
    GradientTape* previous_ = nullptr;
};

// ---- operations ----

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>* bias,
                 int stride, int padding);

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, int stride, int padding) {
    return conv2d(input, weight, static_cast<const Tensor<T>*>(nullptr), stride, padding);
}

template <typename T>
Tensor<T> maxpool2d(const Tensor<T>& input, int kernel, int stride, int padding);

template <typename T>
Tensor<T> nearest_upsample(const Tensor<T>& input, int scale);

// Per-layer batch-norm state: running statistics plus an update counter.
// The tensors live in the owning parameter store so checkpoints carry them.
template <typename T>
struct BatchNormState {
    Tensor<T> running_mean;   // [C], no grad
    Tensor<T> running_var;    // [C], no grad
    Tensor<T> batches_seen;   // [1], no grad; 0 means statistics uninitialized
};

template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& input, const Tensor<T>& gamma, const Tensor<T>& beta,
                      BatchNormState<T>& state, bool training,
                      T epsilon = T(1e-5), T momentum = T(0.1));

template <typename T> Tensor<T> relu(const Tensor<T>& input);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& input);
template <typename T> Tensor<T> softmax_channels(const Tensor<T>& input);
template <typename T> Tensor<T> global_avg_pool(const Tensor<T>& input);

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
// b must be [N,C,1,1] or [N,1,H,W] against a [N,C,H,W].
template <typename T> Tensor<T> mul_broadcast(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> sum_all(const Tensor<T>& a);  // -> shape {1}

}  // namespace tubeseg
