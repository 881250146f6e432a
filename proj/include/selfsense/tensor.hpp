#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "selfsense/errors.hpp"
#include "selfsense/rng.hpp"

namespace selfsense {

namespace detail {

// Default-initializing allocator: vector growth skips the zero-fill. Every
// op writes its full output, so fresh tensors never leak uninitialized reads.
template <typename T>
struct UninitAllocator : std::allocator<T> {
    template <typename U>
    struct rebind {
        using other = UninitAllocator<U>;
    };
    template <typename U>
    void construct(U* p) noexcept(std::is_nothrow_default_constructible_v<U>) {
        ::new (static_cast<void*>(p)) U;
    }
    template <typename U, typename... Args>
    void construct(U* p, Args&&... args) {
        ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
    }
};

}  // namespace detail

using FloatVec = std::vector<float, detail::UninitAllocator<float>>;

namespace detail {
struct TensorImpl {
    std::vector<int64_t> shape;
    FloatVec data;
    bool requires_grad = false;
    bool produced = false;  // set when an op on an active tape created it
    std::unique_ptr<FloatVec> grad;
    int64_t id = 0;
};
}  // namespace detail

// Dense row-major float32 tensor. Value-semantic handle sharing storage;
// gradients live on leaves and accumulate across backward passes until
// zero_grad.
class Tensor {
public:
    Tensor() = default;

    // Uninitialized storage; callers must overwrite every element.
    static Tensor empty(std::vector<int64_t> shape, bool requires_grad = false);
    static Tensor zeros(std::vector<int64_t> shape, bool requires_grad = false);
    static Tensor full(std::vector<int64_t> shape, float value, bool requires_grad = false);
    static Tensor from_data(std::vector<int64_t> shape, std::vector<float> data,
                            bool requires_grad = false);
    static Tensor uniform(std::vector<int64_t> shape, float lo, float hi, Rng& rng,
                          bool requires_grad = false);
    // He-uniform: bound = sqrt(6 / fan_in).
    static Tensor he_uniform(std::vector<int64_t> shape, int64_t fan_in, Rng& rng,
                             bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<int64_t>& shape() const { return impl_->shape; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    int64_t size(int axis) const { return impl_->shape[static_cast<size_t>(axis)]; }
    int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

    std::span<float> data() { return impl_->data; }
    std::span<const float> data() const { return impl_->data; }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool rg) { impl_->requires_grad = rg; }
    bool is_leaf() const { return !impl_->produced; }

    bool has_grad() const { return impl_->grad != nullptr; }
    std::span<float> grad();
    std::span<const float> grad() const;
    void zero_grad();

    // Scalar extraction; throws DimensionError unless numel == 1.
    float item() const;
    float at(std::initializer_list<int64_t> idx) const;

    // Deep copy of the data as a fresh leaf (no grad, requires_grad off).
    Tensor clone() const;

    int64_t id() const { return impl_->id; }
    detail::TensorImpl* impl() const { return impl_.get(); }

private:
    friend class Tape;
    friend Tensor make_tensor(std::vector<int64_t>, bool);
    std::shared_ptr<detail::TensorImpl> impl_;
};

enum class OpKind {
    Conv2d,
    Linear,
    Relu,
    Add,
    BatchNorm,
    AvgPool2x2,
    GlobalAvgPool,
    Concat,
    SoftmaxCrossEntropy,
    Select,
};

const char* op_kind_name(OpKind kind);

struct TapeNode {
    OpKind kind;
    std::vector<int64_t> input_ids;
    int64_t output_id = 0;
    std::function<void(class Tape&)> backward;
};

// Records operations while alive (one active tape per thread, nestable).
// backward(loss) walks the recorded nodes in reverse; leaf tensors with
// requires_grad receive accumulated gradients, intermediate gradients live
// only for the duration of the call.
class Tape {
public:
    Tape();
    ~Tape();
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active();

    void record(TapeNode node);
    size_t size() const { return nodes_.size(); }
    const TapeNode& node(size_t i) const { return nodes_[i]; }

    void backward(const Tensor& loss);

    // Backward-rule plumbing: gradient of the node output (null if none
    // flowed there) and the accumulation sink for an input (null if the
    // input needs no gradient).
    const FloatVec* grad_of(const Tensor& t) const;
    float* grad_sink(const Tensor& t);

private:
    std::vector<TapeNode> nodes_;
    // Intermediate gradients living only for the duration of a backward call;
    // node-based map so references stay valid while new sinks appear.
    std::unordered_map<int64_t, FloatVec> flow_;
    Tape* prev_ = nullptr;
};

// ---- Operations ------------------------------------------------------------

// input: N x C x H x W, weight: O x C x k x k, bias: O.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
              int padding);

// input: N x I, weight: O x I, bias: O -> N x O.
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias);

Tensor relu(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);

// Running statistics for one batchnorm layer; plain buffers, never graded.
struct BatchNormState {
    Tensor running_mean;
    Tensor running_var;
};

Tensor batchnorm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                   BatchNormState& state, bool training, float momentum = 0.1f,
                   float eps = 1e-5f);

// 2x2 mean pooling with stride 2; spatial dims must be even.
Tensor avg_pool2x2(const Tensor& x);

// N x C x H x W -> N x C spatial mean.
Tensor global_avg_pool(const Tensor& x);

// a: N x A, b: N x B -> N x (A+B).
Tensor concat(const Tensor& a, const Tensor& b);

// logits: N x K, labels in [0, K) -> scalar mean loss.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

// Scalar pick by flat index (used to seed per-logit backward passes).
Tensor select(const Tensor& x, int64_t flat_index);

// Pure helper (not recorded): row-wise softmax of an N x K tensor.
std::vector<float> softmax_rows(const Tensor& logits);

bool all_finite(const Tensor& t);

}  // namespace selfsense
