/**
 * @file autodiff.hpp
 * @brief Minimal reverse-mode automatic differentiation over dense NCHW arrays.
 *
 * Only the primitives needed by a small U-Net and its losses are provided.
 * A Tensor is a shared handle to a graph node; operations on tensors that
 * require gradients record a backward closure. backward() visits every node
 * reachable from a scalar loss once, in reverse topological order, then
 * releases the intermediate graph.
 *
 * Instantiated for float (training) and double (verification).
 */
#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <new>
#include <span>
#include <string>
#include <vector>

namespace n2c::ad {

using Shape = std::vector<std::size_t>;

/// Cache-line aligned storage. Eigen picks its vectorized kernel peeling from the
/// buffer address, so an unaligned buffer can change float summation order run to run.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t alignment{64};
    AlignedAllocator() = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}
    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), alignment)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, alignment); }
    template <typename U>
    bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

template <typename T>
using Buffer = std::vector<T, AlignedAllocator<T>>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

template <typename T>
struct Node {
    Shape shape;
    Buffer<T> value;
    Buffer<T> grad;
    bool requires_grad = false;
    bool leaf = true;
    bool consumed = false;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    /// Accumulates this node's grad into its inputs' grads.
    std::function<void(Node&)> backward_fn;
};

template <typename T>
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

    static Tensor constant(Shape shape, std::vector<T> values);
    /// Leaf with requires_grad set and a zero gradient buffer.
    static Tensor parameter(Shape shape, std::vector<T> values);
    static Tensor zeros(Shape shape, bool requires_grad = false);

    [[nodiscard]] bool defined() const { return node_ != nullptr; }
    [[nodiscard]] const Shape& shape() const { return node_->shape; }
    [[nodiscard]] std::size_t numel() const { return node_->value.size(); }
    [[nodiscard]] std::span<const T> values() const { return node_->value; }
    /// Leaves only; mutating an interior node would desynchronize its graph.
    [[nodiscard]] std::span<T> mutable_values();
    [[nodiscard]] std::span<const T> grad() const { return node_->grad; }
    [[nodiscard]] std::span<T> mutable_grad() { return node_->grad; }
    void zero_grad();
    [[nodiscard]] bool requires_grad() const { return node_->requires_grad; }
    [[nodiscard]] bool is_leaf() const { return node_->leaf; }
    [[nodiscard]] T item() const;
    [[nodiscard]] const std::shared_ptr<Node<T>>& node() const { return node_; }

private:
    std::shared_ptr<Node<T>> node_;
};

/// Cross-correlation with zero padding. input [B,Cin,H,W], kernel [Cout,Cin,kH,kW], bias [Cout].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias, int stride = 1,
                 int padding = 0);

/// max(x, 0); the subgradient at 0 is 0.
template <typename T>
Tensor<T> relu(const Tensor<T>& x);

/// 2x2 max pooling. Gradient goes to the first maximum in row-major window order.
template <typename T>
Tensor<T> downsample2x(const Tensor<T>& x);

/// Nearest-neighbour 2x upsampling.
template <typename T>
Tensor<T> upsample2x(const Tensor<T>& x);

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T alpha);

/// Inner product of two equally shaped tensors, as a scalar tensor.
template <typename T>
Tensor<T> dot(const Tensor<T>& a, const Tensor<T>& b);

/// Mean of squared differences, as a scalar tensor.
template <typename T>
Tensor<T> mse_mean(const Tensor<T>& a, const Tensor<T>& b);

/// Populates gradients of every requires_grad leaf reachable from `loss` and
/// consumes the intermediate graph. Leaf gradients accumulate.
template <typename T>
void backward(const Tensor<T>& loss);

/// Disables graph recording on the current thread while alive (inference).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

[[nodiscard]] bool grad_enabled();

/// While alive, relu and downsample2x on the current thread fold their
/// activation pattern (masks, argmax positions) into a fingerprint. Two forward
/// passes with equal fingerprints evaluated the same linear piece of the network,
/// which is what the finite-difference checks use to detect kink crossings.
class KinkTrace {
public:
    KinkTrace();
    ~KinkTrace();
    KinkTrace(const KinkTrace&) = delete;
    KinkTrace& operator=(const KinkTrace&) = delete;

    [[nodiscard]] std::uint64_t fingerprint() const { return hash_; }
    void mix(std::uint64_t v);
    static KinkTrace* active();

private:
    std::uint64_t hash_ = 0xcbf29ce484222325ull;
    KinkTrace* previous_ = nullptr;
};

// ---------------------------------------------------------------------------

struct AdamHyper {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
struct AdamState {
    AdamHyper hyper;
    std::vector<Buffer<T>> m;
    std::vector<Buffer<T>> v;
    std::uint64_t t = 0;
};

/// One bias-corrected Adam update of `params` from `grads`. Moments are created on the first call.
template <typename T>
void adam_step(std::span<const std::span<T>> params, std::span<const std::span<const T>> grads,
               AdamState<T>& state);

/// Convenience form reading each parameter's accumulated gradient.
template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state);

} // namespace n2c::ad
