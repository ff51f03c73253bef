#include "n2c/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <Eigen/Core>

#include "n2c/error.hpp"

namespace n2c::ad {

std::size_t numel(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape)
{
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "," : "") << shape[i];
    }
    os << ")";
    return os.str();
}

namespace {

thread_local KinkTrace* g_trace = nullptr;
thread_local bool g_grad_enabled = true;

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
std::shared_ptr<Node<T>> make_node(Shape shape, Buffer<T> value)
{
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    return n;
}

/// Wraps a computed value; records the graph only when some input needs gradients.
template <typename T>
Tensor<T> make_result(const char* op, Shape shape, Buffer<T> value,
                      std::vector<std::shared_ptr<Node<T>>> inputs, std::function<void(Node<T>&)> fn)
{
    auto n = make_node<T>(std::move(shape), std::move(value));
    n->op = op;
    n->leaf = false;
    const bool needs = g_grad_enabled && std::any_of(inputs.begin(), inputs.end(), [](const auto& p) { return p->requires_grad; });
    if (needs) {
        n->requires_grad = true;
        n->inputs = std::move(inputs);
        n->backward_fn = std::move(fn);
    }
    return Tensor<T>(std::move(n));
}

void require(bool cond, const std::string& msg)
{
    if (!cond) {
        throw ValidationError(msg);
    }
}

template <typename T>
void require_4d(const Tensor<T>& t, const char* op)
{
    require(t.defined(), std::string(op) + ": undefined tensor");
    require(t.shape().size() == 4, std::string(op) + ": expected a 4D [B,C,H,W] tensor, got " + shape_str(t.shape()));
}

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op)
{
    require(a.defined() && b.defined(), std::string(op) + ": undefined tensor");
    require(a.shape() == b.shape(),
            std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

std::uint64_t fnv_mix(std::uint64_t h, std::uint64_t v)
{
    for (int i = 0; i < 8; ++i) {
        h ^= (v >> (8 * i)) & 0xffu;
        h *= 1099511628211ull;
    }
    return h;
}

} // namespace

// ---------------------------------------------------------------------------
// KinkTrace / NoGradGuard

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_enabled() { return g_grad_enabled; }

KinkTrace::KinkTrace() : previous_(g_trace) { g_trace = this; }
KinkTrace::~KinkTrace() { g_trace = previous_; }
void KinkTrace::mix(std::uint64_t v) { hash_ = fnv_mix(hash_, v); }
KinkTrace* KinkTrace::active() { return g_trace; }

// ---------------------------------------------------------------------------
// Tensor

template <typename T>
Tensor<T> Tensor<T>::constant(Shape shape, std::vector<T> values)
{
    require(ad::numel(shape) == values.size(),
            "Tensor: " + std::to_string(values.size()) + " values for shape " + shape_str(shape));
    return Tensor(make_node<T>(std::move(shape), Buffer<T>(values.begin(), values.end())));
}

template <typename T>
Tensor<T> Tensor<T>::parameter(Shape shape, std::vector<T> values)
{
    Tensor t = constant(std::move(shape), std::move(values));
    t.node_->requires_grad = true;
    t.node_->grad.assign(t.node_->value.size(), T(0));
    return t;
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad)
{
    const std::size_t n = ad::numel(shape);
    return requires_grad ? parameter(std::move(shape), std::vector<T>(n, T(0)))
                         : constant(std::move(shape), std::vector<T>(n, T(0)));
}

template <typename T>
std::span<T> Tensor<T>::mutable_values()
{
    require(node_->leaf, "Tensor::mutable_values: only leaf tensors may be modified");
    return node_->value;
}

template <typename T>
void Tensor<T>::zero_grad()
{
    std::fill(node_->grad.begin(), node_->grad.end(), T(0));
}

template <typename T>
T Tensor<T>::item() const
{
    require(numel() == 1, "Tensor::item: tensor of shape " + shape_str(shape()) + " is not a scalar");
    return node_->value[0];
}

// ---------------------------------------------------------------------------
// conv2d

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, const Tensor<T>& bias, int stride, int padding)
{
    require_4d(input, "conv2d");
    require_4d(kernel, "conv2d");
    require(bias.defined() && bias.shape().size() == 1, "conv2d: bias must be a 1D tensor");
    require(stride >= 1 && padding >= 0, "conv2d: stride must be >= 1 and padding >= 0");
    const std::size_t B = input.shape()[0], Cin = input.shape()[1], H = input.shape()[2], W = input.shape()[3];
    const std::size_t Cout = kernel.shape()[0], kH = kernel.shape()[2], kW = kernel.shape()[3];
    require(kernel.shape()[1] == Cin, "conv2d: kernel expects " + std::to_string(kernel.shape()[1])
                                          + " input channels, input has " + std::to_string(Cin));
    require(bias.shape()[0] == Cout, "conv2d: bias length does not match output channels");
    require(kH % 2 == 1 && kW % 2 == 1, "conv2d: kernel sizes must be odd");
    const long span_h = static_cast<long>(H) + 2L * padding - static_cast<long>(kH);
    const long span_w = static_cast<long>(W) + 2L * padding - static_cast<long>(kW);
    require(span_h >= 0 && span_w >= 0 && span_h % stride == 0 && span_w % stride == 0,
            "conv2d: output size is not integral for input " + shape_str(input.shape()) + ", kernel "
                + shape_str(kernel.shape()) + ", stride " + std::to_string(stride) + ", padding "
                + std::to_string(padding));
    const std::size_t Ho = static_cast<std::size_t>(span_h / stride) + 1;
    const std::size_t Wo = static_cast<std::size_t>(span_w / stride) + 1;
    const std::size_t K = Cin * kH * kW;
    const std::size_t P = Ho * Wo;

    const T* x = input.values().data();
    auto im2col = [&](std::size_t b, Buffer<T>& col) {
        col.assign(K * P, T(0));
        for (std::size_t ci = 0; ci < Cin; ++ci) {
            const T* plane = x + (b * Cin + ci) * H * W;
            for (std::size_t i = 0; i < kH; ++i) {
                for (std::size_t j = 0; j < kW; ++j) {
                    T* row = col.data() + ((ci * kH + i) * kW + j) * P;
                    for (std::size_t oy = 0; oy < Ho; ++oy) {
                        const long iy = static_cast<long>(oy * stride + i) - padding;
                        if (iy < 0 || iy >= static_cast<long>(H)) continue;
                        const T* src = plane + static_cast<std::size_t>(iy) * W;
                        T* dst = row + oy * Wo;
                        for (std::size_t ox = 0; ox < Wo; ++ox) {
                            const long ix = static_cast<long>(ox * stride + j) - padding;
                            if (ix >= 0 && ix < static_cast<long>(W)) dst[ox] = src[ix];
                        }
                    }
                }
            }
        }
    };

    Buffer<T> out(B * Cout * P);
    std::vector<Buffer<T>> cols(B);
    const ConstMatMap<T> kmat(kernel.values().data(), Cout, K);
    const auto bvec = bias.values();
    for (std::size_t b = 0; b < B; ++b) {
        im2col(b, cols[b]);
        MatMap<T> omat(out.data() + b * Cout * P, Cout, P);
        omat.noalias() = kmat * ConstMatMap<T>(cols[b].data(), K, P);
        for (std::size_t co = 0; co < Cout; ++co) {
            omat.row(co).array() += bvec[co];
        }
    }

    const bool need_input_grad = input.requires_grad();
    auto fn = [=, cols = std::move(cols)](Node<T>& self) {
        auto& in = *self.inputs[0];
        auto& ker = *self.inputs[1];
        auto& bi = *self.inputs[2];
        const ConstMatMap<T> km(ker.value.data(), Cout, K);
        Buffer<T> dcol;
        for (std::size_t b = 0; b < B; ++b) {
            const ConstMatMap<T> g(self.grad.data() + b * Cout * P, Cout, P);
            if (ker.requires_grad) {
                MatMap<T>(ker.grad.data(), Cout, K).noalias() += g * ConstMatMap<T>(cols[b].data(), K, P).transpose();
            }
            if (bi.requires_grad) {
                for (std::size_t co = 0; co < Cout; ++co) {
                    bi.grad[co] += g.row(co).sum();
                }
            }
            if (need_input_grad) {
                dcol.resize(K * P);
                MatMap<T>(dcol.data(), K, P).noalias() = km.transpose() * g;
                for (std::size_t ci = 0; ci < Cin; ++ci) {
                    T* plane = in.grad.data() + (b * Cin + ci) * H * W;
                    for (std::size_t i = 0; i < kH; ++i) {
                        for (std::size_t j = 0; j < kW; ++j) {
                            const T* row = dcol.data() + ((ci * kH + i) * kW + j) * P;
                            for (std::size_t oy = 0; oy < Ho; ++oy) {
                                const long iy = static_cast<long>(oy * stride + i) - padding;
                                if (iy < 0 || iy >= static_cast<long>(H)) continue;
                                T* dst = plane + static_cast<std::size_t>(iy) * W;
                                const T* src = row + oy * Wo;
                                for (std::size_t ox = 0; ox < Wo; ++ox) {
                                    const long ix = static_cast<long>(ox * stride + j) - padding;
                                    if (ix >= 0 && ix < static_cast<long>(W)) dst[ix] += src[ox];
                                }
                            }
                        }
                    }
                }
            }
        }
    };
    return make_result<T>("conv2d", {B, Cout, Ho, Wo}, std::move(out), {input.node(), kernel.node(), bias.node()},
                          std::move(fn));
}

// ---------------------------------------------------------------------------
// elementwise and structural ops

template <typename T>
Tensor<T> relu(const Tensor<T>& x)
{
    require(x.defined(), "relu: undefined tensor");
    const auto v = x.values();
    Buffer<T> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = v[i] > T(0) ? v[i] : T(0);
    }
    if (auto* trace = KinkTrace::active()) {
        std::uint64_t mask_hash = 0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (v[i] > T(0)) mask_hash = fnv_mix(mask_hash, i);
        }
        trace->mix(mask_hash);
    }
    auto fn = [](Node<T>& self) {
        auto& in = *self.inputs[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) {
            if (in.value[i] > T(0)) in.grad[i] += self.grad[i];
        }
    };
    return make_result<T>("relu", x.shape(), std::move(out), {x.node()}, fn);
}

template <typename T>
Tensor<T> downsample2x(const Tensor<T>& x)
{
    require_4d(x, "downsample2x");
    const std::size_t B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    require(H % 2 == 0 && W % 2 == 0, "downsample2x: spatial dims must be even, got " + shape_str(x.shape()));
    const std::size_t Ho = H / 2, Wo = W / 2;
    const auto v = x.values();
    Buffer<T> out(B * C * Ho * Wo);
    std::vector<std::size_t> argmax(out.size());
    for (std::size_t bc = 0; bc < B * C; ++bc) {
        const std::size_t base = bc * H * W;
        for (std::size_t oy = 0; oy < Ho; ++oy) {
            for (std::size_t ox = 0; ox < Wo; ++ox) {
                const std::size_t i0 = base + (2 * oy) * W + 2 * ox;
                const std::size_t cand[4] = {i0, i0 + 1, i0 + W, i0 + W + 1};
                std::size_t best = cand[0];
                for (int k = 1; k < 4; ++k) {
                    if (v[cand[k]] > v[best]) best = cand[k];
                }
                const std::size_t o = (bc * Ho + oy) * Wo + ox;
                out[o] = v[best];
                argmax[o] = best;
            }
        }
    }
    if (auto* trace = KinkTrace::active()) {
        std::uint64_t pattern = 0;
        for (std::size_t idx : argmax) pattern = fnv_mix(pattern, idx);
        trace->mix(pattern);
    }
    auto fn = [argmax = std::move(argmax)](Node<T>& self) {
        auto& in = *self.inputs[0];
        for (std::size_t o = 0; o < self.grad.size(); ++o) {
            in.grad[argmax[o]] += self.grad[o];
        }
    };
    return make_result<T>("downsample2x", {B, C, Ho, Wo}, std::move(out), {x.node()}, std::move(fn));
}

template <typename T>
Tensor<T> upsample2x(const Tensor<T>& x)
{
    require_4d(x, "upsample2x");
    const std::size_t B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
    const std::size_t Ho = 2 * H, Wo = 2 * W;
    const auto v = x.values();
    Buffer<T> out(B * C * Ho * Wo);
    for (std::size_t bc = 0; bc < B * C; ++bc) {
        for (std::size_t oy = 0; oy < Ho; ++oy) {
            const T* src = v.data() + (bc * H + oy / 2) * W;
            T* dst = out.data() + (bc * Ho + oy) * Wo;
            for (std::size_t ox = 0; ox < Wo; ++ox) {
                dst[ox] = src[ox / 2];
            }
        }
    }
    auto fn = [=](Node<T>& self) {
        auto& in = *self.inputs[0];
        for (std::size_t bc = 0; bc < B * C; ++bc) {
            for (std::size_t oy = 0; oy < Ho; ++oy) {
                T* dst = in.grad.data() + (bc * H + oy / 2) * W;
                const T* src = self.grad.data() + (bc * Ho + oy) * Wo;
                for (std::size_t ox = 0; ox < Wo; ++ox) {
                    dst[ox / 2] += src[ox];
                }
            }
        }
    };
    return make_result<T>("upsample2x", {B, C, Ho, Wo}, std::move(out), {x.node()}, fn);
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b)
{
    require_4d(a, "concat_channels");
    require_4d(b, "concat_channels");
    const std::size_t B = a.shape()[0], C1 = a.shape()[1], C2 = b.shape()[1], H = a.shape()[2], W = a.shape()[3];
    require(b.shape()[0] == B && b.shape()[2] == H && b.shape()[3] == W,
            "concat_channels: batch/spatial mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const std::size_t plane = H * W;
    Buffer<T> out(B * (C1 + C2) * plane);
    for (std::size_t bi = 0; bi < B; ++bi) {
        std::copy_n(a.values().data() + bi * C1 * plane, C1 * plane, out.data() + bi * (C1 + C2) * plane);
        std::copy_n(b.values().data() + bi * C2 * plane, C2 * plane, out.data() + (bi * (C1 + C2) + C1) * plane);
    }
    auto fn = [=](Node<T>& self) {
        auto& na = *self.inputs[0];
        auto& nb = *self.inputs[1];
        for (std::size_t bi = 0; bi < B; ++bi) {
            const T* g = self.grad.data() + bi * (C1 + C2) * plane;
            if (na.requires_grad) {
                T* d = na.grad.data() + bi * C1 * plane;
                for (std::size_t i = 0; i < C1 * plane; ++i) d[i] += g[i];
            }
            if (nb.requires_grad) {
                T* d = nb.grad.data() + bi * C2 * plane;
                for (std::size_t i = 0; i < C2 * plane; ++i) d[i] += g[C1 * plane + i];
            }
        }
    };
    return make_result<T>("concat_channels", {B, C1 + C2, H, W}, std::move(out), {a.node(), b.node()}, fn);
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b)
{
    require_same_shape(a, b, "add");
    Buffer<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a.values()[i] + b.values()[i];
    }
    auto fn = [](Node<T>& self) {
        for (auto* in : {self.inputs[0].get(), self.inputs[1].get()}) {
            if (!in->requires_grad) continue;
            for (std::size_t i = 0; i < self.grad.size(); ++i) in->grad[i] += self.grad[i];
        }
    };
    return make_result<T>("add", a.shape(), std::move(out), {a.node(), b.node()}, fn);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T alpha)
{
    require(a.defined(), "scale: undefined tensor");
    Buffer<T> out(a.numel());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = alpha * a.values()[i];
    }
    auto fn = [alpha](Node<T>& self) {
        auto& in = *self.inputs[0];
        for (std::size_t i = 0; i < self.grad.size(); ++i) in.grad[i] += alpha * self.grad[i];
    };
    return make_result<T>("scale", a.shape(), std::move(out), {a.node()}, fn);
}

template <typename T>
Tensor<T> dot(const Tensor<T>& a, const Tensor<T>& b)
{
    require_same_shape(a, b, "dot");
    T acc = 0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        acc += a.values()[i] * b.values()[i];
    }
    auto fn = [](Node<T>& self) {
        auto& na = *self.inputs[0];
        auto& nb = *self.inputs[1];
        const T g = self.grad[0];
        if (na.requires_grad) {
            for (std::size_t i = 0; i < na.grad.size(); ++i) na.grad[i] += g * nb.value[i];
        }
        if (nb.requires_grad) {
            for (std::size_t i = 0; i < nb.grad.size(); ++i) nb.grad[i] += g * na.value[i];
        }
    };
    return make_result<T>("dot", {1}, {acc}, {a.node(), b.node()}, fn);
}

template <typename T>
Tensor<T> mse_mean(const Tensor<T>& a, const Tensor<T>& b)
{
    require_same_shape(a, b, "mse_mean");
    const std::size_t n = a.numel();
    require(n > 0, "mse_mean: empty tensors");
    T acc = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const T d = a.values()[i] - b.values()[i];
        acc += d * d;
    }
    auto fn = [n](Node<T>& self) {
        auto& na = *self.inputs[0];
        auto& nb = *self.inputs[1];
        const T g = self.grad[0] * T(2) / static_cast<T>(n);
        for (std::size_t i = 0; i < n; ++i) {
            const T d = g * (na.value[i] - nb.value[i]);
            if (na.requires_grad) na.grad[i] += d;
            if (nb.requires_grad) nb.grad[i] -= d;
        }
    };
    return make_result<T>("mse_mean", {1}, {acc / static_cast<T>(n)}, {a.node(), b.node()}, fn);
}

// ---------------------------------------------------------------------------
// backward

template <typename T>
void backward(const Tensor<T>& loss)
{
    require(loss.defined(), "backward: undefined loss");
    require(loss.numel() == 1, "backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
    Node<T>* root = loss.node().get();
    require(!root->consumed, "backward: graph already consumed by a previous backward call");
    require(root->requires_grad, "backward: loss is detached (no input requires gradients)");

    // Iterative post-order DFS gives a topological order (inputs before users).
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, std::size_t>> stack{{root, 0}};
    seen.insert(root);
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node<T>* child = node->inputs[next++].get();
            if (child->requires_grad && !seen.contains(child)) {
                seen.insert(child);
                stack.push_back({child, 0});
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    for (Node<T>* n : order) {
        if (!n->leaf) {
            n->grad.assign(n->value.size(), T(0));
        } else if (n->grad.size() != n->value.size()) {
            n->grad.assign(n->value.size(), T(0));
        }
    }
    root->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (!n->leaf && n->backward_fn) {
            n->backward_fn(*n);
        }
    }
    for (Node<T>* n : order) {
        if (!n->leaf) {
            n->backward_fn = nullptr;
            n->inputs.clear();
            n->grad.clear();
            n->grad.shrink_to_fit();
            n->consumed = true;
        }
    }
}

// ---------------------------------------------------------------------------
// Adam

template <typename T>
void adam_step(std::span<const std::span<T>> params, std::span<const std::span<const T>> grads, AdamState<T>& state)
{
    const auto& h = state.hyper;
    require(h.lr > 0.0, "adam_step: learning rate must be > 0");
    require(h.beta1 >= 0.0 && h.beta1 < 1.0 && h.beta2 >= 0.0 && h.beta2 < 1.0, "adam_step: betas must lie in [0,1)");
    require(params.size() == grads.size(), "adam_step: parameter and gradient counts differ");
    if (state.m.empty() && state.t == 0) {
        for (const auto& p : params) {
            state.m.emplace_back(p.size(), T(0));
            state.v.emplace_back(p.size(), T(0));
        }
    }
    require(state.m.size() == params.size(), "adam_step: optimizer state was built for a different parameter set");
    for (std::size_t k = 0; k < params.size(); ++k) {
        require(params[k].size() == grads[k].size() && state.m[k].size() == params[k].size(),
                "adam_step: shape mismatch for parameter " + std::to_string(k));
    }
    ++state.t;
    const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.t));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto p = params[k];
        auto g = grads[k];
        auto& m = state.m[k];
        auto& v = state.v[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double gi = g[i];
            const double mi = h.beta1 * m[i] + (1.0 - h.beta1) * gi;
            const double vi = h.beta2 * v[i] + (1.0 - h.beta2) * gi * gi;
            m[i] = static_cast<T>(mi);
            v[i] = static_cast<T>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            p[i] = static_cast<T>(p[i] - h.lr * mhat / (std::sqrt(vhat) + h.eps));
        }
    }
}

template <typename T>
void adam_step(std::span<Tensor<T>> params, AdamState<T>& state)
{
    std::vector<std::span<T>> ps;
    std::vector<std::span<const T>> gs;
    for (auto& p : params) {
        require(p.is_leaf() && p.requires_grad(), "adam_step: parameters must be requires_grad leaves");
        ps.push_back(p.mutable_values());
        gs.push_back(p.grad());
    }
    adam_step<T>(std::span<const std::span<T>>(ps), std::span<const std::span<const T>>(gs), state);
}

#define N2C_AD_INSTANTIATE(T)                                                                                     \
    template class Tensor<T>;                                                                                    \
    template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, int, int);                   \
    template Tensor<T> relu(const Tensor<T>&);                                                                   \
    template Tensor<T> downsample2x(const Tensor<T>&);                                                           \
    template Tensor<T> upsample2x(const Tensor<T>&);                                                             \
    template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                                      \
    template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                                  \
    template Tensor<T> scale(const Tensor<T>&, T);                                                               \
    template Tensor<T> dot(const Tensor<T>&, const Tensor<T>&);                                                  \
    template Tensor<T> mse_mean(const Tensor<T>&, const Tensor<T>&);                                             \
    template void backward(const Tensor<T>&);                                                                    \
    template void adam_step(std::span<const std::span<T>>, std::span<const std::span<const T>>, AdamState<T>&);  \
    template void adam_step(std::span<Tensor<T>>, AdamState<T>&);

N2C_AD_INSTANTIATE(float)
N2C_AD_INSTANTIATE(double)

#undef N2C_AD_INSTANTIATE

} // namespace n2c::ad
