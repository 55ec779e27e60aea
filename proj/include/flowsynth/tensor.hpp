#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "flowsynth/errors.hpp"
#include "flowsynth/kernels/kernels.hpp"
#include "flowsynth/rng.hpp"

// Dense row-major tensors with reverse-mode autodiff. The tape is implicit:
// every op allocates a fresh node whose monotonically increasing sequence id
// gives a topological order (inputs always precede outputs), and backward()
// replays the recorded rules in reverse sequence order. Graphs are rebuilt on
// every forward pass; nothing is cached across calls.

namespace flowsynth {

namespace detail {

inline std::uint64_t next_tape_seq() {
    static thread_local std::uint64_t counter = 0;
    return ++counter;
}

inline bool& grad_mode_flag() {
    static thread_local bool enabled = true;
    return enabled;
}

template <typename T>
struct TapeNode {
    std::uint64_t seq = 0;
    std::vector<std::size_t> shape;
    std::vector<T> data;
    std::vector<T> grad; // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<TapeNode>> parents;
    // Backward rules capture raw TapeNode pointers plus value payloads only;
    // ownership lives exclusively in `parents`.
    std::function<void(TapeNode&)> backward;

    std::size_t size() const { return data.size(); }

    void accumulate(const T* g, std::size_t n) {
        if (grad.empty()) grad.assign(size(), T(0));
        kernels::active<T>().add(grad.data(), g, grad.data(), n);
    }

    T* grad_buffer() {
        if (grad.empty()) grad.assign(size(), T(0));
        return grad.data();
    }

    ~TapeNode() {
        // Iterative teardown; long op chains would otherwise recurse through
        // shared_ptr destructors.
        std::vector<std::shared_ptr<TapeNode>> stack;
        stack.swap(parents);
        while (!stack.empty()) {
            std::shared_ptr<TapeNode> p = std::move(stack.back());
            stack.pop_back();
            if (p && p.use_count() == 1) {
                for (auto& gp : p->parents) stack.push_back(std::move(gp));
                p->parents.clear();
            }
        }
    }
};

inline std::string shape_str(const std::vector<std::size_t>& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

inline std::size_t shape_numel(const std::vector<std::size_t>& s) {
    std::size_t n = 1;
    for (std::size_t d : s) {
        if (d == 0) throw ShapeError("zero dimension in shape " + shape_str(s));
        n *= d;
    }
    return n;
}

} // namespace detail

// Disables tape recording for the enclosing scope (inference paths).
struct NoGradGuard {
    NoGradGuard() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
    ~NoGradGuard() { detail::grad_mode_flag() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

inline bool grad_enabled() { return detail::grad_mode_flag(); }

template <typename T>
class Tensor {
public:
    using Node = detail::TapeNode<T>;

    Tensor() = default;

    static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false) {
        return make_leaf(std::move(shape), {}, requires_grad);
    }

    static Tensor full(std::vector<std::size_t> shape, T value, bool requires_grad = false) {
        const std::size_t n = detail::shape_numel(shape);
        return make_leaf(std::move(shape), std::vector<T>(n, value), requires_grad);
    }

    static Tensor from_data(std::vector<std::size_t> shape, std::vector<T> data,
                            bool requires_grad = false) {
        if (detail::shape_numel(shape) != data.size())
            throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                             detail::shape_str(shape));
        return make_leaf(std::move(shape), std::move(data), requires_grad);
    }

    static Tensor scalar(T value, bool requires_grad = false) {
        return from_data({1}, {value}, requires_grad);
    }

    static Tensor randn(std::vector<std::size_t> shape, Rng& rng, T stdev = T(1),
                        bool requires_grad = false) {
        const std::size_t n = detail::shape_numel(shape);
        std::vector<T> d(n);
        for (std::size_t i = 0; i < n; ++i) d[i] = static_cast<T>(rng.normal()) * stdev;
        return make_leaf(std::move(shape), std::move(d), requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const std::vector<std::size_t>& shape() const { return node_->shape; }
    std::size_t ndim() const { return node_->shape.size(); }
    std::size_t size() const { return node_->data.size(); }
    std::size_t dim(std::size_t i) const { return node_->shape.at(i); }

    std::span<T> data() { return {node_->data.data(), node_->data.size()}; }
    std::span<const T> data() const { return {node_->data.data(), node_->data.size()}; }

    T item() const {
        if (size() != 1) throw ContractError("item() on tensor of size " + std::to_string(size()));
        return node_->data[0];
    }

    T at(std::size_t i, std::size_t j) const {
        return node_->data[i * node_->shape[1] + j];
    }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }

    bool has_grad() const { return !node_->grad.empty(); }
    std::span<const T> grad() const {
        if (node_->grad.empty()) throw ContractError("gradient not populated; run backward() first");
        return {node_->grad.data(), node_->grad.size()};
    }
    void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), T(0)); }

    // Deep copy detached from the tape.
    Tensor clone() const {
        auto copy = make_leaf(node_->shape, node_->data, false);
        return copy;
    }

    bool all_finite() const {
        for (const T v : node_->data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    Node* node() const { return node_.get(); }
    const std::shared_ptr<Node>& node_ptr() const { return node_; }

    static Tensor from_node(std::shared_ptr<Node> n) {
        Tensor t;
        t.node_ = std::move(n);
        return t;
    }

    // Result node wired to parents; the backward rule is attached only when
    // the tape is recording and some parent wants gradients.
    template <typename BackwardFn>
    static Tensor make_op(std::vector<std::size_t> shape, std::vector<T> data,
                          std::vector<Tensor> parents, BackwardFn&& fn) {
        auto n = std::make_shared<Node>();
        n->seq = detail::next_tape_seq();
        n->shape = std::move(shape);
        n->data = std::move(data);
        if (grad_enabled()) {
            bool any = false;
            for (const auto& p : parents) any = any || p.node_->requires_grad;
            if (any) {
                n->requires_grad = true;
                n->parents.reserve(parents.size());
                for (auto& p : parents) n->parents.push_back(p.node_);
                n->backward = std::forward<BackwardFn>(fn);
            }
        }
        return from_node(std::move(n));
    }

private:
    static Tensor make_leaf(std::vector<std::size_t> shape, std::vector<T> data,
                            bool requires_grad) {
        const std::size_t n = detail::shape_numel(shape);
        auto node = std::make_shared<Node>();
        node->seq = detail::next_tape_seq();
        node->shape = std::move(shape);
        if (data.empty())
            node->data.assign(n, T(0));
        else
            node->data = std::move(data);
        node->requires_grad = requires_grad;
        return from_node(std::move(node));
    }

    std::shared_ptr<Node> node_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// ---------------------------------------------------------------------------
// backward

// Populates gradients of every requires_grad tensor reachable from `loss`.
// Leaf gradients accumulate across calls; interior gradients are scratch.
template <typename T>
void backward(const Tensor<T>& loss) {
    using Node = detail::TapeNode<T>;
    if (loss.size() != 1) throw ContractError("backward() expects a scalar loss");
    if (!loss.requires_grad()) throw ContractError("loss is not connected to any gradient leaf");

    std::vector<Node*> order;
    std::vector<Node*> stack{loss.node()};
    std::unordered_set<const Node*> seen;
    auto mark = [&seen](const Node* n) { return seen.insert(n).second; };
    mark(loss.node());
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (const auto& p : n->parents)
            if (p->requires_grad && mark(p.get())) stack.push_back(p.get());
    }
    std::sort(order.begin(), order.end(),
              [](const Node* a, const Node* b) { return a->seq > b->seq; });

    // Interior nodes get fresh gradient scratch every call.
    for (Node* n : order)
        if (n->backward) n->grad.assign(n->size(), T(0));

    Node* root = loss.node();
    if (root->backward) {
        root->grad[0] = T(1);
    } else {
        root->grad_buffer();
        root->grad[0] += T(1);
    }
    for (Node* n : order)
        if (n->backward) n->backward(*n);
}

// ---------------------------------------------------------------------------
// elementwise ops

namespace detail {

// Trailing-axis broadcast: returns true when `small` is a suffix of `big`
// or a single scalar.
inline bool suffix_of(const std::vector<std::size_t>& small, const std::vector<std::size_t>& big) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

enum class BinKind { add, sub, mul };

template <typename T>
Tensor<T> binary_broadcast(const Tensor<T>& a, const Tensor<T>& b, BinKind kind) {
    using TN = TapeNode<T>;
    const auto& ka = kernels::active<T>();
    const bool same = a.shape() == b.shape();
    const bool b_small = same || b.size() == 1 || suffix_of(b.shape(), a.shape());
    const bool a_small = !b_small && (a.size() == 1 || suffix_of(a.shape(), b.shape()));
    if (!b_small && !a_small)
        throw ShapeError("operands not broadcast-compatible: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));

    const Tensor<T>& big = b_small ? a : b;
    const Tensor<T>& small = b_small ? b : a;
    const std::size_t chunk = small.size();
    const std::size_t n = big.size();
    std::vector<T> out(n);

    const T* pb = big.data().data();
    const T* ps = small.data().data();
    if (chunk == 1) {
        const T s = ps[0];
        for (std::size_t i = 0; i < n; ++i) {
            const T x = b_small ? pb[i] : s;
            const T y = b_small ? s : pb[i];
            out[i] = kind == BinKind::add ? x + y : (kind == BinKind::sub ? x - y : x * y);
        }
    } else {
        for (std::size_t off = 0; off < n; off += chunk) {
            const T* x = b_small ? pb + off : ps;
            const T* y = b_small ? ps : pb + off;
            switch (kind) {
                case BinKind::add: ka.add(x, y, out.data() + off, chunk); break;
                case BinKind::sub: ka.sub(x, y, out.data() + off, chunk); break;
                case BinKind::mul: ka.mul(x, y, out.data() + off, chunk); break;
            }
        }
    }

    TN* an = a.node();
    TN* bn = b.node();
    return Tensor<T>::make_op(
        big.shape(), std::move(out), {a, b},
        [an, bn, kind, chunk, b_small](TN& self) {
            const auto& k = kernels::active<T>();
            const std::size_t n = self.size();
            const T* g = self.grad.data();
            TN* big_n = b_small ? an : bn;
            TN* small_n = b_small ? bn : an;
            const T* big_d = big_n->data.data();
            const T* small_d = small_n->data.data();
            // gradient w.r.t. the full-size operand
            if (big_n->requires_grad) {
                T* gb = big_n->grad_buffer();
                switch (kind) {
                    case BinKind::add: k.add(gb, g, gb, n); break;
                    case BinKind::sub:
                        if (b_small)
                            k.add(gb, g, gb, n);
                        else
                            k.axpy(T(-1), g, gb, n);
                        break;
                    case BinKind::mul:
                        if (chunk == 1) {
                            k.axpy(small_d[0], g, gb, n);
                        } else {
                            for (std::size_t off = 0; off < n; off += chunk)
                                for (std::size_t i = 0; i < chunk; ++i)
                                    gb[off + i] += g[off + i] * small_d[i];
                        }
                        break;
                }
            }
            // gradient w.r.t. the broadcast operand (reduce over leading axes)
            if (small_n->requires_grad) {
                T* gs = small_n->grad_buffer();
                const T sign = (kind == BinKind::sub && b_small) ? T(-1) : T(1);
                if (kind == BinKind::mul) {
                    if (chunk == 1) {
                        gs[0] += k.dot(g, big_d, n);
                    } else {
                        for (std::size_t off = 0; off < n; off += chunk)
                            for (std::size_t i = 0; i < chunk; ++i)
                                gs[i] += g[off + i] * big_d[off + i];
                    }
                } else {
                    if (chunk == 1) {
                        gs[0] += sign * k.sum(g, n);
                    } else {
                        for (std::size_t off = 0; off < n; off += chunk)
                            k.axpy(sign, g + off, gs, chunk);
                    }
                }
            }
        });
}

} // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_broadcast(a, b, detail::BinKind::add);
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_broadcast(a, b, detail::BinKind::sub);
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_broadcast(a, b, detail::BinKind::mul);
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T alpha) {
    using TN = detail::TapeNode<T>;
    std::vector<T> out(x.size());
    kernels::active<T>().scale(x.data().data(), alpha, out.data(), x.size());
    TN* xn = x.node();
    return Tensor<T>::make_op(x.shape(), std::move(out), {x}, [xn, alpha](TN& self) {
        if (xn->requires_grad)
            kernels::active<T>().axpy(alpha, self.grad.data(), xn->grad_buffer(), self.size());
    });
}

// tanh approximation; the fixed constants keep results reproducible.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    using TN = detail::TapeNode<T>;
    constexpr T kSqrt2OverPi = T(0.7978845608028653558798921198687637369517);
    constexpr T kCubic = T(0.044715);
    const std::size_t n = x.size();
    std::vector<T> out(n);
    const T* px = x.data().data();
    for (std::size_t i = 0; i < n; ++i) {
        const T v = px[i];
        const T u = kSqrt2OverPi * (v + kCubic * v * v * v);
        out[i] = T(0.5) * v * (T(1) + std::tanh(u));
    }
    TN* xn = x.node();
    return Tensor<T>::make_op(x.shape(), std::move(out), {x}, [xn](TN& self) {
        if (!xn->requires_grad) return;
        const std::size_t n = self.size();
        const T* g = self.grad.data();
        const T* v = xn->data.data();
        T* gx = xn->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) {
            const T u = kSqrt2OverPi * (v[i] + kCubic * v[i] * v[i] * v[i]);
            const T th = std::tanh(u);
            const T sech2 = T(1) - th * th;
            const T du = kSqrt2OverPi * (T(1) + T(3) * kCubic * v[i] * v[i]);
            gx[i] += g[i] * (T(0.5) * (T(1) + th) + T(0.5) * v[i] * sech2 * du);
        }
    });
}

template <typename T>
Tensor<T> sin(const Tensor<T>& x) {
    using TN = detail::TapeNode<T>;
    const std::size_t n = x.size();
    std::vector<T> out(n);
    const T* px = x.data().data();
    for (std::size_t i = 0; i < n; ++i) out[i] = std::sin(px[i]);
    TN* xn = x.node();
    return Tensor<T>::make_op(x.shape(), std::move(out), {x}, [xn](TN& self) {
        if (!xn->requires_grad) return;
        const T* g = self.grad.data();
        const T* v = xn->data.data();
        T* gx = xn->grad_buffer();
        for (std::size_t i = 0; i < self.size(); ++i) gx[i] += g[i] * std::cos(v[i]);
    });
}

// ---------------------------------------------------------------------------
// matrix products

namespace detail {

template <typename T>
void require_2d(const Tensor<T>& t, const char* what) {
    if (t.ndim() != 2) throw ShapeError(std::string(what) + " must be 2-D, got " + shape_str(t.shape()));
}

} // namespace detail

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    using TN = detail::TapeNode<T>;
    detail::require_2d(a, "matmul lhs");
    detail::require_2d(b, "matmul rhs");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k)
        throw ShapeError("matmul inner dimensions disagree: " + detail::shape_str(a.shape()) +
                         " x " + detail::shape_str(b.shape()));
    std::vector<T> out(m * n);
    kernels::active<T>().matmul(a.data().data(), b.data().data(), out.data(), m, k, n, false);
    TN* an = a.node();
    TN* bn = b.node();
    return Tensor<T>::make_op({m, n}, std::move(out), {a, b}, [an, bn, m, k, n](TN& self) {
        const auto& ker = kernels::active<T>();
        const T* g = self.grad.data();
        if (an->requires_grad)
            ker.matmul_nt(g, bn->data.data(), an->grad_buffer(), m, n, k, true);
        if (bn->requires_grad)
            ker.matmul_tn(an->data.data(), g, bn->grad_buffer(), m, k, n, true);
    });
}

// a [m,k] times b[n,k] transposed -> [m,n]
template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
    using TN = detail::TapeNode<T>;
    detail::require_2d(a, "matmul_nt lhs");
    detail::require_2d(b, "matmul_nt rhs");
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
    if (b.dim(1) != k)
        throw ShapeError("matmul_nt inner dimensions disagree: " + detail::shape_str(a.shape()) +
                         " x " + detail::shape_str(b.shape()) + "^T");
    std::vector<T> out(m * n);
    kernels::active<T>().matmul_nt(a.data().data(), b.data().data(), out.data(), m, k, n, false);
    TN* an = a.node();
    TN* bn = b.node();
    return Tensor<T>::make_op({m, n}, std::move(out), {a, b}, [an, bn, m, k, n](TN& self) {
        const auto& ker = kernels::active<T>();
        const T* g = self.grad.data();
        if (an->requires_grad)
            ker.matmul(g, bn->data.data(), an->grad_buffer(), m, n, k, true);
        if (bn->requires_grad)
            ker.matmul_tn(g, an->data.data(), bn->grad_buffer(), m, n, k, true);
    });
}

// ---------------------------------------------------------------------------
// reductions, softmax, layer norm

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
    using TN = detail::TapeNode<T>;
    const T s = kernels::active<T>().sum(x.data().data(), x.size());
    TN* xn = x.node();
    return Tensor<T>::make_op({1}, {s}, {x}, [xn](TN& self) {
        if (!xn->requires_grad) return;
        const T g = self.grad[0];
        T* gx = xn->grad_buffer();
        for (std::size_t i = 0; i < xn->size(); ++i) gx[i] += g;
    });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
    using TN = detail::TapeNode<T>;
    const std::size_t n = x.size();
    const T s = kernels::active<T>().sum(x.data().data(), n) / static_cast<T>(n);
    TN* xn = x.node();
    return Tensor<T>::make_op({1}, {s}, {x}, [xn, n](TN& self) {
        if (!xn->requires_grad) return;
        const T g = self.grad[0] / static_cast<T>(n);
        T* gx = xn->grad_buffer();
        for (std::size_t i = 0; i < n; ++i) gx[i] += g;
    });
}

// Max-subtracted softmax along `axis`.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
    using TN = detail::TapeNode<T>;
    if (axis >= x.ndim())
        throw ShapeError("softmax axis " + std::to_string(axis) + " out of range for " +
                         detail::shape_str(x.shape()));
    const auto& shp = x.shape();
    const std::size_t len = shp[axis];
    std::size_t inner = 1, outer = 1;
    for (std::size_t i = axis + 1; i < shp.size(); ++i) inner *= shp[i];
    for (std::size_t i = 0; i < axis; ++i) outer *= shp[i];

    std::vector<T> out(x.size());
    const T* px = x.data().data();
    std::vector<T> lane(len);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t in = 0; in < inner; ++in) {
            const std::size_t base = o * len * inner + in;
            for (std::size_t i = 0; i < len; ++i) lane[i] = px[base + i * inner];
            const T m = kernels::active<T>().max(lane.data(), len);
            T denom = T(0);
            for (std::size_t i = 0; i < len; ++i) {
                lane[i] = std::exp(lane[i] - m);
                denom += lane[i];
            }
            const T inv = T(1) / denom;
            for (std::size_t i = 0; i < len; ++i) out[base + i * inner] = lane[i] * inv;
        }
    }
    TN* xn = x.node();
    return Tensor<T>::make_op(shp, std::move(out), {x}, [xn, len, inner, outer](TN& self) {
        if (!xn->requires_grad) return;
        const T* y = self.data.data();
        const T* g = self.grad.data();
        T* gx = xn->grad_buffer();
        for (std::size_t o = 0; o < outer; ++o) {
            for (std::size_t in = 0; in < inner; ++in) {
                const std::size_t base = o * len * inner + in;
                T dotv = T(0);
                for (std::size_t i = 0; i < len; ++i) dotv += g[base + i * inner] * y[base + i * inner];
                for (std::size_t i = 0; i < len; ++i) {
                    const std::size_t idx = base + i * inner;
                    gx[idx] += y[idx] * (g[idx] - dotv);
                }
            }
        }
    });
}

// Normalizes the last axis to zero mean / unit variance, then applies gain
// and bias.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
    using TN = detail::TapeNode<T>;
    if (eps <= T(0)) throw ContractError("layer_norm eps must be positive");
    if (x.ndim() < 1) throw ShapeError("layer_norm input must have at least one axis");
    const std::size_t d = x.shape().back();
    if (gain.size() != d || bias.size() != d)
        throw ShapeError("layer_norm gain/bias length must equal last axis (" + std::to_string(d) +
                         ")");
    const std::size_t rows = x.size() / d;
    const auto& ker = kernels::active<T>();
    std::vector<T> out(x.size());
    std::vector<T> means(rows), inv_stds(rows);
    const T* px = x.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        const T* row = px + r * d;
        const T mean = ker.sum(row, d) / static_cast<T>(d);
        T var = ker.sumsq(row, d) / static_cast<T>(d) - mean * mean;
        if (var < T(0)) var = T(0);
        const T inv_std = T(1) / std::sqrt(var + eps);
        means[r] = mean;
        inv_stds[r] = inv_std;
        ker.normalize_affine(row, out.data() + r * d, d, mean, inv_std, gain.data().data(),
                             bias.data().data());
    }
    TN* xn = x.node();
    TN* gn = gain.node();
    TN* bn = bias.node();
    return Tensor<T>::make_op(
        x.shape(), std::move(out), {x, gain, bias},
        [xn, gn, bn, d, rows, means = std::move(means), inv_stds = std::move(inv_stds)](TN& self) {
            const T* g = self.grad.data();
            const T* px = xn->data.data();
            const T* pg = gn->data.data();
            std::vector<T> xhat(d), gy(d);
            T* gx = xn->requires_grad ? xn->grad_buffer() : nullptr;
            T* ggain = gn->requires_grad ? gn->grad_buffer() : nullptr;
            T* gbias = bn->requires_grad ? bn->grad_buffer() : nullptr;
            for (std::size_t r = 0; r < rows; ++r) {
                const T* row = px + r * d;
                const T* grow = g + r * d;
                const T mean = means[r], inv_std = inv_stds[r];
                T sum_gy = T(0), sum_gy_xhat = T(0);
                for (std::size_t i = 0; i < d; ++i) {
                    xhat[i] = (row[i] - mean) * inv_std;
                    gy[i] = grow[i] * pg[i];
                    sum_gy += gy[i];
                    sum_gy_xhat += gy[i] * xhat[i];
                }
                if (ggain)
                    for (std::size_t i = 0; i < d; ++i) ggain[i] += grow[i] * xhat[i];
                if (gbias)
                    for (std::size_t i = 0; i < d; ++i) gbias[i] += grow[i];
                if (gx) {
                    const T inv_d = T(1) / static_cast<T>(d);
                    for (std::size_t i = 0; i < d; ++i)
                        gx[r * d + i] +=
                            inv_std * (gy[i] - inv_d * sum_gy - xhat[i] * inv_d * sum_gy_xhat);
                }
            }
        });
}

// ---------------------------------------------------------------------------
// slicing / concatenation / gather

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& x, std::size_t r0, std::size_t r1) {
    using TN = detail::TapeNode<T>;
    detail::require_2d(x, "slice_rows input");
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    if (r0 >= r1 || r1 > rows) throw ShapeError("slice_rows range invalid");
    std::vector<T> out((r1 - r0) * cols);
    std::copy_n(x.data().data() + r0 * cols, out.size(), out.data());
    TN* xn = x.node();
    return Tensor<T>::make_op({r1 - r0, cols}, std::move(out), {x}, [xn, r0, cols](TN& self) {
        if (!xn->requires_grad) return;
        kernels::active<T>().add(xn->grad_buffer() + r0 * cols, self.grad.data(),
                                 xn->grad_buffer() + r0 * cols, self.size());
    });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t c0, std::size_t c1) {
    using TN = detail::TapeNode<T>;
    detail::require_2d(x, "slice_cols input");
    const std::size_t rows = x.dim(0), cols = x.dim(1);
    if (c0 >= c1 || c1 > cols) throw ShapeError("slice_cols range invalid");
    const std::size_t w = c1 - c0;
    std::vector<T> out(rows * w);
    const T* px = x.data().data();
    for (std::size_t r = 0; r < rows; ++r)
        std::copy_n(px + r * cols + c0, w, out.data() + r * w);
    TN* xn = x.node();
    return Tensor<T>::make_op({rows, w}, std::move(out), {x}, [xn, c0, cols, w, rows](TN& self) {
        if (!xn->requires_grad) return;
        const T* g = self.grad.data();
        T* gx = xn->grad_buffer();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t i = 0; i < w; ++i) gx[r * cols + c0 + i] += g[r * w + i];
    });
}

template <typename T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b) {
    using TN = detail::TapeNode<T>;
    detail::require_2d(a, "concat_rows lhs");
    detail::require_2d(b, "concat_rows rhs");
    if (a.dim(1) != b.dim(1)) throw ShapeError("concat_rows column mismatch");
    const std::size_t cols = a.dim(1);
    std::vector<T> out(a.size() + b.size());
    std::copy_n(a.data().data(), a.size(), out.data());
    std::copy_n(b.data().data(), b.size(), out.data() + a.size());
    TN* an = a.node();
    TN* bn = b.node();
    const std::size_t na = a.size();
    return Tensor<T>::make_op({a.dim(0) + b.dim(0), cols}, std::move(out), {a, b},
                              [an, bn, na](TN& self) {
                                  const auto& k = kernels::active<T>();
                                  const T* g = self.grad.data();
                                  if (an->requires_grad)
                                      k.add(an->grad_buffer(), g, an->grad_buffer(), na);
                                  if (bn->requires_grad)
                                      k.add(bn->grad_buffer(), g + na, bn->grad_buffer(),
                                            self.size() - na);
                              });
}

template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
    using TN = detail::TapeNode<T>;
    detail::require_2d(a, "concat_cols lhs");
    detail::require_2d(b, "concat_cols rhs");
    if (a.dim(0) != b.dim(0)) throw ShapeError("concat_cols row mismatch");
    const std::size_t rows = a.dim(0), ca = a.dim(1), cb = b.dim(1);
    std::vector<T> out(rows * (ca + cb));
    const T* pa = a.data().data();
    const T* pb = b.data().data();
    for (std::size_t r = 0; r < rows; ++r) {
        std::copy_n(pa + r * ca, ca, out.data() + r * (ca + cb));
        std::copy_n(pb + r * cb, cb, out.data() + r * (ca + cb) + ca);
    }
    TN* an = a.node();
    TN* bn = b.node();
    return Tensor<T>::make_op({rows, ca + cb}, std::move(out), {a, b},
                              [an, bn, rows, ca, cb](TN& self) {
                                  const T* g = self.grad.data();
                                  const std::size_t cw = ca + cb;
                                  if (an->requires_grad) {
                                      T* ga = an->grad_buffer();
                                      for (std::size_t r = 0; r < rows; ++r)
                                          for (std::size_t i = 0; i < ca; ++i)
                                              ga[r * ca + i] += g[r * cw + i];
                                  }
                                  if (bn->requires_grad) {
                                      T* gb = bn->grad_buffer();
                                      for (std::size_t r = 0; r < rows; ++r)
                                          for (std::size_t i = 0; i < cb; ++i)
                                              gb[r * cb + i] += g[r * cw + ca + i];
                                  }
                              });
}

// Same data, new shape (row-major order preserved).
template <typename T>
Tensor<T> reshape(const Tensor<T>& x, std::vector<std::size_t> new_shape) {
    using TN = detail::TapeNode<T>;
    if (detail::shape_numel(new_shape) != x.size())
        throw ShapeError("reshape to " + detail::shape_str(new_shape) + " changes element count");
    std::vector<T> out(x.data().begin(), x.data().end());
    TN* xn = x.node();
    return Tensor<T>::make_op(std::move(new_shape), std::move(out), {x}, [xn](TN& self) {
        if (!xn->requires_grad) return;
        kernels::active<T>().add(xn->grad_buffer(), self.grad.data(), xn->grad_buffer(),
                                 self.size());
    });
}

// Row lookup from an embedding table; index -1 selects a zero row and routes
// no gradient.
template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, const std::vector<int>& indices) {
    using TN = detail::TapeNode<T>;
    detail::require_2d(table, "gather_rows table");
    const std::size_t v = table.dim(0), d = table.dim(1);
    std::vector<T> out(indices.size() * d, T(0));
    const T* pt = table.data().data();
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const int idx = indices[i];
        if (idx < 0) continue;
        if (static_cast<std::size_t>(idx) >= v)
            throw ContractError("gather_rows index " + std::to_string(idx) + " out of vocabulary " +
                                std::to_string(v));
        std::copy_n(pt + static_cast<std::size_t>(idx) * d, d, out.data() + i * d);
    }
    TN* tn = table.node();
    return Tensor<T>::make_op({indices.size(), d}, std::move(out), {table},
                              [tn, indices, d](TN& self) {
                                  if (!tn->requires_grad) return;
                                  const T* g = self.grad.data();
                                  T* gt = tn->grad_buffer();
                                  for (std::size_t i = 0; i < indices.size(); ++i) {
                                      if (indices[i] < 0) continue;
                                      kernels::active<T>().axpy(
                                          T(1), g + i * d,
                                          gt + static_cast<std::size_t>(indices[i]) * d, d);
                                  }
                              });
}

// ---------------------------------------------------------------------------
// numeric gradient check

// Max relative disagreement between the tape gradient and central finite
// differences of a scalar-valued function, evaluated coordinate by
// coordinate. The finite-difference side is the independent oracle.
template <typename T, typename Fn>
double grad_check(Fn&& f, Tensor<T>& x, double eps = 1e-5) {
    if (eps < 1e-7 || eps > 1e-3) throw ContractError("grad_check eps outside [1e-7, 1e-3]");
    x.set_requires_grad(true);
    x.zero_grad();
    Tensor<T> y = f(x);
    if (y.size() != 1) throw ContractError("grad_check expects a scalar-valued function");
    backward(y);
    std::vector<T> analytic(x.grad().begin(), x.grad().end());

    double worst = 0.0;
    NoGradGuard ng;
    auto px = x.data();
    for (std::size_t i = 0; i < px.size(); ++i) {
        const T saved = px[i];
        px[i] = saved + static_cast<T>(eps);
        const double up = static_cast<double>(f(x).item());
        px[i] = saved - static_cast<T>(eps);
        const double down = static_cast<double>(f(x).item());
        px[i] = saved;
        if (!std::isfinite(up) || !std::isfinite(down))
            throw NumericError("non-finite value during finite-difference probe");
        const double cd = (up - down) / (2.0 * eps);
        const double a = static_cast<double>(analytic[i]);
        const double denom = std::max({std::abs(a), std::abs(cd), 1e-8});
        worst = std::max(worst, std::abs(a - cd) / denom);
    }
    return worst;
}

template <typename T>
void assert_all_finite(const Tensor<T>& t, const std::string& context) {
    if (!t.all_finite()) throw NumericError("non-finite values in " + context);
}

} // namespace flowsynth
