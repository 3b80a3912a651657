#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "octpredict/gemm.hpp"
#include "octpredict/tensor.hpp"

namespace oct {

enum class Mode { Train, Eval };

// Per-channel running statistics for batchnorm2d. The tensors are registered
// as (non-trainable) model buffers so they travel with the weights.
template <class T>
struct BatchNormState {
    TensorPtr<T> running_mean;
    TensorPtr<T> running_var;
    T momentum = T(0.1);
    T eps = T(1e-5);

    explicit BatchNormState(std::int64_t channels)
        : running_mean(make_tensor<T>(std::vector<std::int64_t>{channels}, T(0))),
          running_var(make_tensor<T>(std::vector<std::int64_t>{channels}, T(1))) {}
};

namespace ad {

template <class T>
struct Node;

template <class T>
using NodePtr = std::shared_ptr<Node<T>>;

template <class T>
struct Node {
    std::vector<std::int64_t> shape;
    std::vector<T> value;   // owned activation; empty for parameter leaves
    TensorPtr<T> leaf;      // set for leaves; value then lives in leaf->data
    bool requires_grad = false;
    std::vector<T> grad_store;
    std::vector<NodePtr<T>> parents;
    std::function<void(Node<T>&)> backprop;

    const std::vector<T>& val() const { return leaf ? leaf->data : value; }

    std::int64_t numel() const { return static_cast<std::int64_t>(val().size()); }

    // Leaf gradients accumulate straight into the tensor's grad buffer, so
    // repeated backward calls implement gradient accumulation.
    std::vector<T>& grad() {
        if (leaf) {
            leaf->ensure_grad();
            return leaf->grad;
        }
        if (grad_store.size() != val().size()) grad_store.assign(val().size(), T(0));
        return grad_store;
    }
};

// Handle to a node of a dynamically built computation graph.
template <class T>
class Var {
public:
    Var() = default;
    explicit Var(NodePtr<T> n) : n_(std::move(n)) {}

    static Var leaf(TensorPtr<T> t) {
        auto n = std::make_shared<Node<T>>();
        n->shape = t->shape;
        n->leaf = std::move(t);
        n->requires_grad = n->leaf->requires_grad;
        return Var(n);
    }

    static Var constant(std::vector<std::int64_t> shape, std::vector<T> value) {
        auto n = std::make_shared<Node<T>>();
        if (static_cast<std::int64_t>(value.size()) != shape_numel(shape))
            throw std::invalid_argument("constant: value length does not match shape");
        n->shape = std::move(shape);
        n->value = std::move(value);
        return Var(n);
    }

    bool valid() const { return n_ != nullptr; }
    const std::vector<std::int64_t>& shape() const { return n_->shape; }
    const std::vector<T>& val() const { return n_->val(); }
    bool requires_grad() const { return n_->requires_grad; }
    NodePtr<T> node() const { return n_; }

    T scalar() const {
        if (n_->numel() != 1) throw std::logic_error("scalar() on tensor with numel != 1");
        return n_->val()[0];
    }

    // Reverse pass from a scalar root; accumulates into leaf tensors' grads.
    void backward() const {
        if (n_->numel() != 1) throw std::logic_error("backward() requires a scalar root");
        std::vector<Node<T>*> order;
        std::unordered_set<Node<T>*> seen;
        std::vector<std::pair<Node<T>*, std::size_t>> stack;
        stack.emplace_back(n_.get(), 0);
        seen.insert(n_.get());
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next < node->parents.size()) {
                Node<T>* p = node->parents[next++].get();
                if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
            } else {
                order.push_back(node);
                stack.pop_back();
            }
        }
        n_->grad().assign(1, T(1));
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node<T>* node = *it;
            if (node->backprop) node->backprop(*node);
        }
    }

private:
    NodePtr<T> n_;
};

namespace detail {

template <class T>
NodePtr<T> make_op(std::vector<std::int64_t> shape, std::vector<T> value, std::vector<NodePtr<T>> parents,
                   std::function<void(Node<T>&)> backprop) {
    auto n = std::make_shared<Node<T>>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->parents = std::move(parents);
    bool rg = false;
    for (const auto& p : n->parents) rg = rg || p->requires_grad;
    n->requires_grad = rg;
    if (rg) n->backprop = std::move(backprop);
    return n;
}

inline void check_4d(const std::vector<std::int64_t>& s, const char* op) {
    if (s.size() != 4)
        throw std::invalid_argument(std::string(op) + ": expected a 4-d batch x channels x height x width input, got " +
                                    shape_str(s));
}

template <class T>
T stable_sigmoid(T x) {
    if (x >= T(0)) {
        const T e = std::exp(-x);
        return T(1) / (T(1) + e);
    }
    const T e = std::exp(x);
    return e / (T(1) + e);
}

// The valid output-x range [x0, x1) for which ix = x*stride - pad + j stays
// inside [0, w); lets the copy loops run branch-free.
inline void valid_x_range(std::int64_t w, std::int64_t stride, std::int64_t pad, std::int64_t j, std::int64_t wo,
                          std::int64_t& x0, std::int64_t& x1) {
    // smallest x with x*stride - pad + j >= 0
    x0 = std::max<std::int64_t>(0, (pad - j + stride - 1) / stride);
    // first x with x*stride - pad + j >= w
    x1 = std::min(wo, (w - 1 + pad - j) / stride + 1);
    if (x1 < x0) x1 = x0;
}

// Scatter a column buffer (K x B*P) back into image gradients.
template <class T>
void col2im_accumulate(const T* col, T* dx, std::int64_t b, std::int64_t c, std::int64_t h, std::int64_t w,
                       std::int64_t kh, std::int64_t kw, std::int64_t stride, std::int64_t pad, std::int64_t ho,
                       std::int64_t wo, std::int64_t batch) {
    const std::int64_t p = ho * wo;
    const std::int64_t bp = batch * p;
    (void)b;
    for (std::int64_t ci = 0; ci < c; ++ci) {
        for (std::int64_t i = 0; i < kh; ++i) {
            std::int64_t y0, y1;
            valid_x_range(h, stride, pad, i, ho, y0, y1);
            for (std::int64_t j = 0; j < kw; ++j) {
                std::int64_t x0, x1;
                valid_x_range(w, stride, pad, j, wo, x0, x1);
                const T* row = col + ((ci * kh + i) * kw + j) * bp;
                for (std::int64_t bi = 0; bi < batch; ++bi) {
                    T* img = dx + (bi * c + ci) * h * w;
                    const T* src = row + bi * p;
                    for (std::int64_t y = y0; y < y1; ++y) {
                        T* drow = img + (y * stride - pad + i) * w - pad + j;
                        const T* srow = src + y * wo;
                        if (stride == 1)
                            for (std::int64_t x = x0; x < x1; ++x) drow[x] += srow[x];
                        else
                            for (std::int64_t x = x0; x < x1; ++x) drow[x * stride] += srow[x];
                    }
                }
            }
        }
    }
}

template <class T>
void im2col(const T* in, T* col, std::int64_t c, std::int64_t h, std::int64_t w, std::int64_t kh, std::int64_t kw,
            std::int64_t stride, std::int64_t pad, std::int64_t ho, std::int64_t wo, std::int64_t batch) {
    const std::int64_t p = ho * wo;
    const std::int64_t bp = batch * p;
    for (std::int64_t ci = 0; ci < c; ++ci) {
        for (std::int64_t i = 0; i < kh; ++i) {
            std::int64_t y0, y1;
            valid_x_range(h, stride, pad, i, ho, y0, y1);
            for (std::int64_t j = 0; j < kw; ++j) {
                std::int64_t x0, x1;
                valid_x_range(w, stride, pad, j, wo, x0, x1);
                T* row = col + ((ci * kh + i) * kw + j) * bp;
                for (std::int64_t bi = 0; bi < batch; ++bi) {
                    const T* img = in + (bi * c + ci) * h * w;
                    T* dst = row + bi * p;
                    if (y0 > 0) std::fill(dst, dst + y0 * wo, T(0));
                    for (std::int64_t y = y0; y < y1; ++y) {
                        T* drow = dst + y * wo;
                        const T* srow = img + (y * stride - pad + i) * w - pad + j;
                        if (x0 > 0) std::fill(drow, drow + x0, T(0));
                        if (stride == 1)
                            std::copy(srow + x0, srow + x1, drow + x0);
                        else
                            for (std::int64_t x = x0; x < x1; ++x) drow[x] = srow[x * stride];
                        if (x1 < wo) std::fill(drow + x1, drow + wo, T(0));
                    }
                    if (y1 < ho) std::fill(dst + y1 * wo, dst + ho * wo, T(0));
                }
            }
        }
    }
}

}  // namespace detail

// x: B x C x H x W, w: O x C x kh x kw. Zero padding, square stride.
template <class T>
Var<T> conv2d(const Var<T>& x, const Var<T>& w, std::int64_t stride, std::int64_t pad) {
    detail::check_4d(x.shape(), "conv2d");
    if (w.shape().size() != 4)
        throw std::invalid_argument("conv2d: kernel must be 4-d out x in x kh x kw, got " + shape_str(w.shape()));
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
    if (pad < 0) throw std::invalid_argument("conv2d: padding must be >= 0");
    const std::int64_t b = x.shape()[0], c = x.shape()[1], h = x.shape()[2], wd = x.shape()[3];
    const std::int64_t o = w.shape()[0], kc = w.shape()[1], kh = w.shape()[2], kw = w.shape()[3];
    if (kc != c)
        throw std::invalid_argument("conv2d: input channel dimension " + std::to_string(c) +
                                    " does not match kernel channel dimension " + std::to_string(kc));
    const std::int64_t ho = (h + 2 * pad - kh) / stride + 1;
    const std::int64_t wo = (wd + 2 * pad - kw) / stride + 1;
    if (h + 2 * pad < kh || wd + 2 * pad < kw)
        throw std::invalid_argument("conv2d: spatial input " + shape_str(x.shape()) + " smaller than kernel " +
                                    shape_str(w.shape()));

    const std::int64_t kcol = c * kh * kw;
    const std::int64_t p = ho * wo;
    const std::int64_t bp = b * p;
    auto col = std::make_shared<std::vector<T>>(static_cast<std::size_t>(kcol * bp));
    detail::im2col(x.val().data(), col->data(), c, h, wd, kh, kw, stride, pad, ho, wo, b);

    // yflat: O x (B*P), then scatter to B x O x P
    std::vector<T> yflat(static_cast<std::size_t>(o * bp));
    gemm(false, false, o, bp, kcol, T(1), w.val().data(), col->data(), T(0), yflat.data());
    std::vector<T> y(static_cast<std::size_t>(b * o * p));
    for (std::int64_t oi = 0; oi < o; ++oi)
        for (std::int64_t bi = 0; bi < b; ++bi)
            std::copy_n(yflat.data() + oi * bp + bi * p, p, y.data() + (bi * o + oi) * p);

    auto xn = x.node();
    auto wn = w.node();
    auto backprop = [xn, wn, col, b, c, h, wd, o, kh, kw, stride, pad, ho, wo, kcol, p, bp](Node<T>& self) {
        std::vector<T> dyflat(static_cast<std::size_t>(o * bp));
        const std::vector<T>& dy = self.grad();
        for (std::int64_t oi = 0; oi < o; ++oi)
            for (std::int64_t bi = 0; bi < b; ++bi)
                std::copy_n(dy.data() + (bi * o + oi) * p, p, dyflat.data() + oi * bp + bi * p);
        if (wn->requires_grad) {
            gemm(false, true, o, kcol, bp, T(1), dyflat.data(), col->data(), T(1), wn->grad().data());
        }
        if (xn->requires_grad) {
            std::vector<T> dcol(static_cast<std::size_t>(kcol * bp));
            gemm(true, false, kcol, bp, o, T(1), wn->val().data(), dyflat.data(), T(0), dcol.data());
            detail::col2im_accumulate(dcol.data(), xn->grad().data(), b, c, h, wd, kh, kw, stride, pad, ho, wo, b);
        }
    };
    return Var<T>(detail::make_op<T>({b, o, ho, wo}, std::move(y), {xn, wn}, std::move(backprop)));
}

// Train mode normalizes with batch statistics (biased variance) and updates
// the running estimates; eval mode uses running statistics only.
template <class T>
Var<T> batchnorm2d(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, BatchNormState<T>& state, Mode mode,
                   bool update_running = true) {
    detail::check_4d(x.shape(), "batchnorm2d");
    const std::int64_t b = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    if (gamma.shape() != std::vector<std::int64_t>{c} || beta.shape() != std::vector<std::int64_t>{c})
        throw std::invalid_argument("batchnorm2d: scale/shift must have shape [" + std::to_string(c) + "]");
    if (static_cast<std::int64_t>(state.running_mean->data.size()) != c)
        throw std::invalid_argument("batchnorm2d: running statistics channel dimension mismatch");
    const std::int64_t hw = h * w;
    const std::int64_t n = b * hw;
    if (n == 0) throw std::invalid_argument("batchnorm2d: empty batch");

    auto mean = std::make_shared<std::vector<T>>(c, T(0));
    auto inv_std = std::make_shared<std::vector<T>>(c, T(0));
    const std::vector<T>& xv = x.val();
    if (mode == Mode::Train) {
        for (std::int64_t ci = 0; ci < c; ++ci) {
            // single pass over the channel, accumulated wide for stability
            double s = 0, sq = 0;
            for (std::int64_t bi = 0; bi < b; ++bi) {
                const T* src = xv.data() + (bi * c + ci) * hw;
                for (std::int64_t i = 0; i < hw; ++i) {
                    const double xi = src[i];
                    s += xi;
                    sq += xi * xi;
                }
            }
            const T m = static_cast<T>(s / static_cast<double>(n));
            const T v = static_cast<T>(std::max(0.0, sq / static_cast<double>(n) - (s / n) * (s / n)));
            (*mean)[ci] = m;
            (*inv_std)[ci] = T(1) / std::sqrt(v + state.eps);
            if (update_running) {
                state.running_mean->data[ci] = (T(1) - state.momentum) * state.running_mean->data[ci] + state.momentum * m;
                state.running_var->data[ci] = (T(1) - state.momentum) * state.running_var->data[ci] + state.momentum * v;
            }
        }
    } else {
        for (std::int64_t ci = 0; ci < c; ++ci) {
            (*mean)[ci] = state.running_mean->data[ci];
            (*inv_std)[ci] = T(1) / std::sqrt(state.running_var->data[ci] + state.eps);
        }
    }

    auto xhat = std::make_shared<std::vector<T>>(xv.size());
    std::vector<T> y(xv.size());
    const std::vector<T>& g = gamma.val();
    const std::vector<T>& be = beta.val();
    for (std::int64_t bi = 0; bi < b; ++bi) {
        for (std::int64_t ci = 0; ci < c; ++ci) {
            const T* src = xv.data() + (bi * c + ci) * hw;
            T* xh = xhat->data() + (bi * c + ci) * hw;
            T* dst = y.data() + (bi * c + ci) * hw;
            const T m = (*mean)[ci], is = (*inv_std)[ci], gg = g[ci], bb = be[ci];
            for (std::int64_t i = 0; i < hw; ++i) {
                xh[i] = (src[i] - m) * is;
                dst[i] = gg * xh[i] + bb;
            }
        }
    }

    auto xn = x.node();
    auto gn = gamma.node();
    auto bn = beta.node();
    const bool train = (mode == Mode::Train);
    auto backprop = [xn, gn, bn, xhat, inv_std, b, c, hw, n, train](Node<T>& self) {
        const std::vector<T>& dy = self.grad();
        for (std::int64_t ci = 0; ci < c; ++ci) {
            T sum_dy = 0, sum_dy_xhat = 0;
            for (std::int64_t bi = 0; bi < b; ++bi) {
                const T* dyp = dy.data() + (bi * c + ci) * hw;
                const T* xh = xhat->data() + (bi * c + ci) * hw;
                for (std::int64_t i = 0; i < hw; ++i) {
                    sum_dy += dyp[i];
                    sum_dy_xhat += dyp[i] * xh[i];
                }
            }
            if (gn->requires_grad) gn->grad()[ci] += sum_dy_xhat;
            if (bn->requires_grad) bn->grad()[ci] += sum_dy;
            if (xn->requires_grad) {
                const T gg = gn->val()[ci];
                const T is = (*inv_std)[ci];
                for (std::int64_t bi = 0; bi < b; ++bi) {
                    const T* dyp = dy.data() + (bi * c + ci) * hw;
                    const T* xh = xhat->data() + (bi * c + ci) * hw;
                    T* dx = xn->grad().data() + (bi * c + ci) * hw;
                    if (train) {
                        const T inv_n = T(1) / static_cast<T>(n);
                        for (std::int64_t i = 0; i < hw; ++i)
                            dx[i] += gg * is * (dyp[i] - inv_n * sum_dy - inv_n * xh[i] * sum_dy_xhat);
                    } else {
                        for (std::int64_t i = 0; i < hw; ++i) dx[i] += gg * is * dyp[i];
                    }
                }
            }
        }
    };
    return Var<T>(detail::make_op<T>(x.shape(), std::move(y), {xn, gn, bn}, std::move(backprop)));
}

template <class T>
Var<T> maxpool2d(const Var<T>& x, std::int64_t kernel, std::int64_t stride, std::int64_t pad = 0) {
    detail::check_4d(x.shape(), "maxpool2d");
    if (kernel < 1 || stride < 1 || pad < 0) throw std::invalid_argument("maxpool2d: bad kernel/stride/padding");
    const std::int64_t b = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    if (h + 2 * pad < kernel || w + 2 * pad < kernel)
        throw std::invalid_argument("maxpool2d: spatial input " + shape_str(x.shape()) + " smaller than window " +
                                    std::to_string(kernel));
    const std::int64_t ho = (h + 2 * pad - kernel) / stride + 1;
    const std::int64_t wo = (w + 2 * pad - kernel) / stride + 1;

    const std::vector<T>& xv = x.val();
    std::vector<T> y(static_cast<std::size_t>(b * c * ho * wo));
    auto argmax = std::make_shared<std::vector<std::int64_t>>(y.size());
    std::int64_t out = 0;
    if (kernel == 2 && stride == 2 && pad == 0 && h % 2 == 0 && w % 2 == 0) {
        for (std::int64_t bc = 0; bc < b * c; ++bc) {
            const std::int64_t base = bc * h * w;
            const T* img = xv.data() + base;
            for (std::int64_t yo = 0; yo < ho; ++yo) {
                const T* r0 = img + 2 * yo * w;
                const T* r1 = r0 + w;
                const std::int64_t row_base = base + 2 * yo * w;
                for (std::int64_t xo = 0; xo < wo; ++xo, ++out) {
                    const std::int64_t x2 = 2 * xo;
                    T best = r0[x2];
                    std::int64_t bi2 = row_base + x2;
                    if (r0[x2 + 1] > best) { best = r0[x2 + 1]; bi2 = row_base + x2 + 1; }
                    if (r1[x2] > best) { best = r1[x2]; bi2 = row_base + w + x2; }
                    if (r1[x2 + 1] > best) { best = r1[x2 + 1]; bi2 = row_base + w + x2 + 1; }
                    y[out] = best;
                    (*argmax)[out] = bi2;
                }
            }
        }
    } else {
        for (std::int64_t bc = 0; bc < b * c; ++bc) {
            const T* img = xv.data() + bc * h * w;
            const std::int64_t base = bc * h * w;
            for (std::int64_t yo = 0; yo < ho; ++yo) {
                for (std::int64_t xo = 0; xo < wo; ++xo, ++out) {
                    T best = -std::numeric_limits<T>::infinity();
                    std::int64_t best_idx = -1;
                    for (std::int64_t i = 0; i < kernel; ++i) {
                        const std::int64_t iy = yo * stride - pad + i;
                        if (iy < 0 || iy >= h) continue;
                        for (std::int64_t j = 0; j < kernel; ++j) {
                            const std::int64_t ix = xo * stride - pad + j;
                            if (ix < 0 || ix >= w) continue;
                            const T v = img[iy * w + ix];
                            if (v > best) {
                                best = v;
                                best_idx = base + iy * w + ix;
                            }
                        }
                    }
                    y[out] = best;
                    (*argmax)[out] = best_idx;
                }
            }
        }
    }

    auto xn = x.node();
    auto backprop = [xn, argmax](Node<T>& self) {
        const std::vector<T>& dy = self.grad();
        std::vector<T>& dx = xn->grad();
        for (std::size_t i = 0; i < dy.size(); ++i)
            if ((*argmax)[i] >= 0) dx[(*argmax)[i]] += dy[i];
    };
    return Var<T>(detail::make_op<T>({b, c, ho, wo}, std::move(y), {xn}, std::move(backprop)));
}

// B x C x H x W -> B x C
template <class T>
Var<T> global_avg_pool(const Var<T>& x) {
    detail::check_4d(x.shape(), "global_avg_pool");
    const std::int64_t b = x.shape()[0], c = x.shape()[1], hw = x.shape()[2] * x.shape()[3];
    if (hw == 0) throw std::invalid_argument("global_avg_pool: empty spatial extent");
    const std::vector<T>& xv = x.val();
    std::vector<T> y(static_cast<std::size_t>(b * c));
    for (std::int64_t i = 0; i < b * c; ++i) {
        T s = 0;
        const T* src = xv.data() + i * hw;
        for (std::int64_t j = 0; j < hw; ++j) s += src[j];
        y[i] = s / static_cast<T>(hw);
    }
    auto xn = x.node();
    auto backprop = [xn, b, c, hw](Node<T>& self) {
        const std::vector<T>& dy = self.grad();
        std::vector<T>& dx = xn->grad();
        for (std::int64_t i = 0; i < b * c; ++i) {
            const T g = dy[i] / static_cast<T>(hw);
            T* dst = dx.data() + i * hw;
            for (std::int64_t j = 0; j < hw; ++j) dst[j] += g;
        }
    };
    return Var<T>(detail::make_op<T>({b, c}, std::move(y), {xn}, std::move(backprop)));
}

// x: B x F, w: O x F, bias: O -> B x O
template <class T>
Var<T> dense(const Var<T>& x, const Var<T>& w, const Var<T>& bias) {
    if (x.shape().size() != 2) throw std::invalid_argument("dense: expected 2-d input, got " + shape_str(x.shape()));
    const std::int64_t b = x.shape()[0], f = x.shape()[1];
    if (w.shape().size() != 2 || w.shape()[1] != f)
        throw std::invalid_argument("dense: weight shape " + shape_str(w.shape()) + " incompatible with input feature dimension " +
                                    std::to_string(f));
    const std::int64_t o = w.shape()[0];
    if (bias.shape() != std::vector<std::int64_t>{o})
        throw std::invalid_argument("dense: bias must have shape [" + std::to_string(o) + "]");

    std::vector<T> y(static_cast<std::size_t>(b * o));
    gemm(false, true, b, o, f, T(1), x.val().data(), w.val().data(), T(0), y.data());
    for (std::int64_t bi = 0; bi < b; ++bi)
        for (std::int64_t oi = 0; oi < o; ++oi) y[bi * o + oi] += bias.val()[oi];

    auto xn = x.node();
    auto wn = w.node();
    auto bn = bias.node();
    auto backprop = [xn, wn, bn, b, f, o](Node<T>& self) {
        const std::vector<T>& dy = self.grad();
        if (wn->requires_grad) gemm(true, false, o, f, b, T(1), dy.data(), xn->val().data(), T(1), wn->grad().data());
        if (bn->requires_grad) {
            std::vector<T>& db = bn->grad();
            for (std::int64_t bi = 0; bi < b; ++bi)
                for (std::int64_t oi = 0; oi < o; ++oi) db[oi] += dy[bi * o + oi];
        }
        if (xn->requires_grad) gemm(false, false, b, f, o, T(1), dy.data(), wn->val().data(), T(1), xn->grad().data());
    };
    return Var<T>(detail::make_op<T>({b, o}, std::move(y), {xn, wn, bn}, std::move(backprop)));
}

// Subgradient at 0 is 0.
template <class T>
Var<T> relu(const Var<T>& x) {
    const std::vector<T>& xv = x.val();
    std::vector<T> y(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) y[i] = xv[i] > T(0) ? xv[i] : T(0);
    auto xn = x.node();
    auto backprop = [xn](Node<T>& self) {
        const std::vector<T>& dy = self.grad();
        std::vector<T>& dx = xn->grad();
        const std::vector<T>& xv = xn->val();
        for (std::size_t i = 0; i < dy.size(); ++i)
            if (xv[i] > T(0)) dx[i] += dy[i];
    };
    return Var<T>(detail::make_op<T>(x.shape(), std::move(y), {xn}, std::move(backprop)));
}

template <class T>
Var<T> sigmoid(const Var<T>& x) {
    const std::vector<T>& xv = x.val();
    std::vector<T> y(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) y[i] = detail::stable_sigmoid(xv[i]);
    auto xn = x.node();
    auto backprop = [xn](Node<T>& self) {
        const std::vector<T>& dy = self.grad();
        const std::vector<T>& sv = self.val();
        std::vector<T>& dx = xn->grad();
        for (std::size_t i = 0; i < dy.size(); ++i) dx[i] += dy[i] * sv[i] * (T(1) - sv[i]);
    };
    return Var<T>(detail::make_op<T>(x.shape(), std::move(y), {xn}, std::move(backprop)));
}

template <class T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const std::vector<T>& av = a.val();
    const std::vector<T>& bv = b.val();
    std::vector<T> y(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) y[i] = av[i] + bv[i];
    auto an = a.node();
    auto bn = b.node();
    auto backprop = [an, bn](Node<T>& self) {
        const std::vector<T>& dy = self.grad();
        if (an->requires_grad) {
            std::vector<T>& da = an->grad();
            for (std::size_t i = 0; i < dy.size(); ++i) da[i] += dy[i];
        }
        if (bn->requires_grad) {
            std::vector<T>& db = bn->grad();
            for (std::size_t i = 0; i < dy.size(); ++i) db[i] += dy[i];
        }
    };
    return Var<T>(detail::make_op<T>(a.shape(), std::move(y), {an, bn}, std::move(backprop)));
}

template <class T>
Var<T> scale(const Var<T>& a, T s) {
    const std::vector<T>& av = a.val();
    std::vector<T> y(av.size());
    for (std::size_t i = 0; i < av.size(); ++i) y[i] = s * av[i];
    auto an = a.node();
    auto backprop = [an, s](Node<T>& self) {
        const std::vector<T>& dy = self.grad();
        std::vector<T>& da = an->grad();
        for (std::size_t i = 0; i < dy.size(); ++i) da[i] += s * dy[i];
    };
    return Var<T>(detail::make_op<T>(a.shape(), std::move(y), {an}, std::move(backprop)));
}

template <class T>
Var<T> sum(const Var<T>& x) {
    const std::vector<T>& xv = x.val();
    T s = 0;
    for (T v : xv) s += v;
    auto xn = x.node();
    auto backprop = [xn](Node<T>& self) {
        const T g = self.grad()[0];
        std::vector<T>& dx = xn->grad();
        for (auto& v : dx) v += g;
    };
    return Var<T>(detail::make_op<T>({}, {s}, {xn}, std::move(backprop)));
}

// Mean over the batch of -[y log s(x) + (1-y) log(1-s(x))] in the stable
// max(x,0) - x*y + log(1 + exp(-|x|)) form.
template <class T>
Var<T> bce_with_logits(const Var<T>& logits, const std::vector<T>& targets) {
    const std::vector<T>& xv = logits.val();
    if (xv.size() != targets.size())
        throw std::invalid_argument("bce_with_logits: logits count " + std::to_string(xv.size()) +
                                    " does not match target count " + std::to_string(targets.size()));
    if (xv.empty()) throw std::invalid_argument("bce_with_logits: empty batch");
    for (T t : targets)
        if (t != T(0) && t != T(1)) throw std::invalid_argument("bce_with_logits: targets must be 0 or 1");
    T loss = 0;
    for (std::size_t i = 0; i < xv.size(); ++i) {
        const T x = xv[i];
        loss += std::max(x, T(0)) - x * targets[i] + std::log1p(std::exp(-std::abs(x)));
    }
    loss /= static_cast<T>(xv.size());

    auto xn = logits.node();
    auto tg = std::make_shared<std::vector<T>>(targets);
    auto backprop = [xn, tg](Node<T>& self) {
        const T g = self.grad()[0] / static_cast<T>(tg->size());
        const std::vector<T>& xv = xn->val();
        std::vector<T>& dx = xn->grad();
        for (std::size_t i = 0; i < xv.size(); ++i) dx[i] += g * (detail::stable_sigmoid(xv[i]) - (*tg)[i]);
    };
    return Var<T>(detail::make_op<T>({}, {loss}, {xn}, std::move(backprop)));
}

// Row-wise 2 - 2 <p,z>/(|p||z|), averaged over the batch. z is a constant
// (the stop-gradient target projection).
template <class T>
Var<T> cosine_prediction_loss(const Var<T>& p, const std::vector<T>& z) {
    if (p.shape().size() != 2) throw std::invalid_argument("cosine_prediction_loss: expected 2-d predictions");
    const std::int64_t b = p.shape()[0], d = p.shape()[1];
    if (static_cast<std::int64_t>(z.size()) != b * d)
        throw std::invalid_argument("cosine_prediction_loss: target size mismatch");
    const std::vector<T>& pv = p.val();
    auto norms = std::make_shared<std::vector<T>>(static_cast<std::size_t>(2 * b));
    auto dots = std::make_shared<std::vector<T>>(static_cast<std::size_t>(b));
    T loss = 0;
    for (std::int64_t i = 0; i < b; ++i) {
        T np = 0, nz = 0, dot = 0;
        const T* pr = pv.data() + i * d;
        const T* zr = z.data() + i * d;
        for (std::int64_t j = 0; j < d; ++j) {
            np += pr[j] * pr[j];
            nz += zr[j] * zr[j];
            dot += pr[j] * zr[j];
        }
        np = std::sqrt(np);
        nz = std::sqrt(nz);
        if (np == T(0) || nz == T(0)) throw std::invalid_argument("cosine_prediction_loss: zero-norm vector");
        (*norms)[2 * i] = np;
        (*norms)[2 * i + 1] = nz;
        (*dots)[i] = dot;
        loss += T(2) - T(2) * dot / (np * nz);
    }
    loss /= static_cast<T>(b);

    auto pn = p.node();
    auto zc = std::make_shared<std::vector<T>>(z);
    auto backprop = [pn, zc, norms, dots, b, d](Node<T>& self) {
        const T g = self.grad()[0] / static_cast<T>(b);
        const std::vector<T>& pv = pn->val();
        std::vector<T>& dp = pn->grad();
        for (std::int64_t i = 0; i < b; ++i) {
            const T np = (*norms)[2 * i], nz = (*norms)[2 * i + 1], dot = (*dots)[i];
            const T* pr = pv.data() + i * d;
            const T* zr = zc->data() + i * d;
            T* dpr = dp.data() + i * d;
            for (std::int64_t j = 0; j < d; ++j)
                dpr[j] += g * T(-2) * (zr[j] / (np * nz) - dot * pr[j] / (np * np * np * nz));
        }
    };
    return Var<T>(detail::make_op<T>({}, {loss}, {pn}, std::move(backprop)));
}

}  // namespace ad

}  // namespace oct
