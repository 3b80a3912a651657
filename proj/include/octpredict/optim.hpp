#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "octpredict/tensor.hpp"

namespace oct {

// Adam with bias correction. Moments are kept per tracked parameter in
// registration order; step count increments by exactly one per step().
template <class T>
class Adam {
public:
    Adam(std::vector<TensorPtr<T>> params, T lr, T beta1 = T(0.9), T beta2 = T(0.999), T eps = T(1e-8))
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (auto& p : params) slots_.push_back({p, std::vector<T>(p->data.size(), T(0)), std::vector<T>(p->data.size(), T(0))});
    }

    void step() {
        for (auto& s : slots_)
            if (s.p->grad.size() != s.p->data.size())
                throw std::runtime_error("adam: missing gradient for a tracked parameter");
        ++t_;
        const T bc1 = T(1) - std::pow(beta1_, static_cast<T>(t_));
        const T bc2 = T(1) - std::pow(beta2_, static_cast<T>(t_));
        for (auto& s : slots_) {
            const std::vector<T>& g = s.p->grad;
            std::vector<T>& w = s.p->data;
            for (std::size_t i = 0; i < w.size(); ++i) {
                s.m[i] = beta1_ * s.m[i] + (T(1) - beta1_) * g[i];
                s.v[i] = beta2_ * s.v[i] + (T(1) - beta2_) * g[i] * g[i];
                const T mhat = s.m[i] / bc1;
                const T vhat = s.v[i] / bc2;
                w[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

    void zero_grad() {
        for (auto& s : slots_) {
            s.p->ensure_grad();
            s.p->zero_grad();
        }
    }

    std::int64_t step_count() const { return t_; }
    T lr() const { return lr_; }

private:
    struct Slot {
        TensorPtr<T> p;
        std::vector<T> m, v;
    };

    T lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::vector<Slot> slots_;
};

}  // namespace oct
