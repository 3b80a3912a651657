#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace oct {

inline std::int64_t shape_numel(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (std::int64_t e : shape) {
        if (e < 0) throw std::invalid_argument("tensor shape has negative extent " + std::to_string(e));
        n *= e;
    }
    return n;
}

inline std::string shape_str(const std::vector<std::int64_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

// Dense n-dimensional array. `grad` is allocated lazily and, when present,
// always has the same length as `data`.
template <class T>
struct Tensor {
    std::vector<std::int64_t> shape;
    std::vector<T> data;
    bool requires_grad = false;
    std::vector<T> grad;

    Tensor() = default;

    explicit Tensor(std::vector<std::int64_t> s, T fill = T(0))
        : shape(std::move(s)), data(static_cast<std::size_t>(shape_numel(shape)), fill) {}

    Tensor(std::vector<std::int64_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<std::int64_t>(data.size()) != shape_numel(shape))
            throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                        " does not match shape " + shape_str(shape));
    }

    std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }

    void ensure_grad() {
        if (grad.size() != data.size()) grad.assign(data.size(), T(0));
    }

    void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

template <class T>
using TensorPtr = std::shared_ptr<Tensor<T>>;

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;
using TensorPtrF = TensorPtr<float>;
using TensorPtrD = TensorPtr<double>;

template <class T, class... Args>
TensorPtr<T> make_tensor(Args&&... args) {
    return std::make_shared<Tensor<T>>(std::forward<Args>(args)...);
}

}  // namespace oct
