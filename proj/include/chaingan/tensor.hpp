#pragma once

#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

#include "chaingan/shape.hpp"

namespace chaingan {

// Owning n-d array. Buffers are shared so reshapes and tape nodes can alias
// without copies.
template <typename T>
class Tensor {
public:
    Tensor() : shape_{1}, data_(std::make_shared<std::vector<T>>(1, T(0))) {}

    explicit Tensor(Shape shape, T fill = T(0))
        : shape_(shape), data_(std::make_shared<std::vector<T>>(shape.numel(), fill)) {}

    Tensor(Shape shape, std::vector<T> values)
        : shape_(shape), data_(std::make_shared<std::vector<T>>(std::move(values))) {
        if (static_cast<std::int64_t>(data_->size()) != shape_.numel())
            throw std::invalid_argument("Tensor: " + std::to_string(data_->size()) +
                                        " values do not fill shape " + shape_.str());
    }

    static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

    const Shape& shape() const { return shape_; }
    std::int64_t numel() const { return shape_.numel(); }

    T* data() { return data_->data(); }
    const T* data() const { return data_->data(); }
    std::vector<T>& vec() { return *data_; }
    const std::vector<T>& vec() const { return *data_; }
    const std::shared_ptr<std::vector<T>>& buffer() const { return data_; }

    T& operator[](std::int64_t i) { return (*data_)[i]; }
    const T& operator[](std::int64_t i) const { return (*data_)[i]; }

    bool requires_grad = false;

    Tensor reshaped(Shape s) const {
        if (s.numel() != shape_.numel())
            throw std::invalid_argument("reshape: " + shape_.str() + " -> " + s.str() + " changes element count");
        Tensor t = *this;
        t.shape_ = s;
        return t;
    }

    Tensor clone() const {
        Tensor t(shape_);
        *t.data_ = *data_;
        t.requires_grad = requires_grad;
        return t;
    }

    bool all_finite() const {
        for (T v : *data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

private:
    Shape shape_;
    std::shared_ptr<std::vector<T>> data_;
};

} // namespace chaingan
