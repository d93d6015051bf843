#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace agcu {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

/// Dense row-major N-d array. Feature maps use batch x channels x height x width;
/// vectors use a single channels extent. The grad slot, when present, always has
/// the same element count as the data.
template <typename T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        validate_shape();
        data_.assign(static_cast<size_t>(shape_numel(shape_)), T(0));
    }

    Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), data_(std::move(values)) {
        validate_shape();
        if (static_cast<int64_t>(data_.size()) != shape_numel(shape_))
            throw std::invalid_argument("tensor: " + std::to_string(data_.size()) +
                                        " values do not fill shape " + shape_str(shape_));
    }

    static Tensor full(Shape shape, T v) {
        Tensor t(std::move(shape));
        for (T& x : t.data_) x = v;
        return t;
    }

    const Shape& shape() const noexcept { return shape_; }
    size_t rank() const noexcept { return shape_.size(); }
    int64_t dim(size_t i) const { return shape_.at(i); }
    int64_t numel() const noexcept { return static_cast<int64_t>(data_.size()); }
    bool empty() const noexcept { return data_.empty(); }

    T* data() noexcept { return data_.data(); }
    const T* data() const noexcept { return data_.data(); }
    std::span<T> values() noexcept { return {data_.data(), data_.size()}; }
    std::span<const T> values() const noexcept { return {data_.data(), data_.size()}; }
    std::vector<T>& vec() noexcept { return data_; }
    const std::vector<T>& vec() const noexcept { return data_; }

    T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    // NCHW accessor; valid only for rank-4 tensors.
    T& at4(int64_t b, int64_t c, int64_t h, int64_t w) {
        return data_[static_cast<size_t>(((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }
    const T& at4(int64_t b, int64_t c, int64_t h, int64_t w) const {
        return data_[static_cast<size_t>(((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
    }
    T& at2(int64_t r, int64_t c) { return data_[static_cast<size_t>(r * shape_[1] + c)]; }
    const T& at2(int64_t r, int64_t c) const { return data_[static_cast<size_t>(r * shape_[1] + c)]; }

    bool has_grad() const noexcept { return grad_.has_value(); }

    /// Grad buffer, allocated zero-filled on first access.
    std::vector<T>& grad() {
        if (!grad_) grad_.emplace(data_.size(), T(0));
        return *grad_;
    }
    const std::vector<T>* grad_if() const noexcept { return grad_ ? &*grad_ : nullptr; }

    void zero_grad() {
        if (grad_) grad_->assign(data_.size(), T(0));
    }
    void drop_grad() noexcept { grad_.reset(); }

    bool all_finite() const {
        for (T v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        std::vector<U> out(data_.size());
        for (size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
        return Tensor<U>(shape_, std::move(out));
    }

private:
    void validate_shape() const {
        for (int64_t d : shape_)
            if (d <= 0) throw std::invalid_argument("tensor: non-positive extent in shape " + shape_str(shape_));
    }

    Shape shape_;
    std::vector<T> data_;
    std::optional<std::vector<T>> grad_;
};

}  // namespace agcu
