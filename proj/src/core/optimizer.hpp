#pragma once

#include <string>
#include <utility>
#include <vector>

#include "core/tensor.hpp"

namespace agcu {

/// Named registry of a model's tensors: trainable parameters plus persistent
/// buffers (batch-norm running statistics). Modules register into it with
/// hierarchical names; the optimizer and the checkpoint both address tensors
/// through it. Registration order is the serialization order.
template <typename T>
struct ParamSet {
    std::vector<std::pair<std::string, Tensor<T>*>> params;
    std::vector<std::pair<std::string, Tensor<T>*>> buffers;

    void add_param(std::string name, Tensor<T>* t) { params.emplace_back(std::move(name), t); }
    void add_buffer(std::string name, Tensor<T>* t) { buffers.emplace_back(std::move(name), t); }

    Tensor<T>* find_param(const std::string& name) const {
        for (const auto& [n, t] : params)
            if (n == name) return t;
        return nullptr;
    }

    int64_t param_count() const {
        int64_t n = 0;
        for (const auto& [name, t] : params) n += t->numel();
        return n;
    }
};

/// SGD with classical momentum: v <- momentum*v + grad; p <- p - lr*v.
/// Velocities start at zero, one per registered parameter.
template <typename T>
class SgdMomentum {
public:
    SgdMomentum(std::vector<std::pair<std::string, Tensor<T>*>> params, T lr, T momentum);

    void step();

    T lr() const noexcept { return lr_; }
    T momentum() const noexcept { return momentum_; }
    size_t size() const noexcept { return params_.size(); }
    const std::string& name(size_t i) const { return params_[i].first; }
    std::vector<T>& velocity(size_t i) { return velocity_[i]; }

private:
    std::vector<std::pair<std::string, Tensor<T>*>> params_;
    std::vector<std::vector<T>> velocity_;
    T lr_;
    T momentum_;
};

}  // namespace agcu
