#include "core/optimizer.hpp"

#include <stdexcept>

namespace agcu {

template <typename T>
SgdMomentum<T>::SgdMomentum(std::vector<std::pair<std::string, Tensor<T>*>> params, T lr, T momentum)
    : params_(std::move(params)), lr_(lr), momentum_(momentum) {
    if (lr_ <= T(0)) throw std::invalid_argument("sgd: learning rate must be positive");
    if (momentum_ < T(0) || momentum_ >= T(1))
        throw std::invalid_argument("sgd: momentum must lie in [0,1)");
    velocity_.reserve(params_.size());
    for (const auto& [name, t] : params_)
        velocity_.emplace_back(static_cast<size_t>(t->numel()), T(0));
}

template <typename T>
void SgdMomentum<T>::step() {
    for (size_t i = 0; i < params_.size(); ++i) {
        Tensor<T>& p = *params_[i].second;
        if (!p.has_grad())
            throw std::runtime_error("sgd: parameter '" + params_[i].first + "' has no gradient");
        const std::vector<T>& g = p.grad();
        std::vector<T>& v = velocity_[i];
        for (size_t k = 0; k < v.size(); ++k) {
            v[k] = momentum_ * v[k] + g[k];
            p[static_cast<int64_t>(k)] -= lr_ * v[k];
        }
    }
}

template class SgdMomentum<float>;
template class SgdMomentum<double>;

}  // namespace agcu
