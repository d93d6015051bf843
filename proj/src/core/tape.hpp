#pragma once

#include <deque>
#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "core/tensor.hpp"

namespace agcu {

/// Handle to a value recorded on a tape. Valid only for the tape that made it.
struct Var {
    int32_t id = -1;
    bool valid() const noexcept { return id >= 0; }
};

/// Recorded operation graph for one forward pass. Operations append nodes in
/// execution order, so reverse iteration is a valid topological replay:
/// backward() visits each recorded operation exactly once, newest first, and
/// sums gradients of values consumed by multiple operations.
///
/// A tape is owned by a single training step and is not shared across threads.
template <typename T>
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, int32_t)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Leaf holding a value that needs no gradient write-back.
    Var constant(Tensor<T> value) { return emplace(std::move(value), {}, nullptr); }

    /// Leaf bound to an external tensor (a model parameter). After backward()
    /// the accumulated gradient is written to `external.grad()`. The external
    /// tensor must outlive the tape.
    Var parameter(Tensor<T>& external) {
        Var v = emplace(Tensor<T>(external.shape(), external.vec()), {}, nullptr);
        nodes_[static_cast<size_t>(v.id)].external = &external;
        return v;
    }

    Var emplace(Tensor<T> value, std::vector<int32_t> inputs, BackwardFn back) {
        for (int32_t in : inputs)
            if (in < 0 || in >= static_cast<int32_t>(nodes_.size()))
                throw std::invalid_argument("tape: operation input does not precede it");
        Node n;
        n.value = std::move(value);
        n.inputs = std::move(inputs);
        n.backward = std::move(back);
        nodes_.push_back(std::move(n));
        return Var{static_cast<int32_t>(nodes_.size()) - 1};
    }

    const Tensor<T>& value(Var v) const { return node(v).value; }

    /// False only for plain constants, whose gradient nothing will read.
    /// Backward functions may skip the work of producing it.
    bool wants_grad(int32_t id) const {
        const Node& n = nodes_.at(static_cast<size_t>(id));
        return n.backward != nullptr || n.external != nullptr;
    }

    size_t size() const noexcept { return nodes_.size(); }

    /// Gradient buffer of a node; usable inside backward functions and, for
    /// inspection, after backward() ran.
    std::vector<T>& grad_buf(int32_t id) {
        Node& n = nodes_.at(static_cast<size_t>(id));
        if (n.grad.empty()) n.grad.assign(n.value.vec().size(), T(0));
        return n.grad;
    }

    std::span<const T> grad(Var v) const {
        const Node& n = node(v);
        return {n.grad.data(), n.grad.size()};
    }

    Tensor<T> grad_tensor(Var v) const {
        const Node& n = node(v);
        if (n.grad.empty()) return Tensor<T>::full(n.value.shape(), T(0));
        return Tensor<T>(n.value.shape(), n.grad);
    }

    /// Reverse-mode accumulation from a scalar loss. Parameters registered via
    /// parameter() receive their summed gradients in the external grad slot.
    void backward(Var loss) {
        const Node& ln = node(loss);
        if (ln.value.numel() != 1)
            throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                        shape_str(ln.value.shape()));
        grad_buf(loss.id)[0] = T(1);
        for (int32_t i = static_cast<int32_t>(nodes_.size()) - 1; i >= 0; --i) {
            Node& n = nodes_[static_cast<size_t>(i)];
            if (n.backward && !n.grad.empty()) n.backward(*this, i);
        }
        // Distinct parameters first get a clean slate, then every node bound to
        // one adds in: the same tensor may back several leaves.
        for (Node& n : nodes_)
            if (n.external) n.external->zero_grad();
        for (Node& n : nodes_) {
            if (!n.external) continue;
            auto& g = n.external->grad();
            for (size_t k = 0; k < g.size(); ++k) g[k] += n.grad.empty() ? T(0) : n.grad[k];
        }
    }

private:
    struct Node {
        Tensor<T> value;
        std::vector<T> grad;  // empty until touched
        std::vector<int32_t> inputs;
        BackwardFn backward;
        Tensor<T>* external = nullptr;
    };

    const Node& node(Var v) const {
        if (!v.valid() || v.id >= static_cast<int32_t>(nodes_.size()))
            throw std::invalid_argument("tape: invalid value handle");
        return nodes_[static_cast<size_t>(v.id)];
    }

    // Deque so recording never moves a node: references handed out by value()
    // and grad_buf() stay valid while the tape grows.
    std::deque<Node> nodes_;
};

}  // namespace agcu
