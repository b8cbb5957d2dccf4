#pragma once

// Define-by-run reverse-mode differentiation. A Tape records every operation
// applied to Vars during a forward pass; backward() replays the recorded
// vector-Jacobian products in reverse order.

#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fsl/tensor.hpp"

namespace fsl {

/// Trainable leaf: value plus an additive gradient accumulator.
template <typename T>
struct Parameter {
    std::string name;
    Tensor4<T> value;
    Tensor4<T> grad;

    Parameter() = default;
    Parameter(std::string n, Tensor4<T> v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

    void zero_grad() { grad.fill(T(0)); }
};

template <typename T>
class Tape;

/// Handle to a node on a tape.
template <typename T>
struct Var {
    Tape<T>* tape = nullptr;
    int id = -1;

    [[nodiscard]] const Tensor4<T>& value() const;
    [[nodiscard]] const Shape& shape() const { return value().shape(); }
    [[nodiscard]] bool requires_grad() const;
};

template <typename T>
class Tape {
public:
    using Backward = std::function<void(Tape&, const Tensor4<T>& grad_out)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    /// Value that never receives a gradient.
    Var<T> constant(Tensor4<T> value);
    /// Free leaf that records its gradient on the tape (see grad()).
    Var<T> leaf(Tensor4<T> value);
    /// Leaf bound to a Parameter; backward accumulates into param.grad.
    Var<T> param(Parameter<T>& p);

    /// Record a derived node. `bw` runs only when some input requires a gradient.
    Var<T> record(std::string_view op, Tensor4<T> value, std::vector<int> inputs, Backward bw);

    /// Reverse sweep from a scalar root (seed 1).
    void backward(Var<T> root);
    /// Reverse sweep from an arbitrary root with an explicit cotangent.
    void backward(Var<T> root, const Tensor4<T>& seed);

    void accumulate(int id, const Tensor4<T>& g);

    [[nodiscard]] const Tensor4<T>& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    [[nodiscard]] bool requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
    /// Gradient gathered on a node by the last backward(), if any.
    [[nodiscard]] const Tensor4<T>* grad(Var<T> v) const;
    [[nodiscard]] std::string_view op(int id) const { return nodes_[static_cast<std::size_t>(id)].op; }
    [[nodiscard]] std::size_t size() const { return nodes_.size(); }

private:
    struct Node {
        std::string op;
        Tensor4<T> value;
        std::vector<int> inputs;
        Backward backward;
        Parameter<T>* param = nullptr;
        bool requires_grad = false;
        bool keep_grad = false;
        std::optional<Tensor4<T>> grad;
    };

    Var<T> push(Node node);
    void sweep(int root);

    std::deque<Node> nodes_;  // stable addresses: value() references survive later records
};

template <typename T>
const Tensor4<T>& Var<T>::value() const {
    return tape->value(id);
}

template <typename T>
bool Var<T>::requires_grad() const {
    return tape->requires_grad(id);
}

// ---------------------------------------------------------------------------
// Finite-difference oracle

template <typename T>
using Objective = std::function<Var<T>(Tape<T>&)>;

struct GradCheckOptions {
    double eps = 1e-5;
    /// Coordinates sampled per parameter (all coordinates when the tensor is smaller).
    int coords_per_param = 200;
    std::uint64_t seed = 1234;
    /// One-sided slopes differing by more than this fraction of their magnitude mark a kink.
    double kink_tolerance = 1e-2;
    /// 2: plain central difference. 4: Richardson combination of steps eps and 2*eps,
    /// which cancels the leading truncation term and tolerates a larger step.
    int order = 2;
};

struct ParamCheck {
    std::string name;
    double max_rel_error = 0.0;
    int checked = 0;
    int excluded = 0;
};

struct GradCheckReport {
    std::vector<ParamCheck> params;

    [[nodiscard]] double max_rel_error() const;
    [[nodiscard]] int excluded() const;
    [[nodiscard]] int checked() const;
};

/// Central differences against tape gradients. Each coordinate is perturbed
/// in place and restored. Throws std::runtime_error when the objective is not finite.
template <typename T>
GradCheckReport finite_diff_check(const Objective<T>& f, const std::vector<Parameter<T>*>& params,
                                  const GradCheckOptions& opts = {});

extern template class Tape<float>;
extern template class Tape<double>;

}  // namespace fsl
