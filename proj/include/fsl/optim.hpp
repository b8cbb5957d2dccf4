#pragma once

// Adam with bias correction and the step learning-rate schedule.

#include <cstdint>
#include <vector>

#include "fsl/autodiff.hpp"

namespace fsl {

struct AdamOptions {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

template <typename T>
class Adam {
public:
    explicit Adam(std::vector<Parameter<T>*> params, AdamOptions opts = {});

    /// One update from the gradients currently stored on the parameters.
    /// Throws ShapeError if a gradient does not match its parameter.
    void step();
    void zero_grad();

    [[nodiscard]] double lr() const { return opts_.lr; }
    void set_lr(double lr) { opts_.lr = lr; }
    [[nodiscard]] std::int64_t steps() const { return t_; }
    void set_steps(std::int64_t t) { t_ = t; }
    [[nodiscard]] const AdamOptions& options() const { return opts_; }

    [[nodiscard]] const std::vector<Parameter<T>*>& params() const { return params_; }
    [[nodiscard]] std::vector<Tensor4<T>>& first_moments() { return m_; }
    [[nodiscard]] std::vector<Tensor4<T>>& second_moments() { return v_; }

private:
    std::vector<Parameter<T>*> params_;
    std::vector<Tensor4<T>> m_;
    std::vector<Tensor4<T>> v_;
    AdamOptions opts_;
    std::int64_t t_ = 0;
};

/// base * factor^floor(epoch / every); constant when every <= 0.
double lr_at(int epoch, double base, int every = 15, double factor = 0.1);

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace fsl
