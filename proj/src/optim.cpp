#include "fsl/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace fsl {

template <typename T>
Adam<T>::Adam(std::vector<Parameter<T>*> params, AdamOptions opts) : params_(std::move(params)), opts_(opts) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (auto* p : params_) {
        m_.emplace_back(p->value.shape());
        v_.emplace_back(p->value.shape());
    }
}

template <typename T>
void Adam<T>::step() {
    ++t_;
    const double b1 = opts_.beta1, b2 = opts_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    const double lr = opts_.lr;
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Parameter<T>& p = *params_[i];
        if (p.grad.shape() != p.value.shape()) {
            throw ShapeError("adam: gradient " + p.grad.shape().str() + " does not match parameter " + p.name + " " +
                             p.value.shape().str());
        }
        auto val = p.value.data();
        const auto g = p.grad.data();
        auto m = m_[i].data();
        auto v = v_[i].data();
        for (std::size_t j = 0; j < val.size(); ++j) {
            const double gj = g[j];
            const double mj = b1 * m[j] + (1.0 - b1) * gj;
            const double vj = b2 * v[j] + (1.0 - b2) * gj * gj;
            m[j] = static_cast<T>(mj);
            v[j] = static_cast<T>(vj);
            val[j] = static_cast<T>(val[j] - lr * (mj / c1) / (std::sqrt(vj / c2) + opts_.eps));
        }
    }
}

template <typename T>
void Adam<T>::zero_grad() {
    for (auto* p : params_) p->zero_grad();
}

double lr_at(int epoch, double base, int every, double factor) {
    if (epoch < 0) throw std::invalid_argument("lr_at: epoch must be non-negative");
    if (every <= 0) return base;
    return base * std::pow(factor, epoch / every);
}

template class Adam<float>;
template class Adam<double>;

}  // namespace fsl
