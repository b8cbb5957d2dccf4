#include "fsl/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace fsl {

template <typename T>
Var<T> Tape<T>::push(Node node) {
    nodes_.push_back(std::move(node));
    return Var<T>{this, static_cast<int>(nodes_.size()) - 1};
}

template <typename T>
Var<T> Tape<T>::constant(Tensor4<T> value) {
    Node n;
    n.op = "constant";
    n.value = std::move(value);
    return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::leaf(Tensor4<T> value) {
    Node n;
    n.op = "leaf";
    n.value = std::move(value);
    n.requires_grad = true;
    n.keep_grad = true;
    return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::param(Parameter<T>& p) {
    Node n;
    n.op = "param";
    n.value = p.value;
    n.param = &p;
    n.requires_grad = true;
    return push(std::move(n));
}

template <typename T>
Var<T> Tape<T>::record(std::string_view op, Tensor4<T> value, std::vector<int> inputs, Backward bw) {
    Node n;
    n.op = std::string(op);
    n.value = std::move(value);
    n.requires_grad = std::any_of(inputs.begin(), inputs.end(), [this](int i) { return requires_grad(i); });
    if (n.requires_grad) n.backward = std::move(bw);
    n.inputs = std::move(inputs);
    return push(std::move(n));
}

template <typename T>
void Tape<T>::accumulate(int id, const Tensor4<T>& g) {
    auto& node = nodes_[static_cast<std::size_t>(id)];
    if (!node.requires_grad) return;
    check_same_shape(node.value.shape(), g.shape(), "gradient accumulation");
    if (node.grad) {
        *node.grad += g;
    } else {
        node.grad = g;
    }
}

template <typename T>
const Tensor4<T>* Tape<T>::grad(Var<T> v) const {
    const auto& node = nodes_[static_cast<std::size_t>(v.id)];
    return node.grad ? &*node.grad : nullptr;
}

template <typename T>
void Tape<T>::backward(Var<T> root) {
    const Shape& s = value(root.id).shape();
    if (s.numel() != 1) {
        throw ShapeError("backward: root must be scalar-valued, got " + s.str());
    }
    backward(root, Tensor4<T>::scalar(T(1)));
}

template <typename T>
void Tape<T>::backward(Var<T> root, const Tensor4<T>& seed) {
    check_same_shape(value(root.id).shape(), seed.shape(), "backward seed");
    for (auto& n : nodes_) {
        if (!n.keep_grad) n.grad.reset();
    }
    accumulate(root.id, seed);
    sweep(root.id);
}

template <typename T>
void Tape<T>::sweep(int root) {
    for (int id = root; id >= 0; --id) {
        auto& node = nodes_[static_cast<std::size_t>(id)];
        if (!node.grad) continue;
        if (node.param) node.param->grad += *node.grad;
        if (node.backward) node.backward(*this, *node.grad);
        if (!node.keep_grad) node.grad.reset();
    }
}

namespace {

// One-sided slopes that disagree by more than `tol` of their magnitude indicate a
// non-differentiable point inside the stencil.
bool is_kink(double hi, double lo, double tol) {
    return std::abs(hi - lo) > tol * std::max({std::abs(hi), std::abs(lo), 1e-8});
}

}  // namespace

double GradCheckReport::max_rel_error() const {
    double m = 0.0;
    for (const auto& p : params) m = std::max(m, p.max_rel_error);
    return m;
}

int GradCheckReport::excluded() const {
    int e = 0;
    for (const auto& p : params) e += p.excluded;
    return e;
}

int GradCheckReport::checked() const {
    int e = 0;
    for (const auto& p : params) e += p.checked;
    return e;
}

template <typename T>
GradCheckReport finite_diff_check(const Objective<T>& f, const std::vector<Parameter<T>*>& params,
                                  const GradCheckOptions& opts) {
    auto evaluate = [&f]() {
        Tape<T> tape;
        const double v = static_cast<double>(f(tape).value().item());
        if (!std::isfinite(v)) throw std::runtime_error("finite_diff_check: objective is not finite");
        return v;
    };

    for (auto* p : params) p->zero_grad();
    double f0 = 0.0;
    {
        Tape<T> tape;
        auto root = f(tape);
        f0 = static_cast<double>(root.value().item());
        if (!std::isfinite(f0)) throw std::runtime_error("finite_diff_check: objective is not finite");
        tape.backward(root);
    }

    std::mt19937_64 rng(opts.seed);
    GradCheckReport report;
    for (auto* p : params) {
        ParamCheck pc;
        pc.name = p->name;
        const std::size_t n = p->value.size();
        std::vector<std::size_t> coords(n);
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (n > static_cast<std::size_t>(opts.coords_per_param)) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(static_cast<std::size_t>(opts.coords_per_param));
        }
        for (std::size_t i : coords) {
            const T orig = p->value[i];
            const T step = static_cast<T>(opts.eps);
            auto at = [&](T v) {
                p->value[i] = v;
                const double r = evaluate();
                p->value[i] = orig;
                return r;
            };
            const double fp = at(orig + step);
            const double fm = at(orig - step);
            const double h = static_cast<double>((orig + step) - (orig - step)) / 2.0;
            double numeric = (fp - fm) / (2.0 * h);
            const double slope_hi = (fp - f0) / h;
            const double slope_lo = (f0 - fm) / h;
            if (is_kink(slope_hi, slope_lo, opts.kink_tolerance)) {
                ++pc.excluded;
                continue;
            }
            if (opts.order == 4) {
                const T step2 = static_cast<T>(2.0 * opts.eps);
                const double fp2 = at(orig + step2);
                const double fm2 = at(orig - step2);
                const double h2 = static_cast<double>((orig + step2) - (orig - step2)) / 2.0;
                const double wide = (fp2 - fm2) / (2.0 * h2);
                const double wide_hi = (fp2 - f0) / h2;
                const double wide_lo = (f0 - fm2) / h2;
                if (is_kink(wide_hi, wide_lo, opts.kink_tolerance)) {
                    ++pc.excluded;
                    continue;
                }
                numeric = (4.0 * numeric - wide) / 3.0;
            }
            const double analytic = static_cast<double>(p->grad[i]);
            const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-12});
            pc.max_rel_error = std::max(pc.max_rel_error, std::abs(analytic - numeric) / denom);
            ++pc.checked;
        }
        report.params.push_back(std::move(pc));
    }
    return report;
}

template class Tape<float>;
template class Tape<double>;
template GradCheckReport finite_diff_check(const Objective<float>&, const std::vector<Parameter<float>*>&,
                                           const GradCheckOptions&);
template GradCheckReport finite_diff_check(const Objective<double>&, const std::vector<Parameter<double>*>&,
                                           const GradCheckOptions&);

}  // namespace fsl
