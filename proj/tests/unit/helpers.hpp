#pragma once

#include <algorithm>
#include <cmath>
#include <random>

#include "fsl/autodiff.hpp"
#include "fsl/tensor.hpp"

namespace fsl::test {

template <typename T>
Tensor4<T> random_tensor(Shape s, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
    std::uniform_real_distribution<double> d(lo, hi);
    Tensor4<T> t(s);
    for (auto& v : t.data()) v = static_cast<T>(d(rng));
    return t;
}

/// Contract `out` with fixed random weights so any tensor-valued op yields a scalar objective.
template <typename T>
Var<T> project(Var<T> out, std::uint64_t seed);

inline double max_abs_diff(const Tensor4<double>& a, const Tensor4<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

/// Worst relative FD error of `fn` (Var -> Var) around x0, fourth-order differences.
template <typename Fn>
double grad_error(Fn fn, Tensor4<double> x0, std::uint64_t seed, double eps = 1e-3, int coords = 1000) {
    Parameter<double> p("x", std::move(x0));
    Objective<double> f = [&](Tape<double>& t) { return project(fn(t.param(p)), seed); };
    GradCheckOptions opts;
    opts.coords_per_param = coords;
    opts.order = 4;
    opts.eps = eps;
    return finite_diff_check<double>(f, {&p}, opts).max_rel_error();
}

}  // namespace fsl::test
