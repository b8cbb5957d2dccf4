#pragma once

// Finite-difference gradient suite over every differentiable operation,
// block, head and loss, each on several random configurations.

#include <cstdint>
#include <string>
#include <vector>

#include "fsl/autodiff.hpp"

namespace fsl::check {

struct SuiteOptions {
    int configs = 3;  // random configurations per entry
    std::uint64_t seed = 1;
    int coords = 12;  // sampled coordinates per parameter
};

struct SuiteEntry {
    std::string group;  // op, geometry, block, head, loss
    std::string name;
    int configs = 0;
    double max_rel_error = 0.0;
    int checked = 0;
    int excluded = 0;
};

/// Pass threshold on the relative error for a given precision.
double suite_threshold(int bits);

/// Blocks and heads run with eval-mode batch norm; the double instantiation uses
/// fourth-order differences with eps 1e-4, the float one central differences with eps 1e-2.
template <typename T>
std::vector<SuiteEntry> gradient_suite(const SuiteOptions& opts = {});

/// Names of all suite entries, in order.
std::vector<std::string> suite_names();

}  // namespace fsl::check
