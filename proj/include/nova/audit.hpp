#pragma once
// Finite-difference audit of every loss gradient.

#include "nova/gradcheck.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace nova::audit {

struct Entry {
    std::string loss;  // mse, nova, infonce, siglip, sigreg
    double max_rel_error = 0.0;
    int trials = 0;
    std::string worst_group;
};

struct Report {
    std::vector<Entry> entries;
    double tolerance = 1e-4;
    bool passed() const;
};

/// Random shapes and inputs per trial, central differences with h = 1e-5.
/// `fault` names a loss whose analytic gradient is scaled by 1.01 before
/// the comparison (negative control); empty for none.
Report run_audit(std::uint64_t seed, int trials = 10, const std::string& fault = {}, double tolerance = 1e-4);

/// Names accepted by run_audit's fault argument.
const std::vector<std::string>& loss_names();

}  // namespace nova::audit
