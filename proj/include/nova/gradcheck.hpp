#pragma once

#include "nova/tensor.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace nova::gradcheck {

/// A block of coordinates to audit: live values (perturbed in place and
/// restored) and the analytic gradient computed at those values.
struct Group {
    std::string name;
    std::span<double> values;
    std::span<const double> analytic;
};

struct GroupResult {
    std::string name;
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

struct Report {
    double max_rel_error = 0.0;
    std::string worst_group;
    std::vector<GroupResult> groups;

    bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

/// |a - b| / max(|a|, |b|, 1e-8)
double relative_error(double analytic, double numeric);

/// Central differences with step h on up to `coords_per_group` coordinates per
/// group (all of them when the group is smaller), sampled with `seed`.
Report finite_difference_check(const std::function<double()>& loss, const std::vector<Group>& groups,
                               double h = 1e-5, std::size_t coords_per_group = 200, std::uint64_t seed = 0);

/// Groups for every trainable parameter; analytic gradients are read from
/// Parameter::grad, so run the backward pass first.
std::vector<Group> parameter_groups(const std::vector<Parameter<double>*>& params);

}  // namespace nova::gradcheck
