#include "nova/gradcheck.hpp"

#include "nova/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace nova::gradcheck {

double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    return std::abs(analytic - numeric) / denom;
}

Report finite_difference_check(const std::function<double()>& loss, const std::vector<Group>& groups,
                               double h, std::size_t coords_per_group, std::uint64_t seed) {
    Report report;
    Rng gen(seed);
    for (const Group& g : groups) {
        std::vector<std::size_t> coords(g.values.size());
        std::iota(coords.begin(), coords.end(), 0);
        if (coords.size() > coords_per_group) {
            std::shuffle(coords.begin(), coords.end(), gen);
            coords.resize(coords_per_group);
        }
        GroupResult res{g.name, 0.0, coords.size(), 0.0, 0.0};
        for (std::size_t i : coords) {
            // Divide by the step actually taken, not the nominal 2h.
            const double saved = g.values[i];
            const double plus = saved + h, minus = saved - h;
            g.values[i] = plus;
            const double up = loss();
            g.values[i] = minus;
            const double down = loss();
            g.values[i] = saved;
            const double numeric = (up - down) / (plus - minus);
            const double err = relative_error(g.analytic[i], numeric);
            if (err >= res.max_rel_error) {
                res.max_rel_error = err;
                res.worst_analytic = g.analytic[i];
                res.worst_numeric = numeric;
            }
        }
        if (report.groups.empty() || res.max_rel_error > report.max_rel_error) {
            report.max_rel_error = res.max_rel_error;
            report.worst_group = g.name;
        }
        report.groups.push_back(std::move(res));
    }
    return report;
}

std::vector<Group> parameter_groups(const std::vector<Parameter<double>*>& params) {
    std::vector<Group> out;
    for (auto* p : params) {
        if (!p->trainable) continue;
        const auto n = static_cast<std::size_t>(p->value.size());
        out.push_back({p->name, {p->value.data(), n}, {p->grad.data(), n}});
    }
    return out;
}

}  // namespace nova::gradcheck
