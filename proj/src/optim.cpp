#include "nova/optim.hpp"

#include <algorithm>
#include <numbers>

namespace nova::optim {

bool decays(const std::string& name) {
    constexpr std::string_view suffix = ".weight";
    return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
}

double cosine_lr(std::int64_t step, const Schedule& s, std::int64_t steps_per_epoch) {
    if (step < 0) throw std::invalid_argument("cosine_lr: step must be >= 0");
    if (steps_per_epoch < 1) throw std::invalid_argument("cosine_lr: steps_per_epoch must be >= 1");
    const double warmup = s.warmup_epochs * static_cast<double>(steps_per_epoch);
    const double total = static_cast<double>(s.epochs) * static_cast<double>(steps_per_epoch);
    const double t = static_cast<double>(step);
    if (t < warmup) return s.lr_max * t / warmup;
    const double span = total - 1.0 - warmup;
    const double progress = span > 0.0 ? std::clamp((t - warmup) / span, 0.0, 1.0) : 1.0;
    return s.lr_min + (s.lr_max - s.lr_min) * (1.0 + std::cos(std::numbers::pi * progress)) / 2.0;
}

}  // namespace nova::optim
