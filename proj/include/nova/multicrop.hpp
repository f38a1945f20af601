#pragma once

// Multi-crop augmentation: a few large global crops and several small local
// crops per image, each independently jittered, rotated and standardized.

#include "nova/image.hpp"

#include <cstdint>
#include <vector>

namespace nova::multicrop {

struct CropSpec {
    int count = 0;
    int size = 0;
    double scale_min = 1.0;
    double scale_max = 1.0;
};

struct AugmentConfig {
    CropSpec global{2, 224, 0.8, 1.0};
    CropSpec local{6, 96, 0.5, 0.7};
    double jitter_range = 0.15;  // brightness/contrast/saturation factors in 1 +- r, hue shift in +- r
    double rotation_deg = 10.0;
    std::uint64_t seed = 0;

    int view_count() const { return global.count + local.count; }
};

/// Throws std::invalid_argument when an invariant is violated.
void validate(const AugmentConfig& cfg);

/// Everything drawn for one view, kept so callers can audit the sampling.
struct ViewRecord {
    bool global = true;
    int x0 = 0;
    int y0 = 0;
    int side = 0;
    double brightness = 1.0;
    double contrast = 1.0;
    double saturation = 1.0;
    double hue = 0.0;
    double angle_deg = 0.0;
};

struct ViewBatch {
    std::vector<Image> views;  // globals first, then locals; 3 channels each
    std::vector<int> sizes;
    std::vector<ViewRecord> records;
};

/// Pipeline per view: crop -> resize -> brightness -> contrast -> triplicate
/// -> saturation -> hue -> rotate -> standardize. Deterministic in
/// (cfg.seed, sample_seed). Pixel values may be in [0, 255] or [0, 1].
ViewBatch make_views(const Image& gray, const AugmentConfig& cfg, std::uint64_t sample_seed);

/// Zero mean and unit variance over all channels; the standard deviation is
/// floored at 1e-6.
Image standardize(const Image& view);

/// Center square crop resized to `size`, triplicated and standardized.
Image center_view(const Image& gray, int size);

}  // namespace nova::multicrop
