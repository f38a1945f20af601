#include "nova/multicrop.hpp"

#include "nova/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace nova::multicrop {

namespace {

float lerp(float a, float b, float t) { return a == b ? a : a + t * (b - a); }

// Bilinear sample of channel c with coordinates clamped to the image, so
// out-of-bounds reads take the edge value.
float sample_bilinear(const Image& img, int c, double y, double x) {
    y = std::clamp(y, 0.0, static_cast<double>(img.height - 1));
    x = std::clamp(x, 0.0, static_cast<double>(img.width - 1));
    const int y0 = static_cast<int>(std::floor(y));
    const int x0 = static_cast<int>(std::floor(x));
    const int y1 = std::min(y0 + 1, img.height - 1);
    const int x1 = std::min(x0 + 1, img.width - 1);
    const auto fy = static_cast<float>(y - y0);
    const auto fx = static_cast<float>(x - x0);
    const float top = lerp(img.at(c, y0, x0), img.at(c, y0, x1), fx);
    const float bottom = lerp(img.at(c, y1, x0), img.at(c, y1, x1), fx);
    return lerp(top, bottom, fy);
}

// Square source region [x0, x0 + side) x [y0, y0 + side) resized to size x size.
Image crop_resize(const Image& src, int x0, int y0, int side, int size) {
    Image out(src.channels, size, size);
    const double scale = static_cast<double>(side) / size;
    for (int c = 0; c < src.channels; ++c)
        for (int y = 0; y < size; ++y) {
            const double sy = y0 + (y + 0.5) * scale - 0.5;
            for (int x = 0; x < size; ++x) {
                const double sx = x0 + (x + 0.5) * scale - 0.5;
                out.at(c, y, x) = sample_bilinear(src, c, sy, sx);
            }
        }
    return out;
}

double image_mean(const Image& img) {
    double s = 0.0;
    for (float v : img.data) s += v;
    return s / static_cast<double>(img.data.size());
}

void adjust_brightness(Image& img, double factor) {
    if (factor == 1.0) return;
    for (float& v : img.data) v = std::clamp(static_cast<float>(v * factor), 0.0f, 1.0f);
}

void adjust_contrast(Image& img, double factor) {
    if (factor == 1.0) return;
    const double m = image_mean(img);
    for (float& v : img.data) v = std::clamp(static_cast<float>((v - m) * factor + m), 0.0f, 1.0f);
}

Image triplicate(const Image& gray) {
    Image out(3, gray.height, gray.width);
    for (int c = 0; c < 3; ++c) std::copy(gray.data.begin(), gray.data.end(), out.data.begin() + c * gray.plane());
    return out;
}

// Pixels with equal channels carry no chroma; both color ops leave them as is.
void adjust_saturation(Image& img, double factor) {
    if (factor == 1.0) return;
    const std::size_t p = img.plane();
    float* r = img.data.data();
    float* g = r + p;
    float* b = g + p;
    for (std::size_t i = 0; i < p; ++i) {
        if (r[i] == g[i] && g[i] == b[i]) continue;
        const double y = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
        r[i] = std::clamp(static_cast<float>(y + factor * (r[i] - y)), 0.0f, 1.0f);
        g[i] = std::clamp(static_cast<float>(y + factor * (g[i] - y)), 0.0f, 1.0f);
        b[i] = std::clamp(static_cast<float>(y + factor * (b[i] - y)), 0.0f, 1.0f);
    }
}

// Hue shift as a rotation of the YIQ chroma plane by shift * 2 pi.
void adjust_hue(Image& img, double shift) {
    if (shift == 0.0) return;
    const double a = shift * 2.0 * std::numbers::pi;
    const double cs = std::cos(a), sn = std::sin(a);
    const std::size_t p = img.plane();
    float* r = img.data.data();
    float* g = r + p;
    float* b = g + p;
    for (std::size_t i = 0; i < p; ++i) {
        if (r[i] == g[i] && g[i] == b[i]) continue;
        const double y = 0.299 * r[i] + 0.587 * g[i] + 0.114 * b[i];
        const double ci = 0.596 * r[i] - 0.274 * g[i] - 0.322 * b[i];
        const double cq = 0.211 * r[i] - 0.523 * g[i] + 0.312 * b[i];
        const double i2 = cs * ci - sn * cq;
        const double q2 = sn * ci + cs * cq;
        r[i] = std::clamp(static_cast<float>(y + 0.956 * i2 + 0.621 * q2), 0.0f, 1.0f);
        g[i] = std::clamp(static_cast<float>(y - 0.272 * i2 - 0.647 * q2), 0.0f, 1.0f);
        b[i] = std::clamp(static_cast<float>(y - 1.106 * i2 + 1.703 * q2), 0.0f, 1.0f);
    }
}

Image rotate(const Image& img, double angle_deg) {
    if (angle_deg == 0.0) return img;
    const double a = angle_deg * std::numbers::pi / 180.0;
    const double cs = std::cos(a), sn = std::sin(a);
    const double cy = (img.height - 1) / 2.0, cx = (img.width - 1) / 2.0;
    Image out(img.channels, img.height, img.width);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            // inverse map: rotate the output coordinate by -angle
            const double dx = x - cx, dy = y - cy;
            const double sx = cs * dx + sn * dy + cx;
            const double sy = -sn * dx + cs * dy + cy;
            for (int c = 0; c < img.channels; ++c) out.at(c, y, x) = sample_bilinear(img, c, sy, sx);
        }
    return out;
}

Image to_unit_range(const Image& gray) {
    if (gray.channels != 1) throw std::invalid_argument("make_views: expected a single-channel image");
    const float mx = gray.data.empty() ? 0.0f : *std::max_element(gray.data.begin(), gray.data.end());
    if (mx <= 1.0f) return gray;
    Image out = gray;
    for (float& v : out.data) v /= 255.0f;
    return out;
}

int min_side(const AugmentConfig& cfg) {
    return static_cast<int>(std::ceil(cfg.local.size * std::sqrt(cfg.local.scale_min)));
}

void validate_crop(const CropSpec& s, const char* which) {
    if (s.count < 0 || s.size <= 0) throw std::invalid_argument(std::string(which) + " crop: invalid count/size");
    if (!(s.scale_min > 0.0 && s.scale_min <= s.scale_max && s.scale_max <= 1.0))
        throw std::invalid_argument(std::string(which) + " crop: need 0 < scale_min <= scale_max <= 1");
}

}  // namespace

void validate(const AugmentConfig& cfg) {
    validate_crop(cfg.global, "global");
    validate_crop(cfg.local, "local");
    if (cfg.view_count() < 1) throw std::invalid_argument("augment: no views configured");
    if (!(cfg.jitter_range >= 0.0) || cfg.jitter_range >= 1.0)
        throw std::invalid_argument("augment: jitter_range must be in [0, 1)");
    if (!(cfg.rotation_deg >= 0.0)) throw std::invalid_argument("augment: rotation_deg must be >= 0");
}

Image standardize(const Image& view) {
    if (view.empty()) throw std::invalid_argument("standardize: empty image");
    const double n = static_cast<double>(view.data.size());
    double mean = 0.0;
    for (float v : view.data) mean += v;
    mean /= n;
    double var = 0.0;
    for (float v : view.data) var += (v - mean) * (v - mean);
    const double stddev = std::max(std::sqrt(var / n), 1e-6);
    Image out(view.channels, view.height, view.width);
    for (std::size_t i = 0; i < view.data.size(); ++i)
        out.data[i] = static_cast<float>((view.data[i] - mean) / stddev);
    return out;
}

ViewBatch make_views(const Image& input, const AugmentConfig& cfg, std::uint64_t sample_seed) {
    validate(cfg);
    const Image gray = to_unit_range(input);
    const int H = gray.height, W = gray.width;
    const int shortest = std::min(H, W);
    if (shortest < min_side(cfg))
        throw std::invalid_argument("make_views: image smaller than the minimum croppable region");
    const double area = static_cast<double>(H) * W;
    if (std::sqrt(std::max(cfg.global.scale_max, cfg.local.scale_max) * area) > shortest + 0.5)
        throw std::invalid_argument("make_views: image too elongated for square crops of the configured area");

    Rng gen(derive_seed(cfg.seed, sample_seed));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(gen); };

    ViewBatch batch;
    batch.views.reserve(cfg.view_count());
    const double j = cfg.jitter_range;
    for (int v = 0; v < cfg.view_count(); ++v) {
        const bool is_global = v < cfg.global.count;
        const CropSpec& spec = is_global ? cfg.global : cfg.local;
        ViewRecord rec;
        rec.global = is_global;
        const double scale = uniform(spec.scale_min, spec.scale_max);
        rec.side = std::clamp(static_cast<int>(std::lround(std::sqrt(scale * area))), 1, shortest);
        rec.x0 = std::uniform_int_distribution<int>(0, W - rec.side)(gen);
        rec.y0 = std::uniform_int_distribution<int>(0, H - rec.side)(gen);
        rec.brightness = uniform(1.0 - j, 1.0 + j);
        rec.contrast = uniform(1.0 - j, 1.0 + j);
        rec.saturation = uniform(1.0 - j, 1.0 + j);
        rec.hue = uniform(-j, j);
        rec.angle_deg = uniform(-cfg.rotation_deg, cfg.rotation_deg);

        Image view = crop_resize(gray, rec.x0, rec.y0, rec.side, spec.size);
        adjust_brightness(view, rec.brightness);
        adjust_contrast(view, rec.contrast);
        view = triplicate(view);
        adjust_saturation(view, rec.saturation);
        adjust_hue(view, rec.hue);
        view = rotate(view, rec.angle_deg);
        batch.views.push_back(standardize(view));
        batch.sizes.push_back(spec.size);
        batch.records.push_back(rec);
    }
    return batch;
}

Image center_view(const Image& input, int size) {
    const Image gray = to_unit_range(input);
    const int side = std::min(gray.height, gray.width);
    if (side < 1 || size < 1) throw std::invalid_argument("center_view: empty image or size");
    const int x0 = (gray.width - side) / 2;
    const int y0 = (gray.height - side) / 2;
    return standardize(triplicate(crop_resize(gray, x0, y0, side, size)));
}

}  // namespace nova::multicrop
