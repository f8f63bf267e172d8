#include "uiclab/augment.hpp"

#include "uiclab/error.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace uiclab {

namespace {

struct Window {
    double x0, y0, w, h;
};

ImageShape shape_of(const Tensor& image) {
    require(image.rank() == 3, ErrorCode::invalid_argument, "augmentation expects a C x H x W image");
    return {image.dim(0), image.dim(1), image.dim(2)};
}

// Bilinear resample of window `win` onto the full output grid. Sample centres
// map as src = x0 + (j + 0.5) * w / W - 0.5, so a full-image window reproduces
// the input exactly.
void resample(std::span<const double> image, ImageShape s, Window win, std::span<double> out) {
    const double sx = win.w / static_cast<double>(s.width);
    const double sy = win.h / static_cast<double>(s.height);
    const auto hmax = static_cast<std::ptrdiff_t>(s.height) - 1;
    const auto wmax = static_cast<std::ptrdiff_t>(s.width) - 1;
    std::vector<std::ptrdiff_t> x_lo(s.width), x_hi(s.width);
    std::vector<double> x_frac(s.width);
    for (std::size_t j = 0; j < s.width; ++j) {
        const double src = std::clamp(win.x0 + (static_cast<double>(j) + 0.5) * sx - 0.5, 0.0, static_cast<double>(wmax));
        const double fl = std::floor(src);
        x_lo[j] = static_cast<std::ptrdiff_t>(fl);
        x_hi[j] = std::min(x_lo[j] + 1, wmax);
        x_frac[j] = src - fl;
    }
    const std::size_t hw = s.height * s.width;
    for (std::size_t i = 0; i < s.height; ++i) {
        const double src = std::clamp(win.y0 + (static_cast<double>(i) + 0.5) * sy - 0.5, 0.0, static_cast<double>(hmax));
        const double fl = std::floor(src);
        const auto y_lo = static_cast<std::ptrdiff_t>(fl);
        const auto y_hi = std::min(y_lo + 1, hmax);
        const double fy = src - fl;
        for (std::size_t c = 0; c < s.channels; ++c) {
            const double* plane = image.data() + c * hw;
            const double* row0 = plane + y_lo * static_cast<std::ptrdiff_t>(s.width);
            const double* row1 = plane + y_hi * static_cast<std::ptrdiff_t>(s.width);
            double* dst = out.data() + c * hw + i * s.width;
            for (std::size_t j = 0; j < s.width; ++j) {
                const double top = row0[x_lo[j]] + x_frac[j] * (row0[x_hi[j]] - row0[x_lo[j]]);
                const double bottom = row1[x_lo[j]] + x_frac[j] * (row1[x_hi[j]] - row1[x_lo[j]]);
                dst[j] = top + fy * (bottom - top);
            }
        }
    }
}

Window draw_crop(const AugmentPolicy& policy, ImageShape s, const Rng& rng, std::uint64_t base) {
    const double area = static_cast<double>(s.height * s.width);
    const double log_lo = std::log(policy.crop_aspect.lo);
    const double log_hi = std::log(policy.crop_aspect.hi);
    for (std::size_t attempt = 0; attempt < kCropAttempts; ++attempt) {
        const std::uint64_t at = base + 4 * attempt;
        const double scale = policy.crop_scale.lo + (policy.crop_scale.hi - policy.crop_scale.lo) * rng.peek_double(at);
        const double ratio = std::exp(log_lo + (log_hi - log_lo) * rng.peek_double(at + 1));
        const double w = std::sqrt(area * scale * ratio);
        const double h = std::sqrt(area * scale / ratio);
        if (w < 1.0 || h < 1.0 || w > static_cast<double>(s.width) || h > static_cast<double>(s.height)) {
            continue;
        }
        const double x0 = rng.peek_double(at + 2) * (static_cast<double>(s.width) - w);
        const double y0 = rng.peek_double(at + 3) * (static_cast<double>(s.height) - h);
        return {x0, y0, w, h};
    }
    return {0.0, 0.0, static_cast<double>(s.width), static_cast<double>(s.height)};
}

void flip_horizontal(ImageShape s, std::span<double> img) {
    for (std::size_t r = 0; r < s.channels * s.height; ++r) {
        auto row = img.subspan(r * s.width, s.width);
        std::reverse(row.begin(), row.end());
    }
}

void clamp_unit(std::span<double> img) {
    for (double& v : img) {
        v = std::clamp(v, 0.0, 1.0);
    }
}

std::vector<double> luminance(ImageShape s, std::span<const double> img) {
    const std::size_t hw = s.height * s.width;
    std::vector<double> lum(hw);
    if (s.channels == 3) {
        for (std::size_t p = 0; p < hw; ++p) {
            lum[p] = 0.299 * img[p] + 0.587 * img[hw + p] + 0.114 * img[2 * hw + p];
        }
    } else {
        for (std::size_t p = 0; p < hw; ++p) {
            double acc = 0.0;
            for (std::size_t c = 0; c < s.channels; ++c) {
                acc += img[c * hw + p];
            }
            lum[p] = acc / static_cast<double>(s.channels);
        }
    }
    return lum;
}

// Brightness and contrast apply to any image; saturation only to RGB.
void color_jitter(ImageShape s, double strength, double u_bright, double u_contrast, double u_sat, std::span<double> img) {
    const double lo = std::max(0.0, 1.0 - strength);
    const double hi = 1.0 + strength;
    const double bright = lo + (hi - lo) * u_bright;
    const double contrast = lo + (hi - lo) * u_contrast;
    const double sat = lo + (hi - lo) * u_sat;

    for (double& v : img) {
        v *= bright;
    }
    clamp_unit(img);

    const auto lum = luminance(s, img);
    double mean = 0.0;
    for (double v : lum) {
        mean += v;
    }
    mean /= static_cast<double>(lum.size());
    for (double& v : img) {
        v = mean + contrast * (v - mean);
    }
    clamp_unit(img);

    if (s.channels == 3) {
        const auto gray = luminance(s, img);
        const std::size_t hw = s.height * s.width;
        for (std::size_t c = 0; c < 3; ++c) {
            for (std::size_t p = 0; p < hw; ++p) {
                double& v = img[c * hw + p];
                v = gray[p] + sat * (v - gray[p]);
            }
        }
        clamp_unit(img);
    }
}

void gaussian_blur(ImageShape s, double sigma, std::span<double> img) {
    const auto radius = static_cast<std::ptrdiff_t>(std::ceil(3.0 * sigma));
    if (radius < 1) {
        return;
    }
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
        const double v = std::exp(-0.5 * static_cast<double>(i * i) / (sigma * sigma));
        kernel[static_cast<std::size_t>(i + radius)] = v;
        total += v;
    }
    for (double& v : kernel) {
        v /= total;
    }
    const auto h = static_cast<std::ptrdiff_t>(s.height), w = static_cast<std::ptrdiff_t>(s.width);
    std::vector<double> tmp(static_cast<std::size_t>(h * w));
    for (std::size_t c = 0; c < s.channels; ++c) {
        double* plane = img.data() + c * s.height * s.width;
        for (std::ptrdiff_t y = 0; y < h; ++y) {
            for (std::ptrdiff_t x = 0; x < w; ++x) {
                double acc = 0.0;
                for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
                    acc += kernel[static_cast<std::size_t>(k + radius)] * plane[y * w + std::clamp<std::ptrdiff_t>(x + k, 0, w - 1)];
                }
                tmp[static_cast<std::size_t>(y * w + x)] = acc;
            }
        }
        for (std::ptrdiff_t y = 0; y < h; ++y) {
            for (std::ptrdiff_t x = 0; x < w; ++x) {
                double acc = 0.0;
                for (std::ptrdiff_t k = -radius; k <= radius; ++k) {
                    acc += kernel[static_cast<std::size_t>(k + radius)] * tmp[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(y + k, 0, h - 1) * w + x)];
                }
                plane[y * w + x] = acc;
            }
        }
    }
}

} // namespace

void AugmentPolicy::validate() const {
    auto check_range = [](const Range& r, const char* name, bool positive) {
        require(r.lo <= r.hi, ErrorCode::config, std::string(name) + ": lo must not exceed hi");
        require(!positive || r.lo > 0.0, ErrorCode::config, std::string(name) + " must be positive");
    };
    check_range(crop_scale, "crop_scale", true);
    require(crop_scale.hi <= 1.0, ErrorCode::config, "crop_scale must lie in (0, 1]");
    check_range(crop_aspect, "crop_aspect", true);
    check_range(blur_sigma, "blur_sigma", true);
    require(flip_prob >= 0.0 && flip_prob <= 1.0, ErrorCode::config, "flip_prob must lie in [0, 1]");
    require(jitter_strength >= 0.0, ErrorCode::config, "jitter_strength must be non-negative");
}

AugmentPolicy AugmentPolicy::identity() {
    AugmentPolicy p;
    p.crop_scale = {1.0, 1.0};
    p.crop_aspect = {1.0, 1.0};
    p.flip_prob = 0.0;
    p.strong = false;
    return p;
}

void apply_augmentation(std::span<const double> image, ImageShape shape, const AugmentPolicy& policy, Rng& rng,
                        std::span<double> out) {
    require(image.size() == shape.size() && out.size() == shape.size(), ErrorCode::invalid_argument,
            "apply_augmentation: buffer size mismatch");
    const std::uint64_t base = rng.position();
    rng.skip(kAugmentDraws);

    resample(image, shape, draw_crop(policy, shape, rng, base), out);
    if (rng.peek_double(base + 40) < policy.flip_prob) {
        flip_horizontal(shape, out);
    }
    if (policy.strong) {
        color_jitter(shape, policy.jitter_strength, rng.peek_double(base + 41), rng.peek_double(base + 42),
                     rng.peek_double(base + 43), out);
        if (rng.peek_double(base + 44) < 0.5) {
            const double sigma = policy.blur_sigma.lo + (policy.blur_sigma.hi - policy.blur_sigma.lo) * rng.peek_double(base + 45);
            gaussian_blur(shape, sigma, out);
        }
    }
    clamp_unit(out);
}

Tensor apply_augmentation(const Tensor& image, const AugmentPolicy& policy, Rng& rng) {
    Tensor out(image.shape());
    apply_augmentation(image.values(), shape_of(image), policy, rng, out.values());
    return out;
}

void center_eval_transform(std::span<const double> image, ImageShape shape, std::span<double> out) {
    require(image.size() == shape.size() && out.size() == shape.size(), ErrorCode::invalid_argument,
            "center_eval_transform: buffer size mismatch");
    const double w = kCenterCropFraction * static_cast<double>(shape.width);
    const double h = kCenterCropFraction * static_cast<double>(shape.height);
    const Window win{(static_cast<double>(shape.width) - w) / 2.0, (static_cast<double>(shape.height) - h) / 2.0, w, h};
    resample(image, shape, win, out);
    clamp_unit(out);
}

Tensor center_eval_transform(const Tensor& image) {
    Tensor out(image.shape());
    center_eval_transform(image.values(), shape_of(image), out.values());
    return out;
}

} // namespace uiclab
