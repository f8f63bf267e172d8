#pragma once

#include "uiclab/rng.hpp"
#include "uiclab/tensor.hpp"

#include <span>

namespace uiclab {

struct Range {
    double lo = 0.0;
    double hi = 0.0;
    bool operator==(const Range&) const = default;
};

/// One family of random image transformations t(.).
struct AugmentPolicy {
    Range crop_scale{0.6, 1.0};       // fraction of the image area kept
    Range crop_aspect{0.75, 4.0 / 3.0}; // width / height of the crop window
    double flip_prob = 0.5;
    bool strong = false;               // color jitter + Gaussian blur
    double jitter_strength = 0.4;
    Range blur_sigma{0.1, 1.0};

    void validate() const;
    /// No-op policy: full-image crop, never flip, no strong transforms.
    static AugmentPolicy identity();

    bool operator==(const AugmentPolicy&) const = default;
};

/// Every call to apply_augmentation advances the Rng by exactly this many
/// draws, whatever the policy. Layout relative to the starting position:
///   [0, 40)  crop attempts, 4 draws each (scale, log-aspect, x, y), 10 tries
///   40       horizontal flip
///   41..43   brightness, contrast, saturation factors
///   44, 45   blur on/off, blur sigma
inline constexpr std::uint64_t kAugmentDraws = 46;
inline constexpr std::size_t kCropAttempts = 10;
inline constexpr double kCenterCropFraction = 0.875;

struct ImageShape {
    std::size_t channels = 1;
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t size() const { return channels * height * width; }
    Shape dims() const { return {channels, height, width}; }
    bool operator==(const ImageShape&) const = default;
};

/// Random resized crop (bilinear resize back to H x W), horizontal flip and,
/// with `policy.strong`, color jitter and blur. Output values are clamped to
/// [0, 1].
void apply_augmentation(std::span<const double> image, ImageShape shape, const AugmentPolicy& policy, Rng& rng,
                        std::span<double> out);
Tensor apply_augmentation(const Tensor& image, const AugmentPolicy& policy, Rng& rng);

/// Deterministic center crop keeping kCenterCropFraction of each side,
/// resized back to the input extents.
void center_eval_transform(std::span<const double> image, ImageShape shape, std::span<double> out);
Tensor center_eval_transform(const Tensor& image);

} // namespace uiclab
