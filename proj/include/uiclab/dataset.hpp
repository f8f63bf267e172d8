#pragma once

#include "uiclab/augment.hpp"
#include "uiclab/rng.hpp"
#include "uiclab/tensor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace uiclab {

using Label = std::int32_t;

enum class Split : std::uint8_t { train = 0, test = 1 };

struct Dataset {
    Tensor images; // N x C x H x W, values in [0, 1]
    std::optional<std::vector<Label>> truth;
    std::vector<Split> split;

    std::size_t size() const { return images.empty() ? 0 : images.dim(0); }
    ImageShape image_shape() const { return {images.dim(1), images.dim(2), images.dim(3)}; }
    /// T, the number of ground-truth classes (0 without truth labels).
    std::size_t num_truth_classes() const;

    void validate() const;
    Dataset subset(Split which) const;
    Dataset select(std::span<const std::size_t> indices) const;
};

/// Per-sample pseudo-class indices.
struct LabelAssignment {
    std::vector<Label> labels;
    std::size_t k = 0;
    std::size_t epoch_of_origin = 0;

    std::size_t size() const { return labels.size(); }
    std::vector<std::size_t> counts() const;
    std::size_t empty_classes() const;
    void validate() const;
};

// ---------------------------------------------------------------------------
// IDX (big-endian extents, unsigned byte payload)

/// Images: 3-d (N, H, W) or 4-d (N, C, H, W) u8 IDX. Labels: 1-d u8 IDX.
Dataset load_idx(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels = std::nullopt);
/// Pixels are written as round(255 * v); labels only when present. Writes a
/// 3-d file for single-channel images, 4-d otherwise.
void save_idx(const Dataset& data, const std::filesystem::path& images,
              const std::optional<std::filesystem::path>& labels = std::nullopt);

/// Comma-separated rows of flattened images, optionally followed by an
/// integer label column.
Dataset load_text(const std::filesystem::path& path, ImageShape shape, bool label_column);

/// Concatenates train and test parts, tagging each sample with its split.
/// Truth labels survive only when both parts carry them.
Dataset concat_splits(Dataset train, std::optional<Dataset> test);

// ---------------------------------------------------------------------------
// Synthetic benchmark

struct SynthSpec {
    std::size_t classes = 10;
    std::size_t per_class = 500;     // train split
    std::size_t test_per_class = 100;
    std::size_t image_size = 16;
    std::size_t channels = 1;
    std::size_t blobs_per_class = 3;
    double blob_sigma = 1.2;        // pixels
    std::size_t max_shift = 2;      // per-sample translation, pixels
    double contrast_jitter = 0.0;   // per-sample amplitude in [1 - j, 1]
    double blob_jitter = 0.0;       // per-blob offset in [-j, j] pixels on each axis
    std::size_t clutter_blobs = 0;  // distractor blobs at uniform random positions
    double noise_sigma = 0.05;

    void validate() const;
    bool operator==(const SynthSpec&) const = default;
};

/// Class t is a fixed arrangement of Gaussian blobs (the same for every seed);
/// each sample applies its own shift, amplitude, per-blob jitter and clutter
/// and then pixel noise. With all of those at zero, every sample of a class is
/// identical.
Dataset synth_clusters(const SynthSpec& spec, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Class-balanced sampling

/// One epoch of class-balanced sampling with replacement: every draw picks a
/// class uniformly, then a member of that class uniformly. The epoch holds N
/// draws split into ceil(N / batch_size) batches (the last may be short).
class ClassBalancedSampler {
public:
    ClassBalancedSampler(const LabelAssignment& assignment, std::size_t batch_size, Rng rng);

    std::size_t num_batches() const { return num_batches_; }
    std::size_t epoch_draws() const { return total_draws_; }
    /// Fills `batch` with the next batch of sample indices; false at epoch end.
    bool next(std::vector<std::size_t>& batch);

private:
    std::vector<std::vector<std::size_t>> members_;
    std::size_t batch_size_;
    std::size_t total_draws_;
    std::size_t num_batches_;
    std::size_t drawn_ = 0;
    Rng rng_;
};

std::vector<std::vector<std::size_t>> class_balanced_batches(const LabelAssignment& assignment, std::size_t batch_size,
                                                             Rng rng);

} // namespace uiclab
