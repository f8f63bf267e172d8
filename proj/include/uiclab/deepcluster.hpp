#pragma once

#include "uiclab/dataset.hpp"
#include "uiclab/rng.hpp"
#include "uiclab/tensor.hpp"
#include "uiclab/uic.hpp"

#include <vector>

namespace uiclab {

struct Centroids {
    Tensor matrix; // d x k, column c is centroid c
    std::size_t iteration_count = 0;
};

struct KMeansResult {
    Centroids centroids;
    LabelAssignment assignment;
    double inertia = 0.0; // mean squared distance to the assigned centroid
    /// Inertia after the seeding assignment and after every Lloyd iteration.
    std::vector<double> inertia_history;
};

/// k-means++ seeding followed by Lloyd iterations until the assignment stops
/// changing or `max_iters` updates have run. A cluster left empty by an update
/// is re-seeded at the point farthest from its assigned centroid. Assignment
/// ties go to the lowest centroid index.
KMeansResult kmeans(const Tensor& points, std::size_t k, std::size_t max_iters, Rng rng);

/// The DeepCluster-style baseline: every epoch embeds the whole dataset with
/// the evaluation transform, clusters the N x d embedding matrix with k-means,
/// re-initialises the classifier and trains one class-balanced epoch on the
/// cluster labels. fft_epochs is not used by this method.
TrainingRun run_deepcluster(const Dataset& data, const EncoderConfig& encoder_cfg, const UicConfig& cfg,
                            const EpochCallback& on_epoch = {});

} // namespace uiclab
