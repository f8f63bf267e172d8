#pragma once

#include "uiclab/dataset.hpp"
#include "uiclab/rng.hpp"
#include "uiclab/tensor.hpp"

#include <span>
#include <vector>

namespace uiclab {

/// NMI = I(A;B) / sqrt(H(A) H(B)), natural logs. When either entropy is zero
/// the result is 1 if both labelings induce the same partition, else 0.
/// Symmetric and relabeling-invariant bit for bit: the sums are accumulated
/// in sorted order.
double nmi(std::span<const Label> a, std::span<const Label> b);

struct PartitionStats {
    double normalized_entropy = 0.0; // H(counts / N) / ln k
    std::size_t min_count = 0;
    std::size_t max_count = 0;
    std::size_t empty_count = 0;
};

PartitionStats partition_stats(const LabelAssignment& assignment);

struct ProbeConfig {
    std::size_t epochs = 32;
    double lr = 0.1;
    double momentum = 0.9;
    std::size_t batch_size = 128;
    double weight_decay = 0.0;
    std::uint64_t seed = 0;

    void validate() const;
};

struct ProbeResult {
    double accuracy = 0.0;
    std::vector<std::size_t> missing_train_classes;
};

/// Trains a fresh affine + softmax head on frozen features (standardised with
/// the training-set statistics) and reports top-1 accuracy on the test set.
ProbeResult linear_probe(const Tensor& train_features, std::span<const Label> train_labels, const Tensor& test_features,
                         std::span<const Label> test_labels, const ProbeConfig& cfg);

struct Episode {
    std::size_t n_way = 0;
    std::size_t k_shot = 0;
    std::size_t n_query = 0;
    std::vector<Label> classes;                      // one per way
    std::vector<std::vector<std::size_t>> support;   // per way, k_shot indices
    std::vector<std::vector<std::size_t>> query;     // per way, n_query indices
};

/// Draws one episode: n_way distinct classes among those holding at least
/// k_shot + n_query samples, then disjoint support/query sets per class.
Episode sample_episode(std::span<const Label> labels, std::size_t n_way, std::size_t k_shot, std::size_t n_query, Rng& rng);

/// Nearest-prototype accuracy (squared Euclidean) of one episode.
double episode_accuracy(const Tensor& features, const Episode& episode);

struct FewShotResult {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t episodes = 0;
};

FewShotResult prototypical_eval(const Tensor& features, std::span<const Label> labels, std::size_t n_way,
                                std::size_t k_shot, std::size_t n_query, std::size_t episodes, Rng rng);

} // namespace uiclab
