#pragma once

#include "uiclab/augment.hpp"
#include "uiclab/dataset.hpp"
#include "uiclab/encoder.hpp"
#include "uiclab/rng.hpp"
#include "uiclab/tensor.hpp"

#include <functional>
#include <optional>
#include <span>
#include <vector>

namespace uiclab {

struct UicConfig {
    std::size_t k = 30;
    std::size_t epochs = 200;
    std::size_t batch_size = 256;
    SgdConfig sgd;
    AugmentPolicy policy_label; // t1
    AugmentPolicy policy_train; // t2
    bool label_aug_enabled = true;
    std::size_t fft_epochs = 0;
    std::size_t kmeans_iters = 20; // deepcluster only
    std::uint64_t seed = 0;
    std::size_t threads = 1;

    void validate() const;
    bool operator==(const UicConfig&) const = default;
};

struct EpochTrace {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    std::optional<double> nmi_vs_prev;
    std::optional<double> nmi_vs_truth;
    double partition_entropy = 0.0;
    std::size_t empty_class_fixes = 0;
    double lr = 0.0;
    double wall_seconds = 0.0;
    bool fft = false;
};

struct TrainingRun {
    std::vector<EpochTrace> trace;
    LabelAssignment labels;
    EncoderState encoder;
};

using EpochCallback = std::function<void(const EpochTrace&)>;

/// Samples of a batch are cut into shards of this size; shard gradients are
/// summed in shard order, so results do not depend on the thread count.
inline constexpr std::size_t kShardSize = 32;

/// How each sample is turned into a network input.
struct ViewSpec {
    /// nullptr selects the deterministic center-crop evaluation transform.
    const AugmentPolicy* policy = nullptr;
    /// Sample n (or draw n) uses stream.fork({n}).
    Rng stream{0};
};

/// Gathers images `indices` into one batch tensor, each transformed per `view`
/// with key `keys[i]` (defaults to the dataset index).
Tensor gather_views(const Dataset& data, std::span<const std::size_t> indices, const ViewSpec& view,
                    std::span<const std::size_t> keys = {});

struct BatchGradients {
    double loss = 0.0;
    std::vector<Tensor> grads;          // parameter order, gradient of the mean loss
    std::vector<Label> predictions;     // argmax of each sample's logits
};

/// Forward, mean cross-entropy against `targets` and backward over one batch.
BatchGradients batch_gradients(const EncoderState& encoder, const Tensor& batch, std::span<const Label> targets,
                               std::size_t threads = 1);

/// Argmax labels of a forward pass (ties to the lowest index).
std::vector<Label> predict(const EncoderState& encoder, const Tensor& batch, std::size_t threads = 1);

/// y_n = argmax f'(t1(x_n)) for every sample, batch by batch.
LabelAssignment generate_pseudo_labels(const Dataset& data, const EncoderState& encoder, const ViewSpec& view,
                                       std::size_t threads = 1, std::size_t batch_size = 256);

/// Repeatedly splits the largest class (ties: lowest index) into two random
/// halves, moving the smaller half into the lowest-index empty class, until
/// no class is empty. Returns the number of splits performed.
std::size_t fix_empty_classes(LabelAssignment& assignment, Rng& rng);

struct EpochResult {
    double mean_loss = 0.0;
    LabelAssignment next_labels;
};

/// One class-balanced supervised epoch. Draw j of the epoch is augmented with
/// stream.fork({tag(Stream::train_aug)}).fork({j}); the sampler uses
/// stream.fork({tag(Stream::sampler)}). The argmax of every training forward pass
/// is recorded into next_labels (last draw wins; unseen samples keep their
/// label).
EpochResult train_epoch(const Dataset& data, const LabelAssignment& assignment, EncoderState& encoder,
                        const AugmentPolicy& policy_train, const SgdConfig& sgd, const Rng& stream,
                        std::size_t batch_size, std::size_t threads = 1);

/// Gradient of the merged objective l(p(f'(t1 x)), f'(t2 x)) on one batch:
/// pseudo-labels from the first view, loss on the second, same parameters.
BatchGradients merged_objective_gradients(const EncoderState& encoder, const Tensor& view1, const Tensor& view2,
                                          std::size_t threads = 1);

/// Embeddings (N x d) of every sample under the evaluation transform.
Tensor embed_dataset(const EncoderState& encoder, const Dataset& data, std::size_t threads = 1,
                     std::size_t batch_size = 256);

/// Per-epoch streams derived from the run seed.
Rng epoch_stream(std::uint64_t seed, Stream purpose, std::size_t epoch);

/// The UIC alternation. Epoch-0 labels come from a label-generation pass over
/// the freshly initialised encoder; every epoch then repairs empty classes,
/// trains one class-balanced epoch and adopts the labels recorded during that
/// epoch's forward passes. With label_aug_enabled off, labels are instead
/// regenerated after every epoch with the evaluation transform. fft_epochs
/// further epochs then train on labels frozen by one evaluation-transform pass.
TrainingRun run_uic(const Dataset& data, const EncoderConfig& encoder_cfg, const UicConfig& cfg,
                    const EpochCallback& on_epoch = {});

namespace detail {
void parallel_for(std::size_t tasks, std::size_t threads, const std::function<void(std::size_t)>& fn);
}

} // namespace uiclab
