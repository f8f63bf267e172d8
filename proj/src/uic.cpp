#include "uiclab/uic.hpp"

#include "uiclab/error.hpp"
#include "uiclab/eval.hpp"
#include "uiclab/log.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace uiclab {

namespace detail {

void parallel_for(std::size_t tasks, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    if (threads <= 1 || tasks <= 1) {
        for (std::size_t i = 0; i < tasks; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        for (std::size_t i = next++; i < tasks; i = next++) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) {
                    error = std::current_exception();
                }
            }
        }
    };
    std::vector<std::thread> pool;
    const std::size_t n = std::min(threads, tasks);
    pool.reserve(n);
    for (std::size_t t = 0; t < n; ++t) {
        pool.emplace_back(worker);
    }
    for (auto& th : pool) {
        th.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

} // namespace detail

namespace {

Tensor rows_of(const Tensor& batch, std::size_t lo, std::size_t hi) {
    Shape shape = batch.shape();
    shape[0] = hi - lo;
    const std::size_t stride = batch.size() / batch.dim(0);
    std::vector<double> values(batch.data() + lo * stride, batch.data() + hi * stride);
    return Tensor(std::move(shape), std::move(values));
}

std::size_t shard_count(std::size_t n) { return (n + kShardSize - 1) / kShardSize; }

} // namespace

void UicConfig::validate() const {
    require(k >= 2, ErrorCode::config, "k >= 2 required");
    require(epochs >= 1, ErrorCode::config, "epochs >= 1 required");
    require(batch_size >= 1, ErrorCode::config, "batch_size >= 1 required");
    require(kmeans_iters >= 1, ErrorCode::config, "kmeans_iters >= 1 required");
    require(threads >= 1, ErrorCode::config, "threads >= 1 required");
    sgd.validate();
    policy_label.validate();
    policy_train.validate();
}

Rng epoch_stream(std::uint64_t seed, Stream purpose, std::size_t epoch) {
    return Rng(seed).fork({tag(purpose), epoch});
}

Tensor gather_views(const Dataset& data, std::span<const std::size_t> indices, const ViewSpec& view,
                    std::span<const std::size_t> keys) {
    require(keys.empty() || keys.size() == indices.size(), ErrorCode::internal, "gather_views: key count mismatch");
    const ImageShape shape = data.image_shape();
    Tensor batch({indices.size(), shape.channels, shape.height, shape.width});
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto src = data.images.slab(indices[i]);
        auto dst = batch.slab(i);
        if (view.policy != nullptr) {
            Rng rng = view.stream.fork({keys.empty() ? indices[i] : keys[i]});
            apply_augmentation(src, shape, *view.policy, rng, dst);
        } else {
            center_eval_transform(src, shape, dst);
        }
    }
    return batch;
}

BatchGradients batch_gradients(const EncoderState& encoder, const Tensor& batch, std::span<const Label> targets,
                               std::size_t threads) {
    const std::size_t n = batch.dim(0);
    require(targets.size() == n, ErrorCode::invalid_argument, "batch_gradients: one target per sample required");
    const std::size_t k = encoder.config.num_classes;
    for (Label t : targets) {
        require(t >= 0 && static_cast<std::size_t>(t) < k, ErrorCode::invalid_argument, "batch_gradients: target outside [0, k)");
    }
    const std::size_t shards = shard_count(n);
    std::vector<std::vector<Tensor>> shard_grads(shards);
    std::vector<double> shard_loss(shards, 0.0);
    BatchGradients out;
    out.predictions.resize(n);
    const double inv_n = 1.0 / static_cast<double>(n);

    detail::parallel_for(shards, threads, [&](std::size_t s) {
        const std::size_t lo = s * kShardSize, hi = std::min(n, lo + kShardSize);
        ForwardCache cache;
        const ForwardOutput fwd = forward(encoder, rows_of(batch, lo, hi), cache);
        Tensor dlogits(fwd.logits.shape());
        double loss = 0.0;
        for (std::size_t i = 0; i < hi - lo; ++i) {
            auto g = dlogits.slab(i);
            loss += cross_entropy(fwd.logits.slab(i), static_cast<std::size_t>(targets[lo + i]), g);
            for (double& v : g) {
                v *= inv_n;
            }
            out.predictions[lo + i] = static_cast<Label>(argmax(fwd.logits.slab(i)));
        }
        shard_loss[s] = loss;
        shard_grads[s] = encoder.params.zeros_like();
        backward(encoder, cache, dlogits, shard_grads[s]);
    });

    out.grads = std::move(shard_grads[0]);
    double total = shard_loss[0];
    for (std::size_t s = 1; s < shards; ++s) {
        total += shard_loss[s];
        for (std::size_t p = 0; p < out.grads.size(); ++p) {
            auto dst = out.grads[p].values();
            const auto src = shard_grads[s][p].values();
            for (std::size_t j = 0; j < dst.size(); ++j) {
                dst[j] += src[j];
            }
        }
    }
    out.loss = total * inv_n;
    return out;
}

std::vector<Label> predict(const EncoderState& encoder, const Tensor& batch, std::size_t threads) {
    const std::size_t n = batch.dim(0);
    std::vector<Label> labels(n);
    detail::parallel_for(shard_count(n), threads, [&](std::size_t s) {
        const std::size_t lo = s * kShardSize, hi = std::min(n, lo + kShardSize);
        const ForwardOutput fwd = forward(encoder, rows_of(batch, lo, hi));
        for (std::size_t i = 0; i < hi - lo; ++i) {
            labels[lo + i] = static_cast<Label>(argmax(fwd.logits.slab(i)));
        }
    });
    return labels;
}

LabelAssignment generate_pseudo_labels(const Dataset& data, const EncoderState& encoder, const ViewSpec& view,
                                       std::size_t threads, std::size_t batch_size) {
    require(batch_size >= 1, ErrorCode::invalid_argument, "batch_size must be >= 1");
    const std::size_t n = data.size();
    LabelAssignment out;
    out.k = encoder.config.num_classes;
    out.labels.resize(n);
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        idx.resize(end - start);
        std::iota(idx.begin(), idx.end(), start);
        const auto preds = predict(encoder, gather_views(data, idx, view), threads);
        std::copy(preds.begin(), preds.end(), out.labels.begin() + static_cast<std::ptrdiff_t>(start));
    }
    return out;
}

std::size_t fix_empty_classes(LabelAssignment& assignment, Rng& rng) {
    require(assignment.k >= 2, ErrorCode::invalid_argument, "fix_empty_classes needs k >= 2");
    assignment.validate();
    std::vector<std::vector<std::size_t>> members(assignment.k);
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        members[static_cast<std::size_t>(assignment.labels[i])].push_back(i);
    }
    std::size_t fixes = 0;
    for (;;) {
        std::size_t empty = assignment.k;
        std::size_t largest = 0;
        for (std::size_t c = 0; c < assignment.k; ++c) {
            if (members[c].empty() && empty == assignment.k) {
                empty = c;
            }
            if (members[c].size() > members[largest].size()) {
                largest = c;
            }
        }
        if (empty == assignment.k) {
            return fixes;
        }
        auto& donor = members[largest];
        require(donor.size() >= 2, ErrorCode::invalid_argument,
                "fix_empty_classes: " + std::to_string(assignment.size()) + " samples cannot fill " +
                    std::to_string(assignment.k) + " classes");
        for (std::size_t i = donor.size(); i > 1; --i) {
            std::swap(donor[i - 1], donor[rng.uniform_index(i)]);
        }
        const std::size_t moved = donor.size() / 2;
        auto& target = members[empty];
        target.assign(donor.begin(), donor.begin() + static_cast<std::ptrdiff_t>(moved));
        donor.erase(donor.begin(), donor.begin() + static_cast<std::ptrdiff_t>(moved));
        for (std::size_t idx : target) {
            assignment.labels[idx] = static_cast<Label>(empty);
        }
        ++fixes;
    }
}

EpochResult train_epoch(const Dataset& data, const LabelAssignment& assignment, EncoderState& encoder,
                        const AugmentPolicy& policy_train, const SgdConfig& sgd, const Rng& stream,
                        std::size_t batch_size, std::size_t threads) {
    require(assignment.size() == data.size(), ErrorCode::invalid_argument, "train_epoch: one label per sample required");
    require(assignment.k == encoder.config.num_classes, ErrorCode::invalid_argument,
            "train_epoch: assignment k does not match the classifier");
    ClassBalancedSampler sampler(assignment, batch_size, stream.fork({tag(Stream::sampler)}));
    const ViewSpec view{&policy_train, stream.fork({tag(Stream::train_aug)})};

    EpochResult result{0.0, assignment};
    std::vector<std::size_t> batch;
    std::vector<std::size_t> keys;
    std::vector<Label> targets;
    std::size_t draw = 0;
    std::size_t batch_index = 0;
    double total = 0.0;
    while (sampler.next(batch)) {
        keys.resize(batch.size());
        std::iota(keys.begin(), keys.end(), draw);
        targets.resize(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
            targets[i] = assignment.labels[batch[i]];
        }
        BatchGradients bg = batch_gradients(encoder, gather_views(data, batch, view, keys), targets, threads);
        if (!std::isfinite(bg.loss)) {
            std::ostringstream os;
            os << "non-finite loss at batch " << batch_index << " (lr=" << sgd.lr << ")";
            fail(ErrorCode::numeric, os.str());
        }
        for (std::size_t i = 0; i < batch.size(); ++i) {
            result.next_labels.labels[batch[i]] = bg.predictions[i];
        }
        for (std::size_t p = 0; p < bg.grads.size(); ++p) {
            encoder.params.grad(p) = std::move(bg.grads[p]);
        }
        sgd_step(encoder.params, sgd);
        total += bg.loss * static_cast<double>(batch.size());
        draw += batch.size();
        ++batch_index;
    }
    result.mean_loss = total / static_cast<double>(draw);
    return result;
}

BatchGradients merged_objective_gradients(const EncoderState& encoder, const Tensor& view1, const Tensor& view2,
                                          std::size_t threads) {
    require(view1.shape() == view2.shape(), ErrorCode::invalid_argument, "merged objective: views differ in shape");
    const std::vector<Label> positives = predict(encoder, view1, threads);
    return batch_gradients(encoder, view2, positives, threads);
}

Tensor embed_dataset(const EncoderState& encoder, const Dataset& data, std::size_t threads, std::size_t batch_size) {
    const std::size_t n = data.size(), d = encoder.config.embedding_dim;
    Tensor out({n, d});
    std::vector<std::size_t> idx;
    const ViewSpec view{};
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        idx.resize(end - start);
        std::iota(idx.begin(), idx.end(), start);
        const Tensor batch = gather_views(data, idx, view);
        detail::parallel_for(shard_count(batch.dim(0)), threads, [&](std::size_t s) {
            const std::size_t lo = s * kShardSize, hi = std::min(batch.dim(0), lo + kShardSize);
            const ForwardOutput fwd = forward(encoder, rows_of(batch, lo, hi));
            std::copy(fwd.embeddings.values().begin(), fwd.embeddings.values().end(), out.data() + (start + lo) * d);
        });
    }
    return out;
}

namespace {

EpochTrace make_trace(std::size_t epoch, double loss, const LabelAssignment& out_labels, const LabelAssignment* prev,
                      const Dataset& data, std::size_t fixes, double lr) {
    EpochTrace t;
    t.epoch = epoch;
    t.mean_loss = loss;
    if (prev != nullptr) {
        t.nmi_vs_prev = nmi(out_labels.labels, prev->labels);
    }
    if (data.truth) {
        t.nmi_vs_truth = nmi(out_labels.labels, *data.truth);
    }
    t.partition_entropy = partition_stats(out_labels).normalized_entropy;
    t.empty_class_fixes = fixes;
    t.lr = lr;
    return t;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace

TrainingRun run_uic(const Dataset& data, const EncoderConfig& encoder_cfg, const UicConfig& cfg, const EpochCallback& on_epoch) {
    cfg.validate();
    data.validate();
    EncoderConfig ec = encoder_cfg;
    ec.num_classes = cfg.k;
    TrainingRun run{{}, {}, init_encoder(ec)};
    EncoderState& encoder = run.encoder;

    const ViewSpec eval_view{};
    const ViewSpec bootstrap{cfg.label_aug_enabled ? &cfg.policy_label : nullptr, epoch_stream(cfg.seed, Stream::label_aug, 0)};
    LabelAssignment labels = generate_pseudo_labels(data, encoder, bootstrap, cfg.threads, cfg.batch_size);

    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        const auto t0 = std::chrono::steady_clock::now();
        Rng repair = epoch_stream(cfg.seed, Stream::repair, e);
        const std::size_t fixes = fix_empty_classes(labels, repair);
        SgdConfig sgd = cfg.sgd;
        sgd.lr = linear_decay_lr(cfg.sgd.lr, e, cfg.epochs);
        EpochResult r = train_epoch(data, labels, encoder, cfg.policy_train, sgd, epoch_stream(cfg.seed, Stream::train_aug, e),
                                    cfg.batch_size, cfg.threads);
        LabelAssignment next = cfg.label_aug_enabled
                                   ? std::move(r.next_labels)
                                   : generate_pseudo_labels(data, encoder, eval_view, cfg.threads, cfg.batch_size);
        next.epoch_of_origin = e + 1;
        EpochTrace t = make_trace(e, r.mean_loss, next, &labels, data, fixes, sgd.lr);
        labels = std::move(next);
        t.wall_seconds = seconds_since(t0);
        run.trace.push_back(t);
        if (on_epoch) {
            on_epoch(t);
        }
    }

    if (cfg.fft_epochs > 0) {
        LabelAssignment frozen = generate_pseudo_labels(data, encoder, eval_view, cfg.threads, cfg.batch_size);
        frozen.epoch_of_origin = cfg.epochs;
        Rng repair = epoch_stream(cfg.seed, Stream::repair, cfg.epochs);
        std::size_t fixes = fix_empty_classes(frozen, repair);
        for (std::size_t f = 0; f < cfg.fft_epochs; ++f) {
            const auto t0 = std::chrono::steady_clock::now();
            SgdConfig sgd = cfg.sgd;
            sgd.lr = linear_decay_lr(cfg.sgd.lr, f, cfg.fft_epochs);
            const std::size_t epoch = cfg.epochs + f;
            EpochResult r = train_epoch(data, frozen, encoder, cfg.policy_train, sgd, epoch_stream(cfg.seed, Stream::train_aug, epoch),
                                        cfg.batch_size, cfg.threads);
            EpochTrace t = make_trace(epoch, r.mean_loss, r.next_labels, &frozen, data, fixes, sgd.lr);
            t.fft = true;
            t.wall_seconds = seconds_since(t0);
            fixes = 0;
            run.trace.push_back(t);
            if (on_epoch) {
                on_epoch(t);
            }
        }
        labels = std::move(frozen);
    }
    run.labels = std::move(labels);
    return run;
}

} // namespace uiclab
