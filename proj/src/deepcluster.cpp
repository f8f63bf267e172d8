#include "uiclab/deepcluster.hpp"

#include "uiclab/error.hpp"
#include "uiclab/eval.hpp"
#include "uiclab/log.hpp"

#include <algorithm>
#include <chrono>
#include <limits>

namespace uiclab {

namespace {

double squared_distance(std::span<const double> p, const std::vector<double>& centroids, std::size_t c, std::size_t d) {
    const double* q = centroids.data() + c * d;
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        const double diff = p[j] - q[j];
        acc += diff * diff;
    }
    return acc;
}

struct Assignment {
    std::vector<Label> labels;
    std::vector<double> dist; // squared distance to the assigned centroid
    double inertia = 0.0;
};

Assignment assign(const Tensor& points, const std::vector<double>& centroids, std::size_t k) {
    const std::size_t n = points.dim(0), d = points.dim(1);
    Assignment a;
    a.labels.resize(n);
    a.dist.resize(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto p = points.slab(i);
        std::size_t best = 0;
        double best_d = squared_distance(p, centroids, 0, d);
        for (std::size_t c = 1; c < k; ++c) {
            const double dist = squared_distance(p, centroids, c, d);
            if (dist < best_d) {
                best_d = dist;
                best = c;
            }
        }
        a.labels[i] = static_cast<Label>(best);
        a.dist[i] = best_d;
        total += best_d;
    }
    a.inertia = total / static_cast<double>(n);
    return a;
}

// Centroids are kept k x d (row per centroid) internally.
std::vector<double> kmeanspp_seed(const Tensor& points, std::size_t k, Rng& rng) {
    const std::size_t n = points.dim(0), d = points.dim(1);
    std::vector<double> centroids(k * d);
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    std::size_t chosen = rng.uniform_index(n);
    for (std::size_t c = 0; c < k; ++c) {
        const auto p = points.slab(chosen);
        std::copy(p.begin(), p.end(), centroids.begin() + static_cast<std::ptrdiff_t>(c * d));
        if (c + 1 == k) {
            break;
        }
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            nearest[i] = std::min(nearest[i], squared_distance(points.slab(i), centroids, c, d));
            total += nearest[i];
        }
        const double u = rng.next_double();
        if (total <= 0.0) {
            chosen = static_cast<std::size_t>(u * static_cast<double>(n));
            continue;
        }
        const double target = u * total;
        double acc = 0.0;
        chosen = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (nearest[i] <= 0.0) {
                continue;
            }
            acc += nearest[i];
            chosen = i;
            if (acc > target) {
                break;
            }
        }
    }
    return centroids;
}

} // namespace

KMeansResult kmeans(const Tensor& points, std::size_t k, std::size_t max_iters, Rng rng) {
    require(points.rank() == 2, ErrorCode::invalid_argument, "kmeans: points must be an N x d matrix");
    const std::size_t n = points.dim(0), d = points.dim(1);
    require(k >= 1, ErrorCode::invalid_argument, "kmeans: k must be >= 1");
    require(n >= k, ErrorCode::invalid_argument,
            "kmeans: " + std::to_string(n) + " points cannot form " + std::to_string(k) + " clusters");

    std::vector<double> centroids = kmeanspp_seed(points, k, rng);
    Assignment current = assign(points, centroids, k);
    KMeansResult result;
    result.inertia_history.push_back(current.inertia);

    std::size_t iterations = 0;
    for (; iterations < max_iters;) {
        std::vector<double> sums(k * d, 0.0);
        std::vector<std::size_t> counts(k, 0);
        for (std::size_t i = 0; i < n; ++i) {
            const auto c = static_cast<std::size_t>(current.labels[i]);
            const auto p = points.slab(i);
            for (std::size_t j = 0; j < d; ++j) {
                sums[c * d + j] += p[j];
            }
            ++counts[c];
        }
        std::vector<double> far = current.dist;
        for (std::size_t c = 0; c < k; ++c) {
            if (counts[c] > 0) {
                for (std::size_t j = 0; j < d; ++j) {
                    centroids[c * d + j] = sums[c * d + j] / static_cast<double>(counts[c]);
                }
            } else {
                const auto it = std::max_element(far.begin(), far.end());
                const auto i = static_cast<std::size_t>(it - far.begin());
                const auto p = points.slab(i);
                std::copy(p.begin(), p.end(), centroids.begin() + static_cast<std::ptrdiff_t>(c * d));
                far[i] = -1.0;
                log_debug("kmeans: re-seeded empty cluster " + std::to_string(c));
            }
        }
        ++iterations;
        Assignment next = assign(points, centroids, k);
        result.inertia_history.push_back(next.inertia);
        const bool changed = next.labels != current.labels;
        current = std::move(next);
        if (!changed) {
            break;
        }
    }

    result.centroids.matrix = Tensor({d, k});
    for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t j = 0; j < d; ++j) {
            result.centroids.matrix.at(j, c) = centroids[c * d + j];
        }
    }
    result.centroids.iteration_count = iterations;
    result.assignment.labels = std::move(current.labels);
    result.assignment.k = k;
    result.inertia = current.inertia;
    return result;
}

TrainingRun run_deepcluster(const Dataset& data, const EncoderConfig& encoder_cfg, const UicConfig& cfg,
                            const EpochCallback& on_epoch) {
    cfg.validate();
    data.validate();
    if (cfg.fft_epochs > 0) {
        log_warn("deepcluster: fft_epochs is ignored by this method");
    }
    EncoderConfig ec = encoder_cfg;
    ec.num_classes = cfg.k;
    TrainingRun run{{}, {}, init_encoder(ec)};
    EncoderState& encoder = run.encoder;

    LabelAssignment previous;
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        const auto t0 = std::chrono::steady_clock::now();
        LabelAssignment labels;
        {
            const Tensor embeddings = embed_dataset(encoder, data, cfg.threads, cfg.batch_size);
            KMeansResult km = kmeans(embeddings, cfg.k, cfg.kmeans_iters, epoch_stream(cfg.seed, Stream::kmeans, e));
            labels = std::move(km.assignment);
        }
        labels.epoch_of_origin = e;
        Rng repair = epoch_stream(cfg.seed, Stream::repair, e);
        const std::size_t fixes = fix_empty_classes(labels, repair);

        reinit_classifier(encoder, epoch_stream(cfg.seed, Stream::classifier_reinit, e).next_u64());
        SgdConfig sgd = cfg.sgd;
        sgd.lr = linear_decay_lr(cfg.sgd.lr, e, cfg.epochs);
        const EpochResult r = train_epoch(data, labels, encoder, cfg.policy_train, sgd,
                                          epoch_stream(cfg.seed, Stream::train_aug, e), cfg.batch_size, cfg.threads);

        EpochTrace t;
        t.epoch = e;
        t.mean_loss = r.mean_loss;
        if (e > 0) {
            t.nmi_vs_prev = nmi(labels.labels, previous.labels);
        }
        if (data.truth) {
            t.nmi_vs_truth = nmi(labels.labels, *data.truth);
        }
        t.partition_entropy = partition_stats(labels).normalized_entropy;
        t.empty_class_fixes = fixes;
        t.lr = sgd.lr;
        t.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        run.trace.push_back(t);
        if (on_epoch) {
            on_epoch(t);
        }
        previous = std::move(labels);
    }
    run.labels = std::move(previous);
    return run;
}

} // namespace uiclab
