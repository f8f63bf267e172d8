#include "uiclab/eval.hpp"

#include "uiclab/error.hpp"
#include "uiclab/log.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

namespace uiclab {

namespace {

double sorted_sum(std::vector<double>& terms) {
    std::sort(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) {
        s += t;
    }
    return s;
}

std::vector<std::size_t> dense_codes(std::span<const Label> labels, std::size_t& distinct) {
    std::vector<Label> uniq(labels.begin(), labels.end());
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    distinct = uniq.size();
    std::vector<std::size_t> codes(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) {
        codes[i] = static_cast<std::size_t>(std::lower_bound(uniq.begin(), uniq.end(), labels[i]) - uniq.begin());
    }
    return codes;
}

double entropy_of(const std::vector<std::size_t>& counts, double n) {
    std::vector<double> terms;
    for (std::size_t c : counts) {
        if (c > 0) {
            const double p = static_cast<double>(c) / n;
            terms.push_back(-p * std::log(p));
        }
    }
    return sorted_sum(terms);
}

} // namespace

double nmi(std::span<const Label> a, std::span<const Label> b) {
    require(a.size() == b.size(), ErrorCode::invalid_argument, "nmi: labelings differ in length");
    require(!a.empty(), ErrorCode::invalid_argument, "nmi: empty labelings");
    std::size_t ka = 0, kb = 0;
    const auto ca = dense_codes(a, ka);
    const auto cb = dense_codes(b, kb);
    const double n = static_cast<double>(a.size());

    std::vector<std::size_t> count_a(ka, 0), count_b(kb, 0);
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> cells;
    for (std::size_t i = 0; i < ca.size(); ++i) {
        ++count_a[ca[i]];
        ++count_b[cb[i]];
        ++cells[{ca[i], cb[i]}];
    }
    const double ha = entropy_of(count_a, n);
    const double hb = entropy_of(count_b, n);
    if (ha == 0.0 || hb == 0.0) {
        return (ha == 0.0 && hb == 0.0) ? 1.0 : 0.0;
    }
    std::vector<double> terms;
    terms.reserve(cells.size());
    for (const auto& [cell, nij] : cells) {
        const double ai = static_cast<double>(count_a[cell.first]);
        const double bj = static_cast<double>(count_b[cell.second]);
        const double joint = static_cast<double>(nij);
        terms.push_back(joint / n * std::log(joint * n / (ai * bj)));
    }
    const double mi = sorted_sum(terms);
    return std::clamp(mi / std::sqrt(ha * hb), 0.0, 1.0);
}

PartitionStats partition_stats(const LabelAssignment& assignment) {
    require(assignment.k >= 2, ErrorCode::invalid_argument, "partition_stats needs k >= 2");
    require(assignment.size() >= 1, ErrorCode::invalid_argument, "partition_stats of an empty assignment");
    assignment.validate();
    const auto counts = assignment.counts();
    PartitionStats s;
    s.min_count = *std::min_element(counts.begin(), counts.end());
    s.max_count = *std::max_element(counts.begin(), counts.end());
    s.empty_count = static_cast<std::size_t>(std::count(counts.begin(), counts.end(), std::size_t{0}));
    s.normalized_entropy =
        std::clamp(entropy_of(counts, static_cast<double>(assignment.size())) / std::log(static_cast<double>(assignment.k)), 0.0, 1.0);
    return s;
}

// ---------------------------------------------------------------------------
// Linear probe

void ProbeConfig::validate() const {
    require(epochs >= 1, ErrorCode::config, "probe epochs must be >= 1");
    require(lr > 0.0, ErrorCode::config, "probe lr must be positive");
    require(batch_size >= 1, ErrorCode::config, "probe batch_size must be >= 1");
    require(momentum >= 0.0 && momentum < 1.0, ErrorCode::config, "probe momentum must lie in [0, 1)");
}

ProbeResult linear_probe(const Tensor& train_features, std::span<const Label> train_labels, const Tensor& test_features,
                         std::span<const Label> test_labels, const ProbeConfig& cfg) {
    cfg.validate();
    require(train_features.rank() == 2 && test_features.rank() == 2 && train_features.dim(1) == test_features.dim(1),
            ErrorCode::invalid_argument, "linear_probe: feature matrices must be N x d with matching d");
    require(train_features.dim(0) == train_labels.size() && test_features.dim(0) == test_labels.size(),
            ErrorCode::invalid_argument, "linear_probe: features and labels differ in length");
    const std::size_t n = train_features.dim(0), d = train_features.dim(1);

    Label max_label = 0;
    for (Label l : train_labels) {
        require(l >= 0, ErrorCode::invalid_argument, "linear_probe: negative label");
        max_label = std::max(max_label, l);
    }
    for (Label l : test_labels) {
        require(l >= 0, ErrorCode::invalid_argument, "linear_probe: negative label");
        max_label = std::max(max_label, l);
    }
    const std::size_t classes = std::max<std::size_t>(2, static_cast<std::size_t>(max_label) + 1);

    ProbeResult result;
    {
        std::vector<bool> seen(classes, false);
        for (Label l : train_labels) {
            seen[static_cast<std::size_t>(l)] = true;
        }
        for (std::size_t c = 0; c <= static_cast<std::size_t>(max_label); ++c) {
            if (!seen[c]) {
                result.missing_train_classes.push_back(c);
            }
        }
        if (!result.missing_train_classes.empty()) {
            log_warn("linear_probe: " + std::to_string(result.missing_train_classes.size()) +
                     " class(es) absent from the training labels");
        }
    }

    std::vector<double> mean(d, 0.0), inv_std(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            mean[j] += train_features.at(i, j);
        }
    }
    for (double& m : mean) {
        m /= static_cast<double>(n);
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const double c = train_features.at(i, j) - mean[j];
            inv_std[j] += c * c;
        }
    }
    for (double& s : inv_std) {
        s = 1.0 / std::sqrt(s / static_cast<double>(n) + 1e-8);
    }
    auto standardize = [&](const Tensor& f) {
        Tensor out(f.shape());
        for (std::size_t i = 0; i < f.dim(0); ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                out.at(i, j) = (f.at(i, j) - mean[j]) * inv_std[j];
            }
        }
        return out;
    };
    const Tensor xtrain = standardize(train_features);
    const Tensor xtest = standardize(test_features);

    ParamSet head;
    head.add("probe.weight", Tensor({d, classes}));
    head.add("probe.bias", Tensor({classes}));
    SgdConfig sgd{cfg.lr, cfg.momentum, cfg.weight_decay};

    Rng rng = Rng(cfg.seed).fork({tag(Stream::probe)});
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Tensor dlogits;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        sgd.lr = linear_decay_lr(cfg.lr, epoch, cfg.epochs);
        for (std::size_t i = n; i > 1; --i) {
            std::swap(order[i - 1], order[rng.uniform_index(i)]);
        }
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t bs = std::min(cfg.batch_size, n - start);
            Tensor xb({bs, d});
            std::vector<Label> yb(bs);
            for (std::size_t i = 0; i < bs; ++i) {
                const auto row = xtrain.slab(order[start + i]);
                std::copy(row.begin(), row.end(), xb.slab(i).begin());
                yb[i] = train_labels[order[start + i]];
            }
            const Tensor logits = affine_forward(xb, head.value(0), &head.value(1));
            softmax_cross_entropy(logits, yb, dlogits);
            affine_backward(xb, head.value(0), dlogits, nullptr, &head.grad(0), &head.grad(1));
            sgd_step(head, sgd);
        }
    }

    const Tensor logits = affine_forward(xtest, head.value(0), &head.value(1));
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test_labels.size(); ++i) {
        if (static_cast<Label>(argmax(logits.slab(i))) == test_labels[i]) {
            ++correct;
        }
    }
    result.accuracy = test_labels.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(test_labels.size());
    return result;
}

// ---------------------------------------------------------------------------
// Prototypical few-shot evaluation

Episode sample_episode(std::span<const Label> labels, std::size_t n_way, std::size_t k_shot, std::size_t n_query, Rng& rng) {
    require(n_way >= 1 && k_shot >= 1 && n_query >= 1, ErrorCode::invalid_argument, "episode sizes must be positive");
    std::map<Label, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        by_class[labels[i]].push_back(i);
    }
    std::vector<Label> eligible;
    for (const auto& [cls, members] : by_class) {
        if (members.size() >= k_shot + n_query) {
            eligible.push_back(cls);
        }
    }
    require(eligible.size() >= n_way, ErrorCode::invalid_argument,
            "prototypical_eval: only " + std::to_string(eligible.size()) + " classes hold " +
                std::to_string(k_shot + n_query) + " samples, " + std::to_string(n_way) + " ways requested");

    Episode ep{n_way, k_shot, n_query, {}, {}, {}};
    for (std::size_t w = 0; w < n_way; ++w) {
        std::swap(eligible[w], eligible[w + rng.uniform_index(eligible.size() - w)]);
        const Label cls = eligible[w];
        std::vector<std::size_t> members = by_class[cls];
        const std::size_t need = k_shot + n_query;
        for (std::size_t i = 0; i < need; ++i) {
            std::swap(members[i], members[i + rng.uniform_index(members.size() - i)]);
        }
        ep.classes.push_back(cls);
        ep.support.emplace_back(members.begin(), members.begin() + static_cast<std::ptrdiff_t>(k_shot));
        ep.query.emplace_back(members.begin() + static_cast<std::ptrdiff_t>(k_shot),
                              members.begin() + static_cast<std::ptrdiff_t>(need));
    }
    return ep;
}

double episode_accuracy(const Tensor& features, const Episode& ep) {
    const std::size_t d = features.dim(1);
    std::vector<std::vector<double>> protos(ep.n_way, std::vector<double>(d, 0.0));
    for (std::size_t w = 0; w < ep.n_way; ++w) {
        for (std::size_t idx : ep.support[w]) {
            const auto row = features.slab(idx);
            for (std::size_t j = 0; j < d; ++j) {
                protos[w][j] += row[j];
            }
        }
        for (double& v : protos[w]) {
            v /= static_cast<double>(ep.support[w].size());
        }
    }
    std::size_t correct = 0, total = 0;
    for (std::size_t w = 0; w < ep.n_way; ++w) {
        for (std::size_t idx : ep.query[w]) {
            const auto row = features.slab(idx);
            std::size_t best = 0;
            double best_dist = 0.0;
            for (std::size_t p = 0; p < ep.n_way; ++p) {
                double dist = 0.0;
                for (std::size_t j = 0; j < d; ++j) {
                    const double diff = row[j] - protos[p][j];
                    dist += diff * diff;
                }
                if (p == 0 || dist < best_dist) {
                    best = p;
                    best_dist = dist;
                }
            }
            correct += best == w ? 1 : 0;
            ++total;
        }
    }
    return static_cast<double>(correct) / static_cast<double>(total);
}

FewShotResult prototypical_eval(const Tensor& features, std::span<const Label> labels, std::size_t n_way,
                                std::size_t k_shot, std::size_t n_query, std::size_t episodes, Rng rng) {
    require(features.rank() == 2 && features.dim(0) == labels.size(), ErrorCode::invalid_argument,
            "prototypical_eval: features must be N x d with one label per row");
    require(episodes >= 1, ErrorCode::invalid_argument, "prototypical_eval: episodes must be >= 1");
    std::vector<double> acc;
    acc.reserve(episodes);
    for (std::size_t e = 0; e < episodes; ++e) {
        Rng episode_rng = rng.fork({tag(Stream::fewshot), e});
        acc.push_back(episode_accuracy(features, sample_episode(labels, n_way, k_shot, n_query, episode_rng)));
    }
    FewShotResult r;
    r.episodes = episodes;
    r.mean = std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(episodes);
    if (episodes > 1) {
        double ss = 0.0;
        for (double a : acc) {
            ss += (a - r.mean) * (a - r.mean);
        }
        r.std_error = std::sqrt(ss / static_cast<double>(episodes - 1)) / std::sqrt(static_cast<double>(episodes));
    }
    return r;
}

} // namespace uiclab
