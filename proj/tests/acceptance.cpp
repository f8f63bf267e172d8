// Acceptance suite: one PASS/FAIL line per criterion.
//   acceptance [criteria] [--config benchmark.cfg] [--work dir] [--seeds n]
// criteria is a list such as "1-4,9-12"; all twelve run when omitted.
#include "uiclab/checkpoint.hpp"
#include "uiclab/config.hpp"
#include "uiclab/deepcluster.hpp"
#include "uiclab/error.hpp"
#include "uiclab/eval.hpp"
#include "uiclab/experiment.hpp"
#include "uiclab/log.hpp"
#include "uiclab/uic.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace uiclab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Tensor random_tensor(Shape shape, Rng& rng, double lo, double hi) {
    Tensor t(std::move(shape));
    for (double& v : t.values()) {
        v = rng.uniform(lo, hi);
    }
    return t;
}

std::vector<Label> random_labels(std::size_t n, std::size_t k, Rng& rng) {
    std::vector<Label> out(n);
    for (Label& l : out) {
        l = static_cast<Label>(rng.uniform_index(k));
    }
    return out;
}

// ---------------------------------------------------------------------------
// 1. Gradient integrity

Outcome gradient_integrity() {
    double worst = 0;
    std::string where;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        EncoderConfig c; // conv-small, 1x16x16, d = 64, k = 30
        c.seed = seed;
        EncoderState s = init_encoder(c);
        Rng rng(100 + seed);
        const Tensor batch = random_tensor({3, 1, 16, 16}, rng, 0, 1);
        const std::vector<std::int32_t> targets{0, 4, 2};
        const LossClosure loss = [&](ParamSet& p, bool with_grad) {
            ForwardCache cache;
            const ForwardOutput out = forward(s, batch, cache);
            Tensor dlogits;
            const double l = softmax_cross_entropy(out.logits, targets, dlogits);
            if (with_grad) {
                std::vector<Tensor> grads = p.zeros_like();
                backward(s, cache, dlogits, grads);
                for (std::size_t i = 0; i < grads.size(); ++i) {
                    p.grad(i) = grads[i];
                }
            }
            return l;
        };
        const GradCheckReport r = grad_check(loss, s.params, {1e-5, 64, seed});
        if (r.max_relative_error >= worst) {
            worst = r.max_relative_error;
            where = r.worst_param + " seed " + std::to_string(seed);
        }
    }
    return {worst < 1e-4, "max relative error " + fmt("%.2e", worst) + " (" + where + "), 10 seeds, eps 1e-5"};
}

// ---------------------------------------------------------------------------
// 2. NMI oracle

double brute_force_nmi(const std::vector<Label>& a, const std::vector<Label>& b) {
    std::map<std::pair<Label, Label>, double> joint;
    std::map<Label, double> pa, pb;
    const double n = static_cast<double>(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        joint[{a[i], b[i]}] += 1.0 / n;
        pa[a[i]] += 1.0 / n;
        pb[b[i]] += 1.0 / n;
    }
    double mi = 0, ha = 0, hb = 0;
    for (const auto& [ab, p] : joint) {
        mi += p * std::log(p / (pa[ab.first] * pb[ab.second]));
    }
    for (const auto& [l, p] : pa) {
        ha -= p * std::log(p);
    }
    for (const auto& [l, p] : pb) {
        hb -= p * std::log(p);
    }
    return mi / std::sqrt(ha * hb);
}

Outcome nmi_oracle() {
    Rng rng(2);
    double worst = 0;
    bool exact = true;
    std::size_t pairs = 0;
    while (pairs < 100) {
        const std::size_t n = 2 + rng.uniform_index(999);
        const std::size_t ka = 2 + rng.uniform_index(19), kb = 2 + rng.uniform_index(19);
        std::vector<Label> a = random_labels(n, ka, rng), b = random_labels(n, kb, rng);
        if (pairs % 2 == 0) {
            for (std::size_t i = 0; i < n; ++i) {
                if (rng.next_double() < 0.7) {
                    b[i] = static_cast<Label>(static_cast<std::size_t>(a[i]) % kb);
                }
            }
        }
        if (std::set<Label>(a.begin(), a.end()).size() < 2 || std::set<Label>(b.begin(), b.end()).size() < 2) {
            continue;
        }
        ++pairs;
        const double v = nmi(a, b);
        worst = std::max(worst, std::abs(v - brute_force_nmi(a, b)));
        exact = exact && v == nmi(b, a);
        // Permute label names of both labelings.
        std::vector<Label> perm(20);
        std::iota(perm.begin(), perm.end(), 0);
        for (std::size_t i = perm.size(); i > 1; --i) {
            std::swap(perm[i - 1], perm[rng.uniform_index(i)]);
        }
        std::vector<Label> pa(a), pb(b);
        for (Label& l : pa) {
            l = perm[static_cast<std::size_t>(l)];
        }
        for (Label& l : pb) {
            l = perm[static_cast<std::size_t>(l)];
        }
        exact = exact && nmi(pa, pb) == v;
    }
    return {worst <= 1e-10 && exact, "max |nmi - oracle| " + fmt("%.2e", worst) + " over 100 pairs; symmetry and permutation " +
                                         (exact ? "exact" : "NOT exact")};
}

// ---------------------------------------------------------------------------
// 3. k-means optimality

double best_bipartition(const Tensor& pts) {
    const std::size_t n = pts.dim(0);
    double best = INFINITY;
    for (std::uint32_t mask = 0; mask < (1u << (n - 1)); ++mask) {
        const std::uint32_t full = mask << 1;
        double sse = 0;
        for (std::uint32_t part = 0; part < 2; ++part) {
            double mx = 0, my = 0, cnt = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (((full >> i) & 1u) == part) {
                    mx += pts.at(i, 0);
                    my += pts.at(i, 1);
                    cnt += 1;
                }
            }
            if (cnt == 0) {
                sse = INFINITY;
                break;
            }
            mx /= cnt;
            my /= cnt;
            for (std::size_t i = 0; i < n; ++i) {
                if (((full >> i) & 1u) == part) {
                    sse += (pts.at(i, 0) - mx) * (pts.at(i, 0) - mx) + (pts.at(i, 1) - my) * (pts.at(i, 1) - my);
                }
            }
        }
        best = std::min(best, sse / static_cast<double>(n));
    }
    return best;
}

Outcome kmeans_optimality() {
    double gap = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed);
        Tensor pts({12, 2});
        for (std::size_t i = 0; i < 12; ++i) {
            pts.at(i, 0) = (i < 5 ? 0.0 : 10.0) + rng.uniform(-1, 1);
            pts.at(i, 1) = (i < 5 ? 0.0 : 3.0) + rng.uniform(-1, 1);
        }
        gap = std::max(gap, std::abs(kmeans(pts, 2, 100, Rng(seed)).inertia - best_bipartition(pts)));
    }
    std::size_t increases = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(1000 + seed);
        const Tensor pts = random_tensor({300, 5}, rng, -1, 1);
        const KMeansResult r = kmeans(pts, 7, 50, Rng(seed));
        for (std::size_t i = 1; i < r.inertia_history.size(); ++i) {
            increases += r.inertia_history[i] > r.inertia_history[i - 1] ? 1 : 0;
        }
    }
    return {gap < 1e-12 && increases == 0, "max gap to exhaustive optimum " + fmt("%.2e", gap) + " (5 seeds); " +
                                               std::to_string(increases) + " inertia increases over 20 random runs"};
}

// ---------------------------------------------------------------------------
// 4. Argmax / cross-entropy equivalence

Outcome argmax_equivalence() {
    Rng rng(4);
    std::size_t mismatches = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t k = 2 + rng.uniform_index(49);
        std::vector<double> logits(k);
        for (double& v : logits) {
            v = rng.normal() * 3.0;
        }
        std::size_t best = 0;
        double best_loss = INFINITY;
        for (std::size_t t = 0; t < k; ++t) {
            const double l = cross_entropy(logits, t);
            if (l < best_loss) {
                best_loss = l;
                best = t;
            }
        }
        mismatches += best == argmax(logits) ? 0 : 1;
    }
    return {mismatches == 0, std::to_string(mismatches) + " mismatches over 1000 logit vectors (k <= 50)"};
}

// ---------------------------------------------------------------------------
// 9. Empty-class repair

Outcome empty_class_repair() {
    Rng rng(9);
    std::size_t bad = 0, total_fixes = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const std::size_t k = 2 + rng.uniform_index(20);
        LabelAssignment a;
        a.k = k;
        switch (trial % 3) {
        case 0: // everything in one class
            a.labels.assign(k + rng.uniform_index(5 * k), static_cast<Label>(rng.uniform_index(k)));
            break;
        case 1: // k <= N < 2k
            a.labels = random_labels(k + rng.uniform_index(k), k, rng);
            break;
        default: // a few occupied classes out of k
            a.labels = random_labels(k + rng.uniform_index(10 * k), 1 + rng.uniform_index(k / 2 + 1), rng);
        }
        const std::size_t n = a.size();
        Rng repair(trial);
        total_fixes += fix_empty_classes(a, repair);
        const std::vector<std::size_t> counts = a.counts();
        const std::size_t sum = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
        bad += (a.empty_classes() == 0 && a.size() == n && sum == n) ? 0 : 1;
    }
    return {bad == 0, std::to_string(bad) + " of 100 pathological cases left empty classes or lost samples (" +
                          std::to_string(total_fixes) + " repairs)"};
}

// ---------------------------------------------------------------------------
// 10. Sampler balance

Outcome sampler_balance() {
    const auto draw = [](const std::vector<Label>& labels, std::size_t k, std::size_t draws, std::uint64_t seed) {
        const LabelAssignment a{labels, k, 0};
        std::vector<double> counts(k, 0.0);
        std::size_t total = 0;
        Rng root(seed);
        for (std::uint64_t e = 0; total < draws; ++e) {
            ClassBalancedSampler s(a, 50, root.fork({e}));
            std::vector<std::size_t> batch;
            while (total < draws && s.next(batch)) {
                for (std::size_t i : batch) {
                    if (total < draws) {
                        counts[static_cast<std::size_t>(labels[i])] += 1;
                        ++total;
                    }
                }
            }
        }
        return counts;
    };
    std::vector<Label> skewed(1000, 1);
    skewed[0] = 0;
    const std::vector<double> c2 = draw(skewed, 2, 10000, 10);
    const double f0 = c2[0] / 10000.0;

    std::vector<Label> twenty;
    for (Label c = 0; c < 20; ++c) {
        twenty.insert(twenty.end(), static_cast<std::size_t>(1 + 25 * c), c);
    }
    const std::vector<double> c20 = draw(twenty, 20, 10000, 11);
    double chi2 = 0;
    for (double c : c20) {
        chi2 += (c - 500.0) * (c - 500.0) / 500.0;
    }
    const double critical = 43.820; // chi-square, 19 dof, alpha = 0.001
    return {f0 >= 0.48 && f0 <= 0.52 && chi2 < critical,
            "{1,999} frequency " + fmt("%.4f", f0) + "; chi-square " + fmt("%.2f", chi2) + " < " + fmt("%.3f", critical)};
}

// ---------------------------------------------------------------------------
// 11. Determinism

Outcome determinism(const ExperimentConfig& bench, const fs::path& work) {
    ExperimentConfig c = bench;
    c.data.synthetic.per_class = 60;
    c.data.synthetic.test_per_class = 20;
    c.train.epochs = 4;
    c.seed = 17;
    std::vector<std::string> differing;
    for (Method m : {Method::uic, Method::deepcluster}) {
        c.method = m;
        c.train.fft_epochs = m == Method::uic ? 1 : 0;
        c.output_dir = (work / "determinism" / (std::string(method_name(m)) + "-a")).string();
        run_experiment(c);
        const fs::path a = c.output_dir;
        c.output_dir = (work / "determinism" / (std::string(method_name(m)) + "-b")).string();
        run_experiment(c);
        const fs::path b = c.output_dir;
        for (const char* f : {"metrics.csv", "checkpoint.bin"}) {
            if (read_file(a / f) != read_file(b / f) || read_file(a / f).empty()) {
                differing.push_back(std::string(method_name(m)) + "/" + f);
            }
        }
    }
    std::string detail = "metrics.csv and checkpoint.bin byte-identical across repeated runs (uic, deepcluster)";
    if (!differing.empty()) {
        detail = "differing outputs:";
        for (const std::string& d : differing) {
            detail += " " + d;
        }
    }
    return {differing.empty(), detail};
}

// ---------------------------------------------------------------------------
// 12. Memory contract

Outcome memory_contract(const ExperimentConfig& bench) {
    ExperimentConfig c = bench;
    c.data.synthetic.per_class = 60;
    c.data.synthetic.test_per_class = 0;
    c.train.epochs = 2;
    c.sync();
    const Dataset data = synth_clusters(c.data.synthetic, c.seed);
    const std::size_t n = data.size(), d = c.encoder.embedding_dim;
    std::size_t uic_hits = 0, dc_hits = 0;
    const auto watch = [&](std::size_t& hits) {
        return [&hits, n](std::span<const std::size_t> shape) {
            if (shape.size() >= 2 && shape[0] == n) {
                ++hits;
            }
        };
    };
    {
        ScopedAllocationAudit audit(watch(uic_hits));
        run_uic(data, c.encoder, c.train);
    }
    std::size_t dc_nd = 0;
    {
        ScopedAllocationAudit audit([&](std::span<const std::size_t> shape) {
            if (shape.size() >= 2 && shape[0] == n) {
                ++dc_hits;
                dc_nd += shape.size() == 2 && shape[1] == d ? 1 : 0;
            }
        });
        run_deepcluster(data, c.encoder, c.train);
    }
    return {uic_hits == 0 && dc_nd > 0, "N=" + std::to_string(n) + ", d=" + std::to_string(d) + ": uic allocated " +
                                            std::to_string(uic_hits) + " buffers with leading extent N; deepcluster allocated " +
                                            std::to_string(dc_nd) + " N x d buffers"};
}

// ---------------------------------------------------------------------------
// 5-8. Benchmark runs, shared between criteria.

struct BenchRun {
    double nmi_vs_truth = 0;
    double partition_entropy = 0;
    double probe = 0;
    double mean_epoch_seconds = 0;
    double total_seconds = 0;
};

class Benchmark {
public:
    Benchmark(ExperimentConfig base, fs::path work, std::size_t seeds)
        : base_(std::move(base)), work_(std::move(work)), seeds_(seeds) {}

    std::size_t seeds() const { return seeds_; }

    // variant: "uic", "deepcluster" or "uic-noaug".
    const BenchRun& run(const std::string& variant, std::uint64_t seed) {
        const auto key = std::make_pair(variant, seed);
        if (auto it = cache_.find(key); it != cache_.end()) {
            return it->second;
        }
        ExperimentConfig c = base_;
        c.seed = seed;
        c.method = variant == "deepcluster" ? Method::deepcluster : Method::uic;
        c.train.label_aug_enabled = variant != "uic-noaug";
        c.eval.fewshot = false;
        c.output_dir = (work_ / "benchmark" / (variant + "-seed" + std::to_string(seed))).string();
        std::fprintf(stderr, "  benchmark run %s seed %llu ...\n", variant.c_str(), static_cast<unsigned long long>(seed));
        const auto t0 = std::chrono::steady_clock::now();
        const TrainingRun r = run_experiment(c);
        BenchRun b;
        b.total_seconds = seconds_since(t0);
        const EpochTrace& last = r.trace.back();
        b.nmi_vs_truth = last.nmi_vs_truth.value_or(NAN);
        b.partition_entropy = last.partition_entropy;
        for (const EpochTrace& t : r.trace) {
            b.mean_epoch_seconds += t.wall_seconds / static_cast<double>(r.trace.size());
        }
        b.probe = read_probe(fs::path(c.output_dir) / "eval.csv");
        return cache_.emplace(key, b).first->second;
    }

    double random_probe(std::uint64_t seed) {
        ExperimentConfig c = base_;
        c.seed = seed;
        c.eval.fewshot = false;
        c.sync();
        const ExperimentData data = load_experiment_data(c);
        EncoderConfig enc = c.encoder;
        enc.num_classes = c.train.k;
        return evaluate_encoder(init_encoder(enc), data, c).probe_accuracy.value_or(NAN);
    }

private:
    static double read_probe(const fs::path& eval_csv) {
        std::istringstream in(read_file(eval_csv));
        for (std::string line; std::getline(in, line);) {
            if (line.rfind("probe_accuracy,", 0) == 0) {
                return std::stod(line.substr(15));
            }
        }
        return NAN;
    }

    ExperimentConfig base_;
    fs::path work_;
    std::size_t seeds_;
    std::map<std::pair<std::string, std::uint64_t>, BenchRun> cache_;
};

Outcome uic_recovery(Benchmark& bench) {
    std::string detail;
    bool pass = true;
    double seconds = 0;
    for (std::uint64_t s = 0; s < bench.seeds(); ++s) {
        const BenchRun& r = bench.run("uic", s);
        pass = pass && r.nmi_vs_truth >= 0.5 && r.partition_entropy >= 0.9;
        seconds += r.total_seconds;
        detail += "seed " + std::to_string(s) + ": nmi " + fmt("%.3f", r.nmi_vs_truth) + " entropy " +
                  fmt("%.3f", r.partition_entropy) + "; ";
    }
    pass = pass && seconds < 15 * 60;
    return {pass, detail + "training " + fmt("%.0f", seconds) + " s (budget 900 s)"};
}

Outcome deepcluster_parity(Benchmark& bench) {
    std::string detail;
    bool pass = true;
    double seconds = 0;
    for (std::uint64_t s = 0; s < bench.seeds(); ++s) {
        const BenchRun& u = bench.run("uic", s);
        const BenchRun& d = bench.run("deepcluster", s);
        const double gap = std::abs(u.nmi_vs_truth - d.nmi_vs_truth);
        pass = pass && gap <= 0.1 && u.mean_epoch_seconds < d.mean_epoch_seconds;
        seconds += u.total_seconds + d.total_seconds;
        detail += "seed " + std::to_string(s) + ": nmi uic " + fmt("%.3f", u.nmi_vs_truth) + " dc " +
                  fmt("%.3f", d.nmi_vs_truth) + " |gap| " + fmt("%.3f", gap) + ", s/epoch uic " +
                  fmt("%.2f", u.mean_epoch_seconds) + " dc " + fmt("%.2f", d.mean_epoch_seconds) + "; ";
    }
    pass = pass && seconds < 30 * 60;
    return {pass, detail + "training " + fmt("%.0f", seconds) + " s (budget 1800 s)"};
}

Outcome augmentation_ablation(Benchmark& bench) {
    std::string detail;
    std::size_t wins = 0;
    for (std::uint64_t s = 0; s < bench.seeds(); ++s) {
        const BenchRun& on = bench.run("uic", s);
        const BenchRun& off = bench.run("uic-noaug", s);
        wins += on.probe >= off.probe ? 1 : 0;
        detail += "seed " + std::to_string(s) + ": probe with " + fmt("%.3f", on.probe) + " without " + fmt("%.3f", off.probe) +
                  "; ";
    }
    return {2 * wins > bench.seeds(), detail + std::to_string(wins) + " of " + std::to_string(bench.seeds()) + " seeds"};
}

Outcome representation_gain(Benchmark& bench) {
    std::string detail;
    bool pass = true;
    for (std::uint64_t s = 0; s < bench.seeds(); ++s) {
        const BenchRun& u = bench.run("uic", s);
        const double random = bench.random_probe(s);
        pass = pass && u.probe - random >= 0.10;
        detail += "seed " + std::to_string(s) + ": trained " + fmt("%.3f", u.probe) + " random " + fmt("%.3f", random) + "; ";
    }
    return {pass, detail + "required gain 0.10"};
}

std::set<int> parse_criteria(const std::string& spec) {
    std::set<int> out;
    std::stringstream ss(spec);
    for (std::string part; std::getline(ss, part, ',');) {
        const auto dash = part.find('-');
        const int lo = std::stoi(part.substr(0, dash));
        const int hi = dash == std::string::npos ? lo : std::stoi(part.substr(dash + 1));
        for (int i = lo; i <= hi; ++i) {
            if (i < 1 || i > 12) {
                throw CLI::ValidationError("criteria", "criterion " + std::to_string(i) + " out of range 1-12");
            }
            out.insert(i);
        }
    }
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app("uiclab acceptance suite");
    std::string criteria = "1-12";
    std::string config_path = UICLAB_BENCHMARK_CONFIG;
    std::string work = (fs::temp_directory_path() / "uiclab-acceptance").string();
    std::size_t seeds = 3;
    app.add_option("criteria", criteria, "Criteria to run, e.g. 1-4,9-12");
    app.add_option("--config", config_path, "Benchmark config")->check(CLI::ExistingFile);
    app.add_option("--work", work, "Scratch directory for run outputs");
    app.add_option("--seeds", seeds, "Benchmark seeds")->check(CLI::PositiveNumber);
    CLI11_PARSE(app, argc, argv);

    set_log_level(LogLevel::warn);
    std::set<int> selected;
    try {
        selected = parse_criteria(criteria);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "bad criteria list '%s': %s\n", criteria.c_str(), e.what());
        return 2;
    }
    const ExperimentConfig bench_cfg = load_config(config_path);
    fs::create_directories(work);
    Benchmark bench(bench_cfg, work, seeds);

    struct Criterion {
        int id;
        const char* name;
        double budget_seconds; // 0: no runtime bound of its own
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> all = {
        {1, "gradient integrity", 60, gradient_integrity},
        {2, "nmi oracle equivalence", 10, nmi_oracle},
        {3, "k-means optimality", 10, kmeans_optimality},
        {4, "argmax/cross-entropy equivalence", 5, argmax_equivalence},
        {5, "end-to-end uic recovery", 0, [&] { return uic_recovery(bench); }},
        {6, "uic/deepcluster parity", 0, [&] { return deepcluster_parity(bench); }},
        {7, "augmentation-in-labeling ablation", 0, [&] { return augmentation_ablation(bench); }},
        {8, "representation gain", 0, [&] { return representation_gain(bench); }},
        {9, "empty-class repair", 0, empty_class_repair},
        {10, "sampler balance", 0, sampler_balance},
        {11, "determinism", 0, [&] { return determinism(bench_cfg, work); }},
        {12, "memory contract", 0, [&] { return memory_contract(bench_cfg); }},
    };

    int failures = 0;
    for (const Criterion& c : all) {
        if (selected.count(c.id) == 0) {
            continue;
        }
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        const double elapsed = seconds_since(t0);
        if (c.budget_seconds > 0 && elapsed >= c.budget_seconds) {
            o.pass = false;
            o.detail += "; over the " + fmt("%.0f", c.budget_seconds) + " s budget";
        }
        failures += o.pass ? 0 : 1;
        std::printf("%s %2d %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), elapsed);
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
