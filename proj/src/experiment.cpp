#include "uiclab/experiment.hpp"

#include "uiclab/checkpoint.hpp"
#include "uiclab/deepcluster.hpp"
#include "uiclab/error.hpp"
#include "uiclab/log.hpp"

#include <json.hpp>

#include <charconv>
#include <chrono>
#include <fstream>

namespace uiclab {

namespace fs = std::filesystem;

std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

namespace {

std::string optional_number(const std::optional<double>& v) { return v ? format_number(*v) : std::string(); }

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::io, "cannot open '" + path.string() + "' for writing");
    out << content;
    require(static_cast<bool>(out), ErrorCode::io, "failed writing '" + path.string() + "'");
}

void prepare_output_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec, ErrorCode::io, "cannot create output directory '" + dir.string() + "': " + ec.message());
    fs::remove(dir / "FAILED", ec);
    // Probe writability up front rather than after hours of training.
    const fs::path probe = dir / ".write-test";
    write_file(probe, "");
    fs::remove(probe, ec);
}

std::optional<fs::path> optional_path(const std::string& s) {
    if (s.empty()) {
        return std::nullopt;
    }
    return fs::path(s);
}

} // namespace

ExperimentData load_experiment_data(const ExperimentConfig& config) {
    const DataConfig& d = config.data;
    ExperimentData out;
    switch (d.source) {
    case DataSource::synthetic: {
        const Dataset all = synth_clusters(d.synthetic, config.seed);
        out.train = all.subset(Split::train);
        if (d.synthetic.test_per_class > 0) {
            out.test = all.subset(Split::test);
        }
        break;
    }
    case DataSource::idx:
        out.train = load_idx(d.train_images, optional_path(d.train_labels));
        if (!d.test_images.empty()) {
            out.test = load_idx(d.test_images, optional_path(d.test_labels));
        }
        break;
    case DataSource::text: {
        const ImageShape shape{d.text_channels, d.text_height, d.text_width};
        out.train = load_text(d.train_images, shape, d.text_has_labels);
        if (!d.test_images.empty()) {
            out.test = load_text(d.test_images, shape, d.text_has_labels);
        }
        break;
    }
    }
    if (out.test) {
        out.test->split.assign(out.test->size(), Split::test);
        require(out.test->image_shape() == out.train.image_shape(), ErrorCode::shape,
                "test images " + shape_to_string(out.test->image_shape().dims()) + " differ from train images " +
                    shape_to_string(out.train.image_shape().dims()));
    }
    return out;
}

EvalReport evaluate_encoder(const EncoderState& encoder, const ExperimentData& data, const ExperimentConfig& config) {
    EvalReport report;
    const EvalConfig& ec = config.eval;
    const bool labelled_test = data.test && data.test->truth;
    if (ec.probe) {
        if (!data.train.truth || !labelled_test) {
            log_warn("eval: linear probe skipped (needs truth labels on both train and test splits)");
        } else {
            const Tensor train_f = embed_dataset(encoder, data.train, config.threads);
            const Tensor test_f = embed_dataset(encoder, *data.test, config.threads);
            ProbeConfig pc;
            pc.epochs = ec.probe_epochs;
            pc.lr = ec.probe_lr;
            pc.batch_size = ec.probe_batch_size;
            pc.seed = config.seed;
            report.probe_accuracy = linear_probe(train_f, *data.train.truth, test_f, *data.test->truth, pc).accuracy;
        }
    }
    if (ec.fewshot) {
        if (!labelled_test) {
            log_warn("eval: few-shot episodes skipped (needs a labelled test split)");
        } else {
            const Tensor test_f = embed_dataset(encoder, *data.test, config.threads);
            report.fewshot = prototypical_eval(test_f, *data.test->truth, ec.fewshot_way, ec.fewshot_shot, ec.fewshot_query,
                                               ec.fewshot_episodes, Rng(config.seed).fork({tag(Stream::fewshot)}));
        }
    }
    return report;
}

std::string metrics_csv(const std::vector<EpochTrace>& trace) {
    std::string out = "epoch,mean_loss,nmi_vs_prev,nmi_vs_truth,partition_entropy,empty_class_fixes,lr\n";
    for (const EpochTrace& t : trace) {
        out += std::to_string(t.epoch) + "," + format_number(t.mean_loss) + "," + optional_number(t.nmi_vs_prev) + "," +
               optional_number(t.nmi_vs_truth) + "," + format_number(t.partition_entropy) + "," +
               std::to_string(t.empty_class_fixes) + "," + format_number(t.lr) + "\n";
    }
    return out;
}

std::string timing_csv(const std::vector<EpochTrace>& trace) {
    std::string out = "epoch,wall_seconds\n";
    for (const EpochTrace& t : trace) {
        out += std::to_string(t.epoch) + "," + format_number(t.wall_seconds) + "\n";
    }
    return out;
}

std::string eval_csv(const EvalReport& report) {
    std::string out = "metric,value\n";
    out += "probe_accuracy," + optional_number(report.probe_accuracy) + "\n";
    out += "fewshot_mean," + (report.fewshot ? format_number(report.fewshot->mean) : std::string()) + "\n";
    out += "fewshot_stderr," + (report.fewshot ? format_number(report.fewshot->std_error) : std::string()) + "\n";
    out += "fewshot_episodes," + (report.fewshot ? std::to_string(report.fewshot->episodes) : std::string()) + "\n";
    return out;
}

namespace {

struct TrainOutcome {
    TrainingRun run;
    EvalReport report;
};

TrainOutcome train_and_write(const ExperimentConfig& config) {
    config.validate();
    const fs::path dir = config.output_dir;
    prepare_output_dir(dir);
    try {
        ExperimentConfig cfg = config;
        cfg.sync();
        const ExperimentData data = load_experiment_data(cfg);
        EncoderConfig enc = cfg.encoder;
        enc.channels = data.train.image_shape().channels;
        enc.height = data.train.image_shape().height;
        enc.width = data.train.image_shape().width;
        enc.validate();

        log_info(std::string("train: ") + method_name(cfg.method) + " on " + std::to_string(data.train.size()) +
                 " samples, k=" + std::to_string(cfg.train.k) + ", seed=" + std::to_string(cfg.seed));
        std::vector<EpochTrace> seen;
        auto on_epoch = [&](const EpochTrace& t) {
            seen.push_back(t);
            // Rewritten every epoch so an interrupted run keeps its history.
            write_file(dir / "metrics.csv", metrics_csv(seen));
            write_file(dir / "timing.csv", timing_csv(seen));
            log_info("epoch " + std::to_string(t.epoch) + (t.fft ? " (fft)" : "") + " loss " + format_number(t.mean_loss) +
                     (t.nmi_vs_truth ? " nmi_vs_truth " + format_number(*t.nmi_vs_truth) : std::string()));
        };
        TrainOutcome out{cfg.method == Method::uic ? run_uic(data.train, enc, cfg.train, on_epoch)
                                                   : run_deepcluster(data.train, enc, cfg.train, on_epoch),
                         {}};
        write_file(dir / "metrics.csv", metrics_csv(out.run.trace));
        write_file(dir / "timing.csv", timing_csv(out.run.trace));
        save_checkpoint(out.run.encoder, out.run.trace.size(), dir / "checkpoint.bin");

        out.report = evaluate_encoder(out.run.encoder, data, cfg);
        write_file(dir / "eval.csv", eval_csv(out.report));

        nlohmann::ordered_json manifest;
        manifest["tool"] = "uiclab";
        manifest["version"] = kVersion;
        manifest["method"] = method_name(cfg.method);
        manifest["seed"] = cfg.seed;
        manifest["epochs_run"] = out.run.trace.size();
        manifest["config"] = emit_config(config);
        manifest["files"] = {"metrics.csv", "timing.csv", "checkpoint.bin", "eval.csv"};
        write_file(dir / "manifest.json", manifest.dump(2) + "\n");
        return out;
    } catch (const std::exception& e) {
        std::ofstream(dir / "FAILED") << e.what() << "\n";
        throw;
    }
}

} // namespace

TrainingRun run_experiment(const ExperimentConfig& config) { return train_and_write(config).run; }

EvalReport run_evaluation(const ExperimentConfig& config, const fs::path& checkpoint) {
    config.validate();
    const fs::path dir = config.output_dir;
    prepare_output_dir(dir);
    ExperimentConfig cfg = config;
    cfg.sync();
    const Checkpoint ck = load_checkpoint(checkpoint);
    const ExperimentData data = load_experiment_data(cfg);
    require(data.train.image_shape().dims() == ck.encoder.config.image_shape(), ErrorCode::shape,
            "checkpoint expects images " + shape_to_string(ck.encoder.config.image_shape()) + " but the data holds " +
                shape_to_string(data.train.image_shape().dims()));
    const EvalReport report = evaluate_encoder(ck.encoder, data, cfg);
    write_file(dir / "eval.csv", eval_csv(report));
    return report;
}

void run_comparison(const ExperimentConfig& config) {
    config.validate();
    const fs::path dir = config.output_dir;
    prepare_output_dir(dir);
    ExperimentConfig uic = config, dc = config;
    uic.method = Method::uic;
    uic.output_dir = (dir / "uic").string();
    dc.method = Method::deepcluster;
    dc.output_dir = (dir / "deepcluster").string();
    const TrainOutcome a = train_and_write(uic);
    const TrainOutcome b = train_and_write(dc);

    std::string csv = "epoch,uic_mean_loss,deepcluster_mean_loss,uic_nmi_vs_truth,deepcluster_nmi_vs_truth,"
                      "uic_partition_entropy,deepcluster_partition_entropy\n";
    const auto& ta = a.run.trace;
    const auto& tb = b.run.trace;
    for (std::size_t e = 0; e < std::max(ta.size(), tb.size()); ++e) {
        auto col = [&](const std::vector<EpochTrace>& t, auto pick) { return e < t.size() ? pick(t[e]) : std::string(); };
        auto loss = [](const EpochTrace& t) { return format_number(t.mean_loss); };
        auto truth = [](const EpochTrace& t) { return optional_number(t.nmi_vs_truth); };
        auto ent = [](const EpochTrace& t) { return format_number(t.partition_entropy); };
        csv += std::to_string(e) + "," + col(ta, loss) + "," + col(tb, loss) + "," + col(ta, truth) + "," + col(tb, truth) +
               "," + col(ta, ent) + "," + col(tb, ent) + "\n";
    }
    write_file(dir / "compare.csv", csv);

    auto mean_seconds = [](const std::vector<EpochTrace>& t) {
        double s = 0.0;
        for (const auto& x : t) {
            s += x.wall_seconds;
        }
        return t.empty() ? 0.0 : s / static_cast<double>(t.size());
    };
    auto final_truth = [](const std::vector<EpochTrace>& t) {
        return t.empty() ? std::string() : optional_number(t.back().nmi_vs_truth);
    };
    std::string summary = "metric,uic,deepcluster\n";
    summary += "final_nmi_vs_truth," + final_truth(ta) + "," + final_truth(tb) + "\n";
    summary += "final_partition_entropy," + format_number(ta.back().partition_entropy) + "," +
               format_number(tb.back().partition_entropy) + "\n";
    summary += "probe_accuracy," + optional_number(a.report.probe_accuracy) + "," + optional_number(b.report.probe_accuracy) + "\n";
    summary += "fewshot_mean," + (a.report.fewshot ? format_number(a.report.fewshot->mean) : std::string()) + "," +
               (b.report.fewshot ? format_number(b.report.fewshot->mean) : std::string()) + "\n";
    summary += "mean_epoch_seconds," + format_number(mean_seconds(ta)) + "," + format_number(mean_seconds(tb)) + "\n";
    write_file(dir / "compare_summary.csv", summary);
}

void generate_data(const ExperimentConfig& config) {
    require(config.data.source == DataSource::synthetic, ErrorCode::config, "gen-data needs data.source = synthetic");
    config.data.synthetic.validate();
    const fs::path dir = config.output_dir;
    prepare_output_dir(dir);
    const Dataset all = synth_clusters(config.data.synthetic, config.seed);
    save_idx(all.subset(Split::train), dir / "train-images.idx", dir / "train-labels.idx");
    if (config.data.synthetic.test_per_class > 0) {
        save_idx(all.subset(Split::test), dir / "test-images.idx", dir / "test-labels.idx");
    }
}

} // namespace uiclab
