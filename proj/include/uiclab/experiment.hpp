#pragma once

#include "uiclab/config.hpp"
#include "uiclab/eval.hpp"
#include "uiclab/uic.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace uiclab {

inline constexpr const char* kVersion = "0.1.0";

struct ExperimentData {
    Dataset train;
    std::optional<Dataset> test;
};

/// Loads (or generates) the configured dataset; synthetic data uses the run seed.
ExperimentData load_experiment_data(const ExperimentConfig& config);

struct EvalReport {
    std::optional<double> probe_accuracy;
    std::optional<FewShotResult> fewshot;
};

/// Linear probe (train split -> test split) and few-shot episodes on the test
/// split, with features from the evaluation transform. Either part is skipped
/// with a warning when disabled or when truth labels / a test split are missing.
EvalReport evaluate_encoder(const EncoderState& encoder, const ExperimentData& data, const ExperimentConfig& config);

/// epoch,mean_loss,nmi_vs_prev,nmi_vs_truth,partition_entropy,empty_class_fixes,lr
/// Absent values are empty fields. Wall-clock times live in timing_csv so
/// that this file is a pure function of (config, seed).
std::string metrics_csv(const std::vector<EpochTrace>& trace);
std::string timing_csv(const std::vector<EpochTrace>& trace);
std::string eval_csv(const EvalReport& report);

/// Shortest decimal form that parses back to the same double.
std::string format_number(double v);

/// `train`: trains the configured method and writes metrics.csv, timing.csv,
/// checkpoint.bin, eval.csv and manifest.json into output_dir. On failure the
/// partial outputs stay and a FAILED file holds the error; the error is rethrown.
TrainingRun run_experiment(const ExperimentConfig& config);

/// `eval`: evaluates a saved checkpoint and writes eval.csv to output_dir.
EvalReport run_evaluation(const ExperimentConfig& config, const std::filesystem::path& checkpoint);

/// `compare`: trains both methods into output_dir/uic and output_dir/deepcluster
/// and writes compare.csv (per epoch, side by side) and compare_summary.csv.
void run_comparison(const ExperimentConfig& config);

/// `gen-data`: writes the configured synthetic dataset as IDX files
/// (train-images.idx, train-labels.idx, test-images.idx, test-labels.idx).
void generate_data(const ExperimentConfig& config);

} // namespace uiclab
