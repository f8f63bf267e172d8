#pragma once

#include "uiclab/dataset.hpp"
#include "uiclab/encoder.hpp"
#include "uiclab/uic.hpp"

#include <filesystem>
#include <string>
#include <string_view>

namespace uiclab {

enum class Method { uic, deepcluster };
const char* method_name(Method m);
Method parse_method(std::string_view name);

enum class DataSource { synthetic, idx, text };
const char* data_source_name(DataSource s);
DataSource parse_data_source(std::string_view name);

struct DataConfig {
    DataSource source = DataSource::synthetic;
    // idx: image files plus optional label files; text: one flattened image
    // per row, optionally followed by a label column.
    std::string train_images;
    std::string train_labels;
    std::string test_images;
    std::string test_labels;
    std::size_t text_channels = 1;
    std::size_t text_height = 16;
    std::size_t text_width = 16;
    bool text_has_labels = true;
    SynthSpec synthetic;

    bool operator==(const DataConfig&) const = default;
};

struct EvalConfig {
    bool probe = true;
    std::size_t probe_epochs = 32;
    double probe_lr = 0.1;
    std::size_t probe_batch_size = 128;
    bool fewshot = true;
    std::size_t fewshot_way = 5;
    std::size_t fewshot_shot = 5;
    std::size_t fewshot_query = 15;
    std::size_t fewshot_episodes = 200;

    bool operator==(const EvalConfig&) const = default;
};

/// Everything one invocation of the tool needs. The run seed drives the
/// synthetic data, the encoder initialisation and every training stream.
struct ExperimentConfig {
    Method method = Method::uic;
    std::uint64_t seed = 0;
    std::string output_dir = "runs/default";
    std::size_t threads = 1;
    DataConfig data;
    EncoderConfig encoder;
    UicConfig train;
    EvalConfig eval;

    /// Copies seed/threads into the encoder and training configs.
    void sync();
    void validate() const;
    bool operator==(const ExperimentConfig&) const = default;
};

/// Grammar: lines of `[section]` or `key = value`; `#` starts a comment;
/// blank lines are ignored. Values are unsigned integers, decimals, booleans
/// (true/false), bare strings or comma-separated integer lists. Every key not
/// present keeps its default, which is reported through the log.
ExperimentConfig parse_config(std::string_view text, std::string_view origin = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical text form listing every key; parse_config(emit_config(c)) == c.
std::string emit_config(const ExperimentConfig& config);

} // namespace uiclab
