#include "uiclab/config.hpp"

#include "uiclab/error.hpp"
#include "uiclab/log.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace uiclab {

const char* method_name(Method m) { return m == Method::uic ? "uic" : "deepcluster"; }

Method parse_method(std::string_view name) {
    if (name == "uic") {
        return Method::uic;
    }
    if (name == "deepcluster") {
        return Method::deepcluster;
    }
    fail(ErrorCode::config, "unknown method '" + std::string(name) + "' (expected uic or deepcluster)");
}

const char* data_source_name(DataSource s) {
    switch (s) {
    case DataSource::synthetic:
        return "synthetic";
    case DataSource::idx:
        return "idx";
    case DataSource::text:
        return "text";
    }
    return "?";
}

DataSource parse_data_source(std::string_view name) {
    if (name == "synthetic") {
        return DataSource::synthetic;
    }
    if (name == "idx") {
        return DataSource::idx;
    }
    if (name == "text") {
        return DataSource::text;
    }
    fail(ErrorCode::config, "unknown data source '" + std::string(name) + "' (expected synthetic, idx or text)");
}

void ExperimentConfig::sync() {
    encoder.seed = seed;
    encoder.num_classes = train.k;
    train.seed = seed;
    train.threads = threads;
}

void ExperimentConfig::validate() const {
    require(!output_dir.empty(), ErrorCode::config, "experiment.output_dir must not be empty");
    require(threads >= 1, ErrorCode::config, "experiment.threads must be >= 1");
    require(train.k >= 2, ErrorCode::config, "train.k must satisfy k >= 2 (got " + std::to_string(train.k) + ")");
    train.validate();
    require(encoder.embedding_dim >= 2, ErrorCode::config, "encoder.embedding_dim must be >= 2");
    require(encoder.conv_channels[0] >= 1 && encoder.conv_channels[1] >= 1, ErrorCode::config,
            "encoder.conv_channels must be positive");
    require(encoder.mlp_hidden >= 1, ErrorCode::config, "encoder.mlp_hidden must be >= 1");
    switch (data.source) {
    case DataSource::synthetic:
        data.synthetic.validate();
        break;
    case DataSource::idx:
    case DataSource::text:
        require(!data.train_images.empty(), ErrorCode::config,
                std::string("data.train_images is required for source ") + data_source_name(data.source));
        break;
    }
    if (data.source == DataSource::text) {
        require(data.text_channels >= 1 && data.text_height >= 1 && data.text_width >= 1, ErrorCode::config,
                "data.text_channels/text_height/text_width must be positive");
    }
    require(eval.probe_epochs >= 1, ErrorCode::config, "eval.probe_epochs must be >= 1");
    require(eval.probe_batch_size >= 1, ErrorCode::config, "eval.probe_batch_size must be >= 1");
    require(eval.probe_lr > 0.0, ErrorCode::config, "eval.probe_lr must be positive");
    require(eval.fewshot_way >= 2 && eval.fewshot_shot >= 1 && eval.fewshot_query >= 1 && eval.fewshot_episodes >= 1,
            ErrorCode::config, "eval few-shot settings need way >= 2 and shot, query, episodes >= 1");
}

namespace {

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    std::string s(buf, res.ptr);
    // Keep decimals recognisable as such ("1" -> "1.0").
    if (s.find_first_of(".eEn") == std::string::npos) {
        s += ".0";
    }
    return s;
}

struct ParseError {
    std::string expected;
};

template <class T>
T parse_unsigned(const std::string& raw) {
    T v{};
    const auto res = std::from_chars(raw.data(), raw.data() + raw.size(), v);
    if (raw.empty() || res.ec != std::errc() || res.ptr != raw.data() + raw.size()) {
        throw ParseError{"an unsigned integer"};
    }
    return v;
}

double parse_double(const std::string& raw) {
    double v = 0.0;
    const auto res = std::from_chars(raw.data(), raw.data() + raw.size(), v);
    if (raw.empty() || res.ec != std::errc() || res.ptr != raw.data() + raw.size()) {
        throw ParseError{"a decimal number"};
    }
    return v;
}

bool parse_bool(const std::string& raw) {
    if (raw == "true") {
        return true;
    }
    if (raw == "false") {
        return false;
    }
    throw ParseError{"true or false"};
}

struct Field {
    std::string section;
    std::string key;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&)> set;
};

template <class Access>
Field size_field(std::string section, std::string key, Access access) {
    return {std::move(section), std::move(key),
            [access](const ExperimentConfig& c) { return std::to_string(access(c)); },
            [access](ExperimentConfig& c, const std::string& raw) {
                access(c) = parse_unsigned<std::remove_reference_t<decltype(access(c))>>(raw);
            }};
}

template <class Access>
Field double_field(std::string section, std::string key, Access access) {
    return {std::move(section), std::move(key),
            [access](const ExperimentConfig& c) { return format_double(access(c)); },
            [access](ExperimentConfig& c, const std::string& raw) { access(c) = parse_double(raw); }};
}

template <class Access>
Field bool_field(std::string section, std::string key, Access access) {
    return {std::move(section), std::move(key),
            [access](const ExperimentConfig& c) {
                return std::string(access(c) ? "true" : "false");
            },
            [access](ExperimentConfig& c, const std::string& raw) { access(c) = parse_bool(raw); }};
}

template <class Access>
Field string_field(std::string section, std::string key, Access access) {
    return {std::move(section), std::move(key),
            [access](const ExperimentConfig& c) { return access(c); },
            [access](ExperimentConfig& c, const std::string& raw) { access(c) = raw; }};
}

void add_policy_fields(std::vector<Field>& f, const std::string& sec, AugmentPolicy UicConfig::*member) {
    auto pol = [member](auto& c) -> auto& { return c.train.*member; };
    f.push_back(double_field(sec, "crop_scale_min", [pol](auto& c) -> auto& { return pol(c).crop_scale.lo; }));
    f.push_back(double_field(sec, "crop_scale_max", [pol](auto& c) -> auto& { return pol(c).crop_scale.hi; }));
    f.push_back(double_field(sec, "crop_aspect_min", [pol](auto& c) -> auto& { return pol(c).crop_aspect.lo; }));
    f.push_back(double_field(sec, "crop_aspect_max", [pol](auto& c) -> auto& { return pol(c).crop_aspect.hi; }));
    f.push_back(double_field(sec, "flip_prob", [pol](auto& c) -> auto& { return pol(c).flip_prob; }));
    f.push_back(bool_field(sec, "strong", [pol](auto& c) -> auto& { return pol(c).strong; }));
    f.push_back(double_field(sec, "jitter_strength", [pol](auto& c) -> auto& { return pol(c).jitter_strength; }));
    f.push_back(double_field(sec, "blur_sigma_min", [pol](auto& c) -> auto& { return pol(c).blur_sigma.lo; }));
    f.push_back(double_field(sec, "blur_sigma_max", [pol](auto& c) -> auto& { return pol(c).blur_sigma.hi; }));
}

const std::vector<Field>& fields() {
    static const std::vector<Field> table = [] {
        std::vector<Field> f;
        using C = ExperimentConfig;

        f.push_back({"experiment", "method", [](const C& c) { return std::string(method_name(c.method)); },
                     [](C& c, const std::string& raw) { c.method = parse_method(raw); }});
        f.push_back(size_field("experiment", "seed", [](auto& c) -> auto& { return c.seed; }));
        f.push_back(string_field("experiment", "output_dir", [](auto& c) -> auto& { return c.output_dir; }));
        f.push_back(size_field("experiment", "threads", [](auto& c) -> auto& { return c.threads; }));

        f.push_back({"data", "source", [](const C& c) { return std::string(data_source_name(c.data.source)); },
                     [](C& c, const std::string& raw) { c.data.source = parse_data_source(raw); }});
        f.push_back(string_field("data", "train_images", [](auto& c) -> auto& { return c.data.train_images; }));
        f.push_back(string_field("data", "train_labels", [](auto& c) -> auto& { return c.data.train_labels; }));
        f.push_back(string_field("data", "test_images", [](auto& c) -> auto& { return c.data.test_images; }));
        f.push_back(string_field("data", "test_labels", [](auto& c) -> auto& { return c.data.test_labels; }));
        f.push_back(size_field("data", "text_channels", [](auto& c) -> auto& { return c.data.text_channels; }));
        f.push_back(size_field("data", "text_height", [](auto& c) -> auto& { return c.data.text_height; }));
        f.push_back(size_field("data", "text_width", [](auto& c) -> auto& { return c.data.text_width; }));
        f.push_back(bool_field("data", "text_has_labels", [](auto& c) -> auto& { return c.data.text_has_labels; }));

        const std::string syn = "synthetic";
        f.push_back(size_field(syn, "classes", [](auto& c) -> auto& { return c.data.synthetic.classes; }));
        f.push_back(size_field(syn, "per_class", [](auto& c) -> auto& { return c.data.synthetic.per_class; }));
        f.push_back(size_field(syn, "test_per_class", [](auto& c) -> auto& { return c.data.synthetic.test_per_class; }));
        f.push_back(size_field(syn, "image_size", [](auto& c) -> auto& { return c.data.synthetic.image_size; }));
        f.push_back(size_field(syn, "channels", [](auto& c) -> auto& { return c.data.synthetic.channels; }));
        f.push_back(size_field(syn, "blobs_per_class", [](auto& c) -> auto& { return c.data.synthetic.blobs_per_class; }));
        f.push_back(double_field(syn, "blob_sigma", [](auto& c) -> auto& { return c.data.synthetic.blob_sigma; }));
        f.push_back(size_field(syn, "max_shift", [](auto& c) -> auto& { return c.data.synthetic.max_shift; }));
        f.push_back(double_field(syn, "contrast_jitter", [](auto& c) -> auto& { return c.data.synthetic.contrast_jitter; }));
        f.push_back(double_field(syn, "blob_jitter", [](auto& c) -> auto& { return c.data.synthetic.blob_jitter; }));
        f.push_back(size_field(syn, "clutter_blobs", [](auto& c) -> auto& { return c.data.synthetic.clutter_blobs; }));
        f.push_back(double_field(syn, "noise_sigma", [](auto& c) -> auto& { return c.data.synthetic.noise_sigma; }));

        f.push_back({"encoder", "arch", [](const C& c) { return std::string(arch_name(c.encoder.arch)); },
                     [](C& c, const std::string& raw) { c.encoder.arch = parse_arch(raw); }});
        f.push_back(size_field("encoder", "embedding_dim", [](auto& c) -> auto& { return c.encoder.embedding_dim; }));
        f.push_back(bool_field("encoder", "sobel", [](auto& c) -> auto& { return c.encoder.sobel; }));
        f.push_back({"encoder", "conv_channels",
                     [](const C& c) {
                         return std::to_string(c.encoder.conv_channels[0]) + "," + std::to_string(c.encoder.conv_channels[1]);
                     },
                     [](C& c, const std::string& raw) {
                         const auto comma = raw.find(',');
                         if (comma == std::string::npos) {
                             throw ParseError{"two comma-separated unsigned integers"};
                         }
                         auto trim = [](std::string s) {
                             s.erase(0, s.find_first_not_of(" \t"));
                             s.erase(s.find_last_not_of(" \t") + 1);
                             return s;
                         };
                         try {
                             c.encoder.conv_channels = {parse_unsigned<std::size_t>(trim(raw.substr(0, comma))),
                                                        parse_unsigned<std::size_t>(trim(raw.substr(comma + 1)))};
                         } catch (const ParseError&) {
                             throw ParseError{"two comma-separated unsigned integers"};
                         }
                     }});
        f.push_back(size_field("encoder", "mlp_hidden", [](auto& c) -> auto& { return c.encoder.mlp_hidden; }));

        f.push_back(size_field("train", "k", [](auto& c) -> auto& { return c.train.k; }));
        f.push_back(size_field("train", "epochs", [](auto& c) -> auto& { return c.train.epochs; }));
        f.push_back(size_field("train", "batch_size", [](auto& c) -> auto& { return c.train.batch_size; }));
        f.push_back(double_field("train", "lr", [](auto& c) -> auto& { return c.train.sgd.lr; }));
        f.push_back(double_field("train", "momentum", [](auto& c) -> auto& { return c.train.sgd.momentum; }));
        f.push_back(double_field("train", "weight_decay", [](auto& c) -> auto& { return c.train.sgd.weight_decay; }));
        f.push_back(bool_field("train", "label_aug", [](auto& c) -> auto& { return c.train.label_aug_enabled; }));
        f.push_back(size_field("train", "fft_epochs", [](auto& c) -> auto& { return c.train.fft_epochs; }));
        f.push_back(size_field("train", "kmeans_iters", [](auto& c) -> auto& { return c.train.kmeans_iters; }));

        add_policy_fields(f, "augment.label", &UicConfig::policy_label);
        add_policy_fields(f, "augment.train", &UicConfig::policy_train);

        f.push_back(bool_field("eval", "probe", [](auto& c) -> auto& { return c.eval.probe; }));
        f.push_back(size_field("eval", "probe_epochs", [](auto& c) -> auto& { return c.eval.probe_epochs; }));
        f.push_back(double_field("eval", "probe_lr", [](auto& c) -> auto& { return c.eval.probe_lr; }));
        f.push_back(size_field("eval", "probe_batch_size", [](auto& c) -> auto& { return c.eval.probe_batch_size; }));
        f.push_back(bool_field("eval", "fewshot", [](auto& c) -> auto& { return c.eval.fewshot; }));
        f.push_back(size_field("eval", "fewshot_way", [](auto& c) -> auto& { return c.eval.fewshot_way; }));
        f.push_back(size_field("eval", "fewshot_shot", [](auto& c) -> auto& { return c.eval.fewshot_shot; }));
        f.push_back(size_field("eval", "fewshot_query", [](auto& c) -> auto& { return c.eval.fewshot_query; }));
        f.push_back(size_field("eval", "fewshot_episodes", [](auto& c) -> auto& { return c.eval.fewshot_episodes; }));
        return f;
    }();
    return table;
}

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

} // namespace

ExperimentConfig parse_config(std::string_view text, std::string_view origin) {
    ExperimentConfig cfg;
    const auto& table = fields();
    std::set<std::string> sections;
    for (const Field& f : table) {
        sections.insert(f.section);
    }

    std::set<std::string> seen;
    std::string section;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    const std::string where(origin);
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const std::string_view raw_line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++line_no;
        const auto hash = raw_line.find('#');
        const std::string line = trim(raw_line.substr(0, hash));
        if (line.empty()) {
            continue;
        }
        const std::string at = where + ":" + std::to_string(line_no) + ": ";
        if (line.front() == '[') {
            require(line.back() == ']', ErrorCode::config, at + "unterminated section header '" + line + "'");
            section = trim(std::string_view(line).substr(1, line.size() - 2));
            require(sections.count(section) == 1, ErrorCode::config, at + "unknown section '" + section + "'");
            continue;
        }
        const auto eq = line.find('=');
        require(eq != std::string::npos, ErrorCode::config, at + "expected 'key = value', got '" + line + "'");
        const std::string key = trim(std::string_view(line).substr(0, eq));
        const std::string value = trim(std::string_view(line).substr(eq + 1));
        require(!section.empty(), ErrorCode::config, at + "key '" + key + "' appears before any [section]");
        const std::string full = section + "." + key;
        const auto it = std::find_if(table.begin(), table.end(),
                                     [&](const Field& f) { return f.section == section && f.key == key; });
        require(it != table.end(), ErrorCode::config, at + "unknown key '" + full + "'");
        require(seen.insert(full).second, ErrorCode::config, at + "duplicate key '" + full + "'");
        try {
            it->set(cfg, value);
        } catch (const ParseError& e) {
            fail(ErrorCode::config, at + "key '" + full + "' expects " + e.expected + ", got '" + value + "'");
        } catch (const Error& e) {
            fail(ErrorCode::config, at + e.what());
        }
    }

    for (const Field& f : table) {
        const std::string full = f.section + "." + f.key;
        if (seen.count(full) == 0) {
            log_info("config default: " + full + " = " + f.get(cfg));
        }
    }
    cfg.sync();
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::io, "cannot open config '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), path.string());
}

std::string emit_config(const ExperimentConfig& config) {
    std::string out;
    std::string section;
    for (const Field& f : fields()) {
        if (f.section != section) {
            if (!section.empty()) {
                out += "\n";
            }
            section = f.section;
            out += "[" + section + "]\n";
        }
        const std::string value = f.get(config);
        out += value.empty() ? f.key + " =\n" : f.key + " = " + value + "\n";
    }
    return out;
}

} // namespace uiclab
