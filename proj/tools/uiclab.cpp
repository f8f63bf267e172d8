// Command-line front end. Talks to the library only through the C API.

#include "uiclab/uiclab.h"

#include <CLI11.hpp>

#include <cstdio>
#include <optional>
#include <string>

namespace {

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string method;
    std::optional<std::size_t> threads;
    std::string checkpoint;
    std::string log_level = "info";
};

int report(uiclab_status st) {
    if (st != UICLAB_OK) {
        std::fprintf(stderr, "uiclab: error (%s): %s\n", uiclab_status_name(st), uiclab_last_error());
    }
    return static_cast<int>(st);
}

// Builds the effective config: file (or defaults) plus command-line overrides.
uiclab_status make_config(const Options& o, uiclab_config** cfg) {
    uiclab_status st = o.config_path.empty() ? uiclab_config_default(cfg) : uiclab_config_load(o.config_path.c_str(), cfg);
    if (st != UICLAB_OK) {
        return st;
    }
    if (o.seed) {
        st = uiclab_config_set_seed(*cfg, *o.seed);
    }
    if (st == UICLAB_OK && !o.out.empty()) {
        st = uiclab_config_set_output_dir(*cfg, o.out.c_str());
    }
    if (st == UICLAB_OK && !o.method.empty()) {
        st = uiclab_config_set_method(*cfg, o.method.c_str());
    }
    if (st == UICLAB_OK && o.threads) {
        st = uiclab_config_set_threads(*cfg, *o.threads);
    }
    if (st != UICLAB_OK) {
        uiclab_config_free(*cfg);
        *cfg = nullptr;
    }
    return st;
}

uiclab_log_level parse_level(const std::string& s) {
    if (s == "debug") {
        return UICLAB_LOG_DEBUG;
    }
    if (s == "warn") {
        return UICLAB_LOG_WARN;
    }
    if (s == "error") {
        return UICLAB_LOG_ERROR;
    }
    if (s == "silent") {
        return UICLAB_LOG_SILENT;
    }
    return UICLAB_LOG_INFO;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unsupervised image classification lab: UIC and DeepCluster-style training on small image sets"};
    app.set_version_flag("--version", std::string(uiclab_version()));
    app.require_subcommand(1);

    Options o;
    auto common = [&o](CLI::App* sub) {
        sub->add_option("--config", o.config_path, "Config file (defaults are used when omitted)")->check(CLI::ExistingFile);
        sub->add_option("--seed", o.seed, "Run seed (overrides experiment.seed)");
        sub->add_option("--out", o.out, "Output directory (overrides experiment.output_dir)");
        sub->add_option("--method", o.method, "uic or deepcluster (overrides experiment.method)")
            ->check(CLI::IsMember({"uic", "deepcluster"}));
        sub->add_option("--threads", o.threads, "Worker threads; results do not depend on this")->check(CLI::PositiveNumber);
        sub->add_option("--log-level", o.log_level, "debug, info, warn, error or silent")
            ->check(CLI::IsMember({"debug", "info", "warn", "error", "silent"}));
    };

    CLI::App* train = app.add_subcommand("train", "Train the configured method, then evaluate it");
    CLI::App* eval = app.add_subcommand("eval", "Evaluate a saved checkpoint without training");
    CLI::App* compare = app.add_subcommand("compare", "Train UIC and DeepCluster and write a side-by-side CSV");
    CLI::App* emit = app.add_subcommand("emit-config", "Print the effective config in canonical form");
    CLI::App* gen = app.add_subcommand("gen-data", "Write the configured synthetic dataset as IDX files");
    for (CLI::App* sub : {train, eval, compare, emit, gen}) {
        common(sub);
    }
    eval->add_option("--checkpoint", o.checkpoint, "Checkpoint to evaluate")->required()->check(CLI::ExistingFile);

    CLI11_PARSE(app, argc, argv);

    // emit-config writes the config to stdout, so keep the log quiet there.
    uiclab_set_log_level(emit->parsed() ? UICLAB_LOG_WARN : parse_level(o.log_level));

    uiclab_config* cfg = nullptr;
    uiclab_status st = make_config(o, &cfg);
    if (st != UICLAB_OK) {
        return report(st);
    }
    if (train->parsed()) {
        st = uiclab_train(cfg);
    } else if (eval->parsed()) {
        st = uiclab_evaluate(cfg, o.checkpoint.c_str());
    } else if (compare->parsed()) {
        st = uiclab_compare(cfg);
    } else if (gen->parsed()) {
        st = uiclab_generate_data(cfg);
    } else {
        char* text = nullptr;
        st = uiclab_config_emit(cfg, &text);
        if (st == UICLAB_OK) {
            std::fputs(text, stdout);
            uiclab_string_free(text);
        }
    }
    uiclab_config_free(cfg);
    return report(st);
}
