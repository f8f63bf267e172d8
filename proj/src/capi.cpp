#include "uiclab/uiclab.h"

#include "uiclab/checkpoint.hpp"
#include "uiclab/config.hpp"
#include "uiclab/error.hpp"
#include "uiclab/eval.hpp"
#include "uiclab/experiment.hpp"
#include "uiclab/log.hpp"

#include <cstring>
#include <new>
#include <string>

struct uiclab_config {
    uiclab::ExperimentConfig value;
};

struct uiclab_dataset {
    uiclab::Dataset value;
};

struct uiclab_encoder {
    uiclab::EncoderState state;
    std::size_t epoch = 0;
};

namespace {

thread_local std::string g_last_error;

uiclab_status to_status(uiclab::ErrorCode code) {
    using uiclab::ErrorCode;
    switch (code) {
    case ErrorCode::invalid_argument:
        return UICLAB_ERR_INVALID_ARGUMENT;
    case ErrorCode::format:
        return UICLAB_ERR_FORMAT;
    case ErrorCode::config:
        return UICLAB_ERR_CONFIG;
    case ErrorCode::shape:
        return UICLAB_ERR_SHAPE;
    case ErrorCode::contract_violation:
        return UICLAB_ERR_CONTRACT;
    case ErrorCode::numeric:
        return UICLAB_ERR_NUMERIC;
    case ErrorCode::io:
        return UICLAB_ERR_IO;
    case ErrorCode::internal:
        return UICLAB_ERR_INTERNAL;
    }
    return UICLAB_ERR_INTERNAL;
}

template <class F>
uiclab_status guarded(F&& body) {
    g_last_error.clear();
    try {
        body();
        return UICLAB_OK;
    } catch (const uiclab::Error& e) {
        g_last_error = e.what();
        return to_status(e.code());
    } catch (const std::bad_alloc&) {
        g_last_error = "out of memory";
        return UICLAB_ERR_INTERNAL;
    } catch (const std::exception& e) {
        g_last_error = e.what();
        return UICLAB_ERR_INTERNAL;
    } catch (...) {
        g_last_error = "unknown error";
        return UICLAB_ERR_INTERNAL;
    }
}

void need(const void* p, const char* what) {
    uiclab::require(p != nullptr, uiclab::ErrorCode::invalid_argument, std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
    char* out = new char[s.size() + 1];
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

} // namespace

extern "C" {

const char* uiclab_version(void) { return uiclab::kVersion; }

const char* uiclab_status_name(uiclab_status status) {
    switch (status) {
    case UICLAB_OK:
        return "ok";
    case UICLAB_ERR_INVALID_ARGUMENT:
        return "invalid-argument";
    case UICLAB_ERR_FORMAT:
        return "format";
    case UICLAB_ERR_CONFIG:
        return "config";
    case UICLAB_ERR_SHAPE:
        return "shape";
    case UICLAB_ERR_CONTRACT:
        return "contract-violation";
    case UICLAB_ERR_NUMERIC:
        return "numeric";
    case UICLAB_ERR_IO:
        return "io";
    case UICLAB_ERR_INTERNAL:
        return "internal";
    }
    return "unknown";
}

const char* uiclab_last_error(void) { return g_last_error.c_str(); }

void uiclab_set_log_level(uiclab_log_level level) {
    uiclab::set_log_level(static_cast<uiclab::LogLevel>(level));
}

void uiclab_string_free(char* s) { delete[] s; }

uiclab_status uiclab_config_default(uiclab_config** out) {
    return guarded([&] {
        need(out, "out");
        auto* c = new uiclab_config{};
        c->value.sync();
        *out = c;
    });
}

uiclab_status uiclab_config_load(const char* path, uiclab_config** out) {
    return guarded([&] {
        need(path, "path");
        need(out, "out");
        *out = new uiclab_config{uiclab::load_config(path)};
    });
}

uiclab_status uiclab_config_parse(const char* text, uiclab_config** out) {
    return guarded([&] {
        need(text, "text");
        need(out, "out");
        *out = new uiclab_config{uiclab::parse_config(text)};
    });
}

void uiclab_config_free(uiclab_config* config) { delete config; }

uiclab_status uiclab_config_emit(const uiclab_config* config, char** out_text) {
    return guarded([&] {
        need(config, "config");
        need(out_text, "out_text");
        *out_text = dup_string(uiclab::emit_config(config->value));
    });
}

uiclab_status uiclab_config_set_seed(uiclab_config* config, uint64_t seed) {
    return guarded([&] {
        need(config, "config");
        config->value.seed = seed;
        config->value.sync();
    });
}

uiclab_status uiclab_config_get_seed(const uiclab_config* config, uint64_t* seed) {
    return guarded([&] {
        need(config, "config");
        need(seed, "seed");
        *seed = config->value.seed;
    });
}

uiclab_status uiclab_config_set_output_dir(uiclab_config* config, const char* dir) {
    return guarded([&] {
        need(config, "config");
        need(dir, "dir");
        uiclab::require(*dir != '\0', uiclab::ErrorCode::invalid_argument, "output directory must not be empty");
        config->value.output_dir = dir;
    });
}

uiclab_status uiclab_config_set_method(uiclab_config* config, const char* method) {
    return guarded([&] {
        need(config, "config");
        need(method, "method");
        config->value.method = uiclab::parse_method(method);
    });
}

uiclab_status uiclab_config_set_threads(uiclab_config* config, size_t threads) {
    return guarded([&] {
        need(config, "config");
        uiclab::require(threads >= 1, uiclab::ErrorCode::invalid_argument, "threads must be >= 1");
        config->value.threads = threads;
        config->value.sync();
    });
}

uiclab_status uiclab_train(const uiclab_config* config) {
    return guarded([&] {
        need(config, "config");
        uiclab::run_experiment(config->value);
    });
}

uiclab_status uiclab_evaluate(const uiclab_config* config, const char* checkpoint_path) {
    return guarded([&] {
        need(config, "config");
        need(checkpoint_path, "checkpoint_path");
        uiclab::run_evaluation(config->value, checkpoint_path);
    });
}

uiclab_status uiclab_compare(const uiclab_config* config) {
    return guarded([&] {
        need(config, "config");
        uiclab::run_comparison(config->value);
    });
}

uiclab_status uiclab_generate_data(const uiclab_config* config) {
    return guarded([&] {
        need(config, "config");
        uiclab::generate_data(config->value);
    });
}

uiclab_status uiclab_dataset_load_idx(const char* images_path, const char* labels_path, uiclab_dataset** out) {
    return guarded([&] {
        need(images_path, "images_path");
        need(out, "out");
        std::optional<std::filesystem::path> labels;
        if (labels_path != nullptr) {
            labels = labels_path;
        }
        *out = new uiclab_dataset{uiclab::load_idx(images_path, labels)};
    });
}

void uiclab_dataset_free(uiclab_dataset* dataset) { delete dataset; }

uiclab_status uiclab_dataset_shape(const uiclab_dataset* dataset, size_t* n, size_t* channels, size_t* height,
                                   size_t* width) {
    return guarded([&] {
        need(dataset, "dataset");
        const auto shape = dataset->value.image_shape();
        if (n) {
            *n = dataset->value.size();
        }
        if (channels) {
            *channels = shape.channels;
        }
        if (height) {
            *height = shape.height;
        }
        if (width) {
            *width = shape.width;
        }
    });
}

uiclab_status uiclab_dataset_image(const uiclab_dataset* dataset, size_t index, double* out, size_t out_len) {
    return guarded([&] {
        need(dataset, "dataset");
        need(out, "out");
        const auto& d = dataset->value;
        uiclab::require(index < d.size(), uiclab::ErrorCode::invalid_argument,
                        "image index " + std::to_string(index) + " out of range");
        const auto img = d.images.slab(index);
        uiclab::require(out_len >= img.size(), uiclab::ErrorCode::invalid_argument,
                        "output buffer holds " + std::to_string(out_len) + " values, image needs " +
                            std::to_string(img.size()));
        std::memcpy(out, img.data(), img.size() * sizeof(double));
    });
}

uiclab_status uiclab_dataset_label(const uiclab_dataset* dataset, size_t index, int32_t* label) {
    return guarded([&] {
        need(dataset, "dataset");
        need(label, "label");
        const auto& d = dataset->value;
        uiclab::require(d.truth.has_value(), uiclab::ErrorCode::invalid_argument, "dataset has no labels");
        uiclab::require(index < d.size(), uiclab::ErrorCode::invalid_argument,
                        "label index " + std::to_string(index) + " out of range");
        *label = (*d.truth)[index];
    });
}

uiclab_status uiclab_encoder_load(const char* checkpoint_path, uiclab_encoder** out) {
    return guarded([&] {
        need(checkpoint_path, "checkpoint_path");
        need(out, "out");
        uiclab::Checkpoint ck = uiclab::load_checkpoint(checkpoint_path);
        *out = new uiclab_encoder{std::move(ck.encoder), ck.epoch};
    });
}

uiclab_status uiclab_encoder_save(const uiclab_encoder* encoder, const char* checkpoint_path) {
    return guarded([&] {
        need(encoder, "encoder");
        need(checkpoint_path, "checkpoint_path");
        uiclab::save_checkpoint(encoder->state, encoder->epoch, checkpoint_path);
    });
}

void uiclab_encoder_free(uiclab_encoder* encoder) { delete encoder; }

uiclab_status uiclab_encoder_dims(const uiclab_encoder* encoder, size_t* channels, size_t* height, size_t* width,
                                  size_t* embedding_dim, size_t* num_classes) {
    return guarded([&] {
        need(encoder, "encoder");
        const auto& c = encoder->state.config;
        if (channels) {
            *channels = c.channels;
        }
        if (height) {
            *height = c.height;
        }
        if (width) {
            *width = c.width;
        }
        if (embedding_dim) {
            *embedding_dim = c.embedding_dim;
        }
        if (num_classes) {
            *num_classes = c.num_classes;
        }
    });
}

uiclab_status uiclab_encoder_forward(const uiclab_encoder* encoder, const double* images, size_t n, double* embeddings,
                                     double* logits) {
    return guarded([&] {
        need(encoder, "encoder");
        need(images, "images");
        uiclab::require(n >= 1, uiclab::ErrorCode::invalid_argument, "forward needs at least one image");
        const auto& c = encoder->state.config;
        uiclab::Tensor batch({n, c.channels, c.height, c.width});
        std::memcpy(batch.data(), images, batch.size() * sizeof(double));
        const uiclab::ForwardOutput out = uiclab::forward(encoder->state, batch);
        if (embeddings) {
            std::memcpy(embeddings, out.embeddings.data(), out.embeddings.size() * sizeof(double));
        }
        if (logits) {
            std::memcpy(logits, out.logits.data(), out.logits.size() * sizeof(double));
        }
    });
}

uiclab_status uiclab_nmi(const int32_t* a, const int32_t* b, size_t n, double* out) {
    return guarded([&] {
        need(a, "a");
        need(b, "b");
        need(out, "out");
        *out = uiclab::nmi(std::span<const int32_t>(a, n), std::span<const int32_t>(b, n));
    });
}

} // extern "C"
