#include "uiclab/encoder.hpp"

#include "uiclab/error.hpp"
#include "uiclab/rng.hpp"

#include <algorithm>
#include <cmath>

namespace uiclab {

namespace {

// Variance floor for per-sample standardisation; keeps flat planes at zero
// instead of amplifying rounding noise.
constexpr double kStandardizeEps = 1e-4;

std::size_t flat_features(const EncoderConfig& c) {
    return c.conv_channels[1] * (c.height / 4) * (c.width / 4);
}

void check_batch(const EncoderConfig& c, const Tensor& batch) {
    require(batch.rank() == 4 && batch.dim(1) == c.channels && batch.dim(2) == c.height && batch.dim(3) == c.width,
            ErrorCode::invalid_argument,
            "batch shape " + shape_to_string(batch.shape()) + " does not match encoder input " +
                shape_to_string(c.image_shape()));
}

} // namespace

const char* arch_name(Arch arch) { return arch == Arch::conv_small ? "conv-small" : "mlp"; }

Arch parse_arch(std::string_view name) {
    if (name == "conv-small") {
        return Arch::conv_small;
    }
    if (name == "mlp") {
        return Arch::mlp;
    }
    fail(ErrorCode::config, "unknown arch '" + std::string(name) + "' (expected conv-small or mlp)");
}

void EncoderConfig::validate() const {
    require(channels == 1 || channels == 3 || !sobel, ErrorCode::config, "sobel requires 1 or 3 input channels");
    require(channels >= 1 && height >= 1 && width >= 1, ErrorCode::config, "input extents must be positive");
    require(embedding_dim >= 2, ErrorCode::config, "embedding_dim must be >= 2");
    require(num_classes >= 2, ErrorCode::config, "k must be >= 2");
    if (arch == Arch::conv_small) {
        require(height >= 8 && width >= 8, ErrorCode::config, "conv-small needs input extents >= 8");
        require(conv_channels[0] >= 1 && conv_channels[1] >= 1, ErrorCode::config, "conv widths must be positive");
        require(height / 4 >= 1 && width / 4 >= 1, ErrorCode::config, "pooling reduces the input below 1x1");
    } else {
        require(mlp_hidden >= 1, ErrorCode::config, "mlp_hidden must be positive");
    }
}

std::vector<LayerInfo> describe_parameters(const EncoderConfig& c) {
    const std::size_t d = c.embedding_dim;
    if (c.arch == Arch::conv_small) {
        const std::size_t c0 = c.trunk_channels(), c1 = c.conv_channels[0], c2 = c.conv_channels[1];
        return {
            {"conv1.weight", {c1, c0, 3, 3}}, {"conv1.bias", {c1}},
            {"conv2.weight", {c2, c1, 3, 3}}, {"conv2.bias", {c2}},
            {"fc.weight", {flat_features(c), d}}, {"fc.bias", {d}},
            {"classifier.weight", {d, c.num_classes}},
        };
    }
    const std::size_t in = c.trunk_channels() * c.height * c.width;
    return {
        {"fc1.weight", {in, c.mlp_hidden}}, {"fc1.bias", {c.mlp_hidden}},
        {"fc2.weight", {c.mlp_hidden, d}}, {"fc2.bias", {d}},
        {"classifier.weight", {d, c.num_classes}},
    };
}

namespace {

Tensor glorot_uniform(const Shape& shape, Rng rng) {
    std::size_t fan_in = 0, fan_out = 0;
    if (shape.size() == 4) {
        const std::size_t receptive = shape[2] * shape[3];
        fan_in = shape[1] * receptive;
        fan_out = shape[0] * receptive;
    } else {
        fan_in = shape[0];
        fan_out = shape[1];
    }
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Tensor t(shape);
    for (double& v : t.values()) {
        v = rng.uniform(-a, a);
    }
    return t;
}

} // namespace

EncoderState init_encoder(const EncoderConfig& config) {
    config.validate();
    EncoderState state{config, {}};
    const Rng root(config.seed);
    std::uint64_t layer = 0;
    for (auto& info : describe_parameters(config)) {
        if (info.shape.size() == 1) {
            state.params.add(info.name, Tensor(info.shape));
        } else {
            state.params.add(info.name, glorot_uniform(info.shape, root.fork({tag(Stream::init), layer})));
        }
        ++layer;
    }
    return state;
}

void reinit_classifier(EncoderState& state, std::uint64_t seed) {
    const std::size_t idx = state.classifier_index();
    Rng rng = Rng(seed).fork({tag(Stream::classifier_reinit)});
    for (double& w : state.params.value(idx).values()) {
        w = kReinitStd * rng.normal();
    }
    state.params.velocity(idx).fill(0.0);
    state.params.grad(idx).fill(0.0);
}

// ---------------------------------------------------------------------------

Tensor sobel_filter(std::span<const double> image, std::size_t channels, std::size_t height, std::size_t width) {
    require(channels == 1 || channels == 3, ErrorCode::invalid_argument, "sobel_filter needs 1 or 3 channels");
    require(image.size() == channels * height * width, ErrorCode::invalid_argument, "sobel_filter: image size mismatch");
    const std::size_t hw = height * width;
    std::vector<double> lum(hw);
    if (channels == 1) {
        std::copy(image.begin(), image.end(), lum.begin());
    } else {
        for (std::size_t p = 0; p < hw; ++p) {
            lum[p] = 0.299 * image[p] + 0.587 * image[hw + p] + 0.114 * image[2 * hw + p];
        }
    }
    auto px = [&](std::ptrdiff_t y, std::ptrdiff_t x) {
        y = std::clamp<std::ptrdiff_t>(y, 0, static_cast<std::ptrdiff_t>(height) - 1);
        x = std::clamp<std::ptrdiff_t>(x, 0, static_cast<std::ptrdiff_t>(width) - 1);
        return lum[static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x)];
    };
    Tensor out({2, height, width});
    for (std::size_t yy = 0; yy < height; ++yy) {
        for (std::size_t xx = 0; xx < width; ++xx) {
            const auto y = static_cast<std::ptrdiff_t>(yy), x = static_cast<std::ptrdiff_t>(xx);
            const double gx = (px(y - 1, x + 1) + 2.0 * px(y, x + 1) + px(y + 1, x + 1)) -
                              (px(y - 1, x - 1) + 2.0 * px(y, x - 1) + px(y + 1, x - 1));
            const double gy = (px(y + 1, x - 1) + 2.0 * px(y + 1, x) + px(y + 1, x + 1)) -
                              (px(y - 1, x - 1) + 2.0 * px(y - 1, x) + px(y - 1, x + 1));
            out[yy * width + xx] = gx;
            out[hw + yy * width + xx] = gy;
        }
    }
    return out;
}

Tensor preprocess(const EncoderConfig& c, const Tensor& batch) {
    check_batch(c, batch);
    const std::size_t n = batch.dim(0), hw = c.height * c.width, tc = c.trunk_channels();
    Tensor x({n, tc, c.height, c.width});
    for (std::size_t s = 0; s < n; ++s) {
        auto dst = x.slab(s);
        if (c.sobel) {
            Tensor edges = sobel_filter(batch.slab(s), c.channels, c.height, c.width);
            std::copy(edges.values().begin(), edges.values().end(), dst.begin());
        } else {
            auto src = batch.slab(s);
            std::copy(src.begin(), src.end(), dst.begin());
        }
        for (std::size_t ch = 0; ch < tc; ++ch) {
            auto plane = dst.subspan(ch * hw, hw);
            double mean = 0.0;
            for (double v : plane) {
                mean += v;
            }
            mean /= static_cast<double>(hw);
            double var = 0.0;
            for (double v : plane) {
                var += (v - mean) * (v - mean);
            }
            var /= static_cast<double>(hw);
            const double inv = 1.0 / std::sqrt(var + kStandardizeEps);
            for (double& v : plane) {
                v = (v - mean) * inv;
            }
        }
    }
    return x;
}

// ---------------------------------------------------------------------------

ForwardOutput forward(const EncoderState& state, const Tensor& batch) {
    ForwardCache cache;
    return forward(state, batch, cache);
}

ForwardOutput forward(const EncoderState& state, const Tensor& batch, ForwardCache& cache) {
    const EncoderConfig& c = state.config;
    const ParamSet& p = state.params;
    cache.input = preprocess(c, batch);
    const std::size_t n = batch.dim(0);
    if (c.arch == Arch::conv_small) {
        cache.act1 = relu_forward(conv3x3_forward(cache.input, p.value(0), p.value(1), &cache.cols1));
        cache.pooled1 = maxpool2_forward(cache.act1, cache.pool1_idx);
        cache.act2 = relu_forward(conv3x3_forward(cache.pooled1, p.value(2), p.value(3), &cache.cols2));
        Tensor pooled2 = maxpool2_forward(cache.act2, cache.pool2_idx);
        cache.flat = std::move(pooled2).reshaped({n, flat_features(c)});
        cache.embeddings = relu_forward(affine_forward(cache.flat, p.value(4), &p.value(5)));
    } else {
        cache.flat = cache.input.reshaped({n, c.trunk_channels() * c.height * c.width});
        cache.hidden = relu_forward(affine_forward(cache.flat, p.value(0), &p.value(1)));
        cache.embeddings = relu_forward(affine_forward(cache.hidden, p.value(2), &p.value(3)));
    }
    Tensor logits = affine_forward(cache.embeddings, p.value(state.classifier_index()), nullptr);
    return ForwardOutput{cache.embeddings, std::move(logits)};
}

void backward(const EncoderState& state, const ForwardCache& cache, const Tensor& dlogits, std::span<Tensor> grads) {
    const EncoderConfig& c = state.config;
    const ParamSet& p = state.params;
    require(grads.size() == p.size(), ErrorCode::internal, "backward: gradient buffer count mismatch");
    const std::size_t cls = state.classifier_index();

    Tensor demb(cache.embeddings.shape());
    affine_backward(cache.embeddings, p.value(cls), dlogits, &demb, &grads[cls], nullptr);

    if (c.arch == Arch::conv_small) {
        Tensor dpre(demb.shape());
        relu_backward(cache.embeddings, demb, dpre);
        Tensor dflat(cache.flat.shape());
        affine_backward(cache.flat, p.value(4), dpre, &dflat, &grads[4], &grads[5]);

        Tensor dact2(cache.act2.shape());
        maxpool2_backward(dflat, cache.pool2_idx, dact2);
        Tensor dconv2(cache.act2.shape());
        relu_backward(cache.act2, dact2, dconv2);
        Tensor dpooled1(cache.pooled1.shape());
        conv3x3_backward(cache.pooled1, &cache.cols2, p.value(2), dconv2, &dpooled1, &grads[2], &grads[3]);

        Tensor dact1(cache.act1.shape());
        maxpool2_backward(dpooled1, cache.pool1_idx, dact1);
        Tensor dconv1(cache.act1.shape());
        relu_backward(cache.act1, dact1, dconv1);
        conv3x3_backward(cache.input, &cache.cols1, p.value(0), dconv1, nullptr, &grads[0], &grads[1]);
    } else {
        Tensor dpre2(demb.shape());
        relu_backward(cache.embeddings, demb, dpre2);
        Tensor dhidden(cache.hidden.shape());
        affine_backward(cache.hidden, p.value(2), dpre2, &dhidden, &grads[2], &grads[3]);
        Tensor dpre1(dhidden.shape());
        relu_backward(cache.hidden, dhidden, dpre1);
        affine_backward(cache.flat, p.value(0), dpre1, nullptr, &grads[0], &grads[1]);
    }
}

} // namespace uiclab
