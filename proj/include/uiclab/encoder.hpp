#pragma once

#include "uiclab/tensor.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace uiclab {

enum class Arch { conv_small, mlp };

const char* arch_name(Arch arch);
Arch parse_arch(std::string_view name);

struct EncoderConfig {
    std::size_t channels = 1;
    std::size_t height = 16;
    std::size_t width = 16;
    Arch arch = Arch::conv_small;
    std::size_t embedding_dim = 64;
    std::size_t num_classes = 30;
    bool sobel = true;
    std::uint64_t seed = 0;
    // conv-small trunk widths; mlp hidden width.
    std::array<std::size_t, 2> conv_channels{16, 32};
    std::size_t mlp_hidden = 128;

    void validate() const;
    /// Channels entering the trunk (2 with Sobel, else the image channels).
    std::size_t trunk_channels() const { return sobel ? 2 : channels; }
    Shape image_shape() const { return {channels, height, width}; }

    bool operator==(const EncoderConfig&) const = default;
};

/// f'(x) = W f(x): the trunk f plus the bias-free linear classifier W (d x k),
/// which is always the last parameter.
struct EncoderState {
    EncoderConfig config;
    ParamSet params;

    std::size_t classifier_index() const { return params.size() - 1; }
};

struct LayerInfo {
    std::string name;
    Shape shape;
};

/// Parameter names and shapes implied by `config`, in storage order.
std::vector<LayerInfo> describe_parameters(const EncoderConfig& config);

/// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)) per weight tensor,
/// zero biases; a pure function of config.seed.
EncoderState init_encoder(const EncoderConfig& config);

inline constexpr double kReinitStd = 0.01;

/// Fresh draw of the classifier weights, N(0, kReinitStd^2), from `seed`; the
/// trunk is untouched and the classifier's momentum is cleared.
void reinit_classifier(EncoderState& state, std::uint64_t seed);

/// 3x3 Sobel responses of a C x H x W image (C in {1, 3}; RGB is reduced to
/// luminance first). Channel 0 is the horizontal gradient, channel 1 the
/// vertical one. Borders replicate the edge pixel.
Tensor sobel_filter(std::span<const double> image, std::size_t channels, std::size_t height, std::size_t width);

/// Network input for a raw batch (N, C, H, W): optional Sobel, then per-sample
/// per-channel standardisation.
Tensor preprocess(const EncoderConfig& config, const Tensor& batch);

struct ForwardOutput {
    Tensor embeddings; // N x d, post-ReLU
    Tensor logits;     // N x k
};

/// Activations kept for the backward pass.
struct ForwardCache {
    Tensor input;
    Tensor cols1, act1, pooled1;
    std::vector<std::uint32_t> pool1_idx;
    Tensor cols2, act2;
    std::vector<std::uint32_t> pool2_idx;
    Tensor flat;
    Tensor hidden;
    Tensor embeddings;
};

ForwardOutput forward(const EncoderState& state, const Tensor& batch);
ForwardOutput forward(const EncoderState& state, const Tensor& batch, ForwardCache& cache);

/// Accumulates d(loss)/d(param) into `grads` (parameter order) given the
/// gradient of the loss w.r.t. the logits of the cached forward pass.
void backward(const EncoderState& state, const ForwardCache& cache, const Tensor& dlogits,
              std::span<Tensor> grads);

} // namespace uiclab
