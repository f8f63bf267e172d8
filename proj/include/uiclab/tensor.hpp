#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace uiclab {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(std::span<const std::size_t> shape);
std::string shape_to_string(std::span<const std::size_t> shape);

/// Dense row-major array of doubles.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    Tensor(const Tensor& other);
    Tensor& operator=(const Tensor& other);
    Tensor(Tensor&&) noexcept = default;
    Tensor& operator=(Tensor&&) noexcept = default;

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }
    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t row, std::size_t col) { return data_[row * shape_[1] + col]; }
    double at(std::size_t row, std::size_t col) const { return data_[row * shape_[1] + col]; }

    /// Contiguous slab for leading index `i` (a row of a matrix, one image of
    /// a batch, ...).
    std::span<double> slab(std::size_t i);
    std::span<const double> slab(std::size_t i) const;

    /// Same data viewed with a different shape of equal element count.
    Tensor reshaped(Shape shape) const&;
    Tensor reshaped(Shape shape) &&;

    void fill(double value);
    bool all_finite() const;

    bool operator==(const Tensor& other) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

// Allocation audit. Tests install an observer to watch every tensor buffer the
// library creates (shape only); production code never installs one.
using AllocationObserver = std::function<void(std::span<const std::size_t>)>;

class ScopedAllocationAudit {
public:
    explicit ScopedAllocationAudit(AllocationObserver observer);
    ~ScopedAllocationAudit();
    ScopedAllocationAudit(const ScopedAllocationAudit&) = delete;
    ScopedAllocationAudit& operator=(const ScopedAllocationAudit&) = delete;
};

/// Named trainable tensors with paired gradient and momentum buffers.
class ParamSet {
public:
    void add(std::string name, Tensor value);

    std::size_t size() const { return entries_.size(); }
    const std::string& name(std::size_t i) const { return entries_.at(i).name; }
    std::optional<std::size_t> find(std::string_view name) const;
    std::size_t index_of(std::string_view name) const;

    Tensor& value(std::size_t i) { return entries_.at(i).value; }
    const Tensor& value(std::size_t i) const { return entries_.at(i).value; }
    Tensor& grad(std::size_t i) { return entries_.at(i).grad; }
    const Tensor& grad(std::size_t i) const { return entries_.at(i).grad; }
    Tensor& velocity(std::size_t i) { return entries_.at(i).velocity; }
    const Tensor& velocity(std::size_t i) const { return entries_.at(i).velocity; }

    void zero_grad();
    void zero_velocity();

    /// Zero-filled tensors shaped like each parameter, in parameter order.
    std::vector<Tensor> zeros_like() const;

    bool operator==(const ParamSet& other) const = default;

private:
    struct Entry {
        std::string name;
        Tensor value;
        Tensor grad;
        Tensor velocity;
        bool operator==(const Entry& other) const = default;
    };
    std::vector<Entry> entries_;
};

struct SgdConfig {
    double lr = 0.1;
    double momentum = 0.9;
    double weight_decay = 1e-4;

    void validate() const;
    bool operator==(const SgdConfig&) const = default;
};

/// v <- momentum*v + grad + weight_decay*param; param <- param - lr*v; grads
/// are zeroed afterwards.
void sgd_step(ParamSet& params, const SgdConfig& cfg);

/// Learning rate for `epoch` (0-based) under linear decay from `base` towards
/// zero over `total_epochs`.
double linear_decay_lr(double base, std::size_t epoch, std::size_t total_epochs);

// ---------------------------------------------------------------------------
// Loss

std::vector<double> softmax(std::span<const double> logits);

/// -log softmax(logits)[target]. When `grad` is non-empty it receives
/// softmax(logits) - onehot(target).
double cross_entropy(std::span<const double> logits, std::size_t target,
                     std::span<double> grad = {});

/// Mean cross-entropy over the rows of `logits` (N x k). `dlogits` receives
/// the gradient of the mean.
double softmax_cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets,
                             Tensor& dlogits);

/// Row-wise argmax, ties resolved to the lowest index.
std::size_t argmax(std::span<const double> values);

// ---------------------------------------------------------------------------
// Differentiable primitives. Backward functions accumulate into their
// gradient outputs; pass nullptr to skip one.

/// y = x w + b with x (N x in), w (in x out), b (out) optional.
Tensor affine_forward(const Tensor& x, const Tensor& w, const Tensor* b);
void affine_backward(const Tensor& x, const Tensor& w, const Tensor& dy,
                     Tensor* dx, Tensor* dw, Tensor* db);

/// 3x3 convolution, stride 1, zero padding 1. x (N,C,H,W), w (F,C,3,3),
/// b (F). `cols`, when given, receives the im2col buffer for reuse in backward.
Tensor conv3x3_forward(const Tensor& x, const Tensor& w, const Tensor& b, Tensor* cols = nullptr);
void conv3x3_backward(const Tensor& x, const Tensor* cols, const Tensor& w, const Tensor& dy,
                      Tensor* dx, Tensor* dw, Tensor* db);

/// 2x2 max pooling with stride 2 (floor on odd extents). `argmax` receives the
/// flat input offset of each selected element.
Tensor maxpool2_forward(const Tensor& x, std::vector<std::uint32_t>& argmax);
void maxpool2_backward(const Tensor& dy, std::span<const std::uint32_t> argmax, Tensor& dx);

Tensor relu_forward(const Tensor& x);
/// Uses the forward output y: passes dy where y > 0.
void relu_backward(const Tensor& y, const Tensor& dy, Tensor& dx);

// ---------------------------------------------------------------------------
// Finite-difference gradient checking

/// Computes the loss at the current parameter values. When `with_grad` is set
/// it must also write the analytic gradient into the ParamSet's grad buffers
/// (already zeroed by the caller).
using LossClosure = std::function<double(ParamSet& params, bool with_grad)>;

struct GradCheckOptions {
    double eps = 1e-5;
    std::size_t max_coords_per_tensor = 64;
    std::uint64_t seed = 0x5eed;
    // Relative error denominator is max(|numeric|, floor).
    double denominator_floor = 1e-6;
};

struct GradCheckReport {
    double max_relative_error = 0.0;
    std::string worst_param;
    std::size_t worst_index = 0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
    std::size_t coords_checked = 0;
};

GradCheckReport grad_check(const LossClosure& closure, ParamSet& params,
                           const GradCheckOptions& opts = {});

} // namespace uiclab
