#include "uiclab/tensor.hpp"

#include "uiclab/error.hpp"
#include "uiclab/rng.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>

namespace uiclab {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using ConstVecMap = Eigen::Map<const Eigen::RowVectorXd>;
using VecMap = Eigen::Map<Eigen::RowVectorXd>;

std::mutex g_audit_mutex;
AllocationObserver* g_audit_observer = nullptr;
std::atomic<bool> g_audit_active{false};

void notify_allocation(const Shape& shape) {
    if (!g_audit_active.load(std::memory_order_relaxed)) {
        return;
    }
    std::lock_guard lock(g_audit_mutex);
    if (g_audit_observer != nullptr) {
        (*g_audit_observer)(shape);
    }
}

} // namespace

std::size_t shape_numel(std::span<const std::size_t> shape) {
    std::size_t n = 1;
    for (std::size_t extent : shape) {
        n *= extent;
    }
    return n;
}

std::string shape_to_string(std::span<const std::size_t> shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        os << (i ? "x" : "") << shape[i];
    }
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    for (std::size_t extent : shape_) {
        require(extent > 0, ErrorCode::shape, "tensor extents must be positive: " + shape_to_string(shape_));
    }
    notify_allocation(shape_);
    data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), data_(std::move(values)) {
    require(shape_numel(shape_) == data_.size(), ErrorCode::shape,
            "tensor data length does not match shape " + shape_to_string(shape_));
    notify_allocation(shape_);
}

Tensor::Tensor(const Tensor& other) : shape_(other.shape_), data_(other.data_) {
    if (!shape_.empty()) {
        notify_allocation(shape_);
    }
}

Tensor& Tensor::operator=(const Tensor& other) {
    if (this != &other) {
        shape_ = other.shape_;
        data_ = other.data_;
        if (!shape_.empty()) {
            notify_allocation(shape_);
        }
    }
    return *this;
}

std::span<double> Tensor::slab(std::size_t i) {
    const std::size_t stride = data_.size() / shape_.at(0);
    return std::span<double>(data_).subspan(i * stride, stride);
}

std::span<const double> Tensor::slab(std::size_t i) const {
    const std::size_t stride = data_.size() / shape_.at(0);
    return std::span<const double>(data_).subspan(i * stride, stride);
}

Tensor Tensor::reshaped(Shape shape) const& {
    Tensor copy(*this);
    return std::move(copy).reshaped(std::move(shape));
}

Tensor Tensor::reshaped(Shape shape) && {
    require(shape_numel(shape) == data_.size(), ErrorCode::shape,
            "cannot reshape " + shape_to_string(shape_) + " to " + shape_to_string(shape));
    shape_ = std::move(shape);
    return std::move(*this);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

bool Tensor::all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

ScopedAllocationAudit::ScopedAllocationAudit(AllocationObserver observer) {
    std::lock_guard lock(g_audit_mutex);
    require(g_audit_observer == nullptr, ErrorCode::internal, "allocation audit already active");
    g_audit_observer = new AllocationObserver(std::move(observer));
    g_audit_active.store(true);
}

ScopedAllocationAudit::~ScopedAllocationAudit() {
    std::lock_guard lock(g_audit_mutex);
    g_audit_active.store(false);
    delete g_audit_observer;
    g_audit_observer = nullptr;
}

// ---------------------------------------------------------------------------
// ParamSet / SGD

void ParamSet::add(std::string name, Tensor value) {
    require(!find(name).has_value(), ErrorCode::internal, "duplicate parameter name " + name);
    Tensor grad(value.shape());
    Tensor velocity(value.shape());
    entries_.push_back(Entry{std::move(name), std::move(value), std::move(grad), std::move(velocity)});
}

std::optional<std::size_t> ParamSet::find(std::string_view name) const {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].name == name) {
            return i;
        }
    }
    return std::nullopt;
}

std::size_t ParamSet::index_of(std::string_view name) const {
    auto idx = find(name);
    require(idx.has_value(), ErrorCode::internal, "unknown parameter " + std::string(name));
    return *idx;
}

void ParamSet::zero_grad() {
    for (auto& e : entries_) {
        e.grad.fill(0.0);
    }
}

void ParamSet::zero_velocity() {
    for (auto& e : entries_) {
        e.velocity.fill(0.0);
    }
}

std::vector<Tensor> ParamSet::zeros_like() const {
    std::vector<Tensor> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) {
        out.emplace_back(e.value.shape());
    }
    return out;
}

void SgdConfig::validate() const {
    require(lr >= 0.0 && std::isfinite(lr), ErrorCode::config, "sgd lr must be a finite non-negative number");
    require(momentum >= 0.0 && momentum < 1.0, ErrorCode::config, "sgd momentum must lie in [0, 1)");
    require(weight_decay >= 0.0, ErrorCode::config, "sgd weight_decay must be non-negative");
}

void sgd_step(ParamSet& params, const SgdConfig& cfg) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params.value(i);
        Tensor& g = params.grad(i);
        Tensor& v = params.velocity(i);
        require(p.shape() == g.shape() && p.shape() == v.shape(), ErrorCode::internal,
                "parameter/grad/velocity shape mismatch for " + params.name(i));
        for (std::size_t j = 0; j < p.size(); ++j) {
            v[j] = cfg.momentum * v[j] + g[j] + cfg.weight_decay * p[j];
            p[j] -= cfg.lr * v[j];
        }
        g.fill(0.0);
    }
}

double linear_decay_lr(double base, std::size_t epoch, std::size_t total_epochs) {
    if (total_epochs == 0) {
        return base;
    }
    const double frac = static_cast<double>(std::min(epoch, total_epochs)) / static_cast<double>(total_epochs);
    return base * (1.0 - frac);
}

// ---------------------------------------------------------------------------
// Loss

std::vector<double> softmax(std::span<const double> logits) {
    require(!logits.empty(), ErrorCode::invalid_argument, "softmax of an empty vector");
    const double mx = *std::max_element(logits.begin(), logits.end());
    std::vector<double> out(logits.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out[i] = std::exp(logits[i] - mx);
        sum += out[i];
    }
    for (double& v : out) {
        v /= sum;
    }
    return out;
}

double cross_entropy(std::span<const double> logits, std::size_t target, std::span<double> grad) {
    require(!logits.empty(), ErrorCode::invalid_argument, "cross_entropy of an empty vector");
    require(target < logits.size(), ErrorCode::invalid_argument,
            "cross_entropy target " + std::to_string(target) + " out of range for " +
                std::to_string(logits.size()) + " classes");
    const double mx = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (double z : logits) {
        sum += std::exp(z - mx);
    }
    const double log_norm = mx + std::log(sum);
    if (!grad.empty()) {
        require(grad.size() == logits.size(), ErrorCode::internal, "cross_entropy grad buffer size");
        for (std::size_t i = 0; i < logits.size(); ++i) {
            grad[i] = std::exp(logits[i] - log_norm) - (i == target ? 1.0 : 0.0);
        }
    }
    return std::max(0.0, log_norm - logits[target]);
}

double softmax_cross_entropy(const Tensor& logits, std::span<const std::int32_t> targets, Tensor& dlogits) {
    require(logits.rank() == 2 && logits.dim(0) == targets.size(), ErrorCode::invalid_argument,
            "logits/targets mismatch");
    const std::size_t n = logits.dim(0);
    if (dlogits.shape() != logits.shape()) {
        dlogits = Tensor(logits.shape());
    }
    const double scale = 1.0 / static_cast<double>(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        require(targets[i] >= 0, ErrorCode::invalid_argument, "negative target");
        auto g = dlogits.slab(i);
        total += cross_entropy(logits.slab(i), static_cast<std::size_t>(targets[i]), g);
        for (double& v : g) {
            v *= scale;
        }
    }
    return total * scale;
}

std::size_t argmax(std::span<const double> values) {
    require(!values.empty(), ErrorCode::invalid_argument, "argmax of an empty vector");
    std::size_t best = 0;
    for (std::size_t i = 1; i < values.size(); ++i) {
        if (values[i] > values[best]) {
            best = i;
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// Affine

Tensor affine_forward(const Tensor& x, const Tensor& w, const Tensor* b) {
    require(x.rank() == 2 && w.rank() == 2 && x.dim(1) == w.dim(0), ErrorCode::shape,
            "affine: x " + shape_to_string(x.shape()) + " incompatible with w " + shape_to_string(w.shape()));
    const auto n = static_cast<Eigen::Index>(x.dim(0));
    const auto in = static_cast<Eigen::Index>(x.dim(1));
    const auto out = static_cast<Eigen::Index>(w.dim(1));
    Tensor y({x.dim(0), w.dim(1)});
    MatMap ym(y.data(), n, out);
    ym.noalias() = ConstMatMap(x.data(), n, in) * ConstMatMap(w.data(), in, out);
    if (b != nullptr) {
        require(b->size() == w.dim(1), ErrorCode::shape, "affine: bias size mismatch");
        ym.rowwise() += ConstVecMap(b->data(), out);
    }
    return y;
}

void affine_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor* dx, Tensor* dw, Tensor* db) {
    const auto n = static_cast<Eigen::Index>(x.dim(0));
    const auto in = static_cast<Eigen::Index>(x.dim(1));
    const auto out = static_cast<Eigen::Index>(w.dim(1));
    require(dy.rank() == 2 && dy.dim(0) == x.dim(0) && dy.dim(1) == w.dim(1), ErrorCode::shape,
            "affine backward: dy shape mismatch");
    ConstMatMap dym(dy.data(), n, out);
    if (dw != nullptr) {
        MatMap(dw->data(), in, out).noalias() += ConstMatMap(x.data(), n, in).transpose() * dym;
    }
    if (db != nullptr) {
        VecMap(db->data(), out) += dym.colwise().sum();
    }
    if (dx != nullptr) {
        MatMap(dx->data(), n, in).noalias() += dym * ConstMatMap(w.data(), in, out).transpose();
    }
}

// ---------------------------------------------------------------------------
// Convolution

namespace {

void im2col3x3(const Tensor& x, Tensor& cols) {
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t hw = h * w;
    const std::size_t ncols = n * hw;
    if (cols.shape() != Shape{c * 9, ncols}) {
        cols = Tensor({c * 9, ncols});
    }
    double* out = cols.data();
    const double* in = x.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t ky = 0; ky < 3; ++ky) {
            for (std::size_t kx = 0; kx < 3; ++kx) {
                double* row = out + ((ch * 9) + ky * 3 + kx) * ncols;
                for (std::size_t s = 0; s < n; ++s) {
                    const double* plane = in + (s * c + ch) * hw;
                    double* dst = row + s * hw;
                    for (std::size_t y = 0; y < h; ++y) {
                        const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
                        for (std::size_t xx = 0; xx < w; ++xx) {
                            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xx + kx) - 1;
                            const bool inside = sy >= 0 && sx >= 0 && sy < static_cast<std::ptrdiff_t>(h) &&
                                                sx < static_cast<std::ptrdiff_t>(w);
                            dst[y * w + xx] = inside ? plane[sy * static_cast<std::ptrdiff_t>(w) + sx] : 0.0;
                        }
                    }
                }
            }
        }
    }
}

void col2im3x3(const Tensor& dcols, Tensor& dx) {
    const std::size_t n = dx.dim(0), c = dx.dim(1), h = dx.dim(2), w = dx.dim(3);
    const std::size_t hw = h * w;
    const std::size_t ncols = n * hw;
    const double* in = dcols.data();
    double* out = dx.data();
    for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t ky = 0; ky < 3; ++ky) {
            for (std::size_t kx = 0; kx < 3; ++kx) {
                const double* row = in + ((ch * 9) + ky * 3 + kx) * ncols;
                for (std::size_t s = 0; s < n; ++s) {
                    double* plane = out + (s * c + ch) * hw;
                    const double* src = row + s * hw;
                    for (std::size_t y = 0; y < h; ++y) {
                        const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + ky) - 1;
                        if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(h)) {
                            continue;
                        }
                        for (std::size_t xx = 0; xx < w; ++xx) {
                            const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(xx + kx) - 1;
                            if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(w)) {
                                continue;
                            }
                            plane[sy * static_cast<std::ptrdiff_t>(w) + sx] += src[y * w + xx];
                        }
                    }
                }
            }
        }
    }
}

void check_conv_shapes(const Tensor& x, const Tensor& w, const Tensor& b) {
    require(x.rank() == 4, ErrorCode::shape, "conv3x3: input must be N x C x H x W, got " + shape_to_string(x.shape()));
    require(w.rank() == 4 && w.dim(1) == x.dim(1) && w.dim(2) == 3 && w.dim(3) == 3, ErrorCode::shape,
            "conv3x3: weight " + shape_to_string(w.shape()) + " incompatible with input " + shape_to_string(x.shape()));
    require(b.size() == w.dim(0), ErrorCode::shape, "conv3x3: bias size mismatch");
}

} // namespace

Tensor conv3x3_forward(const Tensor& x, const Tensor& w, const Tensor& b, Tensor* cols) {
    check_conv_shapes(x, w, b);
    const std::size_t n = x.dim(0), h = x.dim(2), wd = x.dim(3);
    const std::size_t f = w.dim(0), ck = w.dim(1) * 9;
    const std::size_t hw = h * wd;
    Tensor local;
    Tensor& colbuf = cols != nullptr ? *cols : local;
    im2col3x3(x, colbuf);

    RowMat out = ConstMatMap(w.data(), static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(ck)) *
                 ConstMatMap(colbuf.data(), static_cast<Eigen::Index>(ck), static_cast<Eigen::Index>(n * hw));
    Tensor y({n, f, h, wd});
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t ff = 0; ff < f; ++ff) {
            const double* src = out.data() + ff * n * hw + s * hw;
            double* dst = y.data() + (s * f + ff) * hw;
            const double bias = b[ff];
            for (std::size_t p = 0; p < hw; ++p) {
                dst[p] = src[p] + bias;
            }
        }
    }
    return y;
}

void conv3x3_backward(const Tensor& x, const Tensor* cols, const Tensor& w, const Tensor& dy,
                      Tensor* dx, Tensor* dw, Tensor* db) {
    const std::size_t n = x.dim(0), h = x.dim(2), wd = x.dim(3);
    const std::size_t f = w.dim(0), ck = w.dim(1) * 9;
    const std::size_t hw = h * wd;
    require(dy.shape() == Shape{n, f, h, wd}, ErrorCode::shape, "conv3x3 backward: dy shape mismatch");

    RowMat dym(static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(n * hw));
    for (std::size_t s = 0; s < n; ++s) {
        for (std::size_t ff = 0; ff < f; ++ff) {
            std::copy_n(dy.data() + (s * f + ff) * hw, hw, dym.data() + ff * n * hw + s * hw);
        }
    }
    if (db != nullptr) {
        VecMap(db->data(), static_cast<Eigen::Index>(f)) += dym.rowwise().sum().transpose();
    }
    if (dw != nullptr) {
        Tensor local;
        const Tensor* colbuf = cols;
        if (colbuf == nullptr) {
            im2col3x3(x, local);
            colbuf = &local;
        }
        MatMap(dw->data(), static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(ck)).noalias() +=
            dym * ConstMatMap(colbuf->data(), static_cast<Eigen::Index>(ck), static_cast<Eigen::Index>(n * hw))
                      .transpose();
    }
    if (dx != nullptr) {
        require(dx->shape() == x.shape(), ErrorCode::shape, "conv3x3 backward: dx shape mismatch");
        Tensor dcols({ck, n * hw});
        MatMap(dcols.data(), static_cast<Eigen::Index>(ck), static_cast<Eigen::Index>(n * hw)).noalias() =
            ConstMatMap(w.data(), static_cast<Eigen::Index>(f), static_cast<Eigen::Index>(ck)).transpose() * dym;
        col2im3x3(dcols, *dx);
    }
}

// ---------------------------------------------------------------------------
// Pooling / ReLU

Tensor maxpool2_forward(const Tensor& x, std::vector<std::uint32_t>& argmax_out) {
    require(x.rank() == 4, ErrorCode::shape, "maxpool2: input must be N x C x H x W");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    const std::size_t oh = h / 2, ow = w / 2;
    require(oh >= 1 && ow >= 1, ErrorCode::shape, "maxpool2: input " + shape_to_string(x.shape()) + " too small");
    Tensor y({n, c, oh, ow});
    argmax_out.resize(y.size());
    std::size_t o = 0;
    for (std::size_t plane = 0; plane < n * c; ++plane) {
        const std::size_t base = plane * h * w;
        for (std::size_t oy = 0; oy < oh; ++oy) {
            for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
                std::size_t best = base + (2 * oy) * w + 2 * ox;
                for (std::size_t dy = 0; dy < 2; ++dy) {
                    for (std::size_t dx = 0; dx < 2; ++dx) {
                        const std::size_t idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if (x[idx] > x[best]) {
                            best = idx;
                        }
                    }
                }
                y[o] = x[best];
                argmax_out[o] = static_cast<std::uint32_t>(best);
            }
        }
    }
    return y;
}

void maxpool2_backward(const Tensor& dy, std::span<const std::uint32_t> argmax_in, Tensor& dx) {
    require(dy.size() == argmax_in.size(), ErrorCode::shape, "maxpool2 backward: argmax size mismatch");
    for (std::size_t o = 0; o < dy.size(); ++o) {
        dx[argmax_in[o]] += dy[o];
    }
}

Tensor relu_forward(const Tensor& x) {
    Tensor y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
        y[i] = x[i] > 0.0 ? x[i] : 0.0;
    }
    return y;
}

void relu_backward(const Tensor& y, const Tensor& dy, Tensor& dx) {
    require(y.shape() == dy.shape() && dx.shape() == dy.shape(), ErrorCode::shape, "relu backward: shape mismatch");
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i] > 0.0) {
            dx[i] += dy[i];
        }
    }
}

// ---------------------------------------------------------------------------
// Gradient check

GradCheckReport grad_check(const LossClosure& closure, ParamSet& params, const GradCheckOptions& opts) {
    require(opts.eps >= 1e-7 && opts.eps <= 1e-3, ErrorCode::invalid_argument, "grad_check eps must lie in [1e-7, 1e-3]");

    params.zero_grad();
    closure(params, true);
    std::vector<Tensor> analytic;
    analytic.reserve(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
        analytic.push_back(params.grad(i));
    }

    const double first = closure(params, false);
    const double second = closure(params, false);
    if (std::memcmp(&first, &second, sizeof(double)) != 0) {
        fail(ErrorCode::contract_violation, "grad_check: loss closure is not deterministic");
    }

    GradCheckReport report;
    Rng rng(opts.seed);
    for (std::size_t t = 0; t < params.size(); ++t) {
        Tensor& value = params.value(t);
        std::vector<std::size_t> coords(value.size());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (coords.size() > opts.max_coords_per_tensor) {
            for (std::size_t i = 0; i < opts.max_coords_per_tensor; ++i) {
                std::swap(coords[i], coords[i + rng.uniform_index(coords.size() - i)]);
            }
            coords.resize(opts.max_coords_per_tensor);
        }
        for (std::size_t j : coords) {
            const double original = value[j];
            value[j] = original + opts.eps;
            const double plus = closure(params, false);
            value[j] = original - opts.eps;
            const double minus = closure(params, false);
            value[j] = original;
            const double numeric = (plus - minus) / (2.0 * opts.eps);
            const double a = analytic[t][j];
            const double rel = std::abs(a - numeric) / std::max(std::abs(numeric), opts.denominator_floor);
            ++report.coords_checked;
            if (rel > report.max_relative_error || report.worst_param.empty()) {
                report.max_relative_error = std::max(rel, report.max_relative_error);
                if (rel >= report.max_relative_error) {
                    report.worst_param = params.name(t);
                    report.worst_index = j;
                    report.worst_analytic = a;
                    report.worst_numeric = numeric;
                }
            }
        }
    }
    params.zero_grad();
    return report;
}

} // namespace uiclab
