#include "uiclab/dataset.hpp"

#include "uiclab/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

namespace uiclab {

std::size_t Dataset::num_truth_classes() const {
    if (!truth || truth->empty()) {
        return 0;
    }
    return static_cast<std::size_t>(*std::max_element(truth->begin(), truth->end())) + 1;
}

void Dataset::validate() const {
    require(images.rank() == 4 && size() >= 1, ErrorCode::invalid_argument, "dataset must hold at least one N x C x H x W image");
    require(split.size() == size(), ErrorCode::invalid_argument, "dataset split tags do not cover every sample");
    if (truth) {
        require(truth->size() == size(), ErrorCode::invalid_argument, "truth labels do not cover every sample");
        for (Label t : *truth) {
            require(t >= 0, ErrorCode::invalid_argument, "negative truth label");
        }
    }
}

Dataset Dataset::select(std::span<const std::size_t> indices) const {
    require(!indices.empty(), ErrorCode::invalid_argument, "empty dataset selection");
    const std::size_t stride = image_shape().size();
    Dataset out;
    out.images = Tensor({indices.size(), images.dim(1), images.dim(2), images.dim(3)});
    out.split.reserve(indices.size());
    if (truth) {
        out.truth.emplace();
        out.truth->reserve(indices.size());
    }
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const std::size_t src = indices[i];
        require(src < size(), ErrorCode::invalid_argument, "dataset index out of range");
        std::copy_n(images.data() + src * stride, stride, out.images.data() + i * stride);
        out.split.push_back(split[src]);
        if (truth) {
            out.truth->push_back((*truth)[src]);
        }
    }
    return out;
}

Dataset Dataset::subset(Split which) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < size(); ++i) {
        if (split[i] == which) {
            idx.push_back(i);
        }
    }
    require(!idx.empty(), ErrorCode::invalid_argument,
            std::string("dataset has no ") + (which == Split::train ? "train" : "test") + " samples");
    return select(idx);
}

std::vector<std::size_t> LabelAssignment::counts() const {
    std::vector<std::size_t> c(k, 0);
    for (Label l : labels) {
        ++c[static_cast<std::size_t>(l)];
    }
    return c;
}

std::size_t LabelAssignment::empty_classes() const {
    const auto c = counts();
    return static_cast<std::size_t>(std::count(c.begin(), c.end(), std::size_t{0}));
}

void LabelAssignment::validate() const {
    require(k >= 1, ErrorCode::invalid_argument, "label assignment needs k >= 1");
    for (Label l : labels) {
        require(l >= 0 && static_cast<std::size_t>(l) < k, ErrorCode::invalid_argument,
                "label " + std::to_string(l) + " outside [0, " + std::to_string(k) + ")");
    }
}

// ---------------------------------------------------------------------------
// IDX

namespace {

struct IdxFile {
    std::vector<std::uint32_t> dims;
    std::vector<std::uint8_t> payload;
};

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

IdxFile parse_idx(const std::filesystem::path& path) {
    const auto bytes = read_bytes(path);
    const std::string where = path.string();
    auto format_error = [&](std::size_t offset, const std::string& what) {
        fail(ErrorCode::format, where + ": " + what + " at byte offset " + std::to_string(offset));
    };
    if (bytes.size() < 4) {
        format_error(bytes.size(), "truncated header");
    }
    if (bytes[0] != 0 || bytes[1] != 0) {
        format_error(0, "bad magic");
    }
    if (bytes[2] != 0x08) {
        format_error(2, "unsupported element type (only unsigned byte is supported)");
    }
    const std::size_t ndims = bytes[3];
    if (ndims == 0) {
        format_error(3, "zero dimensions");
    }
    IdxFile f;
    std::size_t offset = 4;
    std::size_t count = 1;
    for (std::size_t d = 0; d < ndims; ++d) {
        if (offset + 4 > bytes.size()) {
            format_error(offset, "truncated dimension table");
        }
        const std::uint32_t extent = (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
                                     (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
        f.dims.push_back(extent);
        count *= extent;
        offset += 4;
    }
    if (count == 0) {
        format_error(offset, "empty payload");
    }
    if (bytes.size() < offset + count) {
        format_error(bytes.size(), "truncated payload (expected " + std::to_string(count) + " bytes after header)");
    }
    if (bytes.size() > offset + count) {
        format_error(offset + count, "trailing bytes after payload");
    }
    f.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset), bytes.end());
    return f;
}

void write_idx(const std::filesystem::path& path, const std::vector<std::uint32_t>& dims, std::span<const std::uint8_t> payload) {
    std::ofstream out(path, std::ios::binary);
    require(static_cast<bool>(out), ErrorCode::io, "cannot write " + path.string());
    const std::uint8_t header[4] = {0, 0, 0x08, static_cast<std::uint8_t>(dims.size())};
    out.write(reinterpret_cast<const char*>(header), 4);
    for (std::uint32_t d : dims) {
        const std::uint8_t be[4] = {static_cast<std::uint8_t>(d >> 24), static_cast<std::uint8_t>(d >> 16),
                                    static_cast<std::uint8_t>(d >> 8), static_cast<std::uint8_t>(d)};
        out.write(reinterpret_cast<const char*>(be), 4);
    }
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    require(static_cast<bool>(out), ErrorCode::io, "failed writing " + path.string());
}

} // namespace

Dataset load_idx(const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels) {
    const IdxFile img = parse_idx(images);
    Shape shape;
    if (img.dims.size() == 3) {
        shape = {img.dims[0], 1, img.dims[1], img.dims[2]};
    } else if (img.dims.size() == 4) {
        shape = {img.dims[0], img.dims[1], img.dims[2], img.dims[3]};
    } else {
        fail(ErrorCode::format, images.string() + ": image files must have 3 or 4 dimensions at byte offset 3");
    }
    Dataset data;
    std::vector<double> pixels(img.payload.size());
    std::transform(img.payload.begin(), img.payload.end(), pixels.begin(),
                   [](std::uint8_t b) { return static_cast<double>(b) / 255.0; });
    data.images = Tensor(shape, std::move(pixels));
    data.split.assign(shape[0], Split::train);
    if (labels) {
        const IdxFile lab = parse_idx(*labels);
        if (lab.dims.size() != 1) {
            fail(ErrorCode::format, labels->string() + ": label files must be 1-dimensional at byte offset 3");
        }
        if (lab.dims[0] != shape[0]) {
            fail(ErrorCode::format, labels->string() + ": " + std::to_string(lab.dims[0]) + " labels for " +
                                        std::to_string(shape[0]) + " images at byte offset 4");
        }
        data.truth.emplace(lab.payload.begin(), lab.payload.end());
    }
    return data;
}

void save_idx(const Dataset& data, const std::filesystem::path& images, const std::optional<std::filesystem::path>& labels) {
    data.validate();
    const auto s = data.image_shape();
    std::vector<std::uint32_t> dims;
    dims.push_back(static_cast<std::uint32_t>(data.size()));
    if (s.channels != 1) {
        dims.push_back(static_cast<std::uint32_t>(s.channels));
    }
    dims.push_back(static_cast<std::uint32_t>(s.height));
    dims.push_back(static_cast<std::uint32_t>(s.width));
    std::vector<std::uint8_t> payload(data.images.size());
    std::transform(data.images.values().begin(), data.images.values().end(), payload.begin(), [](double v) {
        return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    });
    write_idx(images, dims, payload);
    if (labels) {
        require(data.truth.has_value(), ErrorCode::invalid_argument, "dataset has no labels to save");
        std::vector<std::uint8_t> lab(data.size());
        for (std::size_t i = 0; i < data.size(); ++i) {
            const Label l = (*data.truth)[i];
            require(l >= 0 && l <= 255, ErrorCode::invalid_argument, "label does not fit an unsigned byte");
            lab[i] = static_cast<std::uint8_t>(l);
        }
        write_idx(*labels, {static_cast<std::uint32_t>(data.size())}, lab);
    }
}

Dataset load_text(const std::filesystem::path& path, ImageShape shape, bool label_column) {
    std::ifstream in(path);
    require(static_cast<bool>(in), ErrorCode::io, "cannot open " + path.string());
    const std::size_t width = shape.size() + (label_column ? 1 : 0);
    std::vector<double> pixels;
    std::vector<Label> labels;
    std::string line;
    std::size_t line_no = 0;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            std::size_t used = 0;
            double v = 0.0;
            try {
                v = std::stod(cell, &used);
            } catch (const std::exception&) {
                fail(ErrorCode::format, path.string() + ":" + std::to_string(line_no) + ": not a number: '" + cell + "'");
            }
            if (cell.find_first_not_of(" \t\r", used) != std::string::npos) {
                fail(ErrorCode::format, path.string() + ":" + std::to_string(line_no) + ": not a number: '" + cell + "'");
            }
            row.push_back(v);
        }
        if (row.size() != width) {
            fail(ErrorCode::format, path.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(width) +
                                        " columns, found " + std::to_string(row.size()));
        }
        for (std::size_t j = 0; j < shape.size(); ++j) {
            if (!(row[j] >= 0.0 && row[j] <= 1.0)) {
                fail(ErrorCode::format, path.string() + ":" + std::to_string(line_no) + ": value outside [0, 1]");
            }
            pixels.push_back(row[j]);
        }
        if (label_column) {
            const double l = row.back();
            if (l < 0 || l != std::floor(l)) {
                fail(ErrorCode::format, path.string() + ":" + std::to_string(line_no) + ": label must be a non-negative integer");
            }
            labels.push_back(static_cast<Label>(l));
        }
        ++rows;
    }
    require(rows > 0, ErrorCode::format, path.string() + ": no data rows");
    Dataset data;
    data.images = Tensor({rows, shape.channels, shape.height, shape.width}, std::move(pixels));
    data.split.assign(rows, Split::train);
    if (label_column) {
        data.truth = std::move(labels);
    }
    return data;
}

Dataset concat_splits(Dataset train, std::optional<Dataset> test) {
    train.split.assign(train.size(), Split::train);
    if (!test) {
        return train;
    }
    require(test->images.rank() == 4 && test->images.dim(1) == train.images.dim(1) &&
                test->images.dim(2) == train.images.dim(2) && test->images.dim(3) == train.images.dim(3),
            ErrorCode::invalid_argument, "train and test images differ in shape");
    const std::size_t n = train.size() + test->size();
    std::vector<double> pixels(train.images.values().begin(), train.images.values().end());
    pixels.insert(pixels.end(), test->images.values().begin(), test->images.values().end());
    Dataset out;
    out.images = Tensor({n, train.images.dim(1), train.images.dim(2), train.images.dim(3)}, std::move(pixels));
    out.split.assign(train.size(), Split::train);
    out.split.insert(out.split.end(), test->size(), Split::test);
    if (train.truth && test->truth) {
        out.truth = std::move(*train.truth);
        out.truth->insert(out.truth->end(), test->truth->begin(), test->truth->end());
    }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic benchmark

void SynthSpec::validate() const {
    require(classes >= 2, ErrorCode::config, "synthetic classes must be >= 2");
    require(per_class >= 1, ErrorCode::config, "synthetic per_class must be >= 1");
    require(image_size >= 4, ErrorCode::config, "synthetic image_size must be >= 4");
    require(channels == 1 || channels == 3, ErrorCode::config, "synthetic channels must be 1 or 3");
    require(blobs_per_class >= 1, ErrorCode::config, "blobs_per_class must be >= 1");
    require(blob_sigma > 0.0, ErrorCode::config, "blob_sigma must be positive");
    require(2 * max_shift < image_size, ErrorCode::config, "max_shift too large for image_size");
    require(contrast_jitter >= 0.0 && contrast_jitter < 1.0, ErrorCode::config, "contrast_jitter must lie in [0, 1)");
    require(blob_jitter >= 0.0, ErrorCode::config, "blob_jitter must be non-negative");
    require(noise_sigma >= 0.0, ErrorCode::config, "noise_sigma must be non-negative");
}

namespace {

struct Blob {
    double y, x;
    std::array<double, 3> color;
};

// Class layouts depend only on (class index, geometry), never on the data
// seed, so every seed shares the same class structure.
std::vector<std::vector<Blob>> class_layouts(const SynthSpec& spec) {
    const Rng layout_rng(0x1a7057ULL);
    const double margin = static_cast<double>(spec.max_shift) + 1.5 * spec.blob_sigma;
    const double lo = std::min(margin, static_cast<double>(spec.image_size) / 2.0 - 0.5);
    const double hi = static_cast<double>(spec.image_size) - 1.0 - lo;
    std::vector<std::vector<Blob>> layouts;
    for (std::size_t t = 0; t < spec.classes; ++t) {
        Rng rng = layout_rng.fork({t, spec.image_size, spec.blobs_per_class});
        std::vector<Blob> blobs;
        for (std::size_t b = 0; b < spec.blobs_per_class; ++b) {
            Blob blob{rng.uniform(lo, hi), rng.uniform(lo, hi), {1.0, 1.0, 1.0}};
            if (spec.channels == 3) {
                for (double& c : blob.color) {
                    c = rng.uniform(0.3, 1.0);
                }
            } else {
                rng.skip(3);
            }
            blobs.push_back(blob);
        }
        layouts.push_back(std::move(blobs));
    }
    return layouts;
}

} // namespace

Dataset synth_clusters(const SynthSpec& spec, std::uint64_t seed) {
    spec.validate();
    const auto layouts = class_layouts(spec);
    const std::size_t s = spec.image_size;
    const std::size_t n_train = spec.classes * spec.per_class;
    const std::size_t n = n_train + spec.classes * spec.test_per_class;
    Dataset data;
    data.images = Tensor({n, spec.channels, s, s});
    data.truth.emplace(n);
    data.split.resize(n);
    const Rng root = Rng(seed).fork({tag(Stream::synth)});
    const double inv2s2 = 1.0 / (2.0 * spec.blob_sigma * spec.blob_sigma);
    for (std::size_t i = 0; i < n; ++i) {
        const bool is_train = i < n_train;
        const std::size_t local = is_train ? i : i - n_train;
        const std::size_t per = is_train ? spec.per_class : spec.test_per_class;
        const auto cls = static_cast<Label>(local / per);
        (*data.truth)[i] = cls;
        data.split[i] = is_train ? Split::train : Split::test;

        Rng rng = root.fork({i});
        const auto span_shift = static_cast<std::size_t>(2 * spec.max_shift + 1);
        const double dy = static_cast<double>(rng.uniform_index(span_shift)) - static_cast<double>(spec.max_shift);
        const double dx = static_cast<double>(rng.uniform_index(span_shift)) - static_cast<double>(spec.max_shift);
        const double amp = 1.0 - spec.contrast_jitter * rng.next_double();
        std::vector<Blob> blobs = layouts[static_cast<std::size_t>(cls)];
        for (Blob& b : blobs) {
            b.y += dy + spec.blob_jitter * (2.0 * rng.next_double() - 1.0);
            b.x += dx + spec.blob_jitter * (2.0 * rng.next_double() - 1.0);
        }
        for (std::size_t c = 0; c < spec.clutter_blobs; ++c) {
            const double y = rng.uniform(0.0, static_cast<double>(s - 1));
            const double x = rng.uniform(0.0, static_cast<double>(s - 1));
            blobs.push_back({y, x, {1.0, 1.0, 1.0}});
        }
        auto img = data.images.slab(i);
        for (std::size_t c = 0; c < spec.channels; ++c) {
            for (std::size_t y = 0; y < s; ++y) {
                for (std::size_t x = 0; x < s; ++x) {
                    double v = 0.0;
                    for (const Blob& b : blobs) {
                        const double ry = static_cast<double>(y) - b.y;
                        const double rx = static_cast<double>(x) - b.x;
                        v += b.color[c] * std::exp(-(ry * ry + rx * rx) * inv2s2);
                    }
                    v = amp * std::min(v, 1.0);
                    if (spec.noise_sigma > 0.0) {
                        v += spec.noise_sigma * rng.normal();
                    }
                    img[(c * s + y) * s + x] = std::clamp(v, 0.0, 1.0);
                }
            }
        }
    }
    return data;
}

// ---------------------------------------------------------------------------
// Sampler

ClassBalancedSampler::ClassBalancedSampler(const LabelAssignment& assignment, std::size_t batch_size, Rng rng)
    : members_(assignment.k), batch_size_(batch_size), total_draws_(assignment.size()), rng_(rng) {
    require(batch_size >= 1, ErrorCode::invalid_argument, "batch_size must be >= 1");
    require(assignment.size() >= 1, ErrorCode::invalid_argument, "cannot sample from an empty assignment");
    assignment.validate();
    for (std::size_t i = 0; i < assignment.size(); ++i) {
        members_[static_cast<std::size_t>(assignment.labels[i])].push_back(i);
    }
    for (std::size_t c = 0; c < members_.size(); ++c) {
        require(!members_[c].empty(), ErrorCode::contract_violation,
                "class-balanced sampling requires every class to be non-empty (class " + std::to_string(c) + " is empty)");
    }
    num_batches_ = (total_draws_ + batch_size_ - 1) / batch_size_;
}

bool ClassBalancedSampler::next(std::vector<std::size_t>& batch) {
    batch.clear();
    if (drawn_ >= total_draws_) {
        return false;
    }
    const std::size_t take = std::min(batch_size_, total_draws_ - drawn_);
    for (std::size_t i = 0; i < take; ++i) {
        const auto& cls = members_[rng_.uniform_index(members_.size())];
        batch.push_back(cls[rng_.uniform_index(cls.size())]);
    }
    drawn_ += take;
    return true;
}

std::vector<std::vector<std::size_t>> class_balanced_batches(const LabelAssignment& assignment, std::size_t batch_size,
                                                             Rng rng) {
    ClassBalancedSampler sampler(assignment, batch_size, rng);
    std::vector<std::vector<std::size_t>> out;
    std::vector<std::size_t> batch;
    while (sampler.next(batch)) {
        out.push_back(batch);
    }
    return out;
}

} // namespace uiclab
