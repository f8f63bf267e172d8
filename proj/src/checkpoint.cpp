#include "uiclab/checkpoint.hpp"

#include "uiclab/error.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace uiclab {

namespace {

class Writer {
public:
    void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
    void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) {
            u8(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            u8(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    std::string take() { return std::move(out_); }

private:
    std::string out_;
};

class Reader {
public:
    explicit Reader(const std::string& in) : in_(in) {}

    const char* bytes(std::size_t n, const char* what) {
        if (in_.size() - pos_ < n) {
            fail(ErrorCode::format, "truncated checkpoint: need " + std::to_string(n) + " bytes for " + what +
                                        " at byte offset " + std::to_string(pos_) + ", file has " +
                                        std::to_string(in_.size()));
        }
        const char* p = in_.data() + pos_;
        pos_ += n;
        return p;
    }
    std::uint8_t u8(const char* what) { return static_cast<std::uint8_t>(*bytes(1, what)); }
    std::uint32_t u32(const char* what) {
        const char* p = bytes(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(p[i])) << (8 * i);
        }
        return v;
    }
    std::uint64_t u64(const char* what) {
        const char* p = bytes(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(p[i])) << (8 * i);
        }
        return v;
    }
    double f64(const char* what) { return std::bit_cast<double>(u64(what)); }
    std::size_t offset() const { return pos_; }
    bool done() const { return pos_ == in_.size(); }

private:
    const std::string& in_;
    std::size_t pos_ = 0;
};

} // namespace

std::string encode_checkpoint(const EncoderState& state, std::size_t epoch) {
    const EncoderConfig& c = state.config;
    Writer w;
    w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
    w.u32(kCheckpointVersion);
    w.u64(c.channels);
    w.u64(c.height);
    w.u64(c.width);
    w.u32(static_cast<std::uint32_t>(c.arch));
    w.u64(c.embedding_dim);
    w.u64(c.num_classes);
    w.u8(c.sobel ? 1 : 0);
    w.u64(c.seed);
    w.u64(c.conv_channels[0]);
    w.u64(c.conv_channels[1]);
    w.u64(c.mlp_hidden);
    w.u64(epoch);
    w.u32(static_cast<std::uint32_t>(state.params.size()));
    for (std::size_t i = 0; i < state.params.size(); ++i) {
        const std::string& name = state.params.name(i);
        const Tensor& t = state.params.value(i);
        w.u32(static_cast<std::uint32_t>(name.size()));
        w.bytes(name.data(), name.size());
        w.u32(static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) {
            w.u64(d);
        }
        for (double v : t.values()) {
            w.f64(v);
        }
    }
    return w.take();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    Reader r(bytes);
    const char* magic = r.bytes(sizeof kCheckpointMagic, "magic");
    require(std::memcmp(magic, kCheckpointMagic, sizeof kCheckpointMagic) == 0, ErrorCode::format,
            "not a checkpoint: bad magic at byte offset 0");
    const std::uint32_t version = r.u32("version");
    require(version == kCheckpointVersion, ErrorCode::format,
            "unsupported checkpoint version " + std::to_string(version) + " (expected " +
                std::to_string(kCheckpointVersion) + ")");

    EncoderConfig c;
    c.channels = r.u64("channels");
    c.height = r.u64("height");
    c.width = r.u64("width");
    const std::uint32_t arch = r.u32("arch");
    require(arch <= static_cast<std::uint32_t>(Arch::mlp), ErrorCode::format,
            "unknown arch code " + std::to_string(arch) + " in checkpoint");
    c.arch = static_cast<Arch>(arch);
    c.embedding_dim = r.u64("embedding_dim");
    c.num_classes = r.u64("num_classes");
    c.sobel = r.u8("sobel") != 0;
    c.seed = r.u64("seed");
    c.conv_channels[0] = r.u64("conv_channels");
    c.conv_channels[1] = r.u64("conv_channels");
    c.mlp_hidden = r.u64("mlp_hidden");
    try {
        c.validate();
    } catch (const Error& e) {
        fail(ErrorCode::format, std::string("checkpoint holds an invalid encoder config: ") + e.what());
    }
    const std::size_t epoch = r.u64("epoch");

    const std::vector<LayerInfo> layout = describe_parameters(c);
    const std::uint32_t count = r.u32("tensor count");
    require(count == layout.size(), ErrorCode::format,
            "checkpoint has " + std::to_string(count) + " tensors, its encoder config implies " +
                std::to_string(layout.size()));

    Checkpoint out{{c, {}}, epoch};
    for (const LayerInfo& info : layout) {
        const std::uint32_t len = r.u32("tensor name length");
        const std::string name(r.bytes(len, "tensor name"), len);
        const std::uint32_t rank = r.u32("tensor rank");
        Shape shape(rank);
        for (auto& d : shape) {
            d = r.u64("tensor extent");
        }
        require(name == info.name && shape == info.shape, ErrorCode::shape,
                "checkpoint tensor '" + name + "' " + shape_to_string(shape) + " does not match the layout of its own config ('" +
                    info.name + "' " + shape_to_string(info.shape) + ")");
        Tensor t(shape);
        for (double& v : t.values()) {
            v = r.f64("tensor values");
        }
        out.encoder.params.add(name, std::move(t));
    }
    require(r.done(), ErrorCode::format,
            "trailing bytes after checkpoint payload at byte offset " + std::to_string(r.offset()));
    return out;
}

void save_checkpoint(const EncoderState& state, std::size_t epoch, const std::filesystem::path& path) {
    const std::string bytes = encode_checkpoint(state, epoch);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::io, "cannot open '" + path.string() + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), ErrorCode::io, "failed writing '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    require(static_cast<bool>(in), ErrorCode::io, "cannot open checkpoint '" + path.string() + "'");
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

Checkpoint load_checkpoint(const std::filesystem::path& path, const EncoderConfig& expected) {
    Checkpoint ck = load_checkpoint(path);
    const std::vector<LayerInfo> want = describe_parameters(expected);
    const ParamSet& have = ck.encoder.params;
    for (std::size_t i = 0; i < std::max(want.size(), have.size()); ++i) {
        if (i >= want.size()) {
            fail(ErrorCode::shape, "checkpoint tensor '" + have.name(i) + "' has no counterpart in the expected encoder");
        }
        if (i >= have.size()) {
            fail(ErrorCode::shape, "expected tensor '" + want[i].name + "' " + shape_to_string(want[i].shape) +
                                       " is missing from the checkpoint");
        }
        const Shape& got = have.value(i).shape();
        if (have.name(i) != want[i].name || got != want[i].shape) {
            fail(ErrorCode::shape, "checkpoint tensor '" + have.name(i) + "' " + shape_to_string(got) +
                                       " does not match expected tensor '" + want[i].name + "' " +
                                       shape_to_string(want[i].shape));
        }
    }
    EncoderConfig ignoring_seed = expected;
    ignoring_seed.seed = ck.encoder.config.seed;
    require(ck.encoder.config == ignoring_seed, ErrorCode::shape,
            "checkpoint encoder config differs from the expected one (same tensor shapes, different settings)");
    return ck;
}

} // namespace uiclab
