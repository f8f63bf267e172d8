#pragma once

#include "uiclab/encoder.hpp"

#include <cstdint>
#include <filesystem>
#include <string>

namespace uiclab {

inline constexpr char kCheckpointMagic[8] = {'U', 'I', 'C', 'L', 'A', 'B', '0', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    EncoderState encoder;
    std::size_t epoch = 0; // epochs completed when the checkpoint was written
};

/// Layout (all integers and floats little-endian):
///   magic "UICLAB01", u32 version, encoder config, u64 epoch,
///   u32 tensor count, then per tensor: u32 name length, name bytes,
///   u32 rank, u64 extents, f64 values.
/// The encoder config block holds channels, height, width, arch, d, k, sobel,
/// seed, the two conv widths and the mlp hidden width.
std::string encode_checkpoint(const EncoderState& state, std::size_t epoch);
Checkpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const EncoderState& state, std::size_t epoch, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Loads and checks every tensor against the layout `expected` implies; the
/// first tensor whose name or shape differs is named in a shape error.
Checkpoint load_checkpoint(const std::filesystem::path& path, const EncoderConfig& expected);

} // namespace uiclab
