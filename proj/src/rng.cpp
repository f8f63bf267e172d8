#include "uiclab/rng.hpp"

#include "uiclab/error.hpp"

#include <cmath>
#include <numbers>

namespace uiclab {

namespace {
constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;
}

std::uint64_t Rng::mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t Rng::peek_u64(std::uint64_t pos) const { return mix(seed_ + (pos + 1) * kGamma); }

std::size_t Rng::uniform_index(std::size_t n) {
    require(n > 0, ErrorCode::invalid_argument, "uniform_index over an empty range");
    // 128-bit multiply-shift; bias is at most n / 2^64.
    const unsigned __int128 wide = static_cast<unsigned __int128>(next_u64()) * n;
    return static_cast<std::size_t>(wide >> 64);
}

double Rng::normal() {
    const double u1 = 1.0 - next_double(); // (0, 1]
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

Rng Rng::fork(std::initializer_list<std::uint64_t> keys) const {
    std::uint64_t s = mix(seed_ ^ 0x6a09e667f3bcc909ULL);
    for (std::uint64_t k : keys) {
        s = mix(s + kGamma + mix(k + 0x3c6ef372fe94f82bULL));
    }
    return Rng(s, 0);
}

} // namespace uiclab
