#pragma once

#include "uiclab/dataset.hpp"
#include "uiclab/rng.hpp"
#include "uiclab/tensor.hpp"

#include <filesystem>
#include <unistd.h>
#include <string>
#include <vector>

namespace testing {

inline uiclab::Tensor random_tensor(uiclab::Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    uiclab::Tensor t(std::move(shape));
    uiclab::Rng rng(seed);
    for (double& v : t.values()) {
        v = rng.uniform(lo, hi);
    }
    return t;
}

inline std::vector<uiclab::Label> random_labels(std::size_t n, std::size_t k, uiclab::Rng& rng) {
    std::vector<uiclab::Label> out(n);
    for (auto& l : out) {
        l = static_cast<uiclab::Label>(rng.uniform_index(k));
    }
    return out;
}

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("uiclab-" + tag + "-" + std::to_string(::getpid()) + "-" +
                 std::to_string(reinterpret_cast<std::uintptr_t>(this)));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

} // namespace testing
