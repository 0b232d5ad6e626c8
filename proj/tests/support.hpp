#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "faa/image.hpp"
#include "faa/rng.hpp"

namespace faa::test {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() / ("faa_" + tag + "_" + std::to_string(rd()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline Image random_image(int h, int w, int c, std::uint64_t seed, int label = 0) {
    Image img(h, w, c, label);
    Rng rng(seed);
    for (auto& p : img.pixels()) {
        p = static_cast<std::uint8_t>(rng.uniform_index(256));
    }
    return img;
}

} // namespace faa::test
