#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace faa {

/// H x W x C byte image (row-major, channel-interleaved) with a class label.
class Image {
public:
    Image() = default;

    /// Zero-filled image. Throws std::invalid_argument on bad dimensions.
    Image(int height, int width, int channels, int label = 0);

    /// Takes ownership of `pixels`; its size must equal height*width*channels.
    Image(int height, int width, int channels, std::vector<std::uint8_t> pixels, int label);

    int height() const noexcept { return height_; }
    int width() const noexcept { return width_; }
    int channels() const noexcept { return channels_; }
    int label() const noexcept { return label_; }
    void set_label(int label);

    std::size_t size() const noexcept { return pixels_.size(); }
    std::span<const std::uint8_t> pixels() const noexcept { return pixels_; }
    std::span<std::uint8_t> pixels() noexcept { return pixels_; }

    std::uint8_t at(int y, int x, int c) const noexcept {
        return pixels_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }
    std::uint8_t& at(int y, int x, int c) noexcept {
        return pixels_[(static_cast<std::size_t>(y) * width_ + x) * channels_ + c];
    }

    bool same_shape(const Image& other) const noexcept {
        return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
    }

    friend bool operator==(const Image&, const Image&) = default;

private:
    int height_ = 0;
    int width_ = 0;
    int channels_ = 0;
    int label_ = 0;
    std::vector<std::uint8_t> pixels_;
};

/// Fixture buffer: 16-byte header (H, W, C, label as little-endian u32) then
/// the raw pixel bytes.
std::vector<std::uint8_t> encode_fixture(const Image& img);
Image decode_fixture(std::span<const std::uint8_t> bytes);

void save_fixture(const std::filesystem::path& path, const Image& img);
Image load_fixture(const std::filesystem::path& path);

} // namespace faa
