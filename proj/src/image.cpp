#include "faa/image.hpp"

#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>

#include "faa/errors.hpp"

namespace faa {

namespace {

void check_dims(int height, int width, int channels) {
    if (height <= 0 || width <= 0) {
        throw std::invalid_argument("image dimensions must be positive");
    }
    if (channels != 1 && channels != 3) {
        throw std::invalid_argument("image channels must be 1 or 3, got " + std::to_string(channels));
    }
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

std::uint32_t get_u32(std::span<const std::uint8_t> bytes, std::size_t offset) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
        v |= static_cast<std::uint32_t>(bytes[offset + i]) << (8 * i);
    }
    return v;
}

} // namespace

Image::Image(int height, int width, int channels, int label)
    : height_(height), width_(width), channels_(channels), label_(label) {
    check_dims(height, width, channels);
    if (label < 0) {
        throw std::invalid_argument("image label must be non-negative");
    }
    pixels_.assign(static_cast<std::size_t>(height) * width * channels, 0);
}

Image::Image(int height, int width, int channels, std::vector<std::uint8_t> pixels, int label)
    : height_(height), width_(width), channels_(channels), label_(label), pixels_(std::move(pixels)) {
    check_dims(height, width, channels);
    if (label < 0) {
        throw std::invalid_argument("image label must be non-negative");
    }
    if (pixels_.size() != static_cast<std::size_t>(height) * width * channels) {
        throw std::invalid_argument("pixel buffer length " + std::to_string(pixels_.size()) +
                                    " does not match H*W*C");
    }
}

void Image::set_label(int label) {
    if (label < 0) {
        throw std::invalid_argument("image label must be non-negative");
    }
    label_ = label;
}

std::vector<std::uint8_t> encode_fixture(const Image& img) {
    std::vector<std::uint8_t> out;
    out.reserve(16 + img.size());
    put_u32(out, static_cast<std::uint32_t>(img.height()));
    put_u32(out, static_cast<std::uint32_t>(img.width()));
    put_u32(out, static_cast<std::uint32_t>(img.channels()));
    put_u32(out, static_cast<std::uint32_t>(img.label()));
    out.insert(out.end(), img.pixels().begin(), img.pixels().end());
    return out;
}

Image decode_fixture(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 16) {
        throw ParseError("fixture shorter than its 16-byte header", bytes.size());
    }
    const std::uint32_t h = get_u32(bytes, 0);
    const std::uint32_t w = get_u32(bytes, 4);
    const std::uint32_t c = get_u32(bytes, 8);
    const std::uint32_t label = get_u32(bytes, 12);
    if (h == 0 || w == 0 || h > 1u << 15 || w > 1u << 15) {
        throw ParseError("fixture has invalid height/width", 0);
    }
    if (c != 1 && c != 3) {
        throw ParseError("fixture channel count must be 1 or 3", 8);
    }
    if (label > 1u << 30) {
        throw ParseError("fixture label out of range", 12);
    }
    const std::size_t expected = static_cast<std::size_t>(h) * w * c;
    if (bytes.size() - 16 != expected) {
        throw ParseError("fixture payload is " + std::to_string(bytes.size() - 16) +
                             " bytes, header implies " + std::to_string(expected),
                         std::min(bytes.size(), 16 + expected));
    }
    std::vector<std::uint8_t> pixels(bytes.begin() + 16, bytes.end());
    return Image(static_cast<int>(h), static_cast<int>(w), static_cast<int>(c), std::move(pixels),
                 static_cast<int>(label));
}

void save_fixture(const std::filesystem::path& path, const Image& img) {
    const auto bytes = encode_fixture(img);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Image load_fixture(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open fixture " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return decode_fixture(bytes);
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.message(), e.offset());
    }
}

} // namespace faa
