#include "faa/imageops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace faa {

namespace {

constexpr std::array<std::string_view, kOpCount> kOpNames = {
    "ShearX",   "ShearY",    "TranslateX", "TranslateY", "Rotate",     "AutoContrast",
    "Invert",   "Equalize",  "Solarize",   "Posterize",  "Contrast",   "Color",
    "Brightness", "Sharpness", "Cutout",   "SamplePairing",
};

std::uint8_t clamp_byte(double v) {
    const long r = std::lround(v);
    return static_cast<std::uint8_t>(std::clamp<long>(r, 0, 255));
}

// Unchecked (1-w)*a + w*b; the enhancement ops extrapolate with w > 1.
Image mix(const Image& a, const Image& b, double w) {
    Image out = a;
    auto dst = out.pixels();
    const auto src_b = b.pixels();
    const double wa = 1.0 - w;
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] = clamp_byte(wa * dst[i] + w * src_b[i]);
    }
    return out;
}

double luminance(const Image& img, int y, int x) {
    return (299.0 * img.at(y, x, 0) + 587.0 * img.at(y, x, 1) + 114.0 * img.at(y, x, 2)) / 1000.0;
}

Image gray_mean_image(const Image& img) {
    double total = 0.0;
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            total += img.channels() == 3 ? luminance(img, y, x) : img.at(y, x, 0);
        }
    }
    const std::uint8_t mean = clamp_byte(total / (static_cast<double>(img.height()) * img.width()));
    Image out = img;
    std::fill(out.pixels().begin(), out.pixels().end(), mean);
    return out;
}

Image grayscale_image(const Image& img) {
    if (img.channels() == 1) {
        return img;
    }
    Image out = img;
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            const std::uint8_t l = clamp_byte(luminance(img, y, x));
            for (int c = 0; c < 3; ++c) {
                out.at(y, x, c) = l;
            }
        }
    }
    return out;
}

// 3x3 smoothing [[1,1,1],[1,5,1],[1,1,1]]/13; the one-pixel border is kept.
Image smoothed_image(const Image& img) {
    Image out = img;
    for (int y = 1; y + 1 < img.height(); ++y) {
        for (int x = 1; x + 1 < img.width(); ++x) {
            for (int c = 0; c < img.channels(); ++c) {
                int acc = 4 * img.at(y, x, c);
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        acc += img.at(y + dy, x + dx, c);
                    }
                }
                out.at(y, x, c) = clamp_byte(acc / 13.0);
            }
        }
    }
    return out;
}

Image auto_contrast(const Image& img) {
    Image out = img;
    for (int c = 0; c < img.channels(); ++c) {
        int lo = 255;
        int hi = 0;
        for (int y = 0; y < img.height(); ++y) {
            for (int x = 0; x < img.width(); ++x) {
                lo = std::min<int>(lo, img.at(y, x, c));
                hi = std::max<int>(hi, img.at(y, x, c));
            }
        }
        if (hi <= lo) {
            continue;
        }
        const double scale = 255.0 / (hi - lo);
        for (int y = 0; y < img.height(); ++y) {
            for (int x = 0; x < img.width(); ++x) {
                out.at(y, x, c) = clamp_byte((img.at(y, x, c) - lo) * scale);
            }
        }
    }
    return out;
}

// Cumulative-histogram equalization per channel:
// lut[v] = round((cdf[v] - cdf_min) * 255 / (N - cdf_min)).
Image equalize(const Image& img) {
    Image out = img;
    const long n = static_cast<long>(img.height()) * img.width();
    for (int c = 0; c < img.channels(); ++c) {
        std::array<long, 256> hist{};
        for (int y = 0; y < img.height(); ++y) {
            for (int x = 0; x < img.width(); ++x) {
                ++hist[img.at(y, x, c)];
            }
        }
        long cdf_min = 0;
        for (long h : hist) {
            if (h > 0) {
                cdf_min = h;
                break;
            }
        }
        if (n == cdf_min) {
            continue; // single-valued channel
        }
        std::array<std::uint8_t, 256> lut{};
        long cdf = 0;
        for (int v = 0; v < 256; ++v) {
            cdf += hist[v];
            lut[v] = clamp_byte(static_cast<double>(cdf - cdf_min) * 255.0 / static_cast<double>(n - cdf_min));
        }
        for (int y = 0; y < img.height(); ++y) {
            for (int x = 0; x < img.width(); ++x) {
                out.at(y, x, c) = lut[img.at(y, x, c)];
            }
        }
    }
    return out;
}

Image cutout(const Image& img, double side_fraction, const std::optional<PixelPos>& center) {
    const int side = static_cast<int>(std::lround(side_fraction * std::min(img.height(), img.width())));
    if (side <= 0) {
        return img;
    }
    const PixelPos ctr = center.value_or(PixelPos{img.width() / 2, img.height() / 2});
    const int x0 = std::max(0, ctr.x - side / 2);
    const int y0 = std::max(0, ctr.y - side / 2);
    const int x1 = std::min(img.width(), ctr.x - side / 2 + side);
    const int y1 = std::min(img.height(), ctr.y - side / 2 + side);
    Image out = img;
    for (int y = y0; y < y1; ++y) {
        for (int x = x0; x < x1; ++x) {
            for (int c = 0; c < img.channels(); ++c) {
                out.at(y, x, c) = kGrayFill[c];
            }
        }
    }
    return out;
}

} // namespace

std::string_view op_name(OpKind kind) noexcept {
    return kOpNames[static_cast<std::size_t>(kind)];
}

OpKind parse_op_kind(std::string_view name) {
    for (std::size_t i = 0; i < kOpCount; ++i) {
        if (kOpNames[i] == name) {
            return static_cast<OpKind>(i);
        }
    }
    throw std::invalid_argument("unknown operation '" + std::string(name) + "'");
}

bool uses_magnitude(OpKind kind) noexcept {
    return kind != OpKind::AutoContrast && kind != OpKind::Invert && kind != OpKind::Equalize;
}

double magnitude_map(OpKind kind, double m) {
    if (!std::isfinite(m) || m < 0.0 || m > 1.0) {
        throw std::domain_error("magnitude must lie in [0,1], got " + std::to_string(m));
    }
    const double signed_unit = 2.0 * m - 1.0;
    switch (kind) {
    case OpKind::ShearX:
    case OpKind::ShearY:
        return signed_unit * 0.3;
    case OpKind::TranslateX:
    case OpKind::TranslateY:
        return signed_unit * 0.3125;
    case OpKind::Rotate:
        return signed_unit * 30.0;
    case OpKind::Solarize:
        return static_cast<double>(std::lround(256.0 * (1.0 - m)));
    case OpKind::Posterize:
        return static_cast<double>(std::clamp<long>(std::lround(8.0 - 4.0 * m), 4, 8));
    case OpKind::Contrast:
    case OpKind::Color:
    case OpKind::Brightness:
    case OpKind::Sharpness:
        return 1.0 + 0.9 * signed_unit;
    case OpKind::Cutout:
        return 0.5 * m;
    case OpKind::SamplePairing:
        return 0.4 * m;
    case OpKind::AutoContrast:
    case OpKind::Invert:
    case OpKind::Equalize:
        return 0.0;
    }
    return 0.0;
}

AffineMatrix shear_x_matrix(double factor, int height) {
    const double cy = (height - 1) / 2.0;
    return {1.0, factor, -factor * cy, 0.0, 1.0, 0.0};
}

AffineMatrix shear_y_matrix(double factor, int width) {
    const double cx = (width - 1) / 2.0;
    return {1.0, 0.0, 0.0, factor, 1.0, -factor * cx};
}

AffineMatrix translate_matrix(double dx, double dy) {
    return {1.0, 0.0, dx, 0.0, 1.0, dy};
}

AffineMatrix rotation_matrix(double degrees, int height, int width) {
    const double rad = degrees * std::numbers::pi / 180.0;
    const double cs = std::cos(rad);
    const double sn = std::sin(rad);
    const double cx = (width - 1) / 2.0;
    const double cy = (height - 1) / 2.0;
    return {cs, sn, cx - cs * cx - sn * cy, -sn, cs, cy + sn * cx - cs * cy};
}

Image affine_transform(const Image& img, const AffineMatrix& m, const std::array<std::uint8_t, 3>& fill) {
    const double det = m[0] * m[4] - m[1] * m[3];
    if (!std::isfinite(det) || std::abs(det) < 1e-12) {
        throw std::domain_error("affine_transform: singular linear part");
    }
    // inverse of the linear part
    const double ia = m[4] / det;
    const double ib = -m[1] / det;
    const double ic = -m[3] / det;
    const double id = m[0] / det;

    Image out = img;
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            const double ux = x - m[2];
            const double uy = y - m[5];
            const double sx = std::floor(ia * ux + ib * uy + 0.5);
            const double sy = std::floor(ic * ux + id * uy + 0.5);
            const bool inside = sx >= 0 && sy >= 0 && sx < img.width() && sy < img.height();
            for (int c = 0; c < img.channels(); ++c) {
                out.at(y, x, c) = inside ? img.at(static_cast<int>(sy), static_cast<int>(sx), c) : fill[c];
            }
        }
    }
    return out;
}

Image blend(const Image& a, const Image& b, double w) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument("blend: image shapes differ");
    }
    if (!std::isfinite(w) || w < 0.0 || w > 1.0) {
        throw std::domain_error("blend: weight must lie in [0,1]");
    }
    return mix(a, b, w);
}

Image apply_op(const Image& img, OpKind kind, double magnitude, const OpArgs& args) {
    const double v = magnitude_map(kind, magnitude);
    switch (kind) {
    case OpKind::ShearX:
        return v == 0.0 ? img : affine_transform(img, shear_x_matrix(v, img.height()));
    case OpKind::ShearY:
        return v == 0.0 ? img : affine_transform(img, shear_y_matrix(v, img.width()));
    case OpKind::TranslateX:
        return v == 0.0 ? img : affine_transform(img, translate_matrix(v * img.width(), 0.0));
    case OpKind::TranslateY:
        return v == 0.0 ? img : affine_transform(img, translate_matrix(0.0, v * img.height()));
    case OpKind::Rotate:
        return v == 0.0 ? img : affine_transform(img, rotation_matrix(v, img.height(), img.width()));
    case OpKind::AutoContrast:
        return auto_contrast(img);
    case OpKind::Invert: {
        Image out = img;
        for (auto& p : out.pixels()) {
            p = static_cast<std::uint8_t>(255 - p);
        }
        return out;
    }
    case OpKind::Equalize:
        return equalize(img);
    case OpKind::Solarize: {
        const int threshold = static_cast<int>(v);
        Image out = img;
        for (auto& p : out.pixels()) {
            if (p >= threshold) {
                p = static_cast<std::uint8_t>(255 - p);
            }
        }
        return out;
    }
    case OpKind::Posterize: {
        const int bits = static_cast<int>(v);
        const auto mask = static_cast<std::uint8_t>(0xFF << (8 - bits));
        Image out = img;
        for (auto& p : out.pixels()) {
            p &= mask;
        }
        return out;
    }
    case OpKind::Contrast:
        return mix(gray_mean_image(img), img, v);
    case OpKind::Color:
        return mix(grayscale_image(img), img, v);
    case OpKind::Brightness:
        return mix(Image(img.height(), img.width(), img.channels(), img.label()), img, v);
    case OpKind::Sharpness:
        return mix(smoothed_image(img), img, v);
    case OpKind::Cutout:
        return cutout(img, v, args.cutout_center);
    case OpKind::SamplePairing:
        if (args.pair == nullptr) {
            throw std::invalid_argument("SamplePairing requires a partner image");
        }
        if (!img.same_shape(*args.pair)) {
            throw std::invalid_argument("SamplePairing partner has a different shape");
        }
        return mix(img, *args.pair, v);
    }
    throw std::invalid_argument("apply_op: unknown operation");
}

} // namespace faa
