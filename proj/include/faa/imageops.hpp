#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include "faa/image.hpp"

namespace faa {

/// The 16 augmentation operations. The numeric order is the categorical index
/// used by the policy search space; names are the stable serialized form.
enum class OpKind : std::uint8_t {
    ShearX,
    ShearY,
    TranslateX,
    TranslateY,
    Rotate,
    AutoContrast,
    Invert,
    Equalize,
    Solarize,
    Posterize,
    Contrast,
    Color,
    Brightness,
    Sharpness,
    Cutout,
    SamplePairing,
};

inline constexpr std::size_t kOpCount = 16;

inline constexpr std::array<OpKind, kOpCount> kAllOps = {
    OpKind::ShearX,       OpKind::ShearY,   OpKind::TranslateX, OpKind::TranslateY,
    OpKind::Rotate,       OpKind::AutoContrast, OpKind::Invert, OpKind::Equalize,
    OpKind::Solarize,     OpKind::Posterize, OpKind::Contrast,  OpKind::Color,
    OpKind::Brightness,   OpKind::Sharpness, OpKind::Cutout,    OpKind::SamplePairing,
};

std::string_view op_name(OpKind kind) noexcept;

/// Inverse of op_name. Throws std::invalid_argument for unknown names.
OpKind parse_op_kind(std::string_view name);

/// AutoContrast, Invert and Equalize ignore their magnitude.
bool uses_magnitude(OpKind kind) noexcept;

/// Maps a normalized magnitude in [0,1] to the operation's concrete parameter:
///
///   ShearX/Y                         shear factor (2m-1)*0.3
///   TranslateX/Y                     offset as a fraction of width/height, (2m-1)*0.3125
///   Rotate                           degrees, (2m-1)*30
///   Solarize                         threshold round(256*(1-m))
///   Posterize                        bits kept, round(8-4m) in [4,8]
///   Contrast/Color/Brightness/Sharpness  enhancement factor 1+0.9*(2m-1)
///   Cutout                           square side as a fraction of min(H,W), 0.5*m
///   SamplePairing                    blend weight of the partner, 0.4*m
///   AutoContrast/Invert/Equalize     0 (unused)
///
/// Throws std::domain_error when m is outside [0,1] or not finite.
double magnitude_map(OpKind kind, double magnitude);

struct PixelPos {
    int x = 0;
    int y = 0;
};

/// Randomized inputs of the operations that need them. imageops never draws
/// random numbers itself; the caller supplies these.
struct OpArgs {
    /// Partner image for SamplePairing (required for that op).
    const Image* pair = nullptr;
    /// Centre of the Cutout square; the image centre when absent.
    std::optional<PixelPos> cutout_center;
};

/// Applies `kind` at magnitude `magnitude`. Output has the input's shape and
/// label. Throws std::invalid_argument for SamplePairing without a same-shaped
/// partner and std::domain_error for an out-of-range magnitude.
Image apply_op(const Image& img, OpKind kind, double magnitude, const OpArgs& args = {});

/// Forward map (x', y') = (a x + b y + tx, c x + d y + ty) stored as
/// {a, b, tx, c, d, ty}, in pixel index coordinates.
using AffineMatrix = std::array<double, 6>;

inline constexpr AffineMatrix kIdentityAffine = {1.0, 0.0, 0.0, 0.0, 1.0, 0.0};
inline constexpr std::array<std::uint8_t, 3> kGrayFill = {128, 128, 128};

AffineMatrix shear_x_matrix(double factor, int height);
AffineMatrix shear_y_matrix(double factor, int width);
AffineMatrix translate_matrix(double dx, double dy);
/// Counter-clockwise (as displayed, y pointing down) rotation about the image centre.
AffineMatrix rotation_matrix(double degrees, int height, int width);

/// Inverse-mapped nearest-neighbour resampling; destination pixels whose
/// source falls outside the image take `fill` (fill[0] for grayscale).
/// Throws std::domain_error when the linear part is singular.
Image affine_transform(const Image& img, const AffineMatrix& matrix,
                       const std::array<std::uint8_t, 3>& fill = kGrayFill);

/// Per-pixel round((1-w)*a + w*b) clamped to [0,255]; keeps a's label.
/// w must lie in [0,1] (std::domain_error), shapes must match (std::invalid_argument).
Image blend(const Image& a, const Image& b, double w);

} // namespace faa
