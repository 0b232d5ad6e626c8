#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <string>

#include "faa/imageops.hpp"
#include "support.hpp"

using namespace faa;
using faa::test::random_image;

namespace {

Image golden(const std::string& name) {
    return load_fixture(std::string(FAA_GOLDEN_DIR) + "/" + name);
}

Image filled(int h, int w, int c, std::uint8_t v, int label = 0) {
    Image img(h, w, c, label);
    for (auto& p : img.pixels()) {
        p = v;
    }
    return img;
}

Image from_rows(int h, int w, std::initializer_list<int> values) {
    Image img(h, w, 1, 0);
    std::size_t i = 0;
    for (int v : values) {
        img.pixels()[i++] = static_cast<std::uint8_t>(v);
    }
    return img;
}

} // namespace

TEST_CASE("op names round-trip and magnitude flags") {
    for (OpKind k : kAllOps) {
        CHECK(parse_op_kind(op_name(k)) == k);
    }
    CHECK(kAllOps.size() == 16);
    CHECK_THROWS_AS(parse_op_kind("Flip"), std::invalid_argument);
    CHECK_FALSE(uses_magnitude(OpKind::AutoContrast));
    CHECK_FALSE(uses_magnitude(OpKind::Invert));
    CHECK_FALSE(uses_magnitude(OpKind::Equalize));
    CHECK(uses_magnitude(OpKind::Rotate));
    CHECK(uses_magnitude(OpKind::SamplePairing));
}

TEST_CASE("magnitude map endpoints") {
    CHECK(magnitude_map(OpKind::Rotate, 0.5) == 0.0);
    CHECK(magnitude_map(OpKind::Posterize, 0.0) == 8.0);
    CHECK(magnitude_map(OpKind::Posterize, 1.0) == 4.0);
    // (2*1 - 1) * 0.3
    CHECK(magnitude_map(OpKind::ShearX, 1.0) == doctest::Approx(0.3).epsilon(1e-15));
    CHECK(magnitude_map(OpKind::ShearY, 0.0) == doctest::Approx(-0.3).epsilon(1e-15));
    CHECK(magnitude_map(OpKind::Rotate, 1.0) == doctest::Approx(30.0));
    CHECK(magnitude_map(OpKind::TranslateX, 1.0) == doctest::Approx(0.3125));
    CHECK(magnitude_map(OpKind::Solarize, 0.0) == 256.0);
    CHECK(magnitude_map(OpKind::Solarize, 1.0) == 0.0);
    CHECK(magnitude_map(OpKind::Contrast, 0.5) == 1.0);
    CHECK(magnitude_map(OpKind::Brightness, 0.0) == doctest::Approx(0.1));
    CHECK(magnitude_map(OpKind::Sharpness, 1.0) == doctest::Approx(1.9));
    CHECK(magnitude_map(OpKind::Cutout, 1.0) == 0.5);
    CHECK(magnitude_map(OpKind::SamplePairing, 1.0) == doctest::Approx(0.4));

    CHECK_THROWS_AS(magnitude_map(OpKind::Rotate, -0.01), std::domain_error);
    CHECK_THROWS_AS(magnitude_map(OpKind::Rotate, 1.01), std::domain_error);
    CHECK_THROWS_AS(magnitude_map(OpKind::Invert, std::nan("")), std::domain_error);
}

TEST_CASE("pointwise ops") {
    SUBCASE("invert of black is white") {
        const Image out = apply_op(filled(4, 4, 3, 0), OpKind::Invert, 0.3);
        for (auto p : out.pixels()) {
            CHECK(p == 255);
        }
    }
    SUBCASE("autocontrast leaves a full-range image alone") {
        Image img = random_image(6, 6, 3, 11);
        for (int c = 0; c < 3; ++c) {
            img.at(0, 0, c) = 0;
            img.at(5, 5, c) = 255;
        }
        CHECK(apply_op(img, OpKind::AutoContrast, 0.0) == img);
    }
    SUBCASE("autocontrast stretches a narrow range to the extremes") {
        const Image img = from_rows(1, 3, {100, 120, 140});
        const Image out = apply_op(img, OpKind::AutoContrast, 0.0);
        CHECK(out.pixels()[0] == 0);
        CHECK(out.pixels()[1] == 128); // round(20 * 255 / 40) = round(127.5)
        CHECK(out.pixels()[2] == 255);
    }
    SUBCASE("solarize at threshold 256 is the identity") {
        const Image img = random_image(5, 7, 1, 2);
        CHECK(apply_op(img, OpKind::Solarize, 0.0) == img);
    }
    SUBCASE("posterize to 4 bits masks the low nibble") {
        const Image out = apply_op(filled(2, 2, 1, 137), OpKind::Posterize, 1.0);
        CHECK(out.pixels()[0] == (137 & 0xF0));
        CHECK(out.pixels()[0] == 128);
    }
    SUBCASE("equalize of a two-level image") {
        // 32 pixels of 50 then 32 of 200. Cumulative counts 32 and 64,
        // cdf_min 32, N 64: 50 -> 0, 200 -> (64-32)*255/(64-32) = 255.
        Image img(8, 8, 1, 0);
        for (std::size_t i = 0; i < 64; ++i) {
            img.pixels()[i] = i < 32 ? 50 : 200;
        }
        const Image out = apply_op(img, OpKind::Equalize, 0.0);
        for (std::size_t i = 0; i < 64; ++i) {
            CHECK(out.pixels()[i] == (i < 32 ? 0 : 255));
        }
    }
    SUBCASE("equalize of a constant image is the identity") {
        const Image img = filled(4, 4, 1, 77);
        CHECK(apply_op(img, OpKind::Equalize, 0.0) == img);
    }
    SUBCASE("color on grayscale is a no-op") {
        const Image img = random_image(5, 5, 1, 4);
        CHECK(apply_op(img, OpKind::Color, 1.0) == img);
        CHECK(apply_op(img, OpKind::Color, 0.0) == img);
    }
    SUBCASE("brightness at the lowest magnitude darkens toward black") {
        const Image out = apply_op(filled(3, 3, 1, 200), OpKind::Brightness, 0.0);
        CHECK(out.pixels()[0] == 20); // 0.1 * 200
    }
}

TEST_CASE("sample pairing needs a partner of the same shape") {
    const Image img = random_image(4, 4, 1, 1);
    CHECK_THROWS_AS(apply_op(img, OpKind::SamplePairing, 0.5), std::invalid_argument);
    const Image other = random_image(5, 4, 1, 2);
    OpArgs args;
    args.pair = &other;
    CHECK_THROWS_AS(apply_op(img, OpKind::SamplePairing, 0.5, args), std::invalid_argument);

    const Image a = filled(2, 2, 1, 100, 3);
    const Image b = filled(2, 2, 1, 200, 5);
    args.pair = &b;
    const Image out = apply_op(a, OpKind::SamplePairing, 1.0, args);
    CHECK(out.pixels()[0] == 140); // 0.6 * 100 + 0.4 * 200
    CHECK(out.label() == 3);
}

TEST_CASE("cutout fills a gray square around the centre") {
    const Image img = filled(8, 8, 1, 10);
    OpArgs args;
    args.cutout_center = PixelPos{2, 3};
    const Image out = apply_op(img, OpKind::Cutout, 1.0, args); // side 4
    for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
            const bool inside = x >= 0 && x < 4 && y >= 1 && y < 5;
            CHECK(out.at(y, x, 0) == (inside ? 128 : 10));
        }
    }
    args.cutout_center = PixelPos{0, 0};
    const Image corner = apply_op(img, OpKind::Cutout, 1.0, args);
    CHECK(corner.at(0, 0, 0) == 128);
    CHECK(corner.at(1, 1, 0) == 128);
    CHECK(corner.at(2, 2, 0) == 10);
}

TEST_CASE("affine kernel") {
    SUBCASE("identity matrix") {
        const Image img = random_image(5, 6, 3, 8);
        CHECK(affine_transform(img, kIdentityAffine) == img);
    }
    SUBCASE("translate right by two pixels") {
        const Image img = from_rows(4, 4, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16});
        const Image out = affine_transform(img, translate_matrix(2.0, 0.0));
        const Image expected =
            from_rows(4, 4, {128, 128, 1, 2, 128, 128, 5, 6, 128, 128, 9, 10, 128, 128, 13, 14});
        CHECK(out == expected);
    }
    SUBCASE("rotate 90 degrees counter-clockwise") {
        const Image img = from_rows(3, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9});
        const Image expected = from_rows(3, 3, {3, 6, 9, 2, 5, 8, 1, 4, 7});
        CHECK(affine_transform(img, rotation_matrix(90.0, 3, 3)) == expected);
        const Image back = from_rows(3, 3, {7, 4, 1, 8, 5, 2, 9, 6, 3});
        CHECK(affine_transform(img, rotation_matrix(-90.0, 3, 3)) == back);
    }
    SUBCASE("fill colour is per channel") {
        const Image img = filled(2, 2, 3, 9);
        const Image out = affine_transform(img, translate_matrix(5.0, 0.0), {1, 2, 3});
        CHECK(out.at(0, 0, 0) == 1);
        CHECK(out.at(0, 0, 1) == 2);
        CHECK(out.at(0, 0, 2) == 3);
    }
    SUBCASE("singular linear part") {
        const Image img = filled(2, 2, 1, 9);
        CHECK_THROWS_AS(affine_transform(img, {1.0, 2.0, 0.0, 2.0, 4.0, 0.0}), std::domain_error);
    }
}

TEST_CASE("blend") {
    const Image a = filled(3, 3, 1, 100, 1);
    const Image b = filled(3, 3, 1, 200, 2);
    CHECK(blend(a, b, 0.0) == a);
    const Image full = blend(a, b, 1.0);
    CHECK(std::equal(full.pixels().begin(), full.pixels().end(), b.pixels().begin()));
    CHECK(full.label() == 1);
    CHECK(blend(a, b, 0.25).pixels()[0] == 125);
    CHECK_THROWS_AS(blend(a, filled(3, 4, 1, 0), 0.5), std::invalid_argument);
    CHECK_THROWS_AS(blend(a, b, 1.5), std::domain_error);
    CHECK_THROWS_AS(blend(a, b, -0.1), std::domain_error);
}

TEST_CASE("golden buffers from the reference implementation") {
    const Image rgb = golden("rgb_input.bin");
    const Image gray = golden("gray_input.bin");
    REQUIRE(rgb.height() == 8);
    REQUIRE(rgb.width() == 10);
    for (const auto& [lam, tag] : {std::pair{0.2, "02"}, std::pair{1.0, "10"}}) {
        CAPTURE(lam);
        CHECK(apply_op(rgb, OpKind::ShearX, lam) == golden(std::string("shearx_") + tag + ".bin"));
        CHECK(apply_op(rgb, OpKind::ShearY, lam) == golden(std::string("sheary_") + tag + ".bin"));
        CHECK(apply_op(rgb, OpKind::TranslateX, lam) == golden(std::string("translatex_") + tag + ".bin"));
        CHECK(apply_op(rgb, OpKind::TranslateY, lam) == golden(std::string("translatey_") + tag + ".bin"));
        CHECK(apply_op(rgb, OpKind::Rotate, lam) == golden(std::string("rotate_") + tag + ".bin"));
    }
    for (const auto& [lam, tag] : {std::pair{0.25, "025"}, std::pair{0.5, "050"}, std::pair{1.0, "100"}}) {
        CAPTURE(lam);
        CHECK(apply_op(gray, OpKind::Posterize, lam) == golden(std::string("posterize_") + tag + ".bin"));
        CHECK(apply_op(gray, OpKind::Solarize, lam) == golden(std::string("solarize_") + tag + ".bin"));
    }
    CHECK(apply_op(gray, OpKind::Equalize, 0.0) == golden("equalize_gray.bin"));
    CHECK(apply_op(rgb, OpKind::Equalize, 0.0) == golden("equalize_rgb.bin"));
}

TEST_CASE("identity anchors are exact") {
    for (int c : {1, 3}) {
        const Image img = random_image(9, 7, c, 100 + c, 4);
        OpArgs args;
        args.pair = &img;
        for (OpKind k : {OpKind::ShearX, OpKind::ShearY, OpKind::TranslateX, OpKind::TranslateY, OpKind::Rotate,
                         OpKind::Contrast, OpKind::Color, OpKind::Brightness, OpKind::Sharpness}) {
            CAPTURE(op_name(k));
            CHECK(apply_op(img, k, 0.5, args) == img);
        }
        for (OpKind k : {OpKind::Solarize, OpKind::Posterize, OpKind::Cutout, OpKind::SamplePairing}) {
            CAPTURE(op_name(k));
            CHECK(apply_op(img, k, 0.0, args) == img);
        }
    }
}

TEST_CASE("shape, label, determinism and involution over random inputs") {
    Rng rng(2024);
    for (int iter = 0; iter < 200; ++iter) {
        const int c = rng.bernoulli(0.5) ? 3 : 1;
        const int h = 1 + static_cast<int>(rng.uniform_index(12));
        const int w = 1 + static_cast<int>(rng.uniform_index(12));
        const Image img = random_image(h, w, c, rng.next_u64(), static_cast<int>(rng.uniform_index(10)));
        const Image partner = random_image(h, w, c, rng.next_u64(), 0);
        OpArgs args;
        args.pair = &partner;
        args.cutout_center = PixelPos{static_cast<int>(rng.uniform_index(static_cast<std::size_t>(w))),
                                      static_cast<int>(rng.uniform_index(static_cast<std::size_t>(h)))};
        for (OpKind k : kAllOps) {
            const double lam = rng.uniform();
            const Image out = apply_op(img, k, lam, args);
            CAPTURE(op_name(k));
            REQUIRE(out.same_shape(img));
            REQUIRE(out.label() == img.label());
            REQUIRE(out.size() == img.size());
            REQUIRE(apply_op(img, k, lam, args) == out);
        }
        const Image inv = apply_op(img, OpKind::Invert, 0.0);
        REQUIRE(apply_op(inv, OpKind::Invert, 0.0) == img);
    }
}
