#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>

#include "faa/data.hpp"
#include "faa/errors.hpp"
#include "support.hpp"

using namespace faa;
using faa::test::TempDir;

namespace {

Dataset labelled(const std::vector<int>& per_class, int h = 4, int w = 4) {
    Dataset d;
    d.class_count = static_cast<int>(per_class.size());
    d.name = "labelled";
    std::uint64_t seed = 1;
    for (int c = 0; c < d.class_count; ++c) {
        for (int i = 0; i < per_class[static_cast<std::size_t>(c)]; ++i) {
            d.images.push_back(test::random_image(h, w, 1, seed++, c));
        }
    }
    return d;
}

std::vector<int> class_counts(const Dataset& d) {
    std::vector<int> out(static_cast<std::size_t>(d.class_count), 0);
    for (const auto& img : d.images) {
        ++out[static_cast<std::size_t>(img.label())];
    }
    return out;
}

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& bytes) {
    std::ofstream os(p, std::ios::binary);
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

// Hand-assembled IDX pair: image i is filled with (i * 7) % 256, label i % 10.
void write_idx_pair(const std::filesystem::path& images, const std::filesystem::path& labels, std::uint32_t n) {
    std::vector<std::uint8_t> img{0, 0, 8, 3};
    put_be32(img, n);
    put_be32(img, 28);
    put_be32(img, 28);
    for (std::uint32_t i = 0; i < n; ++i) {
        img.insert(img.end(), 28 * 28, static_cast<std::uint8_t>((i * 7) % 256));
    }
    std::vector<std::uint8_t> lab{0, 0, 8, 1};
    put_be32(lab, n);
    for (std::uint32_t i = 0; i < n; ++i) {
        lab.push_back(static_cast<std::uint8_t>(i % 10));
    }
    write_bytes(images, img);
    write_bytes(labels, lab);
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(is), {}};
}

} // namespace

TEST_CASE("dataset validation") {
    Dataset d = labelled({2, 2});
    CHECK_NOTHROW(d.validate());
    d.images[0].set_label(5);
    CHECK_THROWS_AS(d.validate(), DataError);
    Dataset mixed = labelled({2, 2});
    mixed.images.push_back(Image(5, 4, 1, 0));
    CHECK_THROWS_AS(mixed.validate(), DataError);
    Dataset empty;
    empty.class_count = 2;
    CHECK_THROWS_AS(empty.validate(), DataError);
}

TEST_CASE("stratified split with exact divisibility") {
    const Dataset d = labelled({50, 50});
    const auto folds = stratified_kfold_split(d, 5, 123);
    REQUIRE(folds.size() == 5);
    for (const auto& f : folds) {
        CHECK(class_counts(f.d_m) == std::vector<int>{25, 25});
        CHECK(class_counts(f.d_a) == std::vector<int>{25, 25});
    }
}

TEST_CASE("stratified split invariants") {
    for (const auto& [sizes, ratio] : {std::pair{std::vector<int>{51, 50}, 0.5},
                                       std::pair{std::vector<int>{7, 13, 29}, 0.5},
                                       std::pair{std::vector<int>{11, 5, 23, 8}, 0.3}}) {
        const Dataset d = labelled(sizes);
        const auto folds = stratified_kfold_split(d, 5, 99, ratio);
        for (const auto& f : folds) {
            CAPTURE(f.fold_index);
            // disjoint and covering
            std::vector<std::size_t> all = f.model_indices;
            all.insert(all.end(), f.explore_indices.begin(), f.explore_indices.end());
            std::sort(all.begin(), all.end());
            REQUIRE(all.size() == d.size());
            for (std::size_t i = 0; i < all.size(); ++i) {
                REQUIRE(all[i] == i);
            }
            CHECK(std::is_sorted(f.model_indices.begin(), f.model_indices.end()));
            REQUIRE(f.d_m.size() == f.model_indices.size());
            for (std::size_t i = 0; i < f.model_indices.size(); ++i) {
                REQUIRE(f.d_m.images[i] == d.images[f.model_indices[i]]);
            }
            // proportionality within one sample per class
            const auto m = class_counts(f.d_m);
            const auto a = class_counts(f.d_a);
            for (std::size_t c = 0; c < sizes.size(); ++c) {
                CHECK(std::abs(m[c] - ratio * sizes[c]) <= 1.0);
                CHECK(std::abs(a[c] - (1 - ratio) * sizes[c]) <= 1.0);
            }
            CHECK(static_cast<double>(f.d_m.size()) == std::round(ratio * static_cast<double>(d.size())));
        }
        // independent shuffles
        CHECK(folds[0].model_indices != folds[1].model_indices);
    }
}

TEST_CASE("split determinism and single-shuffle equivalence") {
    const Dataset d = labelled({30, 21, 17});
    const auto a = stratified_kfold_split(d, 3, 5);
    const auto b = stratified_kfold_split(d, 3, 5);
    const auto c = stratified_kfold_split(d, 3, 6);
    for (int k = 0; k < 3; ++k) {
        CHECK(a[static_cast<std::size_t>(k)].model_indices == b[static_cast<std::size_t>(k)].model_indices);
        CHECK(stratified_shuffle_split(d, k, 5).model_indices == a[static_cast<std::size_t>(k)].model_indices);
    }
    CHECK(a[0].model_indices != c[0].model_indices);
}

TEST_CASE("split preconditions") {
    const Dataset d = labelled({10, 3});
    CHECK_THROWS_AS(stratified_kfold_split(d, 1, 0), std::invalid_argument);
    try {
        stratified_kfold_split(d, 4, 0);
        FAIL("expected an error");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("class 1") != std::string::npos);
    }
    CHECK_THROWS_AS(stratified_kfold_split(d, 2, 0, 1.0), std::invalid_argument);
    CHECK_THROWS_AS(stratified_kfold_split(d, 2, 0, 0.0), std::invalid_argument);
}

TEST_CASE("subsample") {
    const Dataset d = labelled({20, 20});
    CHECK(subsample(d, 0, 1).images == d.images);
    CHECK(subsample(d, 100, 1).images == d.images);
    const Dataset s = subsample(d, 10, 1);
    CHECK(s.size() == 10);
    CHECK(subsample(d, 10, 1).images == s.images);
    CHECK(subsample(d, 10, 2).images != s.images);
    // in source order
    std::size_t pos = 0;
    for (const auto& img : s.images) {
        while (pos < d.size() && !(d.images[pos] == img)) {
            ++pos;
        }
        REQUIRE(pos < d.size());
        ++pos;
    }
}

TEST_CASE("IDX reader") {
    TempDir dir("idx");
    const auto images = dir / "toy-images-idx3-ubyte";
    const auto labels = dir / "toy-labels-idx1-ubyte";
    write_idx_pair(images, labels, 100);

    SUBCASE("well-formed pair") {
        const Dataset d = load_dataset(images, DatasetFormat::Idx);
        REQUIRE(d.size() == 100);
        CHECK(d.class_count == 10);
        for (std::size_t i = 0; i < d.size(); ++i) {
            REQUIRE(d.images[i].height() == 28);
            REQUIRE(d.images[i].width() == 28);
            REQUIRE(d.images[i].channels() == 1);
            REQUIRE(d.images[i].label() == static_cast<int>(i % 10));
            REQUIRE(d.images[i].at(13, 17, 0) == (i * 7) % 256);
        }
        CHECK(load_dataset(dir / "toy", DatasetFormat::Idx).images == d.images);
    }
    SUBCASE("truncated pixel data") {
        auto bytes = read_bytes(images);
        bytes.resize(bytes.size() - 100);
        write_bytes(images, bytes);
        try {
            load_dataset(images, DatasetFormat::Idx);
            FAIL("expected a parse error");
        } catch (const ParseError& e) {
            CHECK(e.offset() > 16);
            CHECK(e.offset() <= bytes.size());
        }
    }
    SUBCASE("truncated header") {
        auto bytes = read_bytes(images);
        bytes.resize(10);
        write_bytes(images, bytes);
        CHECK_THROWS_AS(load_dataset(images, DatasetFormat::Idx), ParseError);
    }
    SUBCASE("bad magic") {
        auto bytes = read_bytes(labels);
        bytes[3] = 3;
        write_bytes(labels, bytes);
        try {
            load_dataset(images, DatasetFormat::Idx);
            FAIL("expected a parse error");
        } catch (const ParseError& e) {
            CHECK(e.offset() == 0);
        }
    }
    SUBCASE("count mismatch") {
        write_idx_pair(dir / "b-images-idx3-ubyte", dir / "b-labels-idx1-ubyte", 99);
        std::filesystem::copy_file(dir / "b-labels-idx1-ubyte", labels,
                                   std::filesystem::copy_options::overwrite_existing);
        CHECK_THROWS_AS(load_dataset(images, DatasetFormat::Idx), DataError);
    }
    SUBCASE("missing file names the path") {
        try {
            load_dataset(dir / "nothing-images-idx3-ubyte", DatasetFormat::Idx);
            FAIL("expected a data error");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("nothing-images-idx3-ubyte") != std::string::npos);
        }
    }
    SUBCASE("write and read back") {
        const Dataset d = load_dataset(images, DatasetFormat::Idx);
        save_idx(d, dir / "c-images-idx3-ubyte", dir / "c-labels-idx1-ubyte");
        CHECK(read_bytes(dir / "c-images-idx3-ubyte") == read_bytes(images));
        CHECK(read_bytes(dir / "c-labels-idx1-ubyte") == read_bytes(labels));
    }
}

TEST_CASE("bundled digits subset") {
    const Dataset train = load_dataset(std::string(FAA_DIGITS_DIR) + "/train-images-idx3-ubyte", DatasetFormat::Idx);
    const Dataset test = load_dataset(std::string(FAA_DIGITS_DIR) + "/test-images-idx3-ubyte", DatasetFormat::Idx);
    CHECK(train.size() == 2000);
    CHECK(test.size() == 1000);
    CHECK(train.class_count == 10);
    CHECK(class_counts(train) == std::vector<int>(10, 200));
    CHECK(class_counts(test) == std::vector<int>(10, 100));
    CHECK(train.images[0].height() == 28);
}

TEST_CASE("raw-dir round trip") {
    TempDir dir("raw");
    Dataset d = labelled({3, 4, 2}, 5, 6);
    for (auto& img : d.images) {
        img = Image(img.height(), img.width(), 1, std::vector<std::uint8_t>(img.pixels().begin(), img.pixels().end()),
                    img.label());
    }
    save_raw_dir(d, dir.path() / "set");
    const Dataset back = load_dataset(dir.path() / "set", DatasetFormat::RawDir);
    CHECK(back.class_count == 3);
    REQUIRE(back.size() == d.size());
    std::vector<std::vector<std::uint8_t>> a, b;
    for (const auto& img : d.images) a.push_back(encode_fixture(img));
    for (const auto& img : back.images) b.push_back(encode_fixture(img));
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);

    // fixture bytes: 16-byte little-endian header then pixels
    const Image one = d.images.front();
    const auto bytes = encode_fixture(one);
    REQUIRE(bytes.size() == 16 + one.size());
    CHECK(bytes[0] == 5);
    CHECK(bytes[4] == 6);
    CHECK(bytes[8] == 1);
    CHECK(bytes[12] == one.label());
    CHECK(decode_fixture(bytes) == one);
    CHECK_THROWS_AS(decode_fixture(std::span(bytes).first(10)), ParseError);

    // a fixture whose header label disagrees with its directory
    save_fixture(dir.path() / "set" / "0" / "wrong.bin", d.images.back());
    CHECK_THROWS_AS(load_dataset(dir.path() / "set", DatasetFormat::RawDir), DataError);
}

TEST_CASE("dataset format names") {
    CHECK(parse_dataset_format("idx") == DatasetFormat::Idx);
    CHECK(parse_dataset_format("raw-dir") == DatasetFormat::RawDir);
    CHECK_THROWS_AS(parse_dataset_format("png"), std::invalid_argument);
}

TEST_CASE("synthetic gratings") {
    SynthSpec spec;
    spec.per_class = 10;
    const Dataset d = synth_dataset(spec, 1);
    CHECK(d.size() == 20);
    CHECK(class_counts(d) == std::vector<int>{10, 10});
    CHECK_NOTHROW(d.validate());

    spec.noise = 0.0;
    CHECK(synth_dataset(spec, 4).images == synth_dataset(spec, 4).images);
    spec.noise = 0.1;
    CHECK(synth_dataset(spec, 4).images == synth_dataset(spec, 4).images);
    CHECK(synth_dataset(spec, 4).images != synth_dataset(spec, 5).images);
    CHECK(dataset_fingerprint(synth_dataset(spec, 4)) != dataset_fingerprint(synth_dataset(spec, 5)));
}

TEST_CASE("nearest-centroid oracle separates the synthetic classes") {
    for (int classes : {2, 4}) {
        SynthSpec spec;
        spec.classes = classes;
        spec.per_class = 100;
        const Dataset train = synth_dataset(spec, 10);
        const Dataset held_out = synth_dataset(spec, 11);
        const std::size_t dim = train.images[0].size();
        std::vector<std::vector<double>> centroid(static_cast<std::size_t>(classes), std::vector<double>(dim, 0.0));
        for (const auto& img : train.images) {
            for (std::size_t i = 0; i < dim; ++i) {
                centroid[static_cast<std::size_t>(img.label())][i] += img.pixels()[i] / 100.0;
            }
        }
        int correct = 0;
        for (const auto& img : held_out.images) {
            int best = 0;
            double best_d = INFINITY;
            for (int c = 0; c < classes; ++c) {
                double dist = 0.0;
                for (std::size_t i = 0; i < dim; ++i) {
                    const double diff = img.pixels()[i] - centroid[static_cast<std::size_t>(c)][i];
                    dist += diff * diff;
                }
                if (dist < best_d) {
                    best_d = dist;
                    best = c;
                }
            }
            correct += best == img.label();
        }
        CAPTURE(classes);
        CHECK(correct / static_cast<double>(held_out.size()) >= 0.95);
    }
}
