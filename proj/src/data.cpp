#include "faa/data.hpp"

#include <algorithm>
#include <array>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "faa/errors.hpp"
#include "faa/rng.hpp"

namespace fs = std::filesystem;

namespace faa {

namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

std::vector<std::uint8_t> read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset, const fs::path& path) {
    if (bytes.size() < offset + 4) {
        throw ParseError(path.string() + ": truncated IDX header", bytes.size());
    }
    return (static_cast<std::uint32_t>(bytes[offset]) << 24) |
           (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
           (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) | static_cast<std::uint32_t>(bytes[offset + 3]);
}

void write_be32(std::ofstream& out, std::uint32_t v) {
    const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                       static_cast<char>(v)};
    out.write(b, 4);
}

void shuffle(std::vector<std::size_t>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        std::swap(v[i - 1], v[rng.uniform_index(i)]);
    }
}

bool is_class_dir_name(const std::string& s) {
    return !s.empty() && s.size() < 9 && std::all_of(s.begin(), s.end(), [](char ch) { return ch >= '0' && ch <= '9'; });
}

} // namespace

void Dataset::validate() const {
    if (images.empty()) {
        throw DataError("dataset '" + name + "' is empty");
    }
    if (class_count <= 0) {
        throw DataError("dataset '" + name + "' has no classes");
    }
    const Image& first = images.front();
    for (std::size_t i = 0; i < images.size(); ++i) {
        if (!images[i].same_shape(first)) {
            throw DataError("dataset '" + name + "': image " + std::to_string(i) + " has a different shape");
        }
        if (images[i].label() >= class_count) {
            throw DataError("dataset '" + name + "': image " + std::to_string(i) + " has label " +
                            std::to_string(images[i].label()) + " >= class count " + std::to_string(class_count));
        }
    }
}

std::vector<std::size_t> Dataset::class_histogram() const {
    std::vector<std::size_t> counts(static_cast<std::size_t>(std::max(class_count, 0)), 0);
    for (const auto& img : images) {
        if (static_cast<std::size_t>(img.label()) >= counts.size()) {
            counts.resize(static_cast<std::size_t>(img.label()) + 1, 0);
        }
        ++counts[static_cast<std::size_t>(img.label())];
    }
    return counts;
}

Dataset Dataset::subset(const std::vector<std::size_t>& indices, std::string subset_name) const {
    Dataset out;
    out.class_count = class_count;
    out.name = std::move(subset_name);
    out.images.reserve(indices.size());
    for (std::size_t i : indices) {
        out.images.push_back(images.at(i));
    }
    return out;
}

namespace {

std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& dataset) {
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(dataset.class_count));
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        by_class[static_cast<std::size_t>(dataset.images[i].label())].push_back(i);
    }
    return by_class;
}

// Per-class model-split sizes: floor of the proportional share, then the
// remaining slots go to the largest fractional parts (lowest class first).
std::vector<std::size_t> stratified_sizes(const std::vector<std::vector<std::size_t>>& by_class, std::size_t total,
                                          double ratio) {
    const auto total_m = static_cast<std::size_t>(std::lround(ratio * static_cast<double>(total)));
    std::vector<std::size_t> take(by_class.size());
    std::vector<double> frac(by_class.size());
    std::size_t assigned = 0;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        const double share = ratio * static_cast<double>(by_class[c].size());
        take[c] = static_cast<std::size_t>(std::floor(share));
        frac[c] = share - std::floor(share);
        assigned += take[c];
    }
    std::vector<std::size_t> order(by_class.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t i = 0; assigned < total_m && i < order.size(); ++i) {
        if (frac[order[i]] > 0.0) {
            ++take[order[i]];
            ++assigned;
        }
    }
    return take;
}

FoldSplit make_split(const Dataset& dataset, const std::vector<std::vector<std::size_t>>& by_class,
                     const std::vector<std::size_t>& take, int fold, std::uint64_t seed) {
    Rng rng(derive_seed(seed, StreamTag::Split, {static_cast<std::uint64_t>(fold)}));
    FoldSplit split;
    split.fold_index = fold;
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        std::vector<std::size_t> idx = by_class[c];
        shuffle(idx, rng);
        split.model_indices.insert(split.model_indices.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(take[c]));
        split.explore_indices.insert(split.explore_indices.end(), idx.begin() + static_cast<std::ptrdiff_t>(take[c]), idx.end());
    }
    std::sort(split.model_indices.begin(), split.model_indices.end());
    std::sort(split.explore_indices.begin(), split.explore_indices.end());
    split.d_m = dataset.subset(split.model_indices, dataset.name + "/fold" + std::to_string(fold) + "/model");
    split.d_a = dataset.subset(split.explore_indices, dataset.name + "/fold" + std::to_string(fold) + "/explore");
    return split;
}

void check_ratio(double ratio) {
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw std::invalid_argument("stratified split: ratio must lie in (0,1)");
    }
}

} // namespace

FoldSplit stratified_shuffle_split(const Dataset& dataset, int fold_index, std::uint64_t seed, double ratio) {
    check_ratio(ratio);
    dataset.validate();
    const auto by_class = indices_by_class(dataset);
    const auto take = stratified_sizes(by_class, dataset.size(), ratio);
    FoldSplit split = make_split(dataset, by_class, take, fold_index, seed);
    if (split.d_m.empty() || split.d_a.empty()) {
        throw std::invalid_argument("stratified split: dataset too small for the requested ratio");
    }
    return split;
}

std::vector<FoldSplit> stratified_kfold_split(const Dataset& dataset, int k, std::uint64_t seed, double ratio) {
    if (k < 2) {
        throw std::invalid_argument("stratified_kfold_split: K must be at least 2");
    }
    check_ratio(ratio);
    dataset.validate();
    const auto by_class = indices_by_class(dataset);
    for (std::size_t c = 0; c < by_class.size(); ++c) {
        if (by_class[c].size() < static_cast<std::size_t>(k)) {
            throw std::invalid_argument("stratified_kfold_split: class " + std::to_string(c) + " has " +
                                        std::to_string(by_class[c].size()) + " samples, fewer than K=" +
                                        std::to_string(k));
        }
    }
    const auto take = stratified_sizes(by_class, dataset.size(), ratio);
    std::vector<FoldSplit> folds;
    folds.reserve(static_cast<std::size_t>(k));
    for (int fold = 0; fold < k; ++fold) {
        folds.push_back(make_split(dataset, by_class, take, fold, seed));
    }
    return folds;
}

Dataset subsample(const Dataset& dataset, std::size_t cap, std::uint64_t seed) {
    if (cap == 0 || cap >= dataset.size()) {
        return dataset;
    }
    std::vector<std::size_t> idx(dataset.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng rng(derive_seed(seed, StreamTag::Subsample));
    shuffle(idx, rng);
    idx.resize(cap);
    std::sort(idx.begin(), idx.end());
    return dataset.subset(idx, dataset.name + "/sub" + std::to_string(cap));
}

DatasetFormat parse_dataset_format(const std::string& name) {
    if (name == "idx") {
        return DatasetFormat::Idx;
    }
    if (name == "raw-dir" || name == "raw") {
        return DatasetFormat::RawDir;
    }
    throw std::invalid_argument("unknown dataset format '" + name + "' (expected idx or raw-dir)");
}

Dataset load_dataset(const fs::path& path, DatasetFormat format) {
    if (format == DatasetFormat::RawDir) {
        return load_raw_dir(path);
    }
    const std::string fname = path.filename().string();
    const auto pos = fname.find("images-idx3");
    if (pos != std::string::npos && fs::is_regular_file(path)) {
        std::string labels = fname;
        labels.replace(pos, 11, "labels-idx1");
        return load_idx(path, path.parent_path() / labels);
    }
    const fs::path images = path.string() + "-images-idx3-ubyte";
    const fs::path labels = path.string() + "-labels-idx1-ubyte";
    if (!fs::exists(images)) {
        throw DataError("dataset not found: " + path.string() + " (looked for " + images.string() + ")");
    }
    return load_idx(images, labels);
}

Dataset load_idx(const fs::path& images_path, const fs::path& labels_path) {
    const auto img_bytes = read_file(images_path);
    const auto lbl_bytes = read_file(labels_path);

    const std::uint32_t magic = read_be32(img_bytes, 0, images_path);
    if (magic != kIdxImagesMagic) {
        throw ParseError(images_path.string() + ": bad IDX image magic", 0);
    }
    const std::uint32_t n = read_be32(img_bytes, 4, images_path);
    const std::uint32_t rows = read_be32(img_bytes, 8, images_path);
    const std::uint32_t cols = read_be32(img_bytes, 12, images_path);
    if (rows == 0 || cols == 0 || rows > 4096 || cols > 4096) {
        throw ParseError(images_path.string() + ": implausible IDX image size", 8);
    }
    const std::size_t per_image = static_cast<std::size_t>(rows) * cols;
    const std::size_t expected = 16 + per_image * n;
    if (img_bytes.size() != expected) {
        throw ParseError(images_path.string() + ": payload length mismatch, expected " + std::to_string(expected) +
                             " bytes, found " + std::to_string(img_bytes.size()),
                         std::min(img_bytes.size(), expected));
    }

    if (read_be32(lbl_bytes, 0, labels_path) != kIdxLabelsMagic) {
        throw ParseError(labels_path.string() + ": bad IDX label magic", 0);
    }
    const std::uint32_t nl = read_be32(lbl_bytes, 4, labels_path);
    if (lbl_bytes.size() != 8 + static_cast<std::size_t>(nl)) {
        throw ParseError(labels_path.string() + ": label payload length mismatch", std::min<std::size_t>(lbl_bytes.size(), 8 + nl));
    }
    if (nl != n) {
        throw DataError("IDX image count " + std::to_string(n) + " differs from label count " + std::to_string(nl));
    }

    Dataset ds;
    ds.name = images_path.filename().string();
    ds.images.reserve(n);
    int max_label = -1;
    for (std::uint32_t i = 0; i < n; ++i) {
        const auto begin = img_bytes.begin() + static_cast<std::ptrdiff_t>(16 + per_image * i);
        std::vector<std::uint8_t> px(begin, begin + static_cast<std::ptrdiff_t>(per_image));
        const int label = lbl_bytes[8 + i];
        max_label = std::max(max_label, label);
        ds.images.emplace_back(static_cast<int>(rows), static_cast<int>(cols), 1, std::move(px), label);
    }
    ds.class_count = max_label + 1;
    ds.validate();
    return ds;
}

void save_idx(const Dataset& dataset, const fs::path& images_path, const fs::path& labels_path) {
    dataset.validate();
    const Image& first = dataset.images.front();
    if (first.channels() != 1) {
        throw std::invalid_argument("save_idx: only single-channel datasets are supported");
    }
    std::ofstream img(images_path, std::ios::binary);
    std::ofstream lbl(labels_path, std::ios::binary);
    if (!img || !lbl) {
        throw std::runtime_error("save_idx: cannot open output files");
    }
    write_be32(img, kIdxImagesMagic);
    write_be32(img, static_cast<std::uint32_t>(dataset.size()));
    write_be32(img, static_cast<std::uint32_t>(first.height()));
    write_be32(img, static_cast<std::uint32_t>(first.width()));
    write_be32(lbl, kIdxLabelsMagic);
    write_be32(lbl, static_cast<std::uint32_t>(dataset.size()));
    for (const auto& im : dataset.images) {
        img.write(reinterpret_cast<const char*>(im.pixels().data()), static_cast<std::streamsize>(im.size()));
        const char label = static_cast<char>(im.label());
        lbl.write(&label, 1);
    }
}

void save_raw_dir(const Dataset& dataset, const fs::path& root) {
    for (int c = 0; c < dataset.class_count; ++c) {
        fs::create_directories(root / std::to_string(c));
    }
    char name[32];
    for (std::size_t i = 0; i < dataset.size(); ++i) {
        const Image& img = dataset.images[i];
        std::snprintf(name, sizeof(name), "%06zu.bin", i);
        save_fixture(root / std::to_string(img.label()) / name, img);
    }
}

Dataset load_raw_dir(const fs::path& root) {
    if (!fs::is_directory(root)) {
        throw DataError("dataset directory not found: " + root.string());
    }
    std::vector<int> classes;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) {
            const std::string n = entry.path().filename().string();
            if (!is_class_dir_name(n)) {
                throw DataError(root.string() + ": subdirectory '" + n + "' is not a class index");
            }
            classes.push_back(std::stoi(n));
        }
    }
    std::sort(classes.begin(), classes.end());
    for (std::size_t i = 0; i < classes.size(); ++i) {
        if (classes[i] != static_cast<int>(i)) {
            throw DataError(root.string() + ": class directories must be numbered 0..n-1");
        }
    }
    Dataset ds;
    ds.name = root.filename().string();
    ds.class_count = static_cast<int>(classes.size());
    for (int c : classes) {
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(root / std::to_string(c))) {
            if (entry.is_regular_file() && entry.path().extension() == ".bin") {
                files.push_back(entry.path());
            }
        }
        std::sort(files.begin(), files.end());
        for (const auto& f : files) {
            Image img = load_fixture(f);
            if (img.label() != c) {
                throw DataError(f.string() + ": header label " + std::to_string(img.label()) +
                                " disagrees with class directory " + std::to_string(c));
            }
            ds.images.push_back(std::move(img));
        }
    }
    ds.validate();
    return ds;
}

Dataset synth_dataset(const SynthSpec& spec, std::uint64_t seed) {
    if (spec.classes < 2) {
        throw std::invalid_argument("synth_dataset: at least 2 classes required");
    }
    if (spec.per_class < 1) {
        throw std::invalid_argument("synth_dataset: per_class must be positive");
    }
    Dataset ds;
    ds.class_count = spec.classes;
    ds.name = "synth:" + std::to_string(spec.classes) + "x" + std::to_string(spec.per_class);
    const std::size_t total = static_cast<std::size_t>(spec.classes) * spec.per_class;
    ds.images.reserve(total);
    const double cx = (spec.width - 1) / 2.0;
    const double cy = (spec.height - 1) / 2.0;
    const double cycles = 3.0;
    for (std::size_t i = 0; i < total; ++i) {
        const int label = static_cast<int>(i % static_cast<std::size_t>(spec.classes));
        Rng rng(derive_seed(seed, StreamTag::Synth, {i}));
        const double angle = std::numbers::pi * label / spec.classes;
        const double phase = (rng.uniform() - 0.5) * 0.8;
        const double ca = std::cos(angle);
        const double sa = std::sin(angle);
        Image img(spec.height, spec.width, spec.channels, label);
        std::array<double, 3> gain = {1.0, 1.0, 1.0};
        if (spec.channels == 3) {
            for (auto& g : gain) {
                g = 0.8 + 0.2 * rng.uniform();
            }
        }
        for (int y = 0; y < spec.height; ++y) {
            for (int x = 0; x < spec.width; ++x) {
                const double t = ((x - cx) * ca + (y - cy) * sa) / spec.width;
                const double base = 128.0 + 90.0 * std::cos(2.0 * std::numbers::pi * cycles * t + phase);
                for (int c = 0; c < spec.channels; ++c) {
                    double v = base * gain[static_cast<std::size_t>(c)];
                    if (spec.noise > 0.0) {
                        v += spec.noise * 64.0 * rng.normal();
                    }
                    img.at(y, x, c) = static_cast<std::uint8_t>(std::clamp<long>(std::lround(v), 0, 255));
                }
            }
        }
        ds.images.push_back(std::move(img));
    }
    return ds;
}

std::uint64_t dataset_fingerprint(const Dataset& dataset) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto feed = [&h](std::uint8_t b) {
        h ^= b;
        h *= 0x100000001b3ULL;
    };
    auto feed32 = [&feed](std::uint32_t v) {
        for (int i = 0; i < 4; ++i) {
            feed(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    };
    feed32(static_cast<std::uint32_t>(dataset.class_count));
    for (const auto& img : dataset.images) {
        feed32(static_cast<std::uint32_t>(img.height()));
        feed32(static_cast<std::uint32_t>(img.width()));
        feed32(static_cast<std::uint32_t>(img.channels()));
        feed32(static_cast<std::uint32_t>(img.label()));
        for (std::uint8_t p : img.pixels()) {
            feed(p);
        }
    }
    return h;
}

} // namespace faa
