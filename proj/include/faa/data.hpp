#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "faa/image.hpp"

namespace faa {

/// Labelled images sharing one shape. Immutable once validated; safe for
/// concurrent reads.
struct Dataset {
    std::vector<Image> images;
    int class_count = 0;
    std::string name;

    std::size_t size() const noexcept { return images.size(); }
    bool empty() const noexcept { return images.empty(); }

    /// Throws DataError when empty, when shapes differ, or when a label is
    /// outside [0, class_count).
    void validate() const;

    /// Number of images per label, indexed by label.
    std::vector<std::size_t> class_histogram() const;

    /// Images at `indices`, in that order.
    Dataset subset(const std::vector<std::size_t>& indices, std::string subset_name) const;
};

/// Read-only, index-addressable image stream. Implemented by datasets and by
/// lazily augmented views of them.
class ImageSource {
public:
    virtual ~ImageSource() = default;
    virtual std::size_t size() const = 0;
    virtual Image image(std::size_t index) const = 0;
};

class DatasetSource final : public ImageSource {
public:
    explicit DatasetSource(const Dataset& dataset) : dataset_(dataset) {}
    std::size_t size() const override { return dataset_.size(); }
    Image image(std::size_t index) const override { return dataset_.images.at(index); }

private:
    const Dataset& dataset_;
};

/// One shuffle of a stratified shuffle split. `model_indices` and
/// `explore_indices` refer to the source dataset and are sorted.
struct FoldSplit {
    Dataset d_m;
    Dataset d_a;
    int fold_index = 0;
    std::vector<std::size_t> model_indices;
    std::vector<std::size_t> explore_indices;
};

/// K independent stratified shuffles. In each, the model split receives
/// round(ratio * |D|) images with every class within one sample of exact
/// proportionality; the exploration split receives the rest.
///
/// Requires k >= 2, ratio in (0,1), and at least k samples in every class
/// (std::invalid_argument naming the class otherwise).
std::vector<FoldSplit> stratified_kfold_split(const Dataset& dataset, int k, std::uint64_t seed,
                                              double ratio = 0.5);

/// The single shuffle that stratified_kfold_split would produce as fold
/// `fold_index`. Usable with one fold; requires both sides non-empty.
FoldSplit stratified_shuffle_split(const Dataset& dataset, int fold_index, std::uint64_t seed, double ratio = 0.5);

/// Up to `cap` images drawn without replacement, returned in source order.
/// Returns the dataset unchanged when cap >= |D| or cap == 0.
Dataset subsample(const Dataset& dataset, std::size_t cap, std::uint64_t seed);

enum class DatasetFormat { Idx, RawDir };

/// Parses "idx" / "raw-dir"; throws std::invalid_argument otherwise.
DatasetFormat parse_dataset_format(const std::string& name);

/// Idx: `path` is either an images file (its labels file is found by
/// replacing "images-idx3" with "labels-idx1" in the name) or a prefix P
/// such that P-images-idx3-ubyte and P-labels-idx1-ubyte exist.
/// RawDir: `<path>/<class>/<name>.bin` fixture files.
///
/// Throws DataError for missing files and ParseError for malformed ones.
Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format);

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

/// Writes `<root>/<label>/<index>.bin`. Creates directories for every class,
/// including empty ones.
void save_raw_dir(const Dataset& dataset, const std::filesystem::path& root);
Dataset load_raw_dir(const std::filesystem::path& root);

/// Writes an IDX image/label pair (single-channel datasets only).
void save_idx(const Dataset& dataset, const std::filesystem::path& images_path,
              const std::filesystem::path& labels_path);

struct SynthSpec {
    int classes = 2;
    int per_class = 100;
    int height = 16;
    int width = 16;
    int channels = 1;
    /// Standard deviation of the additive pixel noise as a fraction of 64 grey levels.
    double noise = 0.1;
};

/// Oriented gratings: class c has stripes at angle c*180/classes degrees with
/// a small random phase jitter, plus Gaussian pixel noise. Labels interleave
/// (image i has label i % classes). Deterministic given the seed.
Dataset synth_dataset(const SynthSpec& spec, std::uint64_t seed);

/// FNV-1a over shape, labels and pixels.
std::uint64_t dataset_fingerprint(const Dataset& dataset);

} // namespace faa
