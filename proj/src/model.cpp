#include "faa/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <stdexcept>
#include <string>

#include "faa/errors.hpp"
#include "faa/rng.hpp"

namespace faa {

namespace {

constexpr char kMagic[4] = {'F', 'A', 'A', 'M'};
constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<const Image*> pointers(std::span<const Image> images) {
    std::vector<const Image*> out;
    out.reserve(images.size());
    for (const auto& img : images) {
        out.push_back(&img);
    }
    return out;
}

// Mean cross-entropy over a batch in double, from single-precision logits.
void accumulate(const std::vector<float>& logits, std::span<const Image* const> batch, int classes, double& loss_sum,
                std::size_t& correct) {
    for (std::size_t b = 0; b < batch.size(); ++b) {
        const float* z = logits.data() + b * static_cast<std::size_t>(classes);
        int best = 0;
        double zmax = z[0];
        for (int c = 1; c < classes; ++c) {
            if (z[c] > zmax) {
                zmax = z[c];
                best = c;
            }
        }
        double sum = 0.0;
        for (int c = 0; c < classes; ++c) {
            sum += std::exp(static_cast<double>(z[c]) - zmax);
        }
        const int y = batch[b]->label();
        if (y >= classes) {
            throw std::invalid_argument("label " + std::to_string(y) + " exceeds the model's class count");
        }
        loss_sum += zmax + std::log(sum) - static_cast<double>(z[y]);
        if (best == y) {
            ++correct;
        }
    }
}

// Zero-padded random shift by up to 2 pixels and a horizontal flip with p = 0.5.
Image crop_flip(const Image& img, Rng& rng) {
    const int dx = static_cast<int>(rng.uniform_index(5)) - 2;
    const int dy = static_cast<int>(rng.uniform_index(5)) - 2;
    const bool flip = rng.bernoulli(0.5);
    Image out(img.height(), img.width(), img.channels(), img.label());
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            const int sx0 = x + dx;
            const int sy = y + dy;
            if (sx0 < 0 || sy < 0 || sx0 >= img.width() || sy >= img.height()) {
                continue;
            }
            const int sx = flip ? img.width() - 1 - sx0 : sx0;
            for (int c = 0; c < img.channels(); ++c) {
                out.at(y, x, c) = img.at(sy, sx, c);
            }
        }
    }
    return out;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
}

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        }
        pos_ += 4;
        return v;
    }

    std::uint64_t u64(const char* what) {
        const std::uint64_t lo = u32(what);
        const std::uint64_t hi = u32(what);
        return lo | (hi << 32);
    }

    float f32() {
        const std::uint32_t bits = u32("weight data");
        float f;
        std::memcpy(&f, &bits, sizeof f);
        return f;
    }

    void need(std::size_t n, const char* what) const {
        if (pos_ + n > bytes_.size()) {
            throw ParseError(std::string("checkpoint truncated while reading ") + what, bytes_.size());
        }
    }

    std::size_t pos() const noexcept { return pos_; }
    void skip(std::size_t n) { pos_ += n; }

private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

} // namespace

ModelParams::ModelParams(Weights<float> weights, std::uint64_t step) : weights_(std::move(weights)), step_(step) {
    weights_.arch.validate();
    const auto sizes = Weights<float>::tensor_sizes(weights_.arch);
    for (std::size_t t = 0; t < kTensorCount; ++t) {
        if (weights_.tensors[t].size() != sizes[t]) {
            throw std::invalid_argument("tensor " + std::string(kTensorNames[t]) + " has the wrong size");
        }
    }
}

ModelParams ModelParams::zeros(const Architecture& arch) {
    return ModelParams(Weights<float>::zeros(arch));
}

ModelParams ModelParams::initialize(const Architecture& arch, std::uint64_t seed) {
    auto w = Weights<float>::zeros(arch);
    Rng rng(derive_seed(seed, StreamTag::Init));
    const int kk = arch.kernel * arch.kernel;
    const std::array<std::pair<Tensor, int>, 4> layers = {{
        {Conv1W, kk * arch.channels},
        {Conv2W, kk * arch.conv1},
        {Fc1W, arch.flat_features()},
        {Fc2W, arch.hidden},
    }};
    for (const auto& [tensor, fan_in] : layers) {
        const double bound = std::sqrt(6.0 / fan_in);
        for (auto& v : w[tensor]) {
            v = static_cast<float>((2.0 * rng.uniform() - 1.0) * bound);
        }
    }
    return ModelParams(std::move(w));
}

std::uint64_t ModelParams::hash() const {
    const auto bytes = encode_checkpoint(*this);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::uint8_t b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

bool ModelParams::all_finite() const {
    for (const auto& t : weights_.tensors) {
        if (!std::all_of(t.begin(), t.end(), [](float v) { return std::isfinite(v); })) {
            return false;
        }
    }
    return true;
}

Architecture architecture_for(const Dataset& dataset) {
    dataset.validate();
    Architecture a;
    a.height = dataset.images.front().height();
    a.width = dataset.images.front().width();
    a.channels = dataset.images.front().channels();
    a.classes = dataset.class_count;
    a.validate();
    return a;
}

ModelParams train(const ModelParams& init, const Dataset& dataset, const TrainConfig& cfg, TrainLog* log) {
    if (dataset.empty()) {
        throw std::invalid_argument("train: empty dataset");
    }
    if (cfg.epochs < 1 || cfg.batch_size < 1 || !(cfg.learning_rate > 0.0)) {
        throw std::invalid_argument("train: epochs, batch size and learning rate must be positive");
    }
    const Architecture& arch = init.architecture();
    if (dataset.class_count > arch.classes) {
        throw std::invalid_argument("train: dataset has more classes than the model outputs");
    }
    for (const auto& img : dataset.images) {
        if (!arch.accepts(img)) {
            throw std::invalid_argument("train: image shape does not match the architecture");
        }
    }

    const DatasetSource source(dataset);
    if (log != nullptr) {
        log->epoch_losses.clear();
        log->initial_loss = loss(init, source);
    }

    std::vector<SubPolicy> pool;
    if (cfg.augmentation) {
        pool = cfg.augmentation->flatten();
    }
    const PairingPool pairing{dataset.images, std::nullopt};

    Weights<float> w = init.weights();
    Weights<float> grad = Weights<float>::zeros(arch);
    Weights<float> velocity = Weights<float>::zeros(arch);
    std::uint64_t step = init.step();
    const auto lr = static_cast<float>(cfg.learning_rate);
    const auto mu = static_cast<float>(cfg.momentum);
    const auto wd = static_cast<float>(cfg.weight_decay);

    const std::size_t n = dataset.size();
    std::vector<std::size_t> order(n);
    std::vector<Image> batch_images;
    std::vector<const Image*> batch;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng(derive_seed(cfg.seed, StreamTag::Shuffle, {static_cast<std::uint64_t>(epoch)}));
        for (std::size_t i = n; i > 1; --i) {
            std::swap(order[i - 1], order[shuffle_rng.uniform_index(i)]);
        }
        double epoch_sum = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end = std::min(n, start + static_cast<std::size_t>(cfg.batch_size));
            batch_images.clear();
            for (std::size_t i = start; i < end; ++i) {
                const std::size_t idx = order[i];
                if (pool.empty() && !cfg.baseline_augment) {
                    batch_images.push_back(dataset.images[idx]);
                    continue;
                }
                Image img = dataset.images[idx];
                if (!pool.empty()) {
                    Rng aug(derive_seed(cfg.seed, StreamTag::Augment, {static_cast<std::uint64_t>(epoch), idx}));
                    const SubPolicy& sp = pool[aug.uniform_index(pool.size())];
                    PairingPool self_pool = pairing;
                    self_pool.self_index = idx;
                    img = apply_sub_policy(img, sp, aug, &self_pool);
                }
                if (cfg.baseline_augment) {
                    Rng base(derive_seed(cfg.seed, StreamTag::Control, {static_cast<std::uint64_t>(epoch), idx}));
                    img = crop_flip(img, base);
                }
                batch_images.push_back(std::move(img));
            }
            batch = pointers(batch_images);
            const double batch_loss = loss_and_gradient<float>(w, batch, &grad);
            ++step;
            if (!std::isfinite(batch_loss)) {
                throw TrainingDiverged("training loss became non-finite", step);
            }
            epoch_sum += batch_loss;
            ++batches;
            for (std::size_t t = 0; t < kTensorCount; ++t) {
                const bool decay = (t == Conv1W || t == Conv2W || t == Fc1W || t == Fc2W);
                auto& wt = w.tensors[t];
                auto& vt = velocity.tensors[t];
                const auto& gt = grad.tensors[t];
                for (std::size_t i = 0; i < wt.size(); ++i) {
                    const float g = decay ? gt[i] + wd * wt[i] : gt[i];
                    vt[i] = mu * vt[i] + g;
                    wt[i] -= lr * vt[i];
                }
            }
        }
        if (log != nullptr) {
            log->epoch_losses.push_back(epoch_sum / static_cast<double>(batches));
        }
    }
    ModelParams out(std::move(w), step);
    if (!out.all_finite()) {
        throw TrainingDiverged("weights became non-finite", step);
    }
    if (log != nullptr) {
        log->final_loss = loss(out, source);
    }
    return out;
}

Evaluation evaluate(const ModelParams& params, const ImageSource& source, std::size_t batch_size) {
    const std::size_t n = source.size();
    if (n == 0) {
        throw std::invalid_argument("evaluate: empty dataset");
    }
    batch_size = std::max<std::size_t>(batch_size, 1);
    const int classes = params.architecture().classes;
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::vector<Image> images;
    std::vector<float> logits;
    for (std::size_t start = 0; start < n; start += batch_size) {
        const std::size_t end = std::min(n, start + batch_size);
        images.clear();
        for (std::size_t i = start; i < end; ++i) {
            images.push_back(source.image(i));
        }
        const auto batch = pointers(images);
        forward_logits<float>(params.weights(), batch, logits);
        accumulate(logits, batch, classes, loss_sum, correct);
    }
    Evaluation ev;
    ev.count = n;
    ev.loss = loss_sum / static_cast<double>(n);
    ev.accuracy = static_cast<double>(correct) / static_cast<double>(n);
    return ev;
}

double loss(const ModelParams& params, const ImageSource& source) {
    return evaluate(params, source).loss;
}

double loss(const ModelParams& params, const Dataset& dataset) {
    return loss(params, DatasetSource(dataset));
}

double accuracy(const ModelParams& params, const ImageSource& source) {
    return evaluate(params, source).accuracy;
}

double accuracy(const ModelParams& params, const Dataset& dataset) {
    return accuracy(params, DatasetSource(dataset));
}

std::vector<double> predict(const ModelParams& params, const Image& img) {
    const Image* one[1] = {&img};
    std::vector<float> logits;
    forward_logits<float>(params.weights(), one, logits);
    const double zmax = *std::max_element(logits.begin(), logits.end());
    std::vector<double> probs(logits.size());
    double sum = 0.0;
    for (std::size_t c = 0; c < logits.size(); ++c) {
        probs[c] = std::exp(static_cast<double>(logits[c]) - zmax);
        sum += probs[c];
    }
    for (auto& p : probs) {
        p /= sum;
    }
    return probs;
}

std::vector<std::uint8_t> encode_checkpoint(const ModelParams& params) {
    const Architecture& a = params.architecture();
    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    put_u32(out, kCheckpointVersion);
    for (int v : {a.height, a.width, a.channels, a.conv1, a.conv2, a.kernel, a.hidden, a.classes}) {
        put_u32(out, static_cast<std::uint32_t>(v));
    }
    put_u32(out, static_cast<std::uint32_t>(params.step()));
    put_u32(out, static_cast<std::uint32_t>(params.step() >> 32));
    put_u32(out, static_cast<std::uint32_t>(kTensorCount));
    for (const auto& t : params.weights().tensors) {
        put_u32(out, static_cast<std::uint32_t>(t.size()));
        for (float f : t) {
            std::uint32_t bits;
            std::memcpy(&bits, &f, sizeof bits);
            put_u32(out, bits);
        }
    }
    return out;
}

ModelParams decode_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw ParseError("not a model checkpoint (bad magic)", 0);
    }
    Reader r(bytes);
    r.skip(4);
    const std::size_t version_at = r.pos();
    if (r.u32("version") != kCheckpointVersion) {
        throw ParseError("unsupported checkpoint version", version_at);
    }
    Architecture a;
    for (int* field : {&a.height, &a.width, &a.channels, &a.conv1, &a.conv2, &a.kernel, &a.hidden, &a.classes}) {
        const std::uint32_t v = r.u32("architecture");
        if (v > (1u << 20)) {
            throw ParseError("implausible architecture field", r.pos() - 4);
        }
        *field = static_cast<int>(v);
    }
    try {
        a.validate();
    } catch (const std::invalid_argument& e) {
        throw ParseError(std::string("invalid architecture: ") + e.what(), 8);
    }
    const std::uint64_t step = r.u64("step counter");
    const std::size_t count_at = r.pos();
    if (r.u32("tensor count") != kTensorCount) {
        throw ParseError("unexpected tensor count", count_at);
    }
    auto w = Weights<float>::zeros(a);
    for (std::size_t t = 0; t < kTensorCount; ++t) {
        const std::size_t len_at = r.pos();
        const std::uint32_t len = r.u32("tensor length");
        if (len != w.tensors[t].size()) {
            throw ParseError("tensor " + std::string(kTensorNames[t]) + " length " + std::to_string(len) +
                                 " does not match the architecture",
                             len_at);
        }
        r.need(static_cast<std::size_t>(len) * 4, "weight data");
        for (auto& v : w.tensors[t]) {
            v = r.f32();
        }
    }
    if (r.pos() != bytes.size()) {
        throw ParseError("trailing bytes after checkpoint", r.pos());
    }
    return ModelParams(std::move(w), step);
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
    const auto bytes = encode_checkpoint(params);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open checkpoint " + path.string());
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes);
}

} // namespace faa
