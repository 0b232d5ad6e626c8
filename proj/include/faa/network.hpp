#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <new>
#include <span>
#include <string_view>
#include <vector>

#include "faa/image.hpp"

namespace faa {

/// Probe classifier shape:
/// conv(k x k, conv1) -> ReLU -> maxpool2 -> conv(k x k, conv2) -> ReLU -> maxpool2
/// -> dense(hidden) -> ReLU -> dense(classes). Convolutions are zero-padded
/// ("same"); pooling floors odd sizes.
struct Architecture {
    int height = 0;
    int width = 0;
    int channels = 1;
    int conv1 = 16;
    int conv2 = 32;
    int kernel = 3;
    int hidden = 64;
    int classes = 2;

    void validate() const;
    int pooled1_h() const noexcept { return height / 2; }
    int pooled1_w() const noexcept { return width / 2; }
    int pooled2_h() const noexcept { return pooled1_h() / 2; }
    int pooled2_w() const noexcept { return pooled1_w() / 2; }
    int flat_features() const noexcept { return conv2 * pooled2_h() * pooled2_w(); }
    bool accepts(const Image& img) const noexcept {
        return img.height() == height && img.width() == width && img.channels() == channels;
    }

    friend bool operator==(const Architecture&, const Architecture&) = default;
};

enum Tensor : std::size_t { Conv1W, Conv1B, Conv2W, Conv2B, Fc1W, Fc1B, Fc2W, Fc2B, kTensorCount };

inline constexpr std::array<std::string_view, kTensorCount> kTensorNames = {
    "conv1.weight", "conv1.bias", "conv2.weight", "conv2.bias",
    "fc1.weight",   "fc1.bias",   "fc2.weight",   "fc2.bias",
};

/// 64-byte aligned storage so vectorised kernels see the same alignment on
/// every run; float reductions would otherwise depend on heap addresses.
template <typename T>
struct AlignedAllocator {
    using value_type = T;
    static constexpr std::align_val_t kAlign{64};

    AlignedAllocator() noexcept = default;
    template <typename U>
    AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

    T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
    void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

    template <typename U>
    friend bool operator==(const AlignedAllocator&, const AlignedAllocator<U>&) noexcept {
        return true;
    }
};

template <typename Scalar>
using TensorData = std::vector<Scalar, AlignedAllocator<Scalar>>;

/// Weight tensors in a fixed order. Convolution kernels are laid out
/// [out][ky][kx][in], dense matrices [out][in] (row-major).
template <typename Scalar>
struct Weights {
    Architecture arch;
    std::array<TensorData<Scalar>, kTensorCount> tensors;

    static Weights zeros(const Architecture& arch);
    static std::array<std::size_t, kTensorCount> tensor_sizes(const Architecture& arch);

    TensorData<Scalar>& operator[](Tensor t) { return tensors[t]; }
    const TensorData<Scalar>& operator[](Tensor t) const { return tensors[t]; }

    friend bool operator==(const Weights&, const Weights&) = default;

    template <typename Other>
    Weights<Other> cast() const {
        Weights<Other> out;
        out.arch = arch;
        for (std::size_t t = 0; t < kTensorCount; ++t) {
            out.tensors[t].assign(tensors[t].begin(), tensors[t].end());
        }
        return out;
    }
};

/// Mean cross-entropy of `batch` and, when `grad` is non-null, its gradient
/// with respect to every tensor (grad is resized as needed).
template <typename Scalar>
double loss_and_gradient(const Weights<Scalar>& w, std::span<const Image* const> batch, Weights<Scalar>* grad);

/// Logits for every image, row per image: out[i * classes + c].
template <typename Scalar>
void forward_logits(const Weights<Scalar>& w, std::span<const Image* const> batch, std::vector<Scalar>& out);

extern template struct Weights<float>;
extern template struct Weights<double>;
extern template double loss_and_gradient<float>(const Weights<float>&, std::span<const Image* const>, Weights<float>*);
extern template double loss_and_gradient<double>(const Weights<double>&, std::span<const Image* const>, Weights<double>*);
extern template void forward_logits<float>(const Weights<float>&, std::span<const Image* const>, std::vector<float>&);
extern template void forward_logits<double>(const Weights<double>&, std::span<const Image* const>, std::vector<double>&);

} // namespace faa
