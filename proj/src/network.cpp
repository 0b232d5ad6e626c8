#include "faa/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Core>

namespace faa {

namespace {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using RowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;

template <typename S>
Eigen::Map<const RowMat<S>> as_matrix(const TensorData<S>& v, int rows, int cols) {
    return Eigen::Map<const RowMat<S>>(v.data(), rows, cols);
}

template <typename S>
Eigen::Map<RowMat<S>> as_matrix(TensorData<S>& v, int rows, int cols) {
    return Eigen::Map<RowMat<S>>(v.data(), rows, cols);
}

template <typename S>
Eigen::Map<const Vec<S>> as_vector(const TensorData<S>& v) {
    return Eigen::Map<const Vec<S>>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Columns of `col` are image positions (b, y, x); rows are (ky, kx, ci).
// `input(ci, pos)` reads channel ci at flat position pos = (b*h + y)*w + x.
template <typename S, typename Reader>
void im2col(Mat<S>& col, int batch, int h, int w, int channels, int k, Reader&& input) {
    const int pad = k / 2;
    col.setZero(k * k * channels, static_cast<Eigen::Index>(batch) * h * w);
    for (int b = 0; b < batch; ++b) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                S* dst = col.col((static_cast<Eigen::Index>(b) * h + y) * w + x).data();
                for (int ky = 0; ky < k; ++ky) {
                    const int sy = y + ky - pad;
                    if (sy < 0 || sy >= h) {
                        continue;
                    }
                    for (int kx = 0; kx < k; ++kx) {
                        const int sx = x + kx - pad;
                        if (sx < 0 || sx >= w) {
                            continue;
                        }
                        const long pos = (static_cast<long>(b) * h + sy) * w + sx;
                        S* cell = dst + (ky * k + kx) * channels;
                        for (int ci = 0; ci < channels; ++ci) {
                            cell[ci] = input(ci, pos);
                        }
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatters column gradients back into `grad` (channels x positions).
template <typename S>
void col2im(const Mat<S>& dcol, int batch, int h, int w, int channels, int k, Mat<S>& grad) {
    const int pad = k / 2;
    grad.setZero(channels, static_cast<Eigen::Index>(batch) * h * w);
    for (int b = 0; b < batch; ++b) {
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                const S* src = dcol.col((static_cast<Eigen::Index>(b) * h + y) * w + x).data();
                for (int ky = 0; ky < k; ++ky) {
                    const int sy = y + ky - pad;
                    if (sy < 0 || sy >= h) {
                        continue;
                    }
                    for (int kx = 0; kx < k; ++kx) {
                        const int sx = x + kx - pad;
                        if (sx < 0 || sx >= w) {
                            continue;
                        }
                        const Eigen::Index pos = (static_cast<Eigen::Index>(b) * h + sy) * w + sx;
                        const S* cell = src + (ky * k + kx) * channels;
                        for (int ci = 0; ci < channels; ++ci) {
                            grad(ci, pos) += cell[ci];
                        }
                    }
                }
            }
        }
    }
}

// 2x2 stride-2 max pooling over (channels x positions); records the winning
// source column per output cell (first maximum in scan order).
template <typename S>
void maxpool(const Mat<S>& in, int batch, int h, int w, Mat<S>& out, Eigen::MatrixXi& argmax) {
    const int oh = h / 2;
    const int ow = w / 2;
    const auto channels = in.rows();
    out.resize(channels, static_cast<Eigen::Index>(batch) * oh * ow);
    argmax.resize(channels, out.cols());
    for (int b = 0; b < batch; ++b) {
        for (int y = 0; y < oh; ++y) {
            for (int x = 0; x < ow; ++x) {
                const Eigen::Index o = (static_cast<Eigen::Index>(b) * oh + y) * ow + x;
                const Eigen::Index base = (static_cast<Eigen::Index>(b) * h + 2 * y) * w + 2 * x;
                const Eigen::Index cand[4] = {base, base + 1, base + w, base + w + 1};
                for (Eigen::Index c = 0; c < channels; ++c) {
                    Eigen::Index best = cand[0];
                    for (int i = 1; i < 4; ++i) {
                        if (in(c, cand[i]) > in(c, best)) {
                            best = cand[i];
                        }
                    }
                    out(c, o) = in(c, best);
                    argmax(c, o) = static_cast<int>(best);
                }
            }
        }
    }
}

template <typename S>
void unpool(const Mat<S>& dout, const Eigen::MatrixXi& argmax, Eigen::Index in_cols, Mat<S>& din) {
    din.setZero(dout.rows(), in_cols);
    for (Eigen::Index o = 0; o < dout.cols(); ++o) {
        for (Eigen::Index c = 0; c < dout.rows(); ++c) {
            din(c, argmax(c, o)) += dout(c, o);
        }
    }
}

template <typename S>
struct Activations {
    Mat<S> col1, a1, p1, col2, a2, p2, hidden, logits;
    Eigen::MatrixXi arg1, arg2;
};

template <typename S>
void check_batch(const Architecture& arch, std::span<const Image* const> batch) {
    if (batch.empty()) {
        throw std::invalid_argument("network: empty batch");
    }
    for (const Image* img : batch) {
        if (!arch.accepts(*img)) {
            throw std::invalid_argument("network: image shape " + std::to_string(img->height()) + "x" +
                                        std::to_string(img->width()) + "x" + std::to_string(img->channels()) +
                                        " does not match the architecture");
        }
    }
}

template <typename S>
void forward(const Weights<S>& wt, std::span<const Image* const> batch, Activations<S>& act) {
    const Architecture& a = wt.arch;
    check_batch<S>(a, batch);
    const int n = static_cast<int>(batch.size());
    const int hw = a.height * a.width;
    const S scale = S(1) / S(255);

    im2col<S>(act.col1, n, a.height, a.width, a.channels, a.kernel, [&](int ci, long pos) {
        const Image& img = *batch[static_cast<std::size_t>(pos / hw)];
        return static_cast<S>(img.pixels()[static_cast<std::size_t>(pos % hw) * a.channels + ci]) * scale;
    });
    act.a1.noalias() = as_matrix(wt[Conv1W], a.conv1, a.kernel * a.kernel * a.channels) * act.col1;
    act.a1.colwise() += as_vector(wt[Conv1B]);
    act.a1 = act.a1.cwiseMax(S(0));
    maxpool<S>(act.a1, n, a.height, a.width, act.p1, act.arg1);

    const int h1 = a.pooled1_h();
    const int w1 = a.pooled1_w();
    im2col<S>(act.col2, n, h1, w1, a.conv1, a.kernel, [&](int ci, long pos) { return act.p1(ci, pos); });
    act.a2.noalias() = as_matrix(wt[Conv2W], a.conv2, a.kernel * a.kernel * a.conv1) * act.col2;
    act.a2.colwise() += as_vector(wt[Conv2B]);
    act.a2 = act.a2.cwiseMax(S(0));
    maxpool<S>(act.a2, n, h1, w1, act.p2, act.arg2);

    // p2 (conv2 x n*h2*w2, column-major) has the same memory layout as the
    // flattened feature matrix (flat x n) with features ordered (pos, channel).
    const Eigen::Map<const Mat<S>> features(act.p2.data(), a.flat_features(), n);
    act.hidden.noalias() = as_matrix(wt[Fc1W], a.hidden, a.flat_features()) * features;
    act.hidden.colwise() += as_vector(wt[Fc1B]);
    act.hidden = act.hidden.cwiseMax(S(0));
    act.logits.noalias() = as_matrix(wt[Fc2W], a.classes, a.hidden) * act.hidden;
    act.logits.colwise() += as_vector(wt[Fc2B]);
}

template <typename S>
void add_rowsum(TensorData<S>& dst, const Mat<S>& m) {
    Eigen::Map<Vec<S>>(dst.data(), static_cast<Eigen::Index>(dst.size())) = m.rowwise().sum();
}

} // namespace

void Architecture::validate() const {
    if (height < 4 || width < 4) {
        throw std::invalid_argument("architecture: input must be at least 4x4");
    }
    if (channels != 1 && channels != 3) {
        throw std::invalid_argument("architecture: channels must be 1 or 3");
    }
    if (conv1 < 1 || conv2 < 1 || hidden < 1 || kernel < 1 || kernel % 2 == 0) {
        throw std::invalid_argument("architecture: layer sizes must be positive and the kernel odd");
    }
    if (classes < 2) {
        throw std::invalid_argument("architecture: at least 2 classes required");
    }
}

template <typename Scalar>
std::array<std::size_t, kTensorCount> Weights<Scalar>::tensor_sizes(const Architecture& a) {
    const auto kk = static_cast<std::size_t>(a.kernel) * a.kernel;
    return {
        static_cast<std::size_t>(a.conv1) * kk * a.channels, static_cast<std::size_t>(a.conv1),
        static_cast<std::size_t>(a.conv2) * kk * a.conv1,     static_cast<std::size_t>(a.conv2),
        static_cast<std::size_t>(a.hidden) * a.flat_features(), static_cast<std::size_t>(a.hidden),
        static_cast<std::size_t>(a.classes) * a.hidden,       static_cast<std::size_t>(a.classes),
    };
}

template <typename Scalar>
Weights<Scalar> Weights<Scalar>::zeros(const Architecture& arch) {
    arch.validate();
    Weights w;
    w.arch = arch;
    const auto sizes = tensor_sizes(arch);
    for (std::size_t t = 0; t < kTensorCount; ++t) {
        w.tensors[t].assign(sizes[t], Scalar(0));
    }
    return w;
}

template <typename S>
void forward_logits(const Weights<S>& w, std::span<const Image* const> batch, std::vector<S>& out) {
    Activations<S> act;
    forward(w, batch, act);
    out.resize(static_cast<std::size_t>(act.logits.size()));
    // logits is classes x n column-major == n x classes row-major
    std::copy(act.logits.data(), act.logits.data() + act.logits.size(), out.begin());
}

template <typename S>
double loss_and_gradient(const Weights<S>& wt, std::span<const Image* const> batch, Weights<S>* grad) {
    Activations<S> act;
    forward(wt, batch, act);
    const Architecture& a = wt.arch;
    const int n = static_cast<int>(batch.size());

    // softmax cross-entropy, per-sample in S, accumulated in double
    Mat<S> dlogits(a.classes, n);
    double total = 0.0;
    for (int b = 0; b < n; ++b) {
        const auto z = act.logits.col(b);
        const S zmax = z.maxCoeff();
        const S sum = (z.array() - zmax).exp().sum();
        const S lse = zmax + std::log(sum);
        const int y = batch[static_cast<std::size_t>(b)]->label();
        if (y >= a.classes) {
            throw std::invalid_argument("network: label " + std::to_string(y) + " exceeds class count");
        }
        total += static_cast<double>(lse - z(y));
        dlogits.col(b) = (z.array() - lse).exp();
        dlogits(y, b) -= S(1);
    }
    const double mean = total / n;
    if (grad == nullptr) {
        return mean;
    }
    dlogits /= static_cast<S>(n);

    if (grad->arch != a || grad->tensors[0].size() != wt.tensors[0].size()) {
        *grad = Weights<S>::zeros(a);
    }
    auto& g = *grad;

    as_matrix(g[Fc2W], a.classes, a.hidden).noalias() = dlogits * act.hidden.transpose();
    add_rowsum(g[Fc2B], dlogits);
    Mat<S> dhidden = as_matrix(wt[Fc2W], a.classes, a.hidden).transpose() * dlogits;
    dhidden = dhidden.cwiseProduct((act.hidden.array() > S(0)).matrix().template cast<S>());

    const Eigen::Map<const Mat<S>> features(act.p2.data(), a.flat_features(), n);
    as_matrix(g[Fc1W], a.hidden, a.flat_features()).noalias() = dhidden * features.transpose();
    add_rowsum(g[Fc1B], dhidden);
    Mat<S> dp2(a.conv2, act.p2.cols());
    Eigen::Map<Mat<S>>(dp2.data(), a.flat_features(), n).noalias() =
        as_matrix(wt[Fc1W], a.hidden, a.flat_features()).transpose() * dhidden;

    Mat<S> da2;
    unpool<S>(dp2, act.arg2, act.a2.cols(), da2);
    da2 = da2.cwiseProduct((act.a2.array() > S(0)).matrix().template cast<S>());
    as_matrix(g[Conv2W], a.conv2, a.kernel * a.kernel * a.conv1).noalias() = da2 * act.col2.transpose();
    add_rowsum(g[Conv2B], da2);

    const Mat<S> dcol2 = as_matrix(wt[Conv2W], a.conv2, a.kernel * a.kernel * a.conv1).transpose() * da2;
    Mat<S> dp1;
    col2im<S>(dcol2, n, a.pooled1_h(), a.pooled1_w(), a.conv1, a.kernel, dp1);
    Mat<S> da1;
    unpool<S>(dp1, act.arg1, act.a1.cols(), da1);
    da1 = da1.cwiseProduct((act.a1.array() > S(0)).matrix().template cast<S>());
    as_matrix(g[Conv1W], a.conv1, a.kernel * a.kernel * a.channels).noalias() = da1 * act.col1.transpose();
    add_rowsum(g[Conv1B], da1);
    return mean;
}

template struct Weights<float>;
template struct Weights<double>;
template double loss_and_gradient<float>(const Weights<float>&, std::span<const Image* const>, Weights<float>*);
template double loss_and_gradient<double>(const Weights<double>&, std::span<const Image* const>, Weights<double>*);
template void forward_logits<float>(const Weights<float>&, std::span<const Image* const>, std::vector<float>&);
template void forward_logits<double>(const Weights<double>&, std::span<const Image* const>, std::vector<double>&);

} // namespace faa
