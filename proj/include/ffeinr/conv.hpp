#pragma once

#include "core.hpp"

#include <cmath>

namespace ffeinr {

/// Feature map stored as (H*W) x C: one column per channel plane, pixels
/// in row-major order.
template <typename S>
struct Map2d {
    int h = 0, w = 0;
    Mat<S> data;

    Map2d() = default;
    Map2d(int h_, int w_, int c) : h(h_), w(w_), data(Mat<S>::Zero(Eigen::Index(h_) * w_, c)) {}
    Map2d(int h_, int w_, Mat<S> d) : h(h_), w(w_), data(std::move(d)) {}

    int channels() const { return static_cast<int>(data.cols()); }
    Eigen::Index pixels() const { return data.rows(); }
    bool same_shape(const Map2d& o) const { return h == o.h && w == o.w && channels() == o.channels(); }
};

template <typename S>
struct ConvCache {
    Mat<S> cols;
};

/// Stride-1 convolution with zero "same" padding, via im2col + GEMM.
template <typename S>
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(const std::string& name, int in, int out, int kernel, Rng& rng)
        : in_(in), out_(out), k_(kernel),
          weight_(name + ".weight", Eigen::Index(in) * kernel * kernel, out),
          bias_(name + ".bias", out, 1) {
        require(in > 0 && out > 0, "conv channels must be positive");
        require(kernel > 0 && kernel % 2 == 1, "conv kernel must be odd");
        // uniform(+-1/sqrt(fan_in)) for weights and biases
        const double bound = 1.0 / std::sqrt(double(in) * kernel * kernel);
        fill_uniform(weight_.value, bound, rng);
        fill_uniform(bias_.value, bound, rng);
    }

    int in_channels() const { return in_; }
    int out_channels() const { return out_; }
    int kernel() const { return k_; }
    Param<S>& weight() { return weight_; }
    Param<S>& bias() { return bias_; }

    template <typename F>
    void for_each_param(F&& f) {
        f(weight_);
        f(bias_);
    }

    Map2d<S> forward(const Map2d<S>& x, ConvCache<S>* cache = nullptr) const {
        require(x.channels() == in_, "conv input channel mismatch");
        Mat<S> cols = im2col(x);
        Map2d<S> y(x.h, x.w, Mat<S>(cols * weight_.value));
        y.data.rowwise() += bias_.value.col(0).transpose();
        if (cache) cache->cols = std::move(cols);
        return y;
    }

    Map2d<S> backward(const Map2d<S>& grad_out, const ConvCache<S>& cache) {
        weight_.grad.noalias() += cache.cols.transpose() * grad_out.data;
        bias_.grad.col(0) += grad_out.data.colwise().sum().transpose();
        Mat<S> dcols = grad_out.data * weight_.value.transpose();
        return col2im(dcols, grad_out.h, grad_out.w);
    }

private:
    Mat<S> im2col(const Map2d<S>& x) const {
        const int p = k_ / 2, H = x.h, W = x.w;
        Mat<S> cols = Mat<S>::Zero(x.pixels(), Eigen::Index(in_) * k_ * k_);
        for (int ci = 0; ci < in_; ++ci)
            for (int ky = 0; ky < k_; ++ky)
                for (int kx = 0; kx < k_; ++kx) {
                    const Eigen::Index col = (Eigen::Index(ci) * k_ + ky) * k_ + kx;
                    S* dst = cols.col(col).data();
                    const S* src = x.data.col(ci).data();
                    for (int r = 0; r < H; ++r) {
                        const int sr = r + ky - p;
                        if (sr < 0 || sr >= H) continue;
                        for (int c = 0; c < W; ++c) {
                            const int sc = c + kx - p;
                            if (sc < 0 || sc >= W) continue;
                            dst[r * W + c] = src[sr * W + sc];
                        }
                    }
                }
        return cols;
    }

    Map2d<S> col2im(const Mat<S>& dcols, int H, int W) const {
        const int p = k_ / 2;
        Map2d<S> dx(H, W, in_);
        for (int ci = 0; ci < in_; ++ci)
            for (int ky = 0; ky < k_; ++ky)
                for (int kx = 0; kx < k_; ++kx) {
                    const Eigen::Index col = (Eigen::Index(ci) * k_ + ky) * k_ + kx;
                    const S* src = dcols.col(col).data();
                    S* dst = dx.data.col(ci).data();
                    for (int r = 0; r < H; ++r) {
                        const int sr = r + ky - p;
                        if (sr < 0 || sr >= H) continue;
                        for (int c = 0; c < W; ++c) {
                            const int sc = c + kx - p;
                            if (sc < 0 || sc >= W) continue;
                            dst[sr * W + sc] += src[r * W + c];
                        }
                    }
                }
        return dx;
    }

    int in_ = 0, out_ = 0, k_ = 3;
    Param<S> weight_;  // (in*k*k) x out
    Param<S> bias_;
};

template <typename S>
inline S leaky_relu(S v, S slope) {
    return v > S(0) ? v : slope * v;
}

}  // namespace ffeinr
