#pragma once

#include "flow_field.hpp"

#include <cmath>
#include <numeric>

namespace ffeinr {

inline constexpr double kPsnrCap = 99.0;

struct MetricReport {
    double psnr_db = 0;
    double ssim = 0;
    std::vector<double> rmse;  // per channel
    Factors factors;
    std::vector<double> psnr_per_frame;
};

namespace detail {

inline void check_same_shape(const FlowField& a, const FlowField& b) {
    if (a.dims != b.dims) throw ArgumentError("metric inputs differ in shape");
}

/// Source position of target index i when n_src nodes are stretched over n_dst.
inline std::pair<std::size_t, double> interp_position(std::size_t i, std::size_t n_src, std::size_t n_dst) {
    if (n_src == 1 || n_dst == 1) return {0, 0.0};
    // exact rational position i*(n_src-1)/(n_dst-1)
    const std::size_t num = i * (n_src - 1), den = n_dst - 1;
    std::size_t k = num / den;
    double frac = static_cast<double>(num % den) / static_cast<double>(den);
    if (k >= n_src - 1) {
        k = n_src - 2;
        frac = 1.0;
    }
    return {k, frac};
}

}  // namespace detail

/// Separable linear interpolation in x, y and t; low node k lands on target
/// node k*(n_dst-1)/(n_src-1), so it is exact at low-res nodes.
inline FlowField trilinear_upsample(const FlowField& low, std::size_t T, std::size_t H, std::size_t W) {
    require(T >= low.dims.t && H >= low.dims.h && W >= low.dims.w, "trilinear target smaller than source");
    require(low.dims.h >= 2 && low.dims.w >= 2, "trilinear needs >= 2 nodes per spatial axis");
    require(low.dims.t >= 2 || T == low.dims.t, "trilinear needs >= 2 frames to interpolate in time");
    const std::size_t C = low.dims.c;
    Dims d{T, H, W, C};
    FlowField out(d, low.extents, low.dt * double(low.dims.t > 1 ? low.dims.t - 1 : 1) / double(T > 1 ? T - 1 : 1),
                  low.channel_names);
    if (T == low.dims.t) out.dt = low.dt;
    std::vector<std::pair<std::size_t, double>> px(W), py(H), pt(T);
    for (std::size_t i = 0; i < W; ++i) px[i] = detail::interp_position(i, low.dims.w, W);
    for (std::size_t i = 0; i < H; ++i) py[i] = detail::interp_position(i, low.dims.h, H);
    for (std::size_t i = 0; i < T; ++i) pt[i] = detail::interp_position(i, low.dims.t, T);
    auto at = [&low](std::size_t t, std::size_t r, std::size_t c, std::size_t ch) { return double(low.at(t, r, c, ch)); };
    for (std::size_t t = 0; t < T; ++t) {
        const auto [t0, ft] = pt[t];
        const std::size_t t1 = std::min(t0 + 1, low.dims.t - 1);
        for (std::size_t r = 0; r < H; ++r) {
            const auto [r0, fr] = py[r];
            for (std::size_t col = 0; col < W; ++col) {
                const auto [c0, fc] = px[col];
                for (std::size_t ch = 0; ch < C; ++ch) {
                    auto bil = [&](std::size_t tt) {
                        const double a = at(tt, r0, c0, ch) * (1 - fc) + at(tt, r0, c0 + 1, ch) * fc;
                        const double b = at(tt, r0 + 1, c0, ch) * (1 - fc) + at(tt, r0 + 1, c0 + 1, ch) * fc;
                        return a * (1 - fr) + b * fr;
                    };
                    const double v = ft == 0.0 ? bil(t0) : bil(t0) * (1 - ft) + bil(t1) * ft;
                    out.at(t, r, col, ch) = static_cast<float>(v);
                }
            }
        }
    }
    return out;
}

inline double max_abs(const FlowField& f) {
    double m = 0;
    for (float v : f.values) m = std::max(m, std::abs(double(v)));
    return m;
}

inline double psnr_from_mse(double max_i, double mse) {
    if (mse <= 0.0) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(max_i * max_i / mse));
}

/// 10 log10(MAX^2 / MSE), MAX = global max |gt|, MSE over every element.
inline double psnr(const FlowField& pred, const FlowField& gt) {
    detail::check_same_shape(pred, gt);
    double se = 0;
    for (std::size_t i = 0; i < gt.values.size(); ++i) {
        const double d = double(pred.values[i]) - double(gt.values[i]);
        se += d * d;
    }
    return psnr_from_mse(max_abs(gt), se / static_cast<double>(gt.values.size()));
}

/// PSNR of each frame, still using the global MAX of gt.
inline std::vector<double> psnr_per_frame(const FlowField& pred, const FlowField& gt) {
    detail::check_same_shape(pred, gt);
    const double mx = max_abs(gt);
    std::vector<double> out;
    for (std::size_t t = 0; t < gt.dims.t; ++t) {
        auto a = pred.frame(t), b = gt.frame(t);
        double se = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = double(a[i]) - double(b[i]);
            se += d * d;
        }
        out.push_back(psnr_from_mse(mx, se / static_cast<double>(a.size())));
    }
    return out;
}

/// Global-statistics SSIM per (frame, channel), averaged. c1 = (0.01 L)^2,
/// c2 = (0.03 L)^2 with L the dynamic range (max - min) of gt.
inline double ssim(const FlowField& pred, const FlowField& gt) {
    detail::check_same_shape(pred, gt);
    const auto [lo, hi] = std::minmax_element(gt.values.begin(), gt.values.end());
    const double L = double(*hi) - double(*lo);
    const double c1 = (0.01 * L) * (0.01 * L), c2 = (0.03 * L) * (0.03 * L);
    const std::size_t C = gt.dims.c, n = gt.dims.h * gt.dims.w;
    double total = 0;
    for (std::size_t t = 0; t < gt.dims.t; ++t) {
        auto s = pred.frame(t), h = gt.frame(t);
        for (std::size_t ch = 0; ch < C; ++ch) {
            double ms = 0, mh = 0;
            for (std::size_t p = 0; p < n; ++p) {
                ms += s[p * C + ch];
                mh += h[p * C + ch];
            }
            ms /= double(n);
            mh /= double(n);
            double vs = 0, vh = 0, cov = 0;
            for (std::size_t p = 0; p < n; ++p) {
                const double ds = s[p * C + ch] - ms, dh = h[p * C + ch] - mh;
                vs += ds * ds;
                vh += dh * dh;
                cov += ds * dh;
            }
            vs /= double(n);
            vh /= double(n);
            cov /= double(n);
            const double num = (2 * ms * mh + c1) * (2 * cov + c2);
            const double den = (ms * ms + mh * mh + c1) * (vs + vh + c2);
            // only reachable when both slices are identically zero
            total += den == 0.0 ? 1.0 : num / den;
        }
    }
    return total / static_cast<double>(gt.dims.t * C);
}

inline std::vector<double> rmse_per_channel(const FlowField& pred, const FlowField& gt) {
    detail::check_same_shape(pred, gt);
    const std::size_t C = gt.dims.c;
    std::vector<double> se(C, 0.0);
    for (std::size_t i = 0; i < gt.values.size(); ++i) {
        const double d = double(pred.values[i]) - double(gt.values[i]);
        se[i % C] += d * d;
    }
    const double n = static_cast<double>(gt.values.size() / C);
    for (auto& v : se) v = std::sqrt(v / n);
    return se;
}

inline MetricReport compute_report(const FlowField& pred, const FlowField& gt, Factors f = {}) {
    MetricReport r;
    r.psnr_db = psnr(pred, gt);
    r.ssim = ssim(pred, gt);
    r.rmse = rmse_per_channel(pred, gt);
    r.factors = f;
    r.psnr_per_frame = psnr_per_frame(pred, gt);
    return r;
}

/// Copies the listed frames into a new field.
inline FlowField select_frames(const FlowField& f, const std::vector<std::size_t>& frames) {
    require(!frames.empty(), "frame selection is empty");
    Dims d = f.dims;
    d.t = frames.size();
    FlowField out(d, f.extents, f.dt, f.channel_names);
    for (std::size_t i = 0; i < frames.size(); ++i) {
        require(frames[i] < f.dims.t, "frame index out of range");
        auto src = f.frame(frames[i]);
        std::copy(src.begin(), src.end(), out.frame(i).begin());
    }
    return out;
}

}  // namespace ffeinr
