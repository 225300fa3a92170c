#pragma once

#include "core.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <span>

namespace ffeinr {

struct Extents {
    double x_min = 0, x_max = 1, y_min = 0, y_max = 1;
    bool operator==(const Extents&) const = default;
};

struct Dims {
    std::size_t t = 0, h = 0, w = 0, c = 0;
    std::size_t frame_size() const { return h * w * c; }
    std::size_t size() const { return t * frame_size(); }
    bool operator==(const Dims&) const = default;
};

/// Space-time scale factors, written (S×s, T×t).
struct Factors {
    int s = 1;
    int t = 1;
    bool operator==(const Factors&) const = default;
};

/// Dense (T, H, W, C) grid. Rows run along y, columns along x; grid nodes
/// span the extents inclusively.
struct FlowField {
    Dims dims;
    std::vector<float> values;
    Extents extents;
    double dt = 1.0;
    std::vector<std::string> channel_names;

    FlowField() = default;
    FlowField(Dims d, Extents e, double dt_, std::vector<std::string> names)
        : dims(d), values(d.size(), 0.0f), extents(e), dt(dt_), channel_names(std::move(names)) {}

    std::size_t index(std::size_t t, std::size_t r, std::size_t col, std::size_t ch) const {
        return ((t * dims.h + r) * dims.w + col) * dims.c + ch;
    }
    float& at(std::size_t t, std::size_t r, std::size_t col, std::size_t ch) { return values[index(t, r, col, ch)]; }
    float at(std::size_t t, std::size_t r, std::size_t col, std::size_t ch) const {
        return values[index(t, r, col, ch)];
    }
    std::span<const float> frame(std::size_t t) const {
        return std::span<const float>(values).subspan(t * dims.frame_size(), dims.frame_size());
    }
    std::span<float> frame(std::size_t t) {
        return std::span<float>(values).subspan(t * dims.frame_size(), dims.frame_size());
    }

    double dx() const { return (extents.x_max - extents.x_min) / static_cast<double>(dims.w - 1); }
    double dy() const { return (extents.y_max - extents.y_min) / static_cast<double>(dims.h - 1); }

    /// Throws DataError / ArgumentError when any invariant is violated.
    void validate() const {
        if (dims.t < 1 || dims.h < 2 || dims.w < 2 || dims.c < 1)
            throw ArgumentError("flow field needs T>=1, H>=2, W>=2, C>=1");
        if (values.size() != dims.size()) throw ArgumentError("value count does not match dims");
        if (!(extents.x_max > extents.x_min) || !(extents.y_max > extents.y_min))
            throw ArgumentError("extents must be increasing");
        if (!(dt > 0) || !std::isfinite(dt)) throw ArgumentError("dt must be positive");
        if (channel_names.size() != dims.c) throw ArgumentError("channel_names size must equal C");
        for (float v : values)
            if (!std::isfinite(v)) throw DataError("flow field contains non-finite values");
    }

    bool operator==(const FlowField&) const = default;
};

/// Two consecutive low-resolution frames, each (H, W, C) row-major.
struct SlicePair {
    std::size_t h = 0, w = 0, c = 0;
    std::vector<float> f0, f1;
    std::size_t t0_index = 0, t1_index = 1;
};

inline SlicePair slice_pair(const FlowField& low, std::size_t t0) {
    require(t0 + 1 < low.dims.t, "slice pair index out of range");
    SlicePair p;
    p.h = low.dims.h;
    p.w = low.dims.w;
    p.c = low.dims.c;
    auto a = low.frame(t0), b = low.frame(t0 + 1);
    p.f0.assign(a.begin(), a.end());
    p.f1.assign(b.begin(), b.end());
    p.t0_index = t0;
    p.t1_index = t0 + 1;
    return p;
}

/// Strided point sampling with index 0 anchored: keeps rows/cols 0, s, 2s, ...
/// and frames 0, t, 2t, ... Extents shrink to the nodes actually kept.
inline FlowField downsample(const FlowField& f, int s_factor, int t_factor) {
    require(s_factor >= 1 && t_factor >= 1, "downsample factors must be >= 1");
    const auto s = static_cast<std::size_t>(s_factor), tf = static_cast<std::size_t>(t_factor);
    Dims d{(f.dims.t - 1) / tf + 1, (f.dims.h - 1) / s + 1, (f.dims.w - 1) / s + 1, f.dims.c};
    require(d.h >= 2 && d.w >= 2, "spatial factor leaves fewer than 2 nodes per axis");
    Extents e = f.extents;
    e.x_max = e.x_min + static_cast<double>((d.w - 1) * s) * f.dx();
    e.y_max = e.y_min + static_cast<double>((d.h - 1) * s) * f.dy();
    if ((f.dims.w - 1) % s == 0) e.x_max = f.extents.x_max;
    if ((f.dims.h - 1) % s == 0) e.y_max = f.extents.y_max;
    FlowField out(d, e, f.dt * static_cast<double>(tf), f.channel_names);
    for (std::size_t t = 0; t < d.t; ++t)
        for (std::size_t r = 0; r < d.h; ++r)
            for (std::size_t col = 0; col < d.w; ++col)
                for (std::size_t ch = 0; ch < d.c; ++ch) out.at(t, r, col, ch) = f.at(t * tf, r * s, col * s, ch);
    return out;
}

/// The part of a high-resolution field covered by the low-resolution lattice
/// that `downsample(f, s, t)` produces: nodes 0..(n_low-1)*factor per axis.
inline FlowField aligned_crop(const FlowField& f, Factors fac) {
    const auto low = downsample(f, fac.s, fac.t);
    const auto s = static_cast<std::size_t>(fac.s), tf = static_cast<std::size_t>(fac.t);
    Dims d{(low.dims.t - 1) * tf + 1, (low.dims.h - 1) * s + 1, (low.dims.w - 1) * s + 1, f.dims.c};
    if (d == f.dims) return f;
    FlowField out(d, low.extents, f.dt, f.channel_names);
    for (std::size_t t = 0; t < d.t; ++t)
        for (std::size_t r = 0; r < d.h; ++r) {
            auto src = f.values.begin() + static_cast<std::ptrdiff_t>(f.index(t, r, 0, 0));
            std::copy(src, src + static_cast<std::ptrdiff_t>(d.w * d.c),
                      out.values.begin() + static_cast<std::ptrdiff_t>(out.index(t, r, 0, 0)));
        }
    return out;
}

/// Decaying Taylor-Green vortex on [0, 2pi]^2 (inclusive grid), channels u_x, u_y.
inline FlowField gen_taylor_green(std::size_t n, std::size_t frames, double nu, double dt = 0.05) {
    require(n >= 4, "taylor-green grid size must be >= 4");
    require(frames >= 2, "taylor-green needs at least 2 frames");
    require(nu >= 0, "viscosity must be non-negative");
    require(dt > 0, "dt must be positive");
    constexpr double two_pi = 2.0 * std::numbers::pi;
    FlowField f({frames, n, n, 2}, {0.0, two_pi, 0.0, two_pi}, dt, {"u_x", "u_y"});
    const double h = two_pi / static_cast<double>(n - 1);
    for (std::size_t t = 0; t < frames; ++t) {
        const double decay = std::exp(-2.0 * nu * dt * static_cast<double>(t));
        for (std::size_t r = 0; r < n; ++r) {
            const double y = h * static_cast<double>(r);
            for (std::size_t col = 0; col < n; ++col) {
                const double x = h * static_cast<double>(col);
                f.at(t, r, col, 0) = static_cast<float>(std::sin(x) * std::cos(y) * decay);
                f.at(t, r, col, 1) = static_cast<float>(-std::cos(x) * std::sin(y) * decay);
            }
        }
    }
    return f;
}

struct NormStats {
    std::vector<double> offset;
    std::vector<double> scale;
    bool operator==(const NormStats&) const = default;
};

inline NormStats compute_norm_stats(const FlowField& f) {
    NormStats st;
    for (std::size_t ch = 0; ch < f.dims.c; ++ch) {
        double lo = std::numeric_limits<double>::infinity(), hi = -lo;
        for (std::size_t i = ch; i < f.values.size(); i += f.dims.c) {
            lo = std::min(lo, double(f.values[i]));
            hi = std::max(hi, double(f.values[i]));
        }
        const double scale = (hi - lo) / 2.0;
        st.offset.push_back((hi + lo) / 2.0);
        // constant channels keep scale 1
        st.scale.push_back(scale > 0 ? scale : 1.0);
    }
    return st;
}

inline FlowField apply_norm(const FlowField& f, const NormStats& st) {
    require(st.offset.size() == f.dims.c, "norm stats channel count mismatch");
    FlowField out = f;
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        const auto ch = i % f.dims.c;
        out.values[i] = static_cast<float>((double(f.values[i]) - st.offset[ch]) / st.scale[ch]);
    }
    return out;
}

inline FlowField denormalize(const FlowField& f, const NormStats& st) {
    require(st.offset.size() == f.dims.c, "norm stats channel count mismatch");
    FlowField out = f;
    for (std::size_t i = 0; i < out.values.size(); ++i) {
        const auto ch = i % f.dims.c;
        out.values[i] = static_cast<float>(double(f.values[i]) * st.scale[ch] + st.offset[ch]);
    }
    return out;
}

inline std::pair<FlowField, NormStats> normalize(const FlowField& f) {
    auto st = compute_norm_stats(f);
    return {apply_norm(f, st), st};
}

/// Normalized coordinate of fractional node index `q` on an axis of `cells`
/// low-resolution cells. Node k sits at the center of cell k.
inline double cell_center_coord(double q, std::size_t cells) {
    return -1.0 + (2.0 * q + 1.0) / static_cast<double>(cells);
}

/// Space-time query points: xy in [-1,1]^2, t in [0,1].
struct QueryBatch {
    std::vector<std::array<double, 2>> xy;
    std::vector<double> t;

    std::size_t size() const { return xy.size(); }
    void validate() const {
        require(!xy.empty(), "query batch is empty");
        require(t.size() == xy.size(), "query batch xy/t size mismatch");
        for (std::size_t i = 0; i < xy.size(); ++i) {
            require(xy[i][0] >= -1.0 && xy[i][0] <= 1.0 && xy[i][1] >= -1.0 && xy[i][1] <= 1.0,
                    "query coordinate outside [-1,1]^2");
            require(t[i] >= 0.0 && t[i] <= 1.0, "query time outside [0,1]");
        }
    }
};

struct TrainingSample {
    SlicePair input;
    /// Full target lattice size (rows, cols); coords may be a subset.
    std::size_t lattice_h = 0, lattice_w = 0;
    /// N x C values aligned with `coords`.
    std::vector<float> target;
    QueryBatch coords;
    std::size_t time_step = 0;
    std::size_t high_frame = 0;
};

struct SampleOptions {
    /// Number of leading slice pairs eligible for sampling (0 = all).
    std::size_t pair_limit = 0;
    /// Random subset of lattice points to supervise (0 = full lattice).
    std::size_t queries = 0;
};

/// Draws a random patch: a pair of low-res frames cropped to patch x patch,
/// the aligned high-res region at one of the t+1 high-res steps spanning the
/// pair (endpoints included), and patch-normalized query coordinates.
inline TrainingSample crop_patch(const FlowField& low, const FlowField& high, Factors fac, std::size_t patch,
                                 Rng& rng, const SampleOptions& opt = {}) {
    require(patch >= 1 && patch <= low.dims.h && patch <= low.dims.w, "patch larger than low-res grid");
    require(low.dims.t >= 2, "need at least two low-res frames");
    const auto s = static_cast<std::size_t>(fac.s), tf = static_cast<std::size_t>(fac.t);
    require((low.dims.h - 1) * s < high.dims.h && (low.dims.w - 1) * s < high.dims.w &&
                (low.dims.t - 1) * tf < high.dims.t,
            "high-res field is not aligned with the low-res field");
    const std::size_t pairs = low.dims.t - 1;
    const std::size_t limit = opt.pair_limit == 0 ? pairs : std::min(opt.pair_limit, pairs);

    auto uniform = [&rng](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };
    const std::size_t p = uniform(limit);
    const std::size_t r0 = uniform(low.dims.h - patch + 1);
    const std::size_t c0 = uniform(low.dims.w - patch + 1);
    const std::size_t k = uniform(tf + 1);

    TrainingSample smp;
    const std::size_t C = low.dims.c;
    smp.input.h = smp.input.w = patch;
    smp.input.c = C;
    smp.input.t0_index = p;
    smp.input.t1_index = p + 1;
    smp.input.f0.resize(patch * patch * C);
    smp.input.f1.resize(patch * patch * C);
    for (std::size_t r = 0; r < patch; ++r)
        for (std::size_t col = 0; col < patch; ++col)
            for (std::size_t ch = 0; ch < C; ++ch) {
                const auto i = (r * patch + col) * C + ch;
                smp.input.f0[i] = low.at(p, r0 + r, c0 + col, ch);
                smp.input.f1[i] = low.at(p + 1, r0 + r, c0 + col, ch);
            }

    const std::size_t lh = (patch - 1) * s + 1, lw = lh;
    smp.lattice_h = lh;
    smp.lattice_w = lw;
    smp.time_step = k;
    smp.high_frame = p * tf + k;
    const double t = static_cast<double>(k) / static_cast<double>(tf);

    std::vector<std::size_t> points(lh * lw);
    for (std::size_t i = 0; i < points.size(); ++i) points[i] = i;
    if (opt.queries > 0 && opt.queries < points.size()) {
        // partial Fisher-Yates keeps the draw deterministic for a given rng state
        for (std::size_t i = 0; i < opt.queries; ++i) {
            const auto j = i + uniform(points.size() - i);
            std::swap(points[i], points[j]);
        }
        points.resize(opt.queries);
    }
    smp.coords.xy.reserve(points.size());
    smp.coords.t.assign(points.size(), t);
    smp.target.reserve(points.size() * C);
    const double sd = static_cast<double>(s);
    for (auto idx : points) {
        const std::size_t i = idx / lw, j = idx % lw;
        smp.coords.xy.push_back({cell_center_coord(static_cast<double>(j) / sd, patch),
                                 cell_center_coord(static_cast<double>(i) / sd, patch)});
        for (std::size_t ch = 0; ch < C; ++ch)
            smp.target.push_back(high.at(smp.high_frame, r0 * s + i, c0 * s + j, ch));
    }
    return smp;
}

}  // namespace ffeinr
