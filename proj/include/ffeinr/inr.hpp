#pragma once

#include "encoder.hpp"
#include "siren.hpp"

#include <limits>

namespace ffeinr {

enum class Lookup { Nearest, Bilinear };

struct InrConfig {
    int spatial_width = 256;
    int spatial_layers = 3;
    int temporal_width = 256;
    int temporal_layers = 3;
    int decoder_width = 256;
    int decoder_layers = 2;
    double omega0 = 30.0;
    Lookup lookup = Lookup::Nearest;
    /// Grid size (in low-res cells) that motion flow units refer to; normally
    /// the training patch. 0 means "whatever grid is being queried".
    int flow_reference = 0;

    void validate() const {
        require(spatial_width > 0 && temporal_width > 0 && decoder_width > 0, "INR widths must be positive");
        require(spatial_layers >= 1 && temporal_layers >= 1 && decoder_layers >= 1, "INR depth must be >= 1");
        require(omega0 > 0, "omega0 must be positive");
        require(flow_reference >= 0, "flow_reference must be >= 0");
    }
};

struct ModelConfig {
    EncoderConfig encoder;
    InrConfig inr;
    int channels = 2;
};

/// Motion flow m_t: 2 x N displacement in normalized coordinates.
template <typename S>
using MotionFlow = Mat<S>;
/// Spatial feature f_s (or warped f_st): C_f x N.
template <typename S>
using SpatialFeature = Mat<S>;

/// Per-axis resolution of a normalized coordinate against a grid of `cells`
/// cells, where node k is the center of cell k.
struct AxisLookup {
    int cell = 0;         // containing cell (nearest node)
    double offset = 0;    // position relative to the cell center, in [-1, 1]
    int lo = 0;           // left node for bilinear blending
    double frac = 0;      // bilinear weight of node lo+1
    bool frac_clamped = false;
};

inline AxisLookup lookup_axis(double x, int cells, double snap_tol) {
    AxisLookup a;
    double u = (x + 1.0) * 0.5 * cells;
    const double ur = std::round(u);
    if (std::abs(u - ur) <= snap_tol) u = ur;
    a.cell = std::clamp(static_cast<int>(std::floor(u)), 0, cells - 1);
    a.offset = std::clamp(2.0 * (u - a.cell) - 1.0, -1.0, 1.0);
    double un = u - 0.5;
    if (cells < 2) {
        a.lo = 0;
        a.frac = 0;
        a.frac_clamped = true;
        return a;
    }
    if (un <= 0.0 || un >= cells - 1.0) a.frac_clamped = true;
    un = std::clamp(un, 0.0, cells - 1.0);
    a.lo = std::min(static_cast<int>(std::floor(un)), cells - 2);
    a.frac = un - a.lo;
    return a;
}

struct SpatialLookup {
    std::vector<AxisLookup> ax, ay;
};

template <typename S>
struct ForwardCache {
    EncoderCache<S> enc;
    FeatureGrid<S> grid;
    SpatialLookup look1, look2;
    SirenCache<S> spatial1, spatial2, temporal, decoder;
    Mat<S> warp_pass;  // 1 where the warp was not clamped
    S flow_sx = S(1), flow_sy = S(1);
};

/// The feature-enhanced implicit representation: encoder, SpatialINR,
/// TemporalINR (motion flow), coordinate warp, SpatialINR re-query and decoder.
template <typename S>
class Model {
public:
    Model() = default;
    Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
        cfg.encoder.validate();
        cfg.inr.validate();
        require(cfg.channels > 0, "model channel count must be positive");
        Rng rng(seed);
        const int cf = cfg.encoder.c_f;
        const auto& ic = cfg.inr;
        encoder_ = Encoder<S>(cfg.encoder, cfg.channels, rng);
        spatial_ = SirenNet<S>("spatial", {cf + 2, ic.spatial_width, ic.spatial_layers, cf, ic.omega0}, rng);
        temporal_ = SirenNet<S>("temporal", {1 + cf, ic.temporal_width, ic.temporal_layers, 2, ic.omega0}, rng);
        decoder_ = SirenNet<S>("decoder", {cf, ic.decoder_width, ic.decoder_layers, cfg.channels, ic.omega0}, rng);
    }

    const ModelConfig& config() const { return cfg_; }
    Encoder<S>& encoder() { return encoder_; }
    const Encoder<S>& encoder() const { return encoder_; }
    SirenNet<S>& spatial() { return spatial_; }
    SirenNet<S>& temporal() { return temporal_; }
    SirenNet<S>& decoder() { return decoder_; }

    template <typename F>
    void for_each_param(F&& f) {
        encoder_.for_each_param(f);
        spatial_.for_each_param(f);
        temporal_.for_each_param(f);
        decoder_.for_each_param(f);
    }
    void zero_grad() {
        for_each_param([](Param<S>& p) { p.zero_grad(); });
    }
    std::size_t parameter_count() {
        std::size_t n = 0;
        for_each_param([&n](Param<S>& p) { n += static_cast<std::size_t>(p.value.size()); });
        return n;
    }

    FeatureGrid<S> encode(const SlicePair& pair, EncoderCache<S>* cache = nullptr) const {
        return encoder_.encode(pair, cache);
    }

    static double snap_tolerance(int cells) {
        return 64.0 * std::numeric_limits<S>::epsilon() * std::max(1, cells);
    }

    /// SpatialINR input for each query: [cell feature; offset_x; offset_y].
    Mat<S> spatial_input(const Mat<S>& xy, const FeatureGrid<S>& grid, SpatialLookup* look) const {
        const Eigen::Index n = xy.cols(), cf = grid.channels();
        SpatialLookup local;
        SpatialLookup& lk = look ? *look : local;
        lk.ax.resize(static_cast<std::size_t>(n));
        lk.ay.resize(static_cast<std::size_t>(n));
        Mat<S> in(cf + 2, n);
        const bool bilinear = cfg_.inr.lookup == Lookup::Bilinear;
        for (Eigen::Index q = 0; q < n; ++q) {
            const double x = double(xy(0, q)), y = double(xy(1, q));
            require(x >= -1.0 && x <= 1.0 && y >= -1.0 && y <= 1.0, "spatial query coordinate outside [-1,1]^2");
            const auto a = lookup_axis(x, grid.w, snap_tolerance(grid.w));
            const auto b = lookup_axis(y, grid.h, snap_tolerance(grid.h));
            lk.ax[static_cast<std::size_t>(q)] = a;
            lk.ay[static_cast<std::size_t>(q)] = b;
            if (!bilinear) {
                in.col(q).head(cf) = grid.data.row(Eigen::Index(b.cell) * grid.w + a.cell).transpose();
            } else {
                const auto blend = [&](int r, int c) { return grid.data.row(Eigen::Index(r) * grid.w + c).transpose(); };
                const int c1 = std::min(a.lo + 1, grid.w - 1), r1 = std::min(b.lo + 1, grid.h - 1);
                const S fx = S(a.frac), fy = S(b.frac);
                in.col(q).head(cf) = (S(1) - fy) * ((S(1) - fx) * blend(b.lo, a.lo) + fx * blend(b.lo, c1)) +
                                     fy * ((S(1) - fx) * blend(r1, a.lo) + fx * blend(r1, c1));
            }
            in(cf, q) = S(a.offset);
            in(cf + 1, q) = S(b.offset);
        }
        return in;
    }

    /// f_s = F_s(x, f_i).
    SpatialFeature<S> spatial_query(const Mat<S>& xy, const FeatureGrid<S>& grid, SpatialLookup* look = nullptr,
                                    SirenCache<S>* cache = nullptr) const {
        require(xy.rows() == 2, "coordinates must be 2 x N");
        require(grid.channels() == cfg_.encoder.c_f, "feature grid channel mismatch");
        return spatial_.forward(spatial_input(xy, grid, look), cache);
    }

    /// m_t = F_t(t, f_s).
    MotionFlow<S> temporal_query(const Mat<S>& t, const SpatialFeature<S>& fs, SirenCache<S>* cache = nullptr) const {
        require(t.rows() == 1 && t.cols() == fs.cols(), "temporal query: t must be 1 x N");
        require(fs.rows() == cfg_.encoder.c_f, "temporal query: feature width mismatch");
        Mat<S> in(1 + fs.rows(), fs.cols());
        in << t, fs;
        return temporal_.forward(in, cache);
    }

    /// x* = clamp(x + m, -1, 1), with m scaled per axis by `scale`.
    static Mat<S> warp(const Mat<S>& xy, const MotionFlow<S>& m, S sx = S(1), S sy = S(1), Mat<S>* pass = nullptr) {
        require(xy.rows() == 2 && m.rows() == 2 && xy.cols() == m.cols(), "warp: shape mismatch");
        Mat<S> out(2, xy.cols());
        if (pass) pass->resize(2, xy.cols());
        for (Eigen::Index q = 0; q < xy.cols(); ++q) {
            const S v[2] = {xy(0, q) + sx * m(0, q), xy(1, q) + sy * m(1, q)};
            for (int k = 0; k < 2; ++k) {
                out(k, q) = std::clamp(v[k], S(-1), S(1));
                if (pass) (*pass)(k, q) = (v[k] >= S(-1) && v[k] <= S(1)) ? S(1) : S(0);
            }
        }
        return out;
    }

    static Mat<S> coords_matrix(const QueryBatch& q) {
        Mat<S> xy(2, static_cast<Eigen::Index>(q.size()));
        for (std::size_t i = 0; i < q.size(); ++i) {
            xy(0, Eigen::Index(i)) = static_cast<S>(q.xy[i][0]);
            xy(1, Eigen::Index(i)) = static_cast<S>(q.xy[i][1]);
        }
        return xy;
    }
    static Mat<S> times_matrix(const QueryBatch& q) {
        Mat<S> t(1, static_cast<Eigen::Index>(q.size()));
        for (std::size_t i = 0; i < q.size(); ++i) t(0, Eigen::Index(i)) = static_cast<S>(q.t[i]);
        return t;
    }

    /// Everything after the encoder: returns C x N values (normalized units).
    Mat<S> forward_grid(const QueryBatch& query, const FeatureGrid<S>& grid, ForwardCache<S>* cache = nullptr) const {
        query.validate();
        const Mat<S> xy = coords_matrix(query), t = times_matrix(query);
        const int ref = cfg_.inr.flow_reference;
        const S sx = ref > 0 ? S(double(ref) / grid.w) : S(1);
        const S sy = ref > 0 ? S(double(ref) / grid.h) : S(1);
        SpatialFeature<S> fs =
            spatial_query(xy, grid, cache ? &cache->look1 : nullptr, cache ? &cache->spatial1 : nullptr);
        MotionFlow<S> m = temporal_query(t, fs, cache ? &cache->temporal : nullptr);
        // a diverged flow has no valid warp target; surface it as non-finite output
        if (!m.allFinite())
            return Mat<S>::Constant(cfg_.channels, xy.cols(), std::numeric_limits<S>::quiet_NaN());
        Mat<S> xs = warp(xy, m, sx, sy, cache ? &cache->warp_pass : nullptr);
        SpatialFeature<S> fst =
            spatial_query(xs, grid, cache ? &cache->look2 : nullptr, cache ? &cache->spatial2 : nullptr);
        if (cache) {
            cache->flow_sx = sx;
            cache->flow_sy = sy;
        }
        return decoder_.forward(fst, cache ? &cache->decoder : nullptr);
    }

    /// O^H = F_st(x, t, I^L).
    Mat<S> forward(const QueryBatch& query, const SlicePair& pair, ForwardCache<S>* cache = nullptr) const {
        FeatureGrid<S> grid = encode(pair, cache ? &cache->enc : nullptr);
        Mat<S> out = forward_grid(query, grid, cache);
        if (cache) cache->grid = std::move(grid);
        return out;
    }

    /// Accumulates all parameter gradients for d(loss)/d(output) = grad_out.
    void backward(const Mat<S>& grad_out, const ForwardCache<S>& cache) {
        const auto& grid = cache.grid;
        const Eigen::Index cf = grid.channels();
        FeatureGrid<S> dgrid(grid.h, grid.w, static_cast<int>(cf));

        Mat<S> dfst = decoder_.backward(grad_out, cache.decoder);
        Mat<S> din2 = spatial_.backward(dfst, cache.spatial2);
        Mat<S> dxs = scatter_spatial(din2, grid, cache.look2, dgrid, true);
        Mat<S> dm(2, dxs.cols());
        dm.row(0) = (dxs.row(0).array() * cache.warp_pass.row(0).array() * cache.flow_sx).matrix();
        dm.row(1) = (dxs.row(1).array() * cache.warp_pass.row(1).array() * cache.flow_sy).matrix();
        Mat<S> dtin = temporal_.backward(dm, cache.temporal);
        Mat<S> dfs = dtin.bottomRows(cf);
        Mat<S> din1 = spatial_.backward(dfs, cache.spatial1);
        scatter_spatial(din1, grid, cache.look1, dgrid, false);
        encoder_.encode_backward(dgrid, cache.enc);
    }

private:
    /// Routes SpatialINR input gradients to the feature grid; optionally
    /// returns d/d(coordinates) (2 x N).
    Mat<S> scatter_spatial(const Mat<S>& din, const FeatureGrid<S>& grid, const SpatialLookup& lk,
                           FeatureGrid<S>& dgrid, bool want_coords) const {
        const Eigen::Index n = din.cols(), cf = grid.channels();
        Mat<S> dxy = want_coords ? Mat<S>::Zero(2, n) : Mat<S>();
        const bool bilinear = cfg_.inr.lookup == Lookup::Bilinear;
        const int W = grid.w;
        auto row = [W](int r, int c) { return Eigen::Index(r) * W + c; };
        for (Eigen::Index q = 0; q < n; ++q) {
            const auto& a = lk.ax[static_cast<std::size_t>(q)];
            const auto& b = lk.ay[static_cast<std::size_t>(q)];
            auto dfeat = din.col(q).head(cf);
            if (!bilinear) {
                dgrid.data.row(row(b.cell, a.cell)) += dfeat.transpose();
            } else {
                const int c1 = std::min(a.lo + 1, grid.w - 1), r1 = std::min(b.lo + 1, grid.h - 1);
                const S fx = S(a.frac), fy = S(b.frac);
                dgrid.data.row(row(b.lo, a.lo)) += ((S(1) - fx) * (S(1) - fy)) * dfeat.transpose();
                dgrid.data.row(row(b.lo, c1)) += (fx * (S(1) - fy)) * dfeat.transpose();
                dgrid.data.row(row(r1, a.lo)) += ((S(1) - fx) * fy) * dfeat.transpose();
                dgrid.data.row(row(r1, c1)) += (fx * fy) * dfeat.transpose();
                if (want_coords) {
                    const auto f00 = grid.data.row(row(b.lo, a.lo)), f01 = grid.data.row(row(b.lo, c1));
                    const auto f10 = grid.data.row(row(r1, a.lo)), f11 = grid.data.row(row(r1, c1));
                    if (!a.frac_clamped) {
                        const S dfx = ((S(1) - fy) * (f01 - f00) + fy * (f11 - f10)).dot(dfeat.transpose());
                        dxy(0, q) += dfx * S(0.5 * grid.w);
                    }
                    if (!b.frac_clamped) {
                        const S dfy = ((S(1) - fx) * (f10 - f00) + fx * (f11 - f01)).dot(dfeat.transpose());
                        dxy(1, q) += dfy * S(0.5 * grid.h);
                    }
                }
            }
            if (want_coords) {
                dxy(0, q) += din(cf, q) * S(grid.w);
                dxy(1, q) += din(cf + 1, q) * S(grid.h);
            }
        }
        return dxy;
    }

    ModelConfig cfg_;
    Encoder<S> encoder_;
    SirenNet<S> spatial_, temporal_, decoder_;
};

}  // namespace ffeinr
