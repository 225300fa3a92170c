#pragma once

#include "training.hpp"

namespace ffeinr {

/// Queries the model densely: target node i on an axis with n_low low-res
/// nodes and n target nodes sits at fractional low index i*(n_low-1)/(n-1).
/// Output is denormalized with `norm`.
inline FlowField reconstruct(const Model<float>& model, const NormStats& norm, const FlowField& low, std::size_t T,
                             std::size_t H, std::size_t W, std::size_t chunk = 8192) {
    require(low.dims.t >= 2, "reconstruction needs at least two low-res frames");
    require(T >= low.dims.t && H >= low.dims.h && W >= low.dims.w, "target dims below low-res dims");
    const FlowField low_n = apply_norm(low, norm);
    const std::size_t C = low.dims.c;
    FlowField out({T, H, W, C}, low.extents, low.dt * double(low.dims.t - 1) / double(T - 1), low.channel_names);

    std::vector<std::array<double, 2>> lattice;
    lattice.reserve(H * W);
    for (std::size_t r = 0; r < H; ++r) {
        const auto [ry, fy] = detail::interp_position(r, low.dims.h, H);
        const double y = cell_center_coord(double(ry) + fy, low.dims.h);
        for (std::size_t col = 0; col < W; ++col) {
            const auto [cx, fx] = detail::interp_position(col, low.dims.w, W);
            lattice.push_back({cell_center_coord(double(cx) + fx, low.dims.w), y});
        }
    }

    std::map<std::size_t, std::vector<std::pair<std::size_t, double>>> frames_by_pair;
    for (std::size_t i = 0; i < T; ++i) {
        const auto [p, ft] = detail::interp_position(i, low.dims.t, T);
        frames_by_pair[p].push_back({i, ft});
    }

    for (const auto& [p, frames] : frames_by_pair) {
        const FeatureGrid<float> grid = model.encode(slice_pair(low_n, p));
        for (const auto& [frame, t] : frames) {
            for (std::size_t begin = 0; begin < lattice.size(); begin += chunk) {
                const std::size_t end = std::min(lattice.size(), begin + chunk);
                QueryBatch q;
                q.xy.assign(lattice.begin() + std::ptrdiff_t(begin), lattice.begin() + std::ptrdiff_t(end));
                q.t.assign(end - begin, t);
                const Mat<float> vals = model.forward_grid(q, grid);
                for (std::size_t k = begin; k < end; ++k)
                    for (std::size_t ch = 0; ch < C; ++ch)
                        out.values[(frame * H * W + k) * C + ch] = static_cast<float>(
                            double(vals(Eigen::Index(ch), Eigen::Index(k - begin))) * norm.scale[ch] +
                            norm.offset[ch]);
            }
        }
    }
    return out;
}

enum class EvalScope {
    All,
    /// Frames strictly inside held-out slice pairs (not on a low-res frame).
    HeldOutIntermediate,
};

struct FactorEvaluation {
    Factors factors;
    MetricReport model;
    MetricReport trilinear;
    std::vector<std::size_t> frames;  // evaluated frame indices of the aligned high-res grid
};

/// Frame indices (of the aligned high-res grid for `f`) that fall in scope.
inline std::vector<std::size_t> frames_in_scope(const Dims& aligned, Factors f, std::size_t split_frame,
                                                EvalScope scope) {
    std::vector<std::size_t> frames;
    for (std::size_t i = 0; i < aligned.t; ++i) {
        if (scope == EvalScope::All) {
            frames.push_back(i);
        } else if (i > split_frame && (f.t == 1 || i % static_cast<std::size_t>(f.t) != 0)) {
            frames.push_back(i);
        }
    }
    return frames;
}

/// Downsamples `high` by each factor pair, reconstructs the aligned high-res
/// grid with the model and with trilinear interpolation, and scores both on
/// physical values.
inline std::vector<FactorEvaluation> evaluate(const Checkpoint& ck, const FlowField& high,
                                              const std::vector<Factors>& factor_list,
                                              EvalScope scope = EvalScope::All) {
    high.validate();
    std::vector<FactorEvaluation> out;
    const std::size_t split = validation_split_frame(high.dims, ck.config.train);
    for (const auto& f : factor_list) {
        require(f.s >= 1 && f.t >= 1, "evaluation factors must be >= 1");
        require((high.dims.h - 1) / std::size_t(f.s) >= 1 && (high.dims.w - 1) / std::size_t(f.s) >= 1 &&
                    (high.dims.t - 1) / std::size_t(f.t) >= 1,
                "evaluation factor exceeds grid (low-res needs >= 2 nodes per axis)");
        const FlowField low = downsample(high, f.s, f.t);
        const FlowField gt = aligned_crop(high, f);
        const FlowField pred = reconstruct(ck.model, ck.norm, low, gt.dims.t, gt.dims.h, gt.dims.w);
        const FlowField tri = trilinear_upsample(low, gt.dims.t, gt.dims.h, gt.dims.w);
        FactorEvaluation ev;
        ev.factors = f;
        ev.frames = frames_in_scope(gt.dims, f, split, scope);
        if (ev.frames.empty()) throw ArgumentError("no frames in evaluation scope for this factor pair");
        const FlowField g = select_frames(gt, ev.frames);
        ev.model = compute_report(select_frames(pred, ev.frames), g, f);
        ev.trilinear = compute_report(select_frames(tri, ev.frames), g, f);
        out.push_back(std::move(ev));
    }
    return out;
}

/// Comma-separated metrics table: factor_s, factor_t, method, psnr_db, ssim, rmse_ux, rmse_uy.
inline std::string metrics_csv(const std::vector<FactorEvaluation>& evals) {
    std::ostringstream o;
    o << "factor_s,factor_t,method,psnr_db,ssim,rmse_ux,rmse_uy\n";
    auto row = [&o](Factors f, const char* method, const MetricReport& r) {
        o << f.s << ',' << f.t << ',' << method << ',' << cfgtext::fmt(r.psnr_db) << ',' << cfgtext::fmt(r.ssim);
        for (std::size_t ch = 0; ch < 2; ++ch) o << ',' << (ch < r.rmse.size() ? cfgtext::fmt(r.rmse[ch]) : "");
        o << '\n';
    };
    for (const auto& e : evals) {
        row(e.factors, "ffeinr", e.model);
        row(e.factors, "trilinear", e.trilinear);
    }
    return o.str();
}

}  // namespace ffeinr
