#pragma once

#include "flow_field.hpp"

namespace ffeinr {

/// One (H, W, C) slice of a field, with the domain it covers.
struct FrameView {
    std::size_t h = 0, w = 0, c = 0;
    std::span<const float> data;
    Extents extents;

    float at(std::size_t r, std::size_t col, std::size_t ch) const { return data[(r * w + col) * c + ch]; }
    bool contains(double x, double y) const {
        return x >= extents.x_min && x <= extents.x_max && y >= extents.y_min && y <= extents.y_max;
    }
};

inline FrameView frame_view(const FlowField& f, std::size_t t) {
    require(t < f.dims.t, "frame index out of range");
    return {f.dims.h, f.dims.w, f.dims.c, f.frame(t), f.extents};
}

using Point2 = std::array<double, 2>;

struct Streamline {
    Point2 seed{};
    std::vector<Point2> points;
};

/// Bilinear velocity (channels 0 and 1) at domain point (x, y); the point is
/// clamped to the domain.
inline Point2 sample_velocity(const FrameView& f, double x, double y) {
    const auto& e = f.extents;
    const double u = std::clamp((x - e.x_min) / (e.x_max - e.x_min), 0.0, 1.0) * double(f.w - 1);
    const double v = std::clamp((y - e.y_min) / (e.y_max - e.y_min), 0.0, 1.0) * double(f.h - 1);
    const auto c0 = std::min(static_cast<std::size_t>(u), f.w - 2);
    const auto r0 = std::min(static_cast<std::size_t>(v), f.h - 2);
    const double a = u - double(c0), b = v - double(r0);
    Point2 out{};
    for (std::size_t ch = 0; ch < 2; ++ch) {
        const double top = (1 - a) * f.at(r0, c0, ch) + a * f.at(r0, c0 + 1, ch);
        const double bot = (1 - a) * f.at(r0 + 1, c0, ch) + a * f.at(r0 + 1, c0 + 1, ch);
        out[ch] = (1 - b) * top + b * bot;
    }
    return out;
}

inline constexpr double kStagnationSpeed = 1e-9;

/// Integrates dx/ds = u(x) with classical RK4 from each seed. A line stops
/// when the next point would leave the domain, after `max_steps` steps, or
/// where |u| < 1e-9.
inline std::vector<Streamline> trace_streamlines(const FrameView& f, const std::vector<Point2>& seeds, double step,
                                                 int max_steps) {
    require(f.c >= 2, "streamlines need a vector field (>= 2 channels)");
    require(f.h >= 2 && f.w >= 2, "streamlines need at least a 2x2 grid");
    require(step > 0 && std::isfinite(step), "step must be positive");
    require(max_steps >= 0, "max_steps must be >= 0");
    for (const auto& s : seeds)
        if (!f.contains(s[0], s[1])) throw ArgumentError("streamline seed outside the domain");

    std::vector<Streamline> out;
    out.reserve(seeds.size());
    for (const auto& s : seeds) {
        Streamline line{s, {s}};
        Point2 p = s;
        for (int i = 0; i < max_steps; ++i) {
            const Point2 k1 = sample_velocity(f, p[0], p[1]);
            if (std::hypot(k1[0], k1[1]) < kStagnationSpeed) break;
            const Point2 k2 = sample_velocity(f, p[0] + 0.5 * step * k1[0], p[1] + 0.5 * step * k1[1]);
            const Point2 k3 = sample_velocity(f, p[0] + 0.5 * step * k2[0], p[1] + 0.5 * step * k2[1]);
            const Point2 k4 = sample_velocity(f, p[0] + step * k3[0], p[1] + step * k3[1]);
            const Point2 next{p[0] + step / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]),
                              p[1] + step / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])};
            if (!f.contains(next[0], next[1])) break;
            line.points.push_back(next);
            p = next;
        }
        out.push_back(std::move(line));
    }
    return out;
}

/// `count` seeds drawn uniformly from the domain shrunk by 5% of its span on
/// every side.
inline std::vector<Point2> random_seeds(const Extents& e, std::size_t count, std::uint64_t seed) {
    Rng rng(seed);
    const double mx = 0.05 * (e.x_max - e.x_min), my = 0.05 * (e.y_max - e.y_min);
    std::uniform_real_distribution<double> ux(e.x_min + mx, e.x_max - mx), uy(e.y_min + my, e.y_max - my);
    std::vector<Point2> out(count);
    for (auto& p : out) {
        p[0] = ux(rng);
        p[1] = uy(rng);
    }
    return out;
}

}  // namespace ffeinr
