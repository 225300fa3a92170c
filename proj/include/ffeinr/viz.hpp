#pragma once

// Color maps are fixed 256-entry tables built by linear RGB interpolation
// between the control points below, rounded to the nearest byte.
//   magnitude: (68,1,84) (59,82,139) (33,145,140) (94,201,98) (253,231,37)
//   error:     (255,255,255) (252,146,114) (203,24,29) (103,0,13)
// Image row r shows grid row r (increasing y downward).

#include "streamlines.hpp"

#include <png.h>

#include <charconv>
#include <csetjmp>
#include <cstdio>
#include <filesystem>

namespace ffeinr {

using Rgb = std::array<std::uint8_t, 3>;
using ColorTable = std::array<Rgb, 256>;

namespace detail {

inline ColorTable build_table(std::span<const Rgb> stops) {
    ColorTable lut{};
    const double segs = double(stops.size() - 1);
    for (std::size_t i = 0; i < 256; ++i) {
        const double pos = double(i) / 255.0 * segs;
        const auto k = std::min(static_cast<std::size_t>(pos), stops.size() - 2);
        const double f = pos - double(k);
        for (std::size_t ch = 0; ch < 3; ++ch)
            lut[i][ch] = static_cast<std::uint8_t>(
                std::lround((1 - f) * double(stops[k][ch]) + f * double(stops[k + 1][ch])));
    }
    return lut;
}

inline std::string shortest(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace detail

inline const ColorTable& magnitude_colormap() {
    static const ColorTable lut = [] {
        const Rgb stops[] = {{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}};
        return detail::build_table(stops);
    }();
    return lut;
}

inline const ColorTable& error_colormap() {
    static const ColorTable lut = [] {
        const Rgb stops[] = {{255, 255, 255}, {252, 146, 114}, {203, 24, 29}, {103, 0, 13}};
        return detail::build_table(stops);
    }();
    return lut;
}

struct Image {
    std::size_t width = 0, height = 0;
    std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel
    /// Value range mapped onto the color table ends.
    double vmin = 0, vmax = 0;

    Rgb pixel(std::size_t r, std::size_t c) const {
        const auto* p = &rgb[(r * width + c) * 3];
        return {p[0], p[1], p[2]};
    }
    void set(std::size_t r, std::size_t c, Rgb v) { std::copy(v.begin(), v.end(), &rgb[(r * width + c) * 3]); }
};

/// Maps v in [lo, hi] to a table index; a degenerate range maps to 0.
inline std::size_t color_index(double v, double lo, double hi) {
    if (!(hi > lo)) return 0;
    const double u = std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
    return static_cast<std::size_t>(std::lround(u * 255.0));
}

inline Image render_values(std::size_t h, std::size_t w, std::span<const double> v, double lo, double hi,
                           const ColorTable& lut) {
    Image img{w, h, std::vector<std::uint8_t>(h * w * 3), lo, hi};
    for (std::size_t i = 0; i < h * w; ++i) img.set(i / w, i % w, lut[color_index(v[i], lo, hi)]);
    return img;
}

/// Speed sqrt(u_x^2 + u_y^2) for C >= 2, the scalar itself for C == 1.
inline std::vector<double> magnitude(const FrameView& f) {
    std::vector<double> out(f.h * f.w);
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (f.c == 1) {
            out[i] = f.data[i];
        } else {
            const double a = f.data[i * f.c], b = f.data[i * f.c + 1];
            out[i] = std::sqrt(a * a + b * b);
        }
    }
    return out;
}

/// Magnitude map over [min(0, lo), hi] of the frame.
inline Image render_magnitude_map(const FrameView& f) {
    require(f.h > 0 && f.w > 0 && f.c > 0 && !f.data.empty(), "cannot render an empty frame");
    const auto m = magnitude(f);
    const auto [lo, hi] = std::minmax_element(m.begin(), m.end());
    return render_values(f.h, f.w, m, std::min(0.0, *lo), *hi, magnitude_colormap());
}

inline std::vector<double> error_magnitude(const FrameView& pred, const FrameView& gt) {
    if (pred.h != gt.h || pred.w != gt.w || pred.c != gt.c) throw ArgumentError("error map: shape mismatch");
    require(pred.h > 0 && pred.w > 0 && pred.c > 0, "cannot render an empty frame");
    std::vector<double> out(pred.h * pred.w);
    for (std::size_t i = 0; i < out.size(); ++i) {
        double s = 0;
        for (std::size_t ch = 0; ch < pred.c; ++ch) {
            const double d = double(pred.data[i * pred.c + ch]) - double(gt.data[i * gt.c + ch]);
            s += d * d;
        }
        out[i] = std::sqrt(s);
    }
    return out;
}

/// Error panels for several predictions of the same ground truth, sharing
/// one scale [0, max error over all panels].
inline std::vector<Image> render_error_maps(const std::vector<FrameView>& preds, const FrameView& gt) {
    std::vector<std::vector<double>> errs;
    double hi = 0;
    for (const auto& p : preds) {
        errs.push_back(error_magnitude(p, gt));
        hi = std::max(hi, *std::max_element(errs.back().begin(), errs.back().end()));
    }
    std::vector<Image> out;
    for (const auto& e : errs) out.push_back(render_values(gt.h, gt.w, e, 0.0, hi, error_colormap()));
    return out;
}

inline Image render_error_map(const FrameView& pred, const FrameView& gt) {
    return render_error_maps({pred}, gt).front();
}

/// Draws streamlines as 1-pixel polylines on top of `img`, which must cover
/// the frame's extents node-for-node.
inline void draw_streamlines(Image& img, const Extents& e, const std::vector<Streamline>& lines,
                             Rgb color = {0, 0, 0}) {
    auto to_px = [&](const Point2& p) {
        return Point2{(p[0] - e.x_min) / (e.x_max - e.x_min) * double(img.width - 1),
                      (p[1] - e.y_min) / (e.y_max - e.y_min) * double(img.height - 1)};
    };
    auto plot = [&](double x, double y) {
        const long c = std::lround(x), r = std::lround(y);
        if (c >= 0 && r >= 0 && std::size_t(c) < img.width && std::size_t(r) < img.height)
            img.set(std::size_t(r), std::size_t(c), color);
    };
    for (const auto& line : lines) {
        for (std::size_t i = 0; i < line.points.size(); ++i) {
            const Point2 b = to_px(line.points[i]);
            const Point2 a = i ? to_px(line.points[i - 1]) : b;
            const int n = std::max(1, static_cast<int>(std::ceil(std::max(std::abs(b[0] - a[0]), std::abs(b[1] - a[1])))));
            for (int k = 0; k <= n; ++k) {
                const double f = double(k) / n;
                plot(a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1]));
            }
        }
    }
}

/// Writes an 8-bit RGB PNG with the value range stored as text chunks.
inline void write_png(const Image& img, const std::filesystem::path& path) {
    require(img.width > 0 && img.height > 0 && img.rgb.size() == img.width * img.height * 3, "invalid image");
    FILE* fp = std::fopen(path.string().c_str(), "wb");
    if (!fp) throw IoError("cannot open " + path.string() + " for writing");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        std::fclose(fp);
        throw IoError("libpng initialisation failed");
    }
    std::string lo = detail::shortest(img.vmin), hi = detail::shortest(img.vmax);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw IoError("failed writing PNG " + path.string());
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_text text[2]{};
    text[0].compression = text[1].compression = PNG_TEXT_COMPRESSION_NONE;
    text[0].key = const_cast<char*>("vmin");
    text[0].text = lo.data();
    text[1].key = const_cast<char*>("vmax");
    text[1].text = hi.data();
    png_set_text(png, info, text, 2);
    png_write_info(png, info);
    for (std::size_t r = 0; r < img.height; ++r)
        png_write_row(png, const_cast<png_bytep>(&img.rgb[r * img.width * 3]));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    if (std::fclose(fp) != 0) throw IoError("failed closing " + path.string());
}

/// Reads an 8-bit RGB PNG written by write_png, including the value range.
inline Image read_png(const std::filesystem::path& path) {
    FILE* fp = std::fopen(path.string().c_str(), "rb");
    if (!fp) throw IoError("cannot open " + path.string());
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        std::fclose(fp);
        throw IoError("libpng initialisation failed");
    }
    Image img;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw FormatError("failed reading PNG " + path.string());
    }
    png_init_io(png, fp);
    png_read_info(png, info);
    if (png_get_color_type(png, info) != PNG_COLOR_TYPE_RGB || png_get_bit_depth(png, info) != 8)
        png_error(png, "expected 8-bit RGB");
    img.width = png_get_image_width(png, info);
    img.height = png_get_image_height(png, info);
    img.rgb.resize(img.width * img.height * 3);
    for (std::size_t r = 0; r < img.height; ++r) png_read_row(png, &img.rgb[r * img.width * 3], nullptr);
    png_read_end(png, info);
    png_textp text = nullptr;
    int n = 0;
    png_get_text(png, info, &text, &n);
    for (int i = 0; i < n; ++i) {
        if (std::string_view(text[i].key) == "vmin") img.vmin = std::strtod(text[i].text, nullptr);
        if (std::string_view(text[i].key) == "vmax") img.vmax = std::strtod(text[i].text, nullptr);
    }
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

}  // namespace ffeinr
