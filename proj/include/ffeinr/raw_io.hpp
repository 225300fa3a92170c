#pragma once

// FFNR raw field format (little-endian):
//   0..3   magic "FFNR"
//   4..7   u32 version (1)
//   8..23  u32 T, H, W, C
//   24..55 f64 x_min, x_max, y_min, y_max
//   56..63 f64 dt
//   64..   T*H*W*C f32 in (t, row, col, channel) order
//   then C null-terminated channel names

#include "binary.hpp"
#include "flow_field.hpp"

namespace ffeinr {

inline constexpr std::string_view kRawMagic = "FFNR";
inline constexpr std::uint32_t kRawVersion = 1;
inline constexpr std::size_t kRawHeaderSize = 64;

inline bin::Bytes encode_raw(const FlowField& f) {
    f.validate();
    bin::Writer w;
    w.raw(kRawMagic);
    w.put(kRawVersion);
    for (auto d : {f.dims.t, f.dims.h, f.dims.w, f.dims.c}) w.put(static_cast<std::uint32_t>(d));
    for (double e : {f.extents.x_min, f.extents.x_max, f.extents.y_min, f.extents.y_max}) w.put(e);
    w.put(f.dt);
    w.array(std::span<const float>(f.values));
    for (const auto& n : f.channel_names) w.cstring(n);
    return w.take();
}

inline FlowField decode_raw(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::string_view(reinterpret_cast<const char*>(bytes.data()), 4) != kRawMagic)
        throw FormatError("not an FFNR file (bad magic)");
    bin::Reader r(bytes);
    r.raw(4);
    if (bytes.size() < kRawHeaderSize) throw TruncationError("FFNR header truncated");
    const auto version = r.get<std::uint32_t>();
    if (version != kRawVersion) throw FormatError("unsupported FFNR version " + std::to_string(version));
    FlowField f;
    f.dims.t = r.get<std::uint32_t>();
    f.dims.h = r.get<std::uint32_t>();
    f.dims.w = r.get<std::uint32_t>();
    f.dims.c = r.get<std::uint32_t>();
    f.extents.x_min = r.get<double>();
    f.extents.x_max = r.get<double>();
    f.extents.y_min = r.get<double>();
    f.extents.y_max = r.get<double>();
    f.dt = r.get<double>();
    const std::size_t n = f.dims.size();
    if (r.remaining() / sizeof(float) < n)
        throw TruncationError("FFNR payload shorter than T*H*W*C = " + std::to_string(n) + " values");
    f.values.resize(n);
    r.array(std::span<float>(f.values));
    try {
        for (std::size_t ch = 0; ch < f.dims.c; ++ch) f.channel_names.push_back(r.cstring());
    } catch (const TruncationError&) {
        throw TruncationError("FFNR channel-name block truncated (dims inconsistent with payload length)");
    }
    if (!r.done()) throw TruncationError("FFNR file has trailing bytes (dims inconsistent with payload length)");
    for (float v : f.values)
        if (!std::isfinite(v)) throw DataError("FFNR payload contains non-finite values");
    f.validate();
    return f;
}

inline void save_raw(const FlowField& f, const std::filesystem::path& path) {
    const auto bytes = encode_raw(f);
    bin::write_file(path, bytes);
}

inline FlowField load_raw(const std::filesystem::path& path) { return decode_raw(bin::read_file(path)); }

}  // namespace ffeinr
