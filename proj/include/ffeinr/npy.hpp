#pragma once

// Minimal NumPy .npy (format 1.0/2.0) reader and writer for little-endian
// float32/float64 C-order arrays, used to bring external datasets in and out.

#include "binary.hpp"
#include "flow_field.hpp"

#include <regex>

namespace ffeinr {

struct NpyArray {
    std::vector<std::size_t> shape;
    std::vector<float> values;
};

inline constexpr std::uint8_t kNpyMagic[] = {0x93, 'N', 'U', 'M', 'P', 'Y'};

inline NpyArray decode_npy(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 10 || !std::equal(std::begin(kNpyMagic), std::end(kNpyMagic), bytes.begin()))
        throw FormatError("not a .npy file (bad magic)");
    bin::Reader r(bytes);
    r.raw(6);
    const auto major = r.get<std::uint8_t>();
    r.get<std::uint8_t>();
    std::size_t header_len = 0;
    if (major == 1) header_len = r.get<std::uint16_t>();
    else if (major == 2 || major == 3) header_len = r.get<std::uint32_t>();
    else throw FormatError("unsupported .npy version");
    const auto hb = r.raw(header_len);
    const std::string header(reinterpret_cast<const char*>(hb.data()), hb.size());

    std::smatch m;
    if (!std::regex_search(header, m, std::regex(R"('descr'\s*:\s*'([^']*)')")))
        throw FormatError(".npy header lacks descr");
    const std::string descr = m[1];
    if (descr != "<f4" && descr != "<f8") throw FormatError(".npy dtype must be <f4 or <f8, got " + descr);
    if (std::regex_search(header, std::regex(R"('fortran_order'\s*:\s*True)")))
        throw FormatError(".npy arrays must be C-ordered");
    if (!std::regex_search(header, m, std::regex(R"('shape'\s*:\s*\(([^)]*)\))")))
        throw FormatError(".npy header lacks shape");
    NpyArray a;
    const std::string dims = m[1];
    const std::regex number(R"(\d+)");
    for (std::sregex_iterator it(dims.begin(), dims.end(), number), end; it != end; ++it)
        a.shape.push_back(std::stoull(it->str()));
    std::size_t n = 1;
    for (auto d : a.shape) n *= d;
    a.values.resize(n);
    if (descr == "<f4") {
        if (r.remaining() != n * 4) throw TruncationError(".npy payload size does not match shape");
        r.array(std::span<float>(a.values));
    } else {
        if (r.remaining() != n * 8) throw TruncationError(".npy payload size does not match shape");
        std::vector<double> tmp(n);
        r.array(std::span<double>(tmp));
        std::transform(tmp.begin(), tmp.end(), a.values.begin(), [](double v) { return static_cast<float>(v); });
    }
    return a;
}

inline bin::Bytes encode_npy(const NpyArray& a) {
    std::string shape;
    for (auto d : a.shape) shape += std::to_string(d) + ", ";
    if (a.shape.size() > 1) shape.erase(shape.size() - 2);
    else if (!a.shape.empty()) shape.pop_back();
    std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': (" + shape + "), }";
    // pad so the payload starts on a 64-byte boundary
    const std::size_t total = 10 + header.size() + 1;
    header.append((64 - total % 64) % 64, ' ');
    header += '\n';
    bin::Writer w;
    w.raw(kNpyMagic);
    w.put(std::uint8_t{1});
    w.put(std::uint8_t{0});
    w.put(static_cast<std::uint16_t>(header.size()));
    w.raw(header);
    w.array(std::span<const float>(a.values));
    return w.take();
}

/// A (T, H, W, C) or (T, H, W) array becomes a field with the given metadata.
inline FlowField field_from_npy(const NpyArray& a, Extents e, double dt, std::vector<std::string> names) {
    if (a.shape.size() != 3 && a.shape.size() != 4) throw ArgumentError(".npy array must be (T,H,W) or (T,H,W,C)");
    const Dims d{a.shape[0], a.shape[1], a.shape[2], a.shape.size() == 4 ? a.shape[3] : 1};
    if (names.empty())
        for (std::size_t ch = 0; ch < d.c; ++ch)
            names.push_back(d.c == 2 ? (ch ? "u_y" : "u_x") : "c" + std::to_string(ch));
    FlowField f(d, e, dt, std::move(names));
    f.values = a.values;
    f.validate();
    return f;
}

inline NpyArray npy_from_field(const FlowField& f) {
    return {{f.dims.t, f.dims.h, f.dims.w, f.dims.c}, f.values};
}

}  // namespace ffeinr
