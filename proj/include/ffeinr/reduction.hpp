#pragma once

// Archive file (little-endian):
//   magic "FFNRARCH", u32 version, u32 section count,
//   per section: u32 tag, u64 offset, u64 length, u32 crc32 (of the section bytes),
//   then the sections: LOWR (FFNR bytes), CKPT (checkpoint bytes), META (UTF-8 text).

#include "evaluation.hpp"
#include "raw_io.hpp"

#include <zlib.h>

namespace ffeinr {

inline constexpr std::string_view kArchiveMagic = "FFNRARCH";
inline constexpr std::uint32_t kArchiveVersion = 1;

constexpr std::uint32_t fourcc(const char (&s)[5]) {
    return std::uint32_t(std::uint8_t(s[0])) | std::uint32_t(std::uint8_t(s[1])) << 8 |
           std::uint32_t(std::uint8_t(s[2])) << 16 | std::uint32_t(std::uint8_t(s[3])) << 24;
}
inline constexpr std::uint32_t kTagLowres = fourcc("LOWR");
inline constexpr std::uint32_t kTagCheckpoint = fourcc("CKPT");
inline constexpr std::uint32_t kTagMeta = fourcc("META");
inline constexpr std::size_t kArchiveSectionEntry = 4 + 8 + 8 + 4;
inline constexpr std::size_t kArchiveHeaderSize = 8 + 4 + 4 + 3 * kArchiveSectionEntry;

inline std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
    uLong c = ::crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed large buffers in pieces
    std::size_t pos = 0;
    while (pos < bytes.size()) {
        const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size() - pos, 1u << 30));
        c = ::crc32(c, bytes.data() + pos, n);
        pos += n;
    }
    return static_cast<std::uint32_t>(c);
}

struct Archive {
    FlowField low;
    bin::Bytes checkpoint;
    /// Copy of the checkpoint's normalization, kept readable without decoding the model.
    NormStats norm;
    Dims original;
    Factors factors;
    int iterations = 0;
    std::uint64_t seed = 0;

    void validate() const {
        const auto s = static_cast<std::size_t>(factors.s), t = static_cast<std::size_t>(factors.t);
        require(factors.s >= 1 && factors.t >= 1, "archive factors must be >= 1");
        const Dims expect{(original.t - 1) / t + 1, (original.h - 1) / s + 1, (original.w - 1) / s + 1, original.c};
        if (expect != low.dims) throw FormatError("archive low-res dims inconsistent with original dims and factors");
        if (norm.offset.size() != low.dims.c || norm.scale.size() != low.dims.c)
            throw FormatError("archive normalization does not match the channel count");
    }
};

inline std::string archive_meta_text(const Archive& a) {
    std::ostringstream o;
    o << "format = ffeinr-archive\n"
      << "factor_s = " << a.factors.s << "\nfactor_t = " << a.factors.t << "\niterations = " << a.iterations
      << "\nseed = " << a.seed << "\noriginal_t = " << a.original.t << "\noriginal_h = " << a.original.h
      << "\noriginal_w = " << a.original.w << "\noriginal_c = " << a.original.c
      << "\nnorm_offset = " << detail::join_doubles(a.norm.offset) << "\nnorm_scale = " << detail::join_doubles(a.norm.scale)
      << "\n";
    return o.str();
}

struct ArchiveLayout {
    std::size_t header = kArchiveHeaderSize;
    std::size_t lowres = 0, checkpoint = 0, meta = 0;
    std::size_t total() const { return header + lowres + checkpoint + meta; }
};

inline bin::Bytes encode_archive(const Archive& a, ArchiveLayout* layout = nullptr) {
    a.validate();
    const bin::Bytes low = encode_raw(a.low);
    const std::string meta = archive_meta_text(a);
    const std::span<const std::uint8_t> meta_bytes(reinterpret_cast<const std::uint8_t*>(meta.data()), meta.size());
    struct Section {
        std::uint32_t tag;
        std::span<const std::uint8_t> bytes;
    };
    const Section sections[] = {{kTagLowres, low}, {kTagCheckpoint, a.checkpoint}, {kTagMeta, meta_bytes}};

    bin::Writer w;
    w.raw(kArchiveMagic);
    w.put(kArchiveVersion);
    w.put(static_cast<std::uint32_t>(std::size(sections)));
    std::uint64_t offset = kArchiveHeaderSize;
    for (const auto& s : sections) {
        w.put(s.tag);
        w.put(offset);
        w.put(static_cast<std::uint64_t>(s.bytes.size()));
        w.put(crc32_of(s.bytes));
        offset += s.bytes.size();
    }
    for (const auto& s : sections) w.raw(s.bytes);
    if (layout) *layout = {kArchiveHeaderSize, low.size(), a.checkpoint.size(), meta.size()};
    return w.take();
}

inline Archive decode_archive(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || std::string_view(reinterpret_cast<const char*>(bytes.data()), 8) != kArchiveMagic)
        throw FormatError("not an archive (bad magic)");
    bin::Reader r(bytes);
    r.raw(8);
    const auto version = r.get<std::uint32_t>();
    if (version != kArchiveVersion) throw FormatError("unsupported archive version " + std::to_string(version));
    const auto count = r.get<std::uint32_t>();
    std::map<std::uint32_t, std::span<const std::uint8_t>> sections;
    for (std::uint32_t i = 0; i < count; ++i) {
        const auto tag = r.get<std::uint32_t>();
        const auto off = r.get<std::uint64_t>();
        const auto len = r.get<std::uint64_t>();
        const auto crc = r.get<std::uint32_t>();
        if (off > bytes.size() || len > bytes.size() - off) throw TruncationError("archive section out of bounds");
        auto sec = bytes.subspan(off, len);
        if (crc32_of(sec) != crc) throw IntegrityError("archive section CRC mismatch (corrupted archive)");
        sections[tag] = sec;
    }
    for (auto tag : {kTagLowres, kTagCheckpoint, kTagMeta})
        if (!sections.contains(tag)) throw FormatError("archive is missing a required section");

    Archive a;
    a.low = decode_raw(sections[kTagLowres]);
    a.checkpoint.assign(sections[kTagCheckpoint].begin(), sections[kTagCheckpoint].end());
    const auto& m = sections[kTagMeta];
    auto kv = cfgtext::parse_pairs(std::string_view(reinterpret_cast<const char*>(m.data()), m.size()));
    auto get = [&kv](const std::string& k) {
        auto it = kv.find(k);
        if (it == kv.end()) throw FormatError("archive META missing '" + k + "'");
        return cfgtext::to_uint(k, it->second);
    };
    a.factors = {static_cast<int>(get("factor_s")), static_cast<int>(get("factor_t"))};
    a.iterations = static_cast<int>(get("iterations"));
    a.seed = get("seed");
    a.original = {std::size_t(get("original_t")), std::size_t(get("original_h")), std::size_t(get("original_w")),
                  std::size_t(get("original_c"))};
    a.norm.offset = detail::split_doubles("norm_offset", kv.count("norm_offset") ? kv["norm_offset"] : "");
    a.norm.scale = detail::split_doubles("norm_scale", kv.count("norm_scale") ? kv["norm_scale"] : "");
    a.validate();
    return a;
}

inline void save_archive(const Archive& a, const std::filesystem::path& path) {
    bin::write_file(path, encode_archive(a));
}

inline Archive load_archive(const std::filesystem::path& path) { return decode_archive(bin::read_file(path)); }

/// Downsamples by (sx, st), trains one-stage and bundles low-res data with
/// the checkpoint.
inline Archive compress(const FlowField& high, const RunConfig& cfg, ProgressFn progress = {}) {
    high.validate();
    Archive a;
    a.low = downsample(high, cfg.train.sx, cfg.train.st);
    Checkpoint ck = train_one_stage(a.low, high, cfg, std::move(progress));
    a.checkpoint = encode_checkpoint(ck);
    a.norm = ck.norm;
    a.original = high.dims;
    a.factors = {cfg.train.sx, cfg.train.st};
    a.iterations = ck.iteration;
    a.seed = cfg.train.seed;
    return a;
}

/// compress() straight to a file. Nothing is left at `path` if training fails.
inline Archive compress_to_file(const FlowField& high, const RunConfig& cfg, const std::filesystem::path& path,
                                ProgressFn progress = {}) {
    auto tmp = path;
    tmp += ".partial";
    try {
        Archive a = compress(high, cfg, std::move(progress));
        save_archive(a, tmp);
        std::filesystem::rename(tmp, path);
        return a;
    } catch (...) {
        std::error_code ec;
        std::filesystem::remove(tmp, ec);
        throw;
    }
}

inline FlowField decompress(const Archive& a, std::size_t T, std::size_t H, std::size_t W) {
    require(T >= a.low.dims.t && H >= a.low.dims.h && W >= a.low.dims.w,
            "decompress dims must be >= the stored low-res dims");
    const Checkpoint ck = decode_checkpoint(a.checkpoint);
    return reconstruct(ck.model, ck.norm, a.low, T, H, W);
}

struct CompressionStats {
    std::size_t original_bytes = 0;
    std::size_t archive_bytes = 0;
    std::size_t data_bytes = 0;      // LOWR section
    std::size_t model_bytes = 0;     // CKPT section
    std::size_t overhead_bytes = 0;  // header + META
    double ratio = 0;
};

/// Original payload bytes (f32) over total archive bytes, with a breakdown
/// whose parts sum to the archive size.
inline CompressionStats compression_rate(const Archive& a, const FlowField& original) {
    ArchiveLayout layout;
    const auto bytes = encode_archive(a, &layout);
    CompressionStats st;
    st.original_bytes = original.values.size() * sizeof(float);
    st.archive_bytes = bytes.size();
    st.data_bytes = layout.lowres;
    st.model_bytes = layout.checkpoint;
    st.overhead_bytes = layout.header + layout.meta;
    st.ratio = static_cast<double>(st.original_bytes) / static_cast<double>(st.archive_bytes);
    return st;
}

inline double compression_ratio(std::size_t original_bytes, std::size_t stored_bytes) {
    require(stored_bytes > 0, "stored size must be positive");
    return static_cast<double>(original_bytes) / static_cast<double>(stored_bytes);
}

}  // namespace ffeinr
