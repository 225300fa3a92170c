#pragma once

// Checkpoint container (little-endian):
//   magic "FFNRCKPT", u32 version, u32 config length, UTF-8 config text,
//   u32 entry count, then per entry: u32 name length + name, u32 rank,
//   u32 dims[rank], f32 payload in storage (column-major) order.

#include "binary.hpp"
#include "config.hpp"

#include <set>

namespace ffeinr {

inline constexpr std::string_view kCkptMagic = "FFNRCKPT";
inline constexpr std::uint32_t kCkptVersion = 1;

struct Checkpoint {
    RunConfig config;
    NormStats norm;
    int iteration = 0;
    std::vector<float> loss_history;
    /// Factor pairs drawn during second-stage training, in order.
    std::vector<Factors> stage2_factors;
    Model<float> model;
};

namespace detail {

inline std::string join_doubles(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + cfgtext::fmt(v[i]);
    return s;
}

inline std::vector<double> split_doubles(const std::string& key, const std::string& s) {
    std::vector<double> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!(item = cfgtext::trim(item)).empty()) out.push_back(cfgtext::to_double(key, item));
    return out;
}

inline void put_tensor(bin::Writer& w, const std::string& name, const std::vector<std::uint32_t>& dims,
                       std::span<const float> payload) {
    w.lstring(name);
    w.put(static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) w.put(d);
    w.array(payload);
}

}  // namespace detail

inline bin::Bytes encode_checkpoint(Checkpoint& ck) {
    std::string text = to_text(ck.config);
    text += "# state\nmeta.iteration = " + std::to_string(ck.iteration) +
            "\nmeta.norm_offset = " + detail::join_doubles(ck.norm.offset) +
            "\nmeta.norm_scale = " + detail::join_doubles(ck.norm.scale) + "\n";

    bin::Writer w;
    w.raw(kCkptMagic);
    w.put(kCkptVersion);
    w.lstring(text);

    std::uint32_t count = 2;
    ck.model.for_each_param([&count](Param<float>&) { ++count; });
    w.put(count);
    ck.model.for_each_param([&w](Param<float>& p) {
        detail::put_tensor(w, p.name, p.shape(), std::span<const float>(p.value.data(), std::size_t(p.value.size())));
    });
    detail::put_tensor(w, "meta.loss_history", {static_cast<std::uint32_t>(ck.loss_history.size())}, ck.loss_history);
    std::vector<float> fac;
    for (auto f : ck.stage2_factors) {
        fac.push_back(static_cast<float>(f.s));
        fac.push_back(static_cast<float>(f.t));
    }
    detail::put_tensor(w, "meta.stage2_factors", {static_cast<std::uint32_t>(ck.stage2_factors.size()), 2u}, fac);
    return w.take();
}

inline Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 8 || std::string_view(reinterpret_cast<const char*>(bytes.data()), 8) != kCkptMagic)
        throw FormatError("not a checkpoint (bad magic)");
    bin::Reader r(bytes);
    r.raw(8);
    const auto version = r.get<std::uint32_t>();
    if (version != kCkptVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
    const std::string text = r.lstring();

    auto kv = cfgtext::parse_pairs(text);
    Checkpoint ck;
    auto take = [&kv](const std::string& key) {
        auto it = kv.find(key);
        if (it == kv.end()) throw FormatError("checkpoint missing '" + key + "'");
        std::string v = it->second;
        kv.erase(it);
        return v;
    };
    ck.iteration = static_cast<int>(cfgtext::to_int("meta.iteration", take("meta.iteration")));
    ck.norm.offset = detail::split_doubles("meta.norm_offset", take("meta.norm_offset"));
    ck.norm.scale = detail::split_doubles("meta.norm_scale", take("meta.norm_scale"));
    apply_config_pairs(ck.config, kv);
    ck.model = Model<float>(ck.config.model, 0);

    std::map<std::string, Param<float>*> by_name;
    ck.model.for_each_param([&by_name](Param<float>& p) { by_name[p.name] = &p; });
    std::set<std::string> seen;

    const auto count = r.get<std::uint32_t>();
    for (std::uint32_t e = 0; e < count; ++e) {
        const std::string name = r.lstring();
        const auto rank = r.get<std::uint32_t>();
        if (rank > 8) throw FormatError("implausible tensor rank for " + name);
        std::vector<std::uint32_t> dims(rank);
        std::size_t n = 1;
        for (auto& d : dims) {
            d = r.get<std::uint32_t>();
            n *= d;
        }
        std::vector<float> payload(n);
        r.array(std::span<float>(payload));
        if (name == "meta.loss_history") {
            ck.loss_history = std::move(payload);
        } else if (name == "meta.stage2_factors") {
            for (std::size_t i = 0; i + 1 < payload.size(); i += 2)
                ck.stage2_factors.push_back({static_cast<int>(payload[i]), static_cast<int>(payload[i + 1])});
        } else {
            auto it = by_name.find(name);
            if (it == by_name.end()) throw FormatError("checkpoint has unknown tensor " + name);
            if (it->second->shape() != dims) throw FormatError("checkpoint tensor shape mismatch for " + name);
            std::copy(payload.begin(), payload.end(), it->second->value.data());
            seen.insert(name);
        }
    }
    if (seen.size() != by_name.size()) throw FormatError("checkpoint is missing model tensors");
    if (!r.done()) throw FormatError("checkpoint has trailing bytes");
    return ck;
}

inline void save_checkpoint(Checkpoint& ck, const std::filesystem::path& path) {
    bin::write_file(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    return decode_checkpoint(bin::read_file(path));
}

}  // namespace ffeinr
