#pragma once

// Flat `key = value` configuration text shared by config files, checkpoints
// and archives. `#` starts a comment.

#include "inr.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

namespace ffeinr {

struct TrainConfig {
    int sx = 4;
    int st = 2;
    int iters = 7500;
    int batch = 16;
    int patch = 16;
    /// Supervised lattice points per sample (0 = full patch lattice).
    int queries = 0;
    double lr = 1e-4;
    std::vector<int> lr_milestones{4000, 6000};
    double lr_decay = 0.5;
    double beta1 = 0.9;
    double beta2 = 0.99;
    double adam_eps = 1e-8;
    double charbonnier_eps = 1e-3;
    std::uint64_t seed = 0;
    double val_fraction = 0.1;
    bool two_stage = false;
    int stage2_iters = 0;
    int stage2_s_min = 2, stage2_s_max = 4;
    int stage2_t_min = 2, stage2_t_max = 8;

    void validate() const {
        require(sx >= 1 && st >= 1, "scale factors must be >= 1");
        require(iters >= 1, "iters must be >= 1");
        require(batch >= 1 && patch >= 1 && queries >= 0, "batch/patch must be >= 1");
        require(lr > 0, "lr must be positive");
        require(beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1, "adam betas must lie in (0,1)");
        require(charbonnier_eps > 0, "charbonnier_eps must be positive");
        require(val_fraction >= 0 && val_fraction < 1, "val_fraction must lie in [0,1)");
        require(stage2_iters >= 0, "stage2_iters must be >= 0");
        require(stage2_s_min >= 1 && stage2_s_min <= stage2_s_max, "invalid stage2 spatial range");
        require(stage2_t_min >= 1 && stage2_t_min <= stage2_t_max, "invalid stage2 temporal range");
    }

    double lr_at(int iteration) const {
        double v = lr;
        for (int m : lr_milestones)
            if (iteration >= m) v *= lr_decay;
        return v;
    }
};

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
};

namespace cfgtext {

inline std::string fmt(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline double to_double(const std::string& key, const std::string& v) {
    double out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        throw ArgumentError("config key '" + key + "': expected a number, got '" + v + "'");
    return out;
}

inline long long to_int(const std::string& key, const std::string& v) {
    long long out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        throw ArgumentError("config key '" + key + "': expected an integer, got '" + v + "'");
    return out;
}

inline std::uint64_t to_uint(const std::string& key, const std::string& v) {
    std::uint64_t out = 0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        throw ArgumentError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
    return out;
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw ArgumentError("config key '" + key + "': expected a boolean, got '" + v + "'");
}

inline std::vector<int> to_int_list(const std::string& key, const std::string& v) {
    std::vector<int> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(static_cast<int>(to_int(key, item)));
    }
    return out;
}

inline std::map<std::string, std::string> parse_pairs(std::string_view text) {
    std::map<std::string, std::string> kv;
    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto h = line.find('#'); h != std::string::npos) line.erase(h);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ArgumentError("config line " + std::to_string(line_no) + ": expected 'key = value'");
        kv[trim(std::string_view(line).substr(0, eq))] = trim(std::string_view(line).substr(eq + 1));
    }
    return kv;
}

}  // namespace cfgtext

/// Applies `key = value` pairs onto `cfg`; unknown keys are an error.
inline void apply_config_pairs(RunConfig& cfg, const std::map<std::string, std::string>& kv) {
    using namespace cfgtext;
    auto& t = cfg.train;
    auto& e = cfg.model.encoder;
    auto& n = cfg.model.inr;
    for (const auto& [k, v] : kv) {
        auto I = [&] { return static_cast<int>(to_int(k, v)); };
        if (k == "sx") t.sx = I();
        else if (k == "st") t.st = I();
        else if (k == "iters") t.iters = I();
        else if (k == "batch") t.batch = I();
        else if (k == "patch") t.patch = I();
        else if (k == "queries") t.queries = I();
        else if (k == "lr") t.lr = to_double(k, v);
        else if (k == "lr_milestones") t.lr_milestones = to_int_list(k, v);
        else if (k == "lr_decay") t.lr_decay = to_double(k, v);
        else if (k == "beta1") t.beta1 = to_double(k, v);
        else if (k == "beta2") t.beta2 = to_double(k, v);
        else if (k == "adam_eps") t.adam_eps = to_double(k, v);
        else if (k == "charbonnier_eps") t.charbonnier_eps = to_double(k, v);
        else if (k == "seed") t.seed = to_uint(k, v);
        else if (k == "val_fraction") t.val_fraction = to_double(k, v);
        else if (k == "two_stage") t.two_stage = to_bool(k, v);
        else if (k == "stage2_iters") t.stage2_iters = I();
        else if (k == "stage2_s_min") t.stage2_s_min = I();
        else if (k == "stage2_s_max") t.stage2_s_max = I();
        else if (k == "stage2_t_min") t.stage2_t_min = I();
        else if (k == "stage2_t_max") t.stage2_t_max = I();
        else if (k == "c_f") e.c_f = I();
        else if (k == "n_blocks") e.n_blocks = I();
        else if (k == "lstm_hidden") e.lstm_hidden = I();
        else if (k == "kernel") e.kernel = I();
        else if (k == "spatial_width") n.spatial_width = I();
        else if (k == "spatial_layers") n.spatial_layers = I();
        else if (k == "temporal_width") n.temporal_width = I();
        else if (k == "temporal_layers") n.temporal_layers = I();
        else if (k == "decoder_width") n.decoder_width = I();
        else if (k == "decoder_layers") n.decoder_layers = I();
        else if (k == "omega0") n.omega0 = to_double(k, v);
        else if (k == "flow_reference") n.flow_reference = I();
        else if (k == "lookup") {
            if (v == "nearest") n.lookup = Lookup::Nearest;
            else if (v == "bilinear") n.lookup = Lookup::Bilinear;
            else throw ArgumentError("config key 'lookup': expected nearest|bilinear");
        } else if (k == "channels") cfg.model.channels = I();
        else throw ArgumentError("unknown config key '" + k + "'");
    }
}

inline RunConfig parse_config(std::string_view text, RunConfig base = {}) {
    apply_config_pairs(base, cfgtext::parse_pairs(text));
    return base;
}

inline RunConfig load_config(const std::filesystem::path& path, RunConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), std::move(base));
}

inline std::string to_text(const RunConfig& cfg) {
    using cfgtext::fmt;
    const auto& t = cfg.train;
    const auto& e = cfg.model.encoder;
    const auto& n = cfg.model.inr;
    std::ostringstream o;
    std::string ms;
    for (std::size_t i = 0; i < t.lr_milestones.size(); ++i)
        ms += (i ? "," : "") + std::to_string(t.lr_milestones[i]);
    o << "# training\n"
      << "sx = " << t.sx << "\nst = " << t.st << "\niters = " << t.iters << "\nbatch = " << t.batch
      << "\npatch = " << t.patch << "\nqueries = " << t.queries << "\nlr = " << fmt(t.lr)
      << "\nlr_milestones = " << ms << "\nlr_decay = " << fmt(t.lr_decay) << "\nbeta1 = " << fmt(t.beta1)
      << "\nbeta2 = " << fmt(t.beta2) << "\nadam_eps = " << fmt(t.adam_eps)
      << "\ncharbonnier_eps = " << fmt(t.charbonnier_eps) << "\nseed = " << t.seed
      << "\nval_fraction = " << fmt(t.val_fraction) << "\ntwo_stage = " << (t.two_stage ? "true" : "false")
      << "\nstage2_iters = " << t.stage2_iters << "\nstage2_s_min = " << t.stage2_s_min
      << "\nstage2_s_max = " << t.stage2_s_max << "\nstage2_t_min = " << t.stage2_t_min
      << "\nstage2_t_max = " << t.stage2_t_max << "\n# encoder\n"
      << "c_f = " << e.c_f << "\nn_blocks = " << e.n_blocks << "\nlstm_hidden = " << e.lstm_hidden
      << "\nkernel = " << e.kernel << "\n# implicit networks\n"
      << "spatial_width = " << n.spatial_width << "\nspatial_layers = " << n.spatial_layers
      << "\ntemporal_width = " << n.temporal_width << "\ntemporal_layers = " << n.temporal_layers
      << "\ndecoder_width = " << n.decoder_width << "\ndecoder_layers = " << n.decoder_layers
      << "\nomega0 = " << fmt(n.omega0) << "\nlookup = " << (n.lookup == Lookup::Bilinear ? "bilinear" : "nearest")
      << "\nflow_reference = " << n.flow_reference << "\nchannels = " << cfg.model.channels << "\n";
    return o.str();
}

}  // namespace ffeinr
