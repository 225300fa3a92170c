#pragma once

// `ffeinr` command-line front end. Exit codes: 0 success, 2 usage or
// argument error, 1 runtime error.

#include "npy.hpp"
#include "reduction.hpp"
#include "viz.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace ffeinr {

/// Keeps large training buffers out of mmap so repeated allocations are not
/// returned to the kernel on every step.
inline void tune_allocator() {
#if defined(__GLIBC__)
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
}

namespace cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;

/// "4x2,2x2" -> {(4,2), (2,2)}.
inline std::vector<Factors> parse_factor_list(const std::string& text) {
    std::vector<Factors> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = cfgtext::trim(item);
        const auto x = item.find_first_of("xX");
        if (x == std::string::npos) throw ArgumentError("factor '" + item + "' must look like SxT, e.g. 4x2");
        Factors f;
        f.s = static_cast<int>(cfgtext::to_int("factors", item.substr(0, x)));
        f.t = static_cast<int>(cfgtext::to_int("factors", item.substr(x + 1)));
        if (f.s < 1 || f.t < 1) throw ArgumentError("factors must be >= 1");
        out.push_back(f);
    }
    if (out.empty()) throw ArgumentError("no factors given");
    return out;
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
    std::vector<T> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = cfgtext::trim(item);
        if constexpr (std::is_floating_point_v<T>) out.push_back(static_cast<T>(cfgtext::to_double(key, item)));
        else out.push_back(static_cast<T>(cfgtext::to_int(key, item)));
    }
    return out;
}

inline std::filesystem::path indexed_path(const std::filesystem::path& base, std::size_t i, std::size_t n) {
    if (n == 1) return base;
    auto p = base;
    p.replace_filename(base.stem().string() + "_" + std::to_string(i) + base.extension().string());
    return p;
}

struct Options {
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string config, out, in, data, ckpt, gt, factors = "4x2,2x2,4x4,4x8", scope = "all", dims, extents,
                                                  channels, csv, lookup;
    std::vector<std::string> inputs;
    int sx = 0, st = 0, iters = 0, queries = -1, frame = 0, n = 64, frames = 33, seeds = 20, max_steps = 2000,
        log_every = 100, stage2_iters = -1;
    double nu = 0.2, dt = 0.05, lr = 0, step = 0;
    bool two_stage = false;
};

inline std::uint64_t effective_seed(const Options& o) {
    if (o.seed_given) return o.seed;
    if (const char* env = std::getenv("FFEINR_SEED"); env && *env)
        return cfgtext::to_uint("FFEINR_SEED", env);
    return 0;
}

/// True when `sub` defines option `name` and it was given.
inline bool given(CLI::App& sub, const std::string& name) {
    const auto* opt = sub.get_option_no_throw(name);
    return opt && opt->count() > 0;
}

/// Config file (if any), then command-line overrides.
inline RunConfig build_config(const Options& o, CLI::App& sub) {
    RunConfig cfg;
    bool config_seed = false;
    if (!o.config.empty()) {
        const auto text = bin::read_file(o.config);
        const auto kv = cfgtext::parse_pairs(std::string_view(reinterpret_cast<const char*>(text.data()), text.size()));
        apply_config_pairs(cfg, kv);
        config_seed = kv.contains("seed");
    }
    // precedence: --seed, then the config file, then $FFEINR_SEED
    if (o.seed_given || !config_seed) cfg.train.seed = effective_seed(o);
    if (given(sub, "--sx")) cfg.train.sx = o.sx;
    if (given(sub, "--st")) cfg.train.st = o.st;
    if (given(sub, "--iters")) cfg.train.iters = o.iters;
    if (given(sub, "--lr")) cfg.train.lr = o.lr;
    if (given(sub, "--queries")) cfg.train.queries = o.queries;
    if (given(sub, "--two-stage")) cfg.train.two_stage = o.two_stage;
    if (given(sub, "--stage2-iters")) cfg.train.stage2_iters = o.stage2_iters;
    if (given(sub, "--lookup")) apply_config_pairs(cfg, {{"lookup", o.lookup}});
    cfg.train.validate();
    return cfg;
}

inline ProgressFn progress_printer(std::ostream& err, int every) {
    if (every <= 0) return {};
    return [&err, every](int it, double loss) {
        if (it % every == 0) err << "iter " << it << " loss " << cfgtext::fmt(loss) << '\n';
    };
}

inline FlowField load_field(const std::string& path) {
    if (path.empty()) throw ArgumentError("missing input field (--in/--data)");
    return load_raw(path);
}

inline void require_out(const Options& o) {
    if (o.out.empty()) throw ArgumentError("--out is required");
}

inline int cmd_gen_synthetic(const Options& o, std::ostream& out) {
    require_out(o);
    const FlowField f = gen_taylor_green(std::size_t(o.n), std::size_t(o.frames), o.nu, o.dt);
    save_raw(f, o.out);
    out << "wrote " << o.out << " (" << f.dims.t << "x" << f.dims.h << "x" << f.dims.w << "x" << f.dims.c << ")\n";
    return kExitOk;
}

inline int cmd_convert(const Options& o, std::ostream& out) {
    require_out(o);
    if (o.in.empty()) throw ArgumentError("--in is required");
    const std::filesystem::path in(o.in), dst(o.out);
    if (in.extension() == ".npy") {
        Extents e{0, 1, 0, 1};
        if (!o.extents.empty()) {
            const auto v = parse_list<double>("extents", o.extents);
            if (v.size() != 4) throw ArgumentError("--extents needs x_min,x_max,y_min,y_max");
            e = {v[0], v[1], v[2], v[3]};
        }
        std::vector<std::string> names;
        if (!o.channels.empty()) {
            std::stringstream ss(o.channels);
            for (std::string s; std::getline(ss, s, ',');) names.push_back(cfgtext::trim(s));
        }
        const FlowField f = field_from_npy(decode_npy(bin::read_file(in)), e, o.dt, std::move(names));
        save_raw(f, dst);
        out << "wrote " << dst.string() << '\n';
    } else if (dst.extension() == ".npy") {
        bin::write_file(dst, encode_npy(npy_from_field(load_raw(in))));
        out << "wrote " << dst.string() << '\n';
    } else {
        throw ArgumentError("convert: one side must be a .npy file");
    }
    return kExitOk;
}

inline int cmd_downsample(const Options& o, CLI::App& sub, std::ostream& out) {
    require_out(o);
    const FlowField f = load_field(o.in.empty() ? o.data : o.in);
    const int sx = given(sub, "--sx") ? o.sx : 4, st = given(sub, "--st") ? o.st : 2;
    const FlowField low = downsample(f, sx, st);
    save_raw(low, o.out);
    out << "wrote " << o.out << " (" << low.dims.t << "x" << low.dims.h << "x" << low.dims.w << "x" << low.dims.c
        << ")\n";
    return kExitOk;
}

inline int cmd_train(const Options& o, CLI::App& sub, std::ostream& out, std::ostream& err) {
    require_out(o);
    const RunConfig cfg = build_config(o, sub);
    const FlowField high = load_field(o.data.empty() ? o.in : o.data);
    const FlowField low = downsample(high, cfg.train.sx, cfg.train.st);
    Checkpoint ck = cfg.train.two_stage ? train_two_stage(low, high, cfg, progress_printer(err, o.log_every))
                                        : train_one_stage(low, high, cfg, progress_printer(err, o.log_every));
    save_checkpoint(ck, o.out);
    out << "wrote checkpoint " << o.out << " after " << ck.iteration << " iterations\n";
    return kExitOk;
}

inline int cmd_evaluate(const Options& o, std::ostream& out) {
    if (o.ckpt.empty()) throw ArgumentError("--ckpt is required");
    const Checkpoint ck = load_checkpoint(o.ckpt);
    const FlowField high = load_field(o.data.empty() ? o.in : o.data);
    EvalScope scope;
    if (o.scope == "all") scope = EvalScope::All;
    else if (o.scope == "heldout") scope = EvalScope::HeldOutIntermediate;
    else throw ArgumentError("--scope must be all or heldout");
    const std::string csv = metrics_csv(evaluate(ck, high, parse_factor_list(o.factors), scope));
    if (o.out.empty()) {
        out << csv;
    } else {
        std::ofstream f(o.out);
        if (!(f << csv)) throw IoError("cannot write " + o.out);
        out << "wrote " << o.out << '\n';
    }
    return kExitOk;
}

inline int cmd_compress(const Options& o, CLI::App& sub, std::ostream& out, std::ostream& err) {
    require_out(o);
    const RunConfig cfg = build_config(o, sub);
    const FlowField high = load_field(o.in.empty() ? o.data : o.in);
    const Archive a = compress_to_file(high, cfg, o.out, progress_printer(err, o.log_every));
    const auto st = compression_rate(a, high);
    out << "wrote " << o.out << "\noriginal_bytes = " << st.original_bytes << "\narchive_bytes = " << st.archive_bytes
        << "\ndata_bytes = " << st.data_bytes << "\nmodel_bytes = " << st.model_bytes
        << "\noverhead_bytes = " << st.overhead_bytes << "\ncompression_rate = " << cfgtext::fmt(st.ratio) << ":1\n";
    return kExitOk;
}

inline int cmd_decompress(const Options& o, std::ostream& out) {
    require_out(o);
    if (o.in.empty()) throw ArgumentError("--in is required");
    const Archive a = load_archive(o.in);
    Dims d = a.original;
    if (!o.dims.empty()) {
        const auto v = parse_list<std::size_t>("dims", o.dims);
        if (v.size() != 3) throw ArgumentError("--dims needs T,H,W");
        d = {v[0], v[1], v[2], d.c};
    }
    const FlowField f = decompress(a, d.t, d.h, d.w);
    save_raw(f, o.out);
    out << "wrote " << o.out << " (" << f.dims.t << "x" << f.dims.h << "x" << f.dims.w << "x" << f.dims.c << ")\n";
    return kExitOk;
}

inline int cmd_plot(const Options& o, std::ostream& out) {
    require_out(o);
    if (o.inputs.empty()) throw ArgumentError("--in is required");
    std::vector<FlowField> fields;
    for (const auto& p : o.inputs) fields.push_back(load_raw(p));
    const auto frame = static_cast<std::size_t>(o.frame);
    std::vector<Image> images;
    if (o.gt.empty()) {
        for (const auto& f : fields) images.push_back(render_magnitude_map(frame_view(f, frame)));
    } else {
        const FlowField gt = load_raw(o.gt);
        std::vector<FrameView> views;
        for (const auto& f : fields) views.push_back(frame_view(f, frame));
        images = render_error_maps(views, frame_view(gt, frame));
    }
    for (std::size_t i = 0; i < images.size(); ++i) {
        const auto path = indexed_path(o.out, i, images.size());
        write_png(images[i], path);
        out << "wrote " << path.string() << " (range " << cfgtext::fmt(images[i].vmin) << " .. "
            << cfgtext::fmt(images[i].vmax) << ")\n";
    }
    return kExitOk;
}

inline int cmd_streamlines(const Options& o, std::ostream& out) {
    require_out(o);
    const FlowField f = load_field(o.in);
    const FrameView view = frame_view(f, static_cast<std::size_t>(o.frame));
    double step = o.step;
    if (step <= 0) {
        double vmax = 0;
        for (std::size_t i = 0; i < view.h * view.w; ++i)
            vmax = std::max(vmax, std::hypot(double(view.data[i * view.c]), double(view.data[i * view.c + 1])));
        step = 0.5 * std::min(f.dx(), f.dy()) / std::max(vmax, 1e-12);
    }
    const std::uint64_t seed = effective_seed(o);
    const auto lines = trace_streamlines(view, random_seeds(f.extents, std::size_t(o.seeds), seed), step, o.max_steps);
    Image img = render_magnitude_map(view);
    draw_streamlines(img, f.extents, lines);
    write_png(img, o.out);
    if (!o.csv.empty()) {
        std::ofstream c(o.csv);
        c << "line,index,x,y\n";
        for (std::size_t l = 0; l < lines.size(); ++l)
            for (std::size_t k = 0; k < lines[l].points.size(); ++k)
                c << l << ',' << k << ',' << cfgtext::fmt(lines[l].points[k][0]) << ','
                  << cfgtext::fmt(lines[l].points[k][1]) << '\n';
        if (!c) throw IoError("cannot write " + o.csv);
    }
    out << "wrote " << o.out << " (" << lines.size() << " streamlines, seed " << seed << ")\n";
    return kExitOk;
}

}  // namespace cli

/// Parses `argv` and runs one subcommand.
inline int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    using namespace cli;
    CLI::App app{"FFEINR: spatio-temporal super-resolution and reduction of 2D flow fields", "ffeinr"};
    app.require_subcommand(1);
    Options o;

    auto common = [&o](CLI::App* s) {
        s->add_option("--seed", o.seed, "Random seed (falls back to $FFEINR_SEED)")
            ->each([&o](const std::string&) { o.seed_given = true; });
        s->add_option("--config", o.config, "Config file with key = value lines")->check(CLI::ExistingFile);
        s->add_option("--out", o.out, "Output path");
    };
    auto scale = [&o](CLI::App* s) {
        s->add_option("--sx", o.sx, "Spatial scale factor")->check(CLI::PositiveNumber);
        s->add_option("--st", o.st, "Temporal scale factor")->check(CLI::PositiveNumber);
    };
    auto training = [&o](CLI::App* s) {
        s->add_option("--iters", o.iters, "Training iterations")->check(CLI::PositiveNumber);
        s->add_option("--lr", o.lr, "Learning rate")->check(CLI::PositiveNumber);
        s->add_option("--queries", o.queries, "Supervised points per sample (0 = all)")->check(CLI::NonNegativeNumber);
        s->add_option("--lookup", o.lookup, "Feature lookup: nearest or bilinear");
        s->add_option("--log-every", o.log_every, "Print loss every N iterations (0 = quiet)");
    };

    auto* gen = app.add_subcommand("gen-synthetic", "Write a Taylor-Green vortex field");
    common(gen);
    gen->add_option("--n", o.n, "Grid size (n x n)")->check(CLI::Range(4, 1 << 15));
    gen->add_option("--frames", o.frames, "Number of frames")->check(CLI::Range(2, 1 << 20));
    gen->add_option("--nu", o.nu, "Viscosity")->check(CLI::NonNegativeNumber);
    gen->add_option("--dt", o.dt, "Time step between frames")->check(CLI::PositiveNumber);

    auto* conv = app.add_subcommand("convert", "Convert between .npy (T,H,W[,C]) arrays and FFNR files");
    common(conv);
    conv->add_option("--in", o.in, "Input file")->required();
    conv->add_option("--extents", o.extents, "x_min,x_max,y_min,y_max for .npy input");
    conv->add_option("--dt", o.dt, "Frame spacing for .npy input")->check(CLI::PositiveNumber);
    conv->add_option("--channels", o.channels, "Comma-separated channel names for .npy input");

    auto* down = app.add_subcommand("downsample", "Strided spatio-temporal downsampling");
    common(down);
    scale(down);
    down->add_option("--in", o.in, "Input FFNR file")->required();

    auto* train = app.add_subcommand("train", "Train a model on a high-resolution field");
    common(train);
    scale(train);
    training(train);
    train->add_option("--data,--in", o.data, "High-resolution FFNR file")->required();
    train->add_flag("--two-stage", o.two_stage, "Fine-tune with random factors after the fixed-factor stage");
    train->add_option("--stage2-iters", o.stage2_iters, "Second-stage iterations")->check(CLI::NonNegativeNumber);

    auto* eval = app.add_subcommand("evaluate", "Score a checkpoint against trilinear interpolation");
    eval->alias("eval");
    common(eval);
    eval->add_option("--ckpt", o.ckpt, "Checkpoint file")->required();
    eval->add_option("--data,--in", o.data, "High-resolution FFNR file")->required();
    eval->add_option("--factors", o.factors, "Factor list, e.g. 4x2,2x2,4x4,4x8");
    eval->add_option("--scope", o.scope, "all or heldout");

    auto* comp = app.add_subcommand("compress", "Downsample, train and write an archive");
    common(comp);
    scale(comp);
    training(comp);
    comp->add_option("--in,--data", o.in, "High-resolution FFNR file")->required();

    auto* decomp = app.add_subcommand("decompress", "Reconstruct a field from an archive");
    common(decomp);
    decomp->add_option("--in", o.in, "Archive file")->required();
    decomp->add_option("--dims", o.dims, "Target T,H,W (default: original dims)");

    auto* plot = app.add_subcommand("plot", "Render magnitude or error maps to PNG");
    common(plot);
    plot->add_option("--in", o.inputs, "FFNR file(s); several inputs share one error scale")->required();
    plot->add_option("--gt", o.gt, "Ground truth; renders error maps instead of magnitude");
    plot->add_option("--frame", o.frame, "Frame index")->check(CLI::NonNegativeNumber);

    auto* sl = app.add_subcommand("streamlines", "Trace RK4 streamlines from random seeds and render them");
    common(sl);
    sl->add_option("--in", o.in, "FFNR file")->required();
    sl->add_option("--frame", o.frame, "Frame index")->check(CLI::NonNegativeNumber);
    sl->add_option("--seeds", o.seeds, "Number of seed points")->check(CLI::PositiveNumber);
    sl->add_option("--step", o.step, "Integration step (default: half a cell at peak speed)");
    sl->add_option("--max-steps", o.max_steps, "Maximum steps per streamline")->check(CLI::NonNegativeNumber);
    sl->add_option("--csv", o.csv, "Also write the polylines as CSV");

    if (argc <= 1) {
        err << app.help();
        return kExitUsage;
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kExitUsage;
    }

    try {
        if (gen->parsed()) return cmd_gen_synthetic(o, out);
        if (conv->parsed()) return cmd_convert(o, out);
        if (down->parsed()) return cmd_downsample(o, *down, out);
        if (train->parsed()) return cmd_train(o, *train, out, err);
        if (eval->parsed()) return cmd_evaluate(o, out);
        if (comp->parsed()) return cmd_compress(o, *comp, out, err);
        if (decomp->parsed()) return cmd_decompress(o, out);
        if (plot->parsed()) return cmd_plot(o, out);
        if (sl->parsed()) return cmd_streamlines(o, out);
    } catch (const ArgumentError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitRuntime;
    }
    err << app.help();
    return kExitUsage;
}

}  // namespace ffeinr
