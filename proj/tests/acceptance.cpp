// End-to-end acceptance checks. Prints one line per criterion and exits
// non-zero when any criterion fails.

#include "grad_check.hpp"
#include "metric_oracles.hpp"
#include "test_util.hpp"

#include <ffeinr/cli.hpp>
#include <ffeinr/evaluation.hpp>
#include <ffeinr/raw_io.hpp>
#include <ffeinr/reduction.hpp>
#include <ffeinr/streamlines.hpp>

#include <chrono>
#include <cstring>
#include <cstdlib>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <optional>

using namespace ffeinr;

namespace {

enum class Verdict { Pass, Fail, Skip };

struct Outcome {
    Verdict verdict;
    std::string detail;
};

Outcome pass_if(bool ok, std::string detail) { return {ok ? Verdict::Pass : Verdict::Fail, std::move(detail)}; }

std::string fmt(double v, int prec = 4) {
    std::ostringstream o;
    o << std::setprecision(prec) << v;
    return o.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// Taylor-Green benchmark shared by the training criteria.
constexpr std::size_t kGrid = 64, kFrames = 33;
constexpr double kViscosity = 0.2, kDt = 0.05;

RunConfig benchmark_config() {
    RunConfig cfg;
    cfg.model.encoder = {16, 3, 16, 3};
    cfg.model.inr.spatial_width = cfg.model.inr.temporal_width = cfg.model.inr.decoder_width = 64;
    cfg.model.inr.lookup = Lookup::Bilinear;
    cfg.train.iters = 2000;
    cfg.train.lr = 5e-4;
    cfg.train.lr_milestones = {1400, 1700};
    cfg.train.batch = 16;
    cfg.train.patch = 16;
    cfg.train.queries = 1024;
    cfg.train.sx = 4;
    cfg.train.st = 2;
    cfg.train.seed = 1;
    cfg.train.stage2_iters = 1000;
    return cfg;
}

std::vector<std::uint8_t> checkpoint_bytes(Checkpoint ck) { return encode_checkpoint(ck); }

struct Benchmark {
    FlowField high, low;
    RunConfig cfg;
    Trainer trainer;
    std::vector<std::uint8_t> one_stage, two_stage;
    double one_stage_seconds = 0, two_stage_seconds = 0;

    Benchmark()
        : high(gen_taylor_green(kGrid, kFrames, kViscosity, kDt)),
          low(downsample(high, 4, 2)),
          cfg(benchmark_config()),
          trainer(low, high, cfg, progress("stage 1")) {
        auto t0 = std::chrono::steady_clock::now();
        trainer.run_stage1();
        one_stage_seconds = seconds_since(t0);
        one_stage = checkpoint_bytes(trainer.checkpoint());
        t0 = std::chrono::steady_clock::now();
        trainer.run_stage2();
        two_stage_seconds = seconds_since(t0);
        two_stage = checkpoint_bytes(trainer.checkpoint());
    }

    static ProgressFn progress(std::string label) {
        return [label](int i, double loss) {
            if (i % 500 == 0) std::cerr << "  [" << label << "] iteration " << i << " loss " << loss << std::endl;
        };
    }
};

Outcome heldout_psnr_gain(const Benchmark& b) {
    const Checkpoint ck = decode_checkpoint(b.one_stage);
    const auto ev = evaluate(ck, b.high, {{4, 2}}, EvalScope::HeldOutIntermediate).front();
    const double gain = ev.model.psnr_db - ev.trilinear.psnr_db;
    return pass_if(gain >= 2.0, "held-out PSNR model " + fmt(ev.model.psnr_db) + " dB, trilinear " +
                                    fmt(ev.trilinear.psnr_db) + " dB, gain " + fmt(gain) + " dB (need >= 2)");
}

Outcome arbitrary_scale(const Benchmark& b) {
    const Checkpoint ck = decode_checkpoint(b.one_stage);
    const auto evs = evaluate(ck, b.high, {{2, 2}, {4, 4}, {4, 8}}, EvalScope::HeldOutIntermediate);
    int wins = 0;
    bool finite = true;
    std::string detail;
    for (const auto& e : evs) {
        finite = finite && std::isfinite(e.model.psnr_db) && std::isfinite(e.model.ssim);
        for (double r : e.model.rmse) finite = finite && std::isfinite(r);
        wins += e.model.psnr_db > e.trilinear.psnr_db;
        detail += "S" + std::to_string(e.factors.s) + "T" + std::to_string(e.factors.t) + " " +
                  fmt(e.model.psnr_db) + "/" + fmt(e.trilinear.psnr_db) + " dB; ";
    }
    return pass_if(finite && wins >= 2, detail + "model beats trilinear at " + std::to_string(wins) + "/3" +
                                            (finite ? "" : ", non-finite metrics"));
}

Outcome metric_oracles() {
    using ffeinr::testing::random_field;
    double psnr_err = 0, ssim_err = 0, rmse_err = 0;
    for (std::uint64_t k = 0; k < 100; ++k) {
        const Dims d{1 + k % 3, 4 + k % 5, 4 + (k * 7) % 6, 1 + k % 2};
        const auto g = random_field(d, 100 + k, -2, 2), p = random_field(d, 300 + k, -2, 2);
        psnr_err = std::max(psnr_err, std::abs(psnr(p, g) - oracle::psnr(p, g)));
        ssim_err = std::max(ssim_err, std::abs(ssim(p, g) - oracle::ssim(p, g)));
        const auto r = rmse_per_channel(p, g), ro = oracle::rmse(p, g);
        for (std::size_t c = 0; c < d.c; ++c) rmse_err = std::max(rmse_err, std::abs(r[c] - ro[c]));
    }
    const auto g = random_field({3, 8, 8, 2}, 9);
    const auto id = compute_report(g, g, {1, 1});
    const bool identity = id.psnr_db == kPsnrCap && id.ssim == 1.0 && id.rmse == std::vector<double>{0.0, 0.0};
    return pass_if(psnr_err <= 1e-6 && rmse_err <= 1e-6 && ssim_err <= 1e-4 && identity,
                   "max |err| PSNR " + fmt(psnr_err) + ", SSIM " + fmt(ssim_err) + ", RMSE " + fmt(rmse_err) +
                       ", identity " + (identity ? "exact" : "wrong"));
}

Outcome trilinear_exactness() {
    Rng rng(5);
    std::uniform_real_distribution<double> u(-0.125, 0.125);
    double worst = 0;
    bool nodes = true;
    for (std::size_t k = 0; k < 10; ++k) {
        double c[8];
        for (auto& v : c) v = u(rng);
        auto f = [&](double x, double y, double t) {
            return c[0] + c[1] * x + c[2] * y + c[3] * t + c[4] * x * y + c[5] * x * t + c[6] * y * t + c[7] * x * y * t;
        };
        const Dims ld{3 + k % 3, 4 + k % 3, 5, 1};
        FlowField low(ld, {0, 1, 0, 1}, 1.0, {"s"});
        for (std::size_t t = 0; t < ld.t; ++t)
            for (std::size_t r = 0; r < ld.h; ++r)
                for (std::size_t col = 0; col < ld.w; ++col)
                    low.at(t, r, col, 0) = float(f(double(col) / double(ld.w - 1), double(r) / double(ld.h - 1),
                                                   double(t) / double(ld.t - 1)));
        const std::size_t T = ld.t + 2 + k, H = 2 * ld.h + k, W = 3 * ld.w + 1;
        const auto up = trilinear_upsample(low, T, H, W);
        for (std::size_t t = 0; t < T; ++t)
            for (std::size_t r = 0; r < H; ++r)
                for (std::size_t col = 0; col < W; ++col) {
                    const double want =
                        f(double(col) / double(W - 1), double(r) / double(H - 1), double(t) / double(T - 1));
                    worst = std::max(worst, std::abs(double(up.at(t, r, col, 0)) - want));
                }
        const std::size_t s = 2 + k % 3;
        const auto aligned = trilinear_upsample(low, (ld.t - 1) * 2 + 1, (ld.h - 1) * s + 1, (ld.w - 1) * s + 1);
        for (std::size_t t = 0; t < ld.t; ++t)
            for (std::size_t r = 0; r < ld.h; ++r)
                for (std::size_t col = 0; col < ld.w; ++col)
                    nodes = nodes && aligned.at(2 * t, s * r, s * col, 0) == low.at(t, r, col, 0);
    }
    return pass_if(worst <= 1e-6 && nodes, "max |err| " + fmt(worst) +
                                               " on multilinear fields at arbitrary dims, low-res nodes " +
                                               (nodes ? "exact" : "differ"));
}

Outcome gradient_check() {
    ModelConfig mc = ffeinr::testing::tiny_model(2, 8);
    mc.inr.lookup = Lookup::Bilinear;
    mc.inr.flow_reference = 4;
    Model<double> model(mc, 31);
    for (int k = 0; k < 2; ++k) {
        Rng rng(32 + std::uint64_t(k));
        fill_uniform(model.encoder().branch(k).weight().value, 0.2, rng);
        fill_uniform(model.encoder().gate(k).value, 0.5, rng);
    }
    const auto pair = slice_pair(ffeinr::testing::random_field({2, 6, 6, 2}, 33), 0);
    Rng qrng(34);
    std::uniform_real_distribution<double> uxy(-1, 1), ut(0, 1);
    QueryBatch q;
    for (int i = 0; i < 32; ++i) {
        q.xy.push_back({uxy(qrng), uxy(qrng)});
        q.t.push_back(ut(qrng));
    }
    Mat<double> target(2, 32);
    Rng trng(35);
    fill_uniform(target, 1.0, trng);
    const double eps = 1e-3;
    auto loss = [&] { return charbonnier(model.forward(q, pair), target, eps); };

    ForwardCache<double> cache;
    const Mat<double> out = model.forward(q, pair, &cache);
    model.zero_grad();
    model.backward(charbonnier_grad(out, target, eps, 1.0 / double(out.size())), cache);
    std::vector<Param<double>*> params;
    model.for_each_param([&](Param<double>& p) { params.push_back(&p); });
    double worst = 0;
    std::string worst_name;
    // step 1e-4 keeps loss rounding (about 1e-16 / h) well below the smallest gradients probed
    for (const auto& r : ffeinr::testing::probe_gradients(params, loss, 50, 36, 1e-4)) {
        const double e = ffeinr::testing::relative_error(r.analytic, r.numeric, 1e-6);
        if (e > worst) {
            worst = e;
            worst_name = r.name;
        }
    }
    return pass_if(worst < 1e-4, "50 probes, max relative error " + fmt(worst) + " (" + worst_name +
                                     "), step 1e-4, denominator floor 1e-6");
}

Outcome siren_distribution() {
    struct Spec {
        int fan_in;
        bool first;
    };
    constexpr int kBins = 20, kSamples = 1000000;
    std::string detail;
    bool ok = true;
    for (const Spec s : {Spec{2, true}, Spec{64, false}, Spec{256, false}}) {
        const SirenLayerSpec spec{s.fan_in, kSamples / s.fan_in + 1, 30.0, s.first};
        Rng rng(40 + std::uint64_t(s.fan_in));
        Mat<double> w(spec.fan_out, spec.fan_in);
        const double b = siren_weight_bound(spec);
        fill_uniform(w, b, rng);
        std::vector<double> counts(kBins, 0);
        bool inside = true;
        const Eigen::Index n = std::min<Eigen::Index>(w.size(), kSamples);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double v = w.data()[i];
            inside = inside && std::abs(v) <= b;
            counts[std::size_t(std::min(kBins - 1, int((v + b) / (2 * b) * kBins)))] += 1;
        }
        const double expected = double(n) / kBins;
        double chi2 = 0;
        for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
        ok = ok && inside && chi2 < 36.191;
        detail += "fan_in " + std::to_string(s.fan_in) + (s.first ? " (first)" : "") + " chi2 " + fmt(chi2) +
                  (inside ? "" : " OUT OF BOUNDS") + "; ";
    }
    return pass_if(ok, detail + "critical 36.191");
}

Outcome flow_collapse() {
    RunConfig cfg = benchmark_config();
    cfg.model.channels = 2;
    Model<float> model(cfg.model, 50);
    auto& tmp = model.temporal();
    for (int l = 0; l < tmp.layers(); ++l) {
        tmp.weight(l).value.setZero();
        tmp.bias(l).value.setZero();
    }
    const auto high = gen_taylor_green(32, 9, kViscosity, kDt);
    const auto low = apply_norm(downsample(high, 4, 2), compute_norm_stats(downsample(high, 4, 2)));
    const auto grid = model.encode(slice_pair(low, 1));
    Rng rng(51);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<std::array<double, 2>> xy;
    for (int i = 0; i < 256; ++i) xy.push_back({u(rng), u(rng)});
    std::optional<Mat<float>> first;
    bool identical = true;
    for (double t : {0.0, 0.125, 0.25, 0.5, 0.75, 0.9, 1.0}) {
        QueryBatch q{xy, std::vector<double>(xy.size(), t)};
        const Mat<float> out = model.forward_grid(q, grid);
        if (!first) first = out;
        identical = identical && std::memcmp(out.data(), first->data(), sizeof(float) * std::size_t(out.size())) == 0;
    }
    return pass_if(identical, "7 time values, outputs " + std::string(identical ? "bit-identical" : "differ"));
}

Outcome format_round_trips(const Benchmark& b) {
    const auto raw = encode_raw(b.high);
    const bool raw_ok = encode_raw(decode_raw(raw)) == raw && decode_raw(raw).values == b.high.values;
    const bool ck_ok = checkpoint_bytes(decode_checkpoint(b.one_stage)) == b.one_stage;

    Archive a;
    a.low = b.low;
    a.checkpoint = b.one_stage;
    a.norm = b.trainer.norm();
    a.original = b.high.dims;
    a.factors = {4, 2};
    a.iterations = b.cfg.train.iters;
    a.seed = b.cfg.train.seed;
    const auto bytes = encode_archive(a);
    const bool arch_ok = encode_archive(decode_archive(bytes)) == bytes;

    auto corrupt = bytes;
    corrupt[kArchiveHeaderSize + 5] ^= 0x01;
    bool detected = false;
    try {
        decode_archive(corrupt);
    } catch (const IntegrityError&) {
        detected = true;
    }
    return pass_if(raw_ok && ck_ok && arch_ok && detected,
                   std::string("raw ") + (raw_ok ? "ok" : "differs") + ", checkpoint " + (ck_ok ? "ok" : "differs") +
                       ", archive " + (arch_ok ? "ok" : "differs") + ", flipped payload bit " +
                       (detected ? "rejected by CRC" : "NOT detected"));
}

Outcome streamline_accuracy() {
    auto analytic = [](std::size_t n, auto f) {
        FlowField out({1, n, n, 2}, {-1, 1, -1, 1}, 1.0, {"u_x", "u_y"});
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t c = 0; c < n; ++c) {
                const double x = -1 + 2.0 * double(c) / double(n - 1), y = -1 + 2.0 * double(r) / double(n - 1);
                const auto [vx, vy] = f(x, y);
                out.at(0, r, c, 0) = float(vx);
                out.at(0, r, c, 1) = float(vy);
            }
        return out;
    };
    const auto uniform = analytic(9, [](double, double) { return std::pair{1.0, 0.5}; });
    double straight = 0;
    for (const auto& l : trace_streamlines(frame_view(uniform, 0), {{-0.9, -0.9}, {0.0, 0.2}}, 0.01, 500))
        for (const auto& p : l.points)
            straight = std::max(straight, std::abs((p[0] - l.seed[0]) * 0.5 - (p[1] - l.seed[1])) / std::hypot(1.0, 0.5));

    const auto rot = analytic(33, [](double x, double y) { return std::pair{-y, x}; });
    const auto view = frame_view(rot, 0);
    const double r = 0.5, period = 2 * std::numbers::pi;
    const auto loop = trace_streamlines(view, {{r, 0.0}}, period / 1000, 1000)[0].points.back();
    const double closure = std::hypot(loop[0] - r, loop[1]) / r;

    const double quarter = std::numbers::pi / 2, r2 = 0.6;
    auto endpoint_error = [&](int n) {
        const auto p = trace_streamlines(view, {{r2, 0.0}}, quarter / n, n)[0].points.back();
        return std::hypot(p[0] - r2 * std::cos(quarter), p[1] - r2 * std::sin(quarter));
    };
    const double ratio = endpoint_error(8) / endpoint_error(16);
    return pass_if(straight <= 1e-6 && closure <= 0.01 && ratio >= 8,
                   "straightness " + fmt(straight) + ", closure " + fmt(100 * closure) + "% of radius, step-halving ratio " +
                       fmt(ratio));
}

Outcome stage_comparison(const Benchmark& b) {
    Trainer again(b.low, b.high, b.cfg);
    again.run_stage1();
    const bool one_same = checkpoint_bytes(again.checkpoint()) == b.one_stage;
    again.run_stage2();
    const bool two_same = checkpoint_bytes(again.checkpoint()) == b.two_stage;

    const std::vector<Factors> factors{{4, 2}, {2, 2}, {4, 4}, {4, 8}};
    const auto one = evaluate(decode_checkpoint(b.one_stage), b.high, factors, EvalScope::HeldOutIntermediate);
    const auto two = evaluate(decode_checkpoint(b.two_stage), b.high, factors, EvalScope::HeldOutIntermediate);
    std::cout << "    factors  one-stage PSNR  two-stage PSNR  trilinear PSNR  one-stage SSIM  two-stage SSIM\n";
    bool finite = true;
    for (std::size_t i = 0; i < factors.size(); ++i) {
        std::cout << "    S" << factors[i].s << "T" << factors[i].t << "    " << std::setw(14) << fmt(one[i].model.psnr_db)
                  << "  " << std::setw(14) << fmt(two[i].model.psnr_db) << "  " << std::setw(14)
                  << fmt(one[i].trilinear.psnr_db) << "  " << std::setw(14) << fmt(one[i].model.ssim) << "  "
                  << std::setw(14) << fmt(two[i].model.ssim) << "\n";
        finite = finite && std::isfinite(one[i].model.psnr_db) && std::isfinite(two[i].model.psnr_db);
    }
    return pass_if(one_same && two_same && finite,
                   "one-stage " + fmt(b.one_stage_seconds, 3) + " s, two-stage +" + fmt(b.two_stage_seconds, 3) +
                       " s; rerun checkpoints " + (one_same && two_same ? "bit-identical" : "DIFFER"));
}

Outcome cylinder() {
    const char* path = std::getenv("FFEINR_CYLINDER");
    if (!path || !*path) return {Verdict::Skip, "set FFEINR_CYLINDER to a cylinder-wake FFNR file to run"};
    const FlowField high = load_raw(path);
    RunConfig cfg;
    cfg.train.iters = 7500;
    cfg.train.sx = 4;
    cfg.train.st = 2;
    const auto ck = train_one_stage(downsample(high, 4, 2), high, cfg, Benchmark::progress("cylinder"));
    const auto ev = evaluate(ck, high, {{4, 2}}, EvalScope::HeldOutIntermediate).front();
    return pass_if(ev.model.psnr_db >= 40 && ev.model.psnr_db >= ev.trilinear.psnr_db + 4,
                   "held-out PSNR model " + fmt(ev.model.psnr_db) + " dB, trilinear " + fmt(ev.trilinear.psnr_db) +
                       " dB (need >= 40 and >= trilinear + 4)");
}

}  // namespace

int main() {
    tune_allocator();
    int failures = 0;
    auto report = [&](const char* id, const std::function<Outcome()>& check) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {Verdict::Fail, std::string("exception: ") + e.what()};
        }
        const char* tag = o.verdict == Verdict::Pass ? "PASS" : o.verdict == Verdict::Fail ? "FAIL" : "SKIPPED";
        failures += o.verdict == Verdict::Fail;
        std::cout << id << ' ' << tag << "  " << o.detail << "  [" << fmt(seconds_since(t0), 3) << " s]" << std::endl;
    };

    std::cerr << "training the Taylor-Green benchmark (" << kGrid << "x" << kGrid << "x" << kFrames << ")"
              << std::endl;
    std::optional<Benchmark> bench;
    std::string bench_error;
    try {
        bench.emplace();
    } catch (const std::exception& e) {
        bench_error = e.what();
    }
    auto needs_bench = [&](Outcome (*f)(const Benchmark&)) {
        return [&, f]() -> Outcome {
            if (!bench) return {Verdict::Fail, "benchmark training failed: " + bench_error};
            return f(*bench);
        };
    };

    report("A1", needs_bench(heldout_psnr_gain));
    report("A2", needs_bench(arbitrary_scale));
    report("A3", metric_oracles);
    report("A4", trilinear_exactness);
    report("A5", gradient_check);
    report("A6", siren_distribution);
    report("A7", flow_collapse);
    report("A8", needs_bench(format_round_trips));
    report("A9", streamline_accuracy);
    report("A10", needs_bench(stage_comparison));
    report("A11", cylinder);
    return failures == 0 ? 0 : 1;
}
