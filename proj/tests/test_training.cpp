#include "test_util.hpp"

#include <ffeinr/evaluation.hpp>
#include <ffeinr/training.hpp>

#include <gtest/gtest.h>

using namespace ffeinr;
using ffeinr::testing::tiny_run;

namespace {

struct Data {
    FlowField high, low;
};

Data small_flow(std::size_t n = 17, std::size_t t = 9, int sx = 4, int st = 2) {
    Data d;
    d.high = gen_taylor_green(n, t, 0.2, 0.05);
    d.low = downsample(d.high, sx, st);
    return d;
}

std::vector<Mat<float>> params_of(Model<float>& m) {
    std::vector<Mat<float>> out;
    m.for_each_param([&](Param<float>& p) { out.push_back(p.value); });
    return out;
}

}  // namespace

TEST(Charbonnier, ValuesAndGradient) {
    Mat<double> p(1, 1), t(1, 1);
    p << 0.5;
    t << 0.5;
    EXPECT_DOUBLE_EQ(charbonnier(p, t, 1e-3), 1e-3);
    p << 3.0;
    t << 0.0;
    EXPECT_NEAR(charbonnier(p, t, 1e-3), 3.000000167, 1e-9);
    Mat<double> q(1, 1);
    q << -3.0;
    EXPECT_DOUBLE_EQ(charbonnier(q, t, 1e-3), charbonnier(p, t, 1e-3));

    Mat<double> a = Mat<double>::Random(3, 4), b = Mat<double>::Random(3, 4);
    const auto g = charbonnier_grad(a, b, 1e-3, 1.0 / 12);
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        Mat<double> ap = a, am = a;
        ap.data()[i] += 1e-7;
        am.data()[i] -= 1e-7;
        EXPECT_NEAR(g.data()[i], (charbonnier(ap, b, 1e-3) - charbonnier(am, b, 1e-3)) / 2e-7, 1e-6);
    }
    EXPECT_THROW(charbonnier(a, Mat<double>(2, 4), 1e-3), ArgumentError);
    EXPECT_THROW(charbonnier(a, b, 0.0), ArgumentError);
}

TEST(Adam, FirstStepMovesByLearningRate) {
    Model<double> m(ffeinr::testing::tiny_model(), 1);
    m.for_each_param([](Param<double>& p) { p.grad.setConstant(0.3); });
    std::vector<Mat<double>> before;
    m.for_each_param([&](Param<double>& p) { before.push_back(p.value); });
    Adam<double> adam(0.9, 0.99, 1e-8);
    adam.step(m, 1e-3);
    std::size_t k = 0;
    m.for_each_param([&](Param<double>& p) {
        EXPECT_LT(((before[k++] - p.value).array() - 1e-3).abs().maxCoeff(), 1e-10);
    });
    EXPECT_EQ(adam.steps(), 1);
}

TEST(Split, HeldOutPairs) {
    EXPECT_EQ(held_out_pairs(16, 0.1), 2u);
    EXPECT_EQ(held_out_pairs(10, 0.1), 1u);
    EXPECT_EQ(held_out_pairs(3, 0.1), 1u);
    EXPECT_EQ(held_out_pairs(1, 0.1), 0u);
    EXPECT_EQ(held_out_pairs(16, 0.0), 0u);
    EXPECT_EQ(held_out_pairs(4, 0.9), 3u);
    TrainConfig t;
    t.st = 2;
    EXPECT_EQ(validation_split_frame({33, 8, 8, 2}, t), 28u);
    t.st = 4;
    EXPECT_EQ(validation_split_frame({33, 8, 8, 2}, t), 28u);
    t.val_fraction = 0;
    EXPECT_EQ(validation_split_frame({33, 8, 8, 2}, t), 32u);
}

TEST(Schedule, StepDecayAtMilestones) {
    TrainConfig t;
    t.lr = 1e-4;
    t.lr_milestones = {4000, 6000};
    t.lr_decay = 0.5;
    EXPECT_DOUBLE_EQ(t.lr_at(0), 1e-4);
    EXPECT_DOUBLE_EQ(t.lr_at(3999), 1e-4);
    EXPECT_DOUBLE_EQ(t.lr_at(4000), 5e-5);
    EXPECT_DOUBLE_EQ(t.lr_at(6000), 2.5e-5);
}

TEST(Trainer, SingleIterationSmoke) {
    const auto d = small_flow();
    Trainer tr(d.low, d.high, tiny_run(1));
    tr.run_stage1();
    ASSERT_EQ(tr.history().size(), 1u);
    EXPECT_TRUE(std::isfinite(tr.history()[0]));
    EXPECT_GT(tr.history()[0], 0.0f);
    EXPECT_EQ(tr.checkpoint().iteration, 1);
    EXPECT_EQ(tr.train_pairs(), 3u);
}

TEST(Trainer, ReproducibleForSeed) {
    const auto d = small_flow();
    auto a = train_one_stage(d.low, d.high, tiny_run(4));
    auto b = train_one_stage(d.low, d.high, tiny_run(4));
    EXPECT_EQ(a.loss_history, b.loss_history);
    EXPECT_EQ(encode_checkpoint(a), encode_checkpoint(b));
    auto cfg = tiny_run(4);
    cfg.train.seed = 8;
    auto c = train_one_stage(d.low, d.high, cfg);
    EXPECT_NE(params_of(a.model), params_of(c.model));
}

TEST(Trainer, SmallStepDescendsOnFixedBatch) {
    const auto d = small_flow();
    const auto norm = compute_norm_stats(d.low);
    const auto low_n = apply_norm(d.low, norm), high_n = apply_norm(d.high, norm);
    Rng rng(3);
    const auto smp = crop_patch(low_n, high_n, {4, 2}, 4, rng, {3, 0});
    Model<double> model(ffeinr::testing::tiny_model(), 4);
    auto loss_of = [&](ForwardCache<double>* cache) {
        const Mat<double> out = model.forward(smp.coords, smp.input, cache);
        Mat<double> target(out.rows(), out.cols());
        for (Eigen::Index i = 0; i < target.size(); ++i) target.data()[i] = smp.target[std::size_t(i)];
        return std::pair{charbonnier(out, target, 1e-3), charbonnier_grad(out, target, 1e-3, 1.0 / double(out.size()))};
    };
    ForwardCache<double> cache;
    const auto [before, grad] = loss_of(&cache);
    model.zero_grad();
    model.backward(grad, cache);
    Adam<double> adam;
    adam.step(model, 1e-6);
    EXPECT_LT(loss_of(nullptr).first, before);
}

TEST(Trainer, NonFiniteLossAborts) {
    const auto d = small_flow();
    auto cfg = tiny_run(20);
    cfg.train.lr = 1e38;
    try {
        train_one_stage(d.low, d.high, cfg);
        FAIL() << "expected TrainingError";
    } catch (const TrainingError& e) {
        EXPECT_NE(std::string(e.what()).find("non-finite loss at iteration"), std::string::npos);
        EXPECT_NE(std::string(e.what()).find("seed=7"), std::string::npos);
    }
}

TEST(Trainer, RejectsMismatchedLowRes) {
    const auto d = small_flow();
    auto cfg = tiny_run(1);
    cfg.train.sx = 2;
    EXPECT_THROW(Trainer(d.low, d.high, cfg), ArgumentError);
    auto low = d.low;
    low.values[0] += 1.0f;
    EXPECT_THROW(Trainer(low, d.high, tiny_run(1)), ArgumentError);
}

TEST(Trainer, EmptySecondStageMatchesOneStage) {
    const auto d = small_flow();
    auto cfg = tiny_run(3);
    cfg.train.two_stage = true;
    cfg.train.stage2_iters = 0;
    auto two = train_two_stage(d.low, d.high, cfg);
    auto one = train_one_stage(d.low, d.high, cfg);
    EXPECT_EQ(params_of(two.model), params_of(one.model));
    EXPECT_EQ(two.loss_history, one.loss_history);
    EXPECT_TRUE(two.stage2_factors.empty());
}

TEST(Trainer, SecondStageFactorsReplay) {
    const auto d = small_flow(17, 17);
    auto cfg = tiny_run(1);
    cfg.train.two_stage = true;
    cfg.train.stage2_iters = 6;
    auto a = train_two_stage(d.low, d.high, cfg);
    auto b = train_two_stage(d.low, d.high, cfg);
    ASSERT_EQ(a.stage2_factors.size(), 6u);
    EXPECT_EQ(a.stage2_factors, b.stage2_factors);
    EXPECT_EQ(a.loss_history, b.loss_history);
    EXPECT_EQ(a.iteration, 7);
    for (const auto& f : a.stage2_factors) {
        EXPECT_GE(f.s, 2);
        EXPECT_LE(f.s, 4);
        EXPECT_GE(f.t, 2);
        EXPECT_LE(f.t, 8);
    }
}

TEST(FactorSampler, UniformOverRanges) {
    TrainConfig t;
    FactorSampler s(t, 5), r(t, 5);
    std::map<std::pair<int, int>, int> counts;
    for (int i = 0; i < 15000; ++i) {
        const auto f = s.next();
        EXPECT_EQ(f, r.next());
        ++counts[{f.s, f.t}];
    }
    EXPECT_EQ(counts.size(), 21u);
    for (const auto& [k, c] : counts) {
        EXPECT_GT(c, 550);
        EXPECT_LT(c, 880);
    }
}

TEST(Checkpoint, RoundTripPreservesModel) {
    const auto d = small_flow();
    auto cfg = tiny_run(2);
    cfg.train.two_stage = true;
    cfg.train.stage2_iters = 2;
    auto ck = train_two_stage(d.low, d.high, cfg);
    const auto bytes = encode_checkpoint(ck);
    auto back = decode_checkpoint(bytes);
    EXPECT_EQ(encode_checkpoint(back), bytes);
    EXPECT_EQ(back.iteration, ck.iteration);
    EXPECT_EQ(back.loss_history, ck.loss_history);
    EXPECT_EQ(back.stage2_factors, ck.stage2_factors);
    EXPECT_EQ(to_text(back.config), to_text(ck.config));
    EXPECT_EQ(params_of(back.model), params_of(ck.model));
    const auto a = reconstruct(ck.model, ck.norm, d.low, 9, 17, 17);
    const auto b = reconstruct(back.model, back.norm, d.low, 9, 17, 17);
    EXPECT_EQ(a.values, b.values);

    auto bad = bytes;
    bad[0] ^= 0xff;
    EXPECT_THROW(decode_checkpoint(bad), FormatError);
    EXPECT_THROW(decode_checkpoint(std::span(bytes).first(bytes.size() / 2)), FormatError);
}

TEST(Evaluation, FiniteAcrossFactors) {
    const auto d = small_flow(17, 17);
    const auto ck = train_one_stage(d.low, d.high, tiny_run(2));
    const std::vector<Factors> factors{{4, 2}, {2, 2}, {4, 4}, {4, 8}};
    for (auto scope : {EvalScope::All, EvalScope::HeldOutIntermediate}) {
        const auto evals = evaluate(ck, d.high, factors, scope);
        ASSERT_EQ(evals.size(), 4u);
        for (const auto& e : evals) {
            EXPECT_FALSE(e.frames.empty());
            EXPECT_TRUE(std::isfinite(e.model.psnr_db));
            EXPECT_TRUE(std::isfinite(e.model.ssim));
            EXPECT_GE(e.trilinear.psnr_db, e.model.psnr_db - 200);
            for (double r : e.model.rmse) EXPECT_TRUE(std::isfinite(r));
        }
    }
    const auto csv = metrics_csv(evaluate(ck, d.high, {{4, 2}}, EvalScope::All));
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "factor_s,factor_t,method,psnr_db,ssim,rmse_ux,rmse_uy");
    EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(Evaluation, HeldOutScopeSkipsLowResFrames) {
    const auto frames = frames_in_scope({33, 4, 4, 2}, {4, 2}, 28, EvalScope::HeldOutIntermediate);
    EXPECT_EQ(frames, (std::vector<std::size_t>{29, 31}));
    const auto t8 = frames_in_scope({33, 4, 4, 2}, {4, 8}, 28, EvalScope::HeldOutIntermediate);
    EXPECT_EQ(t8, (std::vector<std::size_t>{29, 30, 31}));
    EXPECT_EQ(frames_in_scope({5, 4, 4, 2}, {4, 2}, 0, EvalScope::All).size(), 5u);
}

TEST(Evaluation, ReconstructAtLowResGridReturnsInputScale) {
    const auto d = small_flow();
    const auto ck = train_one_stage(d.low, d.high, tiny_run(1));
    const auto out = reconstruct(ck.model, ck.norm, d.low, 9, 17, 17);
    EXPECT_EQ(out.dims, (Dims{9, 17, 17, 2}));
    for (float v : out.values) EXPECT_TRUE(std::isfinite(v));
    EXPECT_THROW(reconstruct(ck.model, ck.norm, d.low, 9, 3, 17), ArgumentError);
}
