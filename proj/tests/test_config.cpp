#include "test_util.hpp"

#include <ffeinr/config.hpp>

#include <gtest/gtest.h>

#include <fstream>

using namespace ffeinr;

TEST(Config, DefaultsMatchReferenceSetup) {
    const RunConfig c;
    EXPECT_EQ(c.train.sx, 4);
    EXPECT_EQ(c.train.st, 2);
    EXPECT_EQ(c.train.batch, 16);
    EXPECT_EQ(c.train.patch, 16);
    EXPECT_DOUBLE_EQ(c.train.lr, 1e-4);
    EXPECT_DOUBLE_EQ(c.train.beta1, 0.9);
    EXPECT_DOUBLE_EQ(c.train.beta2, 0.99);
    EXPECT_DOUBLE_EQ(c.train.charbonnier_eps, 1e-3);
    EXPECT_EQ(c.model.encoder.c_f, 64);
    EXPECT_EQ(c.model.inr.spatial_width, 256);
    EXPECT_DOUBLE_EQ(c.model.inr.omega0, 30.0);
    EXPECT_NO_THROW(c.train.validate());
}

TEST(Config, ParsesKeysCommentsAndWhitespace) {
    const auto c = parse_config(
        "# comment\n"
        "  sx = 2   \n"
        "lr=5e-4 # trailing\n"
        "lr_milestones = 10, 20,30\n"
        "\n"
        "two_stage = yes\n"
        "lookup = bilinear\n"
        "seed = 18446744073709551615\n"
        "c_f = 16\r\n");
    EXPECT_EQ(c.train.sx, 2);
    EXPECT_DOUBLE_EQ(c.train.lr, 5e-4);
    EXPECT_EQ(c.train.lr_milestones, (std::vector<int>{10, 20, 30}));
    EXPECT_TRUE(c.train.two_stage);
    EXPECT_EQ(c.model.inr.lookup, Lookup::Bilinear);
    EXPECT_EQ(c.train.seed, 18446744073709551615ULL);
    EXPECT_EQ(c.model.encoder.c_f, 16);
    EXPECT_EQ(c.train.st, 2);
}

TEST(Config, RejectsMalformedInput) {
    EXPECT_THROW(parse_config("nonsense"), ArgumentError);
    EXPECT_THROW(parse_config("unknown_key = 1"), ArgumentError);
    EXPECT_THROW(parse_config("sx = two"), ArgumentError);
    EXPECT_THROW(parse_config("sx = 2.5"), ArgumentError);
    EXPECT_THROW(parse_config("lr = 1e-4x"), ArgumentError);
    EXPECT_THROW(parse_config("two_stage = maybe"), ArgumentError);
    EXPECT_THROW(parse_config("lookup = cubic"), ArgumentError);
    EXPECT_THROW(parse_config("seed = -1"), ArgumentError);
}

TEST(Config, TextRoundTrip) {
    RunConfig c;
    c.train.lr = 3.3e-4;
    c.train.lr_milestones = {7, 9};
    c.train.seed = 99;
    c.train.two_stage = true;
    c.train.stage2_iters = 12;
    c.model.inr.lookup = Lookup::Bilinear;
    c.model.inr.flow_reference = 8;
    c.model.inr.omega0 = 12.5;
    c.model.channels = 3;
    const auto text = to_text(c);
    const auto back = parse_config(text);
    EXPECT_EQ(to_text(back), text);
    EXPECT_EQ(back.train.lr, 3.3e-4);
    EXPECT_EQ(back.model.inr.omega0, 12.5);
    EXPECT_EQ(back.model.channels, 3);
}

TEST(Config, EmptyMilestoneList) {
    RunConfig c;
    c.train.lr_milestones.clear();
    const auto back = parse_config(to_text(c));
    EXPECT_TRUE(back.train.lr_milestones.empty());
}

TEST(Config, LoadsFromFileOverBase) {
    const auto dir = ffeinr::testing::scratch_dir("config");
    const auto path = dir / "run.cfg";
    std::ofstream(path) << "iters = 12\nbatch = 3\n";
    RunConfig base;
    base.train.patch = 8;
    const auto c = load_config(path, base);
    EXPECT_EQ(c.train.iters, 12);
    EXPECT_EQ(c.train.batch, 3);
    EXPECT_EQ(c.train.patch, 8);
    EXPECT_THROW(load_config(dir / "missing.cfg"), IoError);
}

TEST(Config, ValidationCatchesBadValues) {
    auto bad = [](auto mutate) {
        TrainConfig t;
        mutate(t);
        return t;
    };
    EXPECT_THROW(bad([](TrainConfig& t) { t.sx = 0; }).validate(), ArgumentError);
    EXPECT_THROW(bad([](TrainConfig& t) { t.iters = 0; }).validate(), ArgumentError);
    EXPECT_THROW(bad([](TrainConfig& t) { t.lr = 0; }).validate(), ArgumentError);
    EXPECT_THROW(bad([](TrainConfig& t) { t.beta2 = 1.0; }).validate(), ArgumentError);
    EXPECT_THROW(bad([](TrainConfig& t) { t.val_fraction = 1.0; }).validate(), ArgumentError);
    EXPECT_THROW(bad([](TrainConfig& t) { t.stage2_s_min = 5; }).validate(), ArgumentError);
    InrConfig n;
    n.spatial_layers = 0;
    EXPECT_THROW(n.validate(), ArgumentError);
    EncoderConfig e;
    e.kernel = 4;
    EXPECT_THROW(e.validate(), ArgumentError);
}
