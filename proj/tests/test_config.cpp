#include "warpfield/config.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <fstream>

namespace wf = warpfield;

TEST(Config, DefaultsReproduceTheFullMethod) {
    wf::RunConfig rc;
    wf::ModelConfig mc = rc.model_config();
    EXPECT_TRUE(mc.bending_enabled);
    EXPECT_TRUE(mc.rigidity_enabled);
    EXPECT_FALSE(mc.naive_conditioning);
    EXPECT_EQ(mc.view_dependence, wf::ViewDependence::off);
    EXPECT_EQ(mc.canonical_width, 256);
    EXPECT_EQ(mc.encoding.bands, 10);

    wf::TrainConfig tc = rc.train_config();
    EXPECT_FALSE(tc.naive_offsets);
    EXPECT_FALSE(tc.disable_offsets_loss);
    EXPECT_FALSE(tc.disable_divergence_loss);
    EXPECT_TRUE(tc.offsets_active());
    EXPECT_TRUE(tc.divergence_active());
    EXPECT_DOUBLE_EQ(tc.weights.offsets, 600.0);
    EXPECT_DOUBLE_EQ(tc.weights.divergence, 3.0);
    EXPECT_DOUBLE_EQ(tc.weights.rigidity, 0.003);
    EXPECT_DOUBLE_EQ(tc.schedule.base_lr, 5e-4);
    EXPECT_NO_THROW(rc.validate());
}

TEST(Config, TogglesMapOntoTheEngineFlags) {
    wf::RunConfig rc;
    rc.disable_bending = true;
    EXPECT_FALSE(rc.model_config().bending_enabled);
    EXPECT_FALSE(rc.train_config().bending_active());

    rc = wf::RunConfig{};
    rc.disable_rigidity = true;
    EXPECT_FALSE(rc.model_config().rigidity_enabled);

    rc = wf::RunConfig{};
    rc.naive_conditioning = true;
    EXPECT_TRUE(rc.model_config().naive_conditioning);
    EXPECT_FALSE(rc.train_config().bending_active());
    EXPECT_TRUE(rc.train_config().latents_active());

    rc = wf::RunConfig{};
    rc.disable_divergence = true;
    EXPECT_TRUE(rc.train_config().disable_divergence_loss);
    EXPECT_FALSE(rc.train_config().disable_offsets_loss);

    rc = wf::RunConfig{};
    rc.disable_regularizers = true;
    EXPECT_TRUE(rc.train_config().disable_offsets_loss);
    EXPECT_TRUE(rc.train_config().disable_divergence_loss);

    rc = wf::RunConfig{};
    rc.view_dependence = "approximate";
    EXPECT_EQ(rc.model_config().view_dependence, wf::ViewDependence::approximate);
    rc.view_dependence = "exact";
    EXPECT_EQ(rc.model_config().view_dependence, wf::ViewDependence::exact);
    rc.view_dependence = "sometimes";
    EXPECT_THROW(rc.model_config(), wf::UsageError);
}

TEST(Config, SerializeParseRoundTripIsExact) {
    wf::RunConfig rc;
    rc.dataset = "d/ata";
    rc.output = "out dir";
    rc.seed = 123456789012345ull;
    rc.canonical_width = 48;
    rc.base_lr = 3.333333333333333e-4;
    rc.w_offsets = 17.25;
    rc.warmup = false;
    rc.disable_rigidity = true;
    rc.view_dependence = "exact";
    rc.independent_latents = true;
    rc.bounds_expand = 0.125;

    std::string text = wf::serialize_config(rc);
    wf::RunConfig back;
    wf::parse_config_text(back, text);
    EXPECT_EQ(wf::serialize_config(back), text);
    EXPECT_EQ(back.dataset, "d/ata");
    EXPECT_EQ(back.seed, 123456789012345ull);
    EXPECT_DOUBLE_EQ(back.base_lr, rc.base_lr);
    EXPECT_FALSE(back.warmup);
    EXPECT_TRUE(back.disable_rigidity);
    EXPECT_TRUE(back.independent_latents);
}

TEST(Config, ParserHandlesCommentsAndWhitespace) {
    wf::RunConfig rc;
    wf::parse_config_text(rc, "# a comment\n"
                              "\n"
                              "  canonical_width = 32  # trailing note\n"
                              "\tbatch_rays=64\n"
                              "view_dependence = approximate\n");
    EXPECT_EQ(rc.canonical_width, 32);
    EXPECT_EQ(rc.batch_rays, 64);
    EXPECT_EQ(rc.view_dependence, "approximate");
}

TEST(Config, ParserReportsTheOffendingLine) {
    wf::RunConfig rc;
    try {
        wf::parse_config_text(rc, "seed = 1\nbatch_rays\n");
        FAIL() << "expected a usage error";
    } catch (const wf::UsageError& e) {
        EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
    }
}

TEST(Config, BadKeysAndValuesThrow) {
    wf::RunConfig rc;
    EXPECT_THROW(wf::set_config_key(rc, "warp_factor", "9"), wf::UsageError);
    EXPECT_THROW(wf::set_config_key(rc, "batch_rays", "many"), wf::UsageError);
    EXPECT_THROW(wf::set_config_key(rc, "batch_rays", "12.5"), wf::UsageError);
    EXPECT_THROW(wf::set_config_key(rc, "base_lr", "fast"), wf::UsageError);
    EXPECT_THROW(wf::set_config_key(rc, "warmup", "maybe"), wf::UsageError);
    EXPECT_NO_THROW(wf::set_config_key(rc, "warmup", "0"));
    EXPECT_FALSE(rc.warmup);
    EXPECT_NO_THROW(wf::set_config_key(rc, "warmup", "true"));
    EXPECT_TRUE(rc.warmup);
}

TEST(Config, FileLoadingAndOverridePrecedence) {
    std::string path = "config_test_tmp.txt";
    {
        std::ofstream out(path);
        out << "canonical_width = 24\nbatch_rays = 48\n";
    }
    wf::RunConfig rc;
    rc.canonical_width = 8; // pre-file value, overwritten by the file
    wf::load_config_file(rc, path);
    EXPECT_EQ(rc.canonical_width, 24);
    EXPECT_EQ(rc.batch_rays, 48);
    wf::set_config_key(rc, "canonical_width", "16"); // CLI-style override wins
    EXPECT_EQ(rc.canonical_width, 16);
    std::remove(path.c_str());

    EXPECT_THROW(wf::load_config_file(rc, "no_such_config_file.txt"), wf::DataError);
}

TEST(Config, ValidateRejectsBrokenSchedules) {
    wf::RunConfig rc;
    rc.batch_rays = 0;
    EXPECT_THROW(rc.validate(), wf::UsageError);
    rc = wf::RunConfig{};
    rc.total_iterations = 0;
    EXPECT_THROW(rc.validate(), wf::UsageError);
    rc = wf::RunConfig{};
    rc.base_lr = -1;
    EXPECT_THROW(rc.validate(), wf::UsageError);
}
