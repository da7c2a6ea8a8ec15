#include <gtest/gtest.h>

#include "warpfield/deform.hpp"

using namespace warpfield;

namespace {

ModelConfig tiny_config() {
    ModelConfig cfg;
    cfg.canonical_width = 16;
    cfg.canonical_depth = 3;
    cfg.canonical_skip = 1;
    cfg.encoding.bands = 2;
    cfg.latent_count = 4;
    cfg.latent_dim = 6;
    cfg.bending_width = 8;
    cfg.bending_layers = 3;
    cfg.rigidity_width = 8;
    cfg.rigidity_layers = 3;
    return cfg;
}

void perturb_all(SceneModel& m, uint64_t seed, double amp) {
    Rng rng(seed);
    for (auto& [name, t] : param_refs(m))
        for (std::size_t i = 0; i < t->size(); ++i) (*t)[i] += amp * (2 * rng.uniform() - 1);
}

Tensor test_points(int n, uint64_t seed) {
    Rng rng(seed);
    Tensor pts(n, 3);
    for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = 2 * rng.uniform() - 1;
    return pts;
}

} // namespace

TEST(Bend, FreshModelIsExactIdentity) {
    SceneModel m = init_model(tiny_config(), 31);
    Tensor pts = test_points(20, 1);
    Tensor lat = slice_rows(m.latents, 0, 1);
    auto out = bend_points(m, pts, lat);
    EXPECT_TRUE(bitwise_equal(out.bent, pts));
    for (std::size_t i = 0; i < out.gated.size(); ++i) EXPECT_DOUBLE_EQ(out.gated[i], 0.0);
    for (std::size_t i = 0; i < out.rigidity.size(); ++i) EXPECT_DOUBLE_EQ(out.rigidity[i], 0.5);
}

TEST(Bend, DisablingBendingGivesIdentityWithUnitRigidityWhenGateOff) {
    SceneModel m = init_model(tiny_config(), 32);
    perturb_all(m, 7, 0.3);
    Tensor pts = test_points(10, 2);
    Tensor lat = slice_rows(m.latents, 1, 2);

    BendOptions no_bend;
    no_bend.bending_enabled = false;
    auto frozen = bend_points(m, pts, lat, no_bend);
    EXPECT_TRUE(bitwise_equal(frozen.bent, pts));

    BendOptions no_rig;
    no_rig.rigidity_enabled = false;
    auto ungated = bend_points(m, pts, lat, no_rig);
    for (std::size_t i = 0; i < ungated.rigidity.size(); ++i)
        EXPECT_DOUBLE_EQ(ungated.rigidity[i], 1.0);
    EXPECT_LT(max_abs_diff(ungated.bent, pts + ungated.raw), 1e-15);
}

TEST(Bend, StabilizationBelowThresholdZeroesOffsetsAndDivergence) {
    SceneModel m = init_model(tiny_config(), 33);
    perturb_all(m, 8, 0.3);
    Tensor pts = test_points(12, 3);
    Tensor lat = slice_rows(m.latents, 2, 3);

    BendOptions opt;
    opt.stabilize_r_min = 1.0; // rigidity lives in (0,1), so everything is squelched
    auto out = bend_points(m, pts, lat, opt);
    EXPECT_TRUE(bitwise_equal(out.bent, pts));
    for (std::size_t i = 0; i < out.rigidity.size(); ++i) EXPECT_DOUBLE_EQ(out.rigidity[i], 0.0);

    auto field = model_gated_bend_dual(m, lat, opt);
    Rng rng(9);
    Tensor div = divergence_hutchinson(field, pts, rng, 2);
    for (std::size_t i = 0; i < div.size(); ++i) EXPECT_DOUBLE_EQ(div[i], 0.0);
}

TEST(Bend, ExaggerationScalesTheGatedOffsets) {
    SceneModel m = init_model(tiny_config(), 34);
    perturb_all(m, 10, 0.3);
    Tensor pts = test_points(8, 4);
    Tensor lat = slice_rows(m.latents, 0, 1);

    BendOptions twice;
    twice.exaggeration = 2.0;
    auto base = bend_points(m, pts, lat);
    auto big = bend_points(m, pts, lat, twice);
    Tensor base_off = base.bent - pts;
    Tensor big_off = big.bent - pts;
    EXPECT_LT(max_abs_diff(big_off, base_off * 2.0), 1e-15);

    BendOptions none;
    none.exaggeration = 0.0;
    auto still = bend_points(m, pts, lat, none);
    EXPECT_TRUE(bitwise_equal(still.bent, pts));
}

TEST(Divergence, IdentityFieldGivesThree) {
    DualBendFn identity = [](const DualTensor& x) { return x; };
    Tensor pts = test_points(40, 5);
    Rng rng(11);
    const int k = 400;
    Tensor div = divergence_hutchinson(identity, pts, rng, k);
    double se = std::sqrt(6.0 / k); // var of e^T e is 6 per draw
    double worst = 0, total = 0;
    for (std::size_t i = 0; i < div.size(); ++i) {
        worst = std::max(worst, std::abs(div[i] - 3.0));
        total += div[i];
    }
    EXPECT_LT(worst, 4.5 * se);
    EXPECT_NEAR(total / double(div.size()), 3.0, 3 * se / std::sqrt(40.0));
}

TEST(Divergence, ConstantFieldGivesExactZero) {
    DualBendFn translation = [](const DualTensor& x) {
        Tensor off(x.v.rows(), 3);
        for (int i = 0; i < off.rows(); ++i) {
            off.at(i, 0) = 0.7;
            off.at(i, 1) = -0.2;
            off.at(i, 2) = 1.3;
        }
        return dual_const(off);
    };
    Tensor pts = test_points(15, 6);
    Rng rng(12);
    Tensor div = divergence_hutchinson(translation, pts, rng, 1);
    for (std::size_t i = 0; i < div.size(); ++i) EXPECT_DOUBLE_EQ(div[i], 0.0);
}

namespace {

DualBendFn linear_field(const Tensor& a) {
    return [a](const DualTensor& x) {
        Tensor at = transpose(a);
        return DualTensor{matmul(x.v, at), matmul(x.d, at)};
    };
}

} // namespace

TEST(Divergence, SkewSymmetricFieldEstimatesVanishPerDraw) {
    Tensor a = Tensor::from_rows(3, 3, {0, 1.5, -0.4, -1.5, 0, 2.2, 0.4, -2.2, 0});
    Tensor pts = test_points(10, 7);
    Rng rng(13);
    Tensor div = divergence_hutchinson(linear_field(a), pts, rng, 1);
    for (std::size_t i = 0; i < div.size(); ++i) EXPECT_NEAR(div[i], 0.0, 1e-12);
}

TEST(Divergence, ExactModeRecoversTraceOfLinearField) {
    Tensor a = Tensor::from_rows(3, 3, {0.3, 1.5, -0.4, 0.2, -1.1, 2.2, 0.4, -2.2, 0.9});
    Tensor pts = test_points(10, 8);
    Tensor div = divergence_exact(linear_field(a), pts);
    for (std::size_t i = 0; i < div.size(); ++i) EXPECT_NEAR(div[i], 0.1, 1e-10);

    DualBendFn translation = [](const DualTensor& x) { return dual_const(Tensor(x.v.rows(), 3)); };
    Tensor zero = divergence_exact(translation, pts);
    for (std::size_t i = 0; i < zero.size(); ++i) EXPECT_DOUBLE_EQ(zero[i], 0.0);
}

TEST(Divergence, HutchinsonConvergesToExactOnTrainedNetwork) {
    SceneModel m = init_model(tiny_config(), 35);
    perturb_all(m, 20, 0.5);
    Tensor pts = test_points(5, 9);
    Tensor lat = slice_rows(m.latents, 1, 2);
    auto field = model_gated_bend_dual(m, lat);

    Tensor exact = divergence_exact(field, pts);
    Rng rng(14);
    const int k = 20000;
    Tensor est = divergence_hutchinson(field, pts, rng, k);
    // crude bound on the estimator sd per draw for a smooth gated field
    for (int i = 0; i < 5; ++i)
        EXPECT_NEAR(est.at(i, 0), exact.at(i, 0), 5.0 * std::max(0.05, std::abs(exact.at(i, 0))) / std::sqrt(double(k)) * 10);
}

TEST(TapeBend, MatchesPlainBendAndDivergence) {
    SceneModel m = init_model(tiny_config(), 36);
    perturb_all(m, 21, 0.4);
    Tensor pts = test_points(9, 10);
    Tensor lat = slice_rows(m.latents, 2, 3);
    Rng rng(15);
    Tensor e = random_normal(9, 3, rng);

    auto plain = bend_points(m, pts, lat);
    auto field = model_gated_bend_dual(m, lat);
    DualTensor dual_out = field(dual_seed(pts, e));
    Tensor plain_div(9, 1);
    for (int i = 0; i < 9; ++i)
        for (int c = 0; c < 3; ++c) plain_div.at(i, 0) += e.at(i, c) * dual_out.d.at(i, c);

    Tape tape;
    TapeModel tm = register_model(tape, m);
    Var lat_rows = broadcast_rows(slice_rows(tm.latents, 2, 3), 9);
    auto out = bend_points_tape(tape, tm, pts, lat_rows, &e, true);
    EXPECT_LT(max_abs_diff(out.bent.val(), plain.bent), 1e-12);
    EXPECT_LT(max_abs_diff(out.raw.val(), plain.raw), 1e-12);
    EXPECT_LT(max_abs_diff(out.rigidity.val(), plain.rigidity), 1e-12);
    EXPECT_LT(max_abs_diff(out.gated.val(), plain.gated), 1e-12);
    EXPECT_LT(max_abs_diff(out.divergence.val(), plain_div), 1e-12);
}

TEST(TapeBend, LatentGradientMatchesFiniteDifferences) {
    SceneModel m = init_model(tiny_config(), 37);
    perturb_all(m, 22, 0.4);
    Tensor pts = test_points(6, 11);

    auto value = [&]() {
        Tensor lat = slice_rows(m.latents, 1, 2);
        auto out = bend_points(m, pts, lat);
        return mean(out.bent);
    };

    Tape tape;
    TapeModel tm = register_model(tape, m);
    Var lat_rows = broadcast_rows(slice_rows(tm.latents, 1, 2), 6);
    auto out = bend_points_tape(tape, tm, pts, lat_rows, nullptr, true);
    auto grads = tape.backward(mean(out.bent));
    Tensor g = grads.grad(tm.latents);
    ASSERT_EQ(g.rows(), 4);
    ASSERT_EQ(g.cols(), 6);

    const double eps = 1e-5;
    for (int c = 0; c < 6; ++c) {
        double keep = m.latents.at(1, c);
        m.latents.at(1, c) = keep + eps;
        double hi = value();
        m.latents.at(1, c) = keep - eps;
        double lo = value();
        m.latents.at(1, c) = keep;
        EXPECT_NEAR(g.at(1, c), (hi - lo) / (2 * eps), 1e-7);
        for (int r = 0; r < 4; ++r)
            if (r != 1) EXPECT_DOUBLE_EQ(g.at(r, c), 0.0);
    }
}

TEST(TapeBend, DivergenceGradientMatchesFiniteDifferences) {
    SceneModel m = init_model(tiny_config(), 38);
    perturb_all(m, 23, 0.4);
    Tensor pts = test_points(5, 12);
    Rng rng(16);
    Tensor e = random_normal(5, 3, rng);

    auto value = [&]() {
        Tensor lat = slice_rows(m.latents, 0, 1);
        auto field = model_gated_bend_dual(m, lat);
        DualTensor out = field(dual_seed(pts, e));
        double total = 0;
        for (int i = 0; i < 5; ++i)
            for (int c = 0; c < 3; ++c) total += e.at(i, c) * out.d.at(i, c);
        return total / 5.0;
    };

    Tape tape;
    TapeModel tm = register_model(tape, m);
    Var lat_rows = broadcast_rows(slice_rows(tm.latents, 0, 1), 5);
    auto out = bend_points_tape(tape, tm, pts, lat_rows, &e, true);
    auto grads = tape.backward(mean(out.divergence));

    auto refs = param_refs(m);
    auto vars = tape_param_vars(m, tm);
    ASSERT_EQ(refs.size(), vars.size());
    const double eps = 1e-5;
    for (std::size_t p = 0; p < refs.size(); ++p) {
        const std::string& name = refs[p].first;
        if (name.rfind("bending/", 0) != 0 && name.rfind("rigidity/", 0) != 0) continue;
        Tensor* t = refs[p].second;
        Tensor g = grads.grad(vars[p].second);
        for (std::size_t i = 0; i < t->size(); i += 5) {
            double keep = (*t)[i];
            (*t)[i] = keep + eps;
            double hi = value();
            (*t)[i] = keep - eps;
            double lo = value();
            (*t)[i] = keep;
            double fd = (hi - lo) / (2 * eps);
            EXPECT_NEAR(g[i], fd, 2e-6 * std::max(1.0, std::abs(fd))) << name << "[" << i << "]";
        }
    }
}

TEST(ViewDirs, ExactModeAppliesTheFullJacobian) {
    // bent map x + A x has jacobian I + A; directions follow normalize((I+A)d)
    Tensor a = Tensor::from_rows(3, 3, {0.1, 0.3, 0, -0.2, 0.05, 0.1, 0, 0.2, -0.1});
    Tensor pts = test_points(7, 13);
    Rng rng(17);
    Tensor dirs = random_normal(7, 3, rng);

    auto out = exact_view_dirs(linear_field(a), pts, dirs);
    for (int i = 0; i < 7; ++i) {
        double want[3], n2 = 0;
        for (int r = 0; r < 3; ++r) {
            want[r] = dirs.at(i, r);
            for (int c = 0; c < 3; ++c) want[r] += a.at(r, c) * dirs.at(i, c);
            n2 += want[r] * want[r];
        }
        for (int r = 0; r < 3; ++r) EXPECT_NEAR(out.dirs.at(i, r), want[r] / std::sqrt(n2), 1e-12);
    }
    EXPECT_EQ(out.fallback_count, 0);
}

TEST(ViewDirs, ApproximateModeFollowsBentSegments) {
    // 1 ray, 3 samples along +x with a kink upward at the last sample
    Tensor bent = Tensor::from_rows(3, 3, {0, 0, 0, 1, 0, 0, 1, 2, 0});
    Tensor straight = Tensor::from_rows(1, 3, {1, 0, 0});
    auto out = approximate_view_dirs(bent, 1, 3, straight);
    EXPECT_DOUBLE_EQ(out.dirs.at(1, 0), 1.0);
    EXPECT_DOUBLE_EQ(out.dirs.at(1, 1), 0.0);
    EXPECT_DOUBLE_EQ(out.dirs.at(2, 0), 0.0);
    EXPECT_DOUBLE_EQ(out.dirs.at(2, 1), 1.0);
    // first sample copies the second's direction
    EXPECT_DOUBLE_EQ(out.dirs.at(0, 0), 1.0);
    EXPECT_EQ(out.fallback_count, 0);
}

TEST(ViewDirs, CoincidentBentPointsFallBackToStraightDirection) {
    Tensor bent = Tensor::from_rows(2, 3, {1, 1, 1, 1, 1, 1});
    Tensor straight = Tensor::from_rows(1, 3, {0, 0, 2});
    auto out = approximate_view_dirs(bent, 1, 2, straight);
    EXPECT_EQ(out.fallback_count, 1);
    EXPECT_DOUBLE_EQ(out.dirs.at(1, 2), 1.0);
    EXPECT_DOUBLE_EQ(out.dirs.at(0, 2), 1.0);
}

TEST(ViewDirs, RepeatRowsExpandsPerRayData) {
    Tensor per_ray = Tensor::from_rows(2, 2, {1, 2, 3, 4});
    Tensor out = repeat_rows_per_ray(per_ray, 3);
    ASSERT_EQ(out.rows(), 6);
    EXPECT_DOUBLE_EQ(out.at(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(out.at(2, 1), 2.0);
    EXPECT_DOUBLE_EQ(out.at(3, 0), 3.0);
    EXPECT_DOUBLE_EQ(out.at(5, 1), 4.0);
}
