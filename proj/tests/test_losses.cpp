#include <array>

#include <gtest/gtest.h>

#include "warpfield/losses.hpp"

using namespace warpfield;

TEST(Schedule, KnownPointsOfTheDecayCurve) {
    TrainSchedule s;
    s.warmup = false;
    s.total_iterations = 500000;
    LossWeights full{0.003, 600.0, 3.0};

    auto at0 = schedule_at(0, s, full);
    EXPECT_DOUBLE_EQ(at0.lr, 5e-4);
    EXPECT_DOUBLE_EQ(at0.weights.offsets, 6.0); // 1/100th of full
    EXPECT_DOUBLE_EQ(at0.weights.rigidity, 0.003 / 100.0);

    auto decayed = schedule_at(250000, s, full);
    EXPECT_NEAR(decayed.lr, 5e-5, 1e-18);

    auto done = schedule_at(500000, s, full);
    EXPECT_NEAR(done.weights.offsets, 600.0, 1e-9);
    EXPECT_NEAR(done.weights.divergence, 3.0, 1e-12);

    auto beyond = schedule_at(600000, s, full);
    EXPECT_NEAR(beyond.weights.offsets, 600.0, 1e-9); // ramp capped at full
}

TEST(Schedule, WarmupRampsLinearlyAndJoinsContinuously) {
    TrainSchedule s;
    s.warmup = true;
    LossWeights full;
    EXPECT_DOUBLE_EQ(schedule_at(0, s, full).lr, 5e-4 * 0.05);
    double just_before = schedule_at(999, s, full).lr;
    double at_join = schedule_at(1000, s, full).lr;
    EXPECT_LT(just_before, at_join);
    double one_step_decay = std::pow(0.1, -1.0 / 250000.0);
    EXPECT_NEAR(just_before / at_join, (0.05 + 0.95 * 0.999) * one_step_decay, 1e-9);
    for (int it = 1; it < 2000; ++it)
        EXPECT_LT(std::abs(schedule_at(it, s, full).lr - schedule_at(it - 1, s, full).lr), 1e-5);
}

TEST(Schedule, RejectsInvalidFields) {
    TrainSchedule s;
    s.base_lr = 0;
    EXPECT_THROW(s.validate(), UsageError);
    TrainSchedule s2;
    s2.weight_ramp_start = 0;
    EXPECT_THROW(s2.validate(), UsageError);
    LossWeights w;
    w.offsets = -1;
    EXPECT_THROW(w.validate(), UsageError);
}

TEST(DataLoss, PerfectPredictionsGiveZero) {
    Tensor truth = Tensor::from_rows(2, 3, {0.2, 0.4, 0.6, 0.1, 0.5, 0.9});
    Tape tape;
    Var c = tape.constant(truth);
    EXPECT_DOUBLE_EQ(data_loss(c, c, truth).val().item(), 0.0);
}

TEST(DataLoss, ClosedFormSquaredError) {
    Tensor truth = Tensor::full(4, 3, 0.5);
    Tensor coarse = truth;
    for (int r = 0; r < 4; ++r) coarse.at(r, 0) += 0.1;
    Tape tape;
    Var loss = data_loss(tape.constant(coarse), tape.constant(truth), truth);
    EXPECT_NEAR(loss.val().item(), 0.01, 1e-15);
}

TEST(DataLoss, SymmetricUnderSwappingCoarseAndFine) {
    Rng rng(3);
    Tensor truth = random_uniform(5, 3, 0.0, 1.0, rng);
    Tensor a = random_uniform(5, 3, 0.0, 1.0, rng);
    Tensor b = random_uniform(5, 3, 0.0, 1.0, rng);
    Tape tape;
    double ab = data_loss(tape.constant(a), tape.constant(b), truth).val().item();
    double ba = data_loss(tape.constant(b), tape.constant(a), truth).val().item();
    EXPECT_DOUBLE_EQ(ab, ba);
}

TEST(OffsetsLoss, ZeroOffsetsLeaveOnlyTheRigidityPenalty) {
    const int n = 6;
    Tape tape;
    Var raw = tape.constant(Tensor(n, 3));
    Var w = tape.constant(Tensor::full(n, 1, 0.5));
    Tensor alpha = Tensor::full(n, 1, 1.0);
    double val = offsets_loss(raw, w, w, alpha, 0.003).val().item();
    EXPECT_NEAR(val, 0.003 * 0.5, 1e-6);
}

TEST(OffsetsLoss, ExponentBlendsBetweenNormAndSquaredNorm) {
    Tensor raw = Tensor::from_rows(1, 3, {0.5, 0, 0});
    Tensor alpha = Tensor::full(1, 1, 1.0);
    auto eval = [&](double w) {
        Tape tape;
        Var wv = tape.constant(Tensor::full(1, 1, w));
        return offsets_loss(tape.constant(raw), wv, tape.constant(Tensor(1, 1)), alpha, 0.0)
            .val()
            .item();
    };
    EXPECT_NEAR(eval(1.0), 0.5, 1e-6);  // exponent 1
    EXPECT_NEAR(eval(0.0), 0.25, 1e-6); // exponent 2
}

TEST(OffsetsLoss, GradientMatchesFiniteDifferencesAwayFromZero) {
    Rng rng(4);
    const int n = 5;
    Tensor raw = random_normal(n, 3, rng) * 0.3;
    Tensor w(n, 1);
    for (int i = 0; i < n; ++i) w.at(i, 0) = 0.2 + 0.6 * rng.uniform();
    Tensor alpha(n, 1);
    for (int i = 0; i < n; ++i) alpha.at(i, 0) = rng.uniform();

    auto value = [&]() {
        Tape tape;
        return offsets_loss(tape.constant(raw), tape.constant(w), tape.constant(w), alpha, 0.01)
            .val()
            .item();
    };
    Tape tape;
    Var vr = tape.leaf(raw, true);
    Var vw = tape.leaf(w, true);
    auto grads = tape.backward(offsets_loss(vr, vw, vw, alpha, 0.01));
    Tensor gr = grads.grad(vr), gw = grads.grad(vw);

    const double eps = 1e-6;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        double keep = raw[i];
        raw[i] = keep + eps;
        double hi = value();
        raw[i] = keep - eps;
        double lo = value();
        raw[i] = keep;
        EXPECT_NEAR(gr[i], (hi - lo) / (2 * eps), 1e-5);
    }
    for (std::size_t i = 0; i < w.size(); ++i) {
        double keep = w[i];
        w[i] = keep + eps;
        double hi = value();
        w[i] = keep - eps;
        double lo = value();
        w[i] = keep;
        EXPECT_NEAR(gw[i], (hi - lo) / (2 * eps), 1e-5);
    }
}

TEST(OffsetsLoss, ZeroOffsetsRouteNoGradientIntoTheOffsets) {
    // the norm floor keeps sqrt off the kink, so d loss / d raw is exactly 0
    const int n = 4;
    Tape tape;
    Var raw = tape.leaf(Tensor(n, 3), true);
    Var w = tape.constant(Tensor::full(n, 1, 0.5));
    auto grads = tape.backward(offsets_loss(raw, w, w, Tensor::full(n, 1, 1.0), 0.003));
    Tensor g = grads.grad(raw);
    for (std::size_t i = 0; i < g.size(); ++i) EXPECT_DOUBLE_EQ(g[i], 0.0);
}

TEST(NaiveOffsetsLoss, FullGatingGivesZero) {
    const int n = 3;
    Tape tape;
    Var gated = tape.constant(Tensor(n, 3)); // w = 0 everywhere zeroes the gated offsets
    Var w = tape.constant(Tensor(n, 1));
    double val = naive_offsets_loss(gated, w, Tensor::full(n, 1, 1.0)).val().item();
    EXPECT_NEAR(val, 0.0, 1e-6);
}

TEST(NaiveOffsetsLoss, UnitGateMatchesTheBlendedNormOfRawOffsets) {
    Rng rng(5);
    Tensor raw = random_normal(4, 3, rng) * 0.5;
    Tensor alpha(4, 1);
    for (int i = 0; i < 4; ++i) alpha.at(i, 0) = rng.uniform();
    Tape tape;
    Var ones = tape.constant(Tensor::full(4, 1, 1.0));
    double naive = naive_offsets_loss(tape.constant(raw), ones, alpha).val().item();
    double full = offsets_loss(tape.constant(raw), ones, ones, alpha, 0.0).val().item();
    EXPECT_NEAR(naive, full, 1e-15);
}

TEST(NaiveOffsetsLoss, HandComputedCase) {
    Tape tape;
    Var gated = tape.constant(Tensor::from_rows(1, 3, {0.3, 0, 0}));
    Var w = tape.constant(Tensor::full(1, 1, 1.0));
    double val = naive_offsets_loss(gated, w, Tensor::full(1, 1, 1.0)).val().item();
    EXPECT_NEAR(val, 0.3, 1e-6);
}

TEST(DivergenceLoss, ZeroOccupancySilencesAnyField) {
    Rng rng(6);
    Tape tape;
    Var div = tape.constant(random_normal(8, 1, rng) * 100.0);
    EXPECT_DOUBLE_EQ(divergence_loss(div, Tensor(8, 1)).val().item(), 0.0);
}

TEST(DivergenceLoss, MatchesIndependentMonteCarloOnLinearField) {
    // estimates e^T A e over many draws; loss with unit occupancy averages
    // their squares, which an independent generator must reproduce
    Tensor a = Tensor::from_rows(3, 3, {0.4, 1.0, -0.3, 0.2, -0.6, 0.5, -0.1, 0.8, 0.7});
    auto quad = [&](Rng& rng, int k, double& mean_out, double& var_out) {
        double s = 0, s2 = 0;
        for (int d = 0; d < k; ++d) {
            Tensor e = random_normal(1, 3, rng);
            double q = 0;
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) q += e.at(0, r) * a.at(r, c) * e.at(0, c);
            s += q * q;
            s2 += q * q * q * q;
        }
        mean_out = s / k;
        var_out = s2 / k - mean_out * mean_out;
    };

    const int k = 40000;
    Rng r1(7);
    Tensor est(k, 1);
    {
        double q;
        for (int d = 0; d < k; ++d) {
            Tensor e = random_normal(1, 3, r1);
            q = 0;
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c) q += e.at(0, r) * a.at(r, c) * e.at(0, c);
            est.at(d, 0) = q;
        }
    }
    Tape tape;
    double loss = divergence_loss(tape.constant(est), Tensor::full(k, 1, 1.0)).val().item();

    Rng r2(99);
    double mc_mean, mc_var;
    quad(r2, k, mc_mean, mc_var);
    double se = std::sqrt(2.0 * mc_var / k);
    EXPECT_NEAR(loss, mc_mean, 3 * se);
}

TEST(TotalLoss, ZeroWeightsReduceToDataTerm) {
    Tape tape;
    Var d = tape.scalar(0.7), o = tape.scalar(2.0), v = tape.scalar(5.0);
    LossWeights w{0, 0, 0};
    EXPECT_DOUBLE_EQ(total_loss(d, o, v, w).val().item(), 0.7);
}

TEST(TotalLoss, LinearInEachWeight) {
    Tape tape;
    Var d = tape.scalar(0.7), o = tape.scalar(2.0), v = tape.scalar(5.0);
    LossWeights w{0.003, 10.0, 2.0};
    LossWeights w2 = w;
    w2.divergence *= 2;
    double base = total_loss(d, o, v, w).val().item();
    double doubled = total_loss(d, o, v, w2).val().item();
    EXPECT_NEAR(doubled - base, w.divergence * 5.0, 1e-12);
}

TEST(TotalLoss, GradientEqualsWeightedSumOfPartGradients) {
    Rng rng(8);
    Tensor x0 = random_normal(3, 2, rng);
    LossWeights w{0.003, 4.0, 0.5};

    auto parts = [&](Tape& tape, Var x) {
        Var d = mean(mul(x, x));
        Var o = mean(vtanh(x));
        Var v = mean(vexp(scale(x, 0.1)));
        return std::array<Var, 3>{d, o, v};
    };

    Tape t1;
    Var x1 = t1.leaf(x0, true);
    auto p1 = parts(t1, x1);
    Tensor g_total = t1.backward(total_loss(p1[0], p1[1], p1[2], w)).grad(x1);

    Tensor g_sum(3, 2);
    double coef[3] = {1.0, w.offsets, w.divergence};
    for (int i = 0; i < 3; ++i) {
        Tape t;
        Var x = t.leaf(x0, true);
        auto p = parts(t, x);
        Tensor g = t.backward(p[std::size_t(i)]).grad(x);
        for (std::size_t j = 0; j < g.size(); ++j) g_sum[j] += coef[i] * g[j];
    }
    EXPECT_LT(max_abs_diff(g_total, g_sum), 1e-12);
}
