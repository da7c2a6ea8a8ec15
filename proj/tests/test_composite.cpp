#include <gtest/gtest.h>

#include "warpfield/composite.hpp"

using namespace warpfield;

namespace {

Tensor constant_colors(int n, double r, double g, double b) {
    Tensor c(n, 3);
    for (int i = 0; i < n; ++i) {
        c.at(i, 0) = r;
        c.at(i, 1) = g;
        c.at(i, 2) = b;
    }
    return c;
}

} // namespace

TEST(Composite, EmptySpaceIsFullyTransparent) {
    Tensor sigma(2, 4);
    Tensor deltas = Tensor::full(2, 4, 0.5);
    Tensor colors = constant_colors(8, 1, 1, 1);
    auto out = composite(colors, sigma, deltas);
    for (std::size_t i = 0; i < out.weights.size(); ++i) EXPECT_DOUBLE_EQ(out.weights[i], 0.0);
    for (std::size_t i = 0; i < out.rgb.size(); ++i) EXPECT_DOUBLE_EQ(out.rgb[i], 0.0);
    EXPECT_DOUBLE_EQ(out.residual.at(0, 0), 1.0);
    EXPECT_DOUBLE_EQ(out.residual.at(1, 0), 1.0);
}

TEST(Composite, OpaqueFirstSampleTakesAllWeight) {
    Tensor sigma = Tensor::from_rows(1, 3, {1e4, 2.0, 2.0});
    Tensor deltas = Tensor::full(1, 3, 0.5);
    Tensor colors = Tensor::from_rows(3, 3, {0.2, 0.4, 0.8, 1, 1, 1, 1, 1, 1});
    auto out = composite(colors, sigma, deltas);
    EXPECT_NEAR(out.weights.at(0, 0), 1.0, 1e-12);
    EXPECT_NEAR(out.rgb.at(0, 0), 0.2, 1e-12);
    EXPECT_NEAR(out.rgb.at(0, 1), 0.4, 1e-12);
    EXPECT_NEAR(out.rgb.at(0, 2), 0.8, 1e-12);
    EXPECT_NEAR(out.residual.at(0, 0), 0.0, 1e-12);
}

TEST(Composite, TwoSampleWeightsMatchHandComputation) {
    // sigma*delta = (0.5, 1.0): w0 = 1-e^-0.5, w1 = e^-0.5 (1-e^-1)
    Tensor sigma = Tensor::from_rows(1, 2, {1.0, 1.0});
    Tensor deltas = Tensor::from_rows(1, 2, {0.5, 1.0});
    Tensor colors = constant_colors(2, 1, 0, 0);
    auto out = composite(colors, sigma, deltas);
    EXPECT_NEAR(out.weights.at(0, 0), 0.39346934028736658, 1e-12);
    EXPECT_NEAR(out.weights.at(0, 1), 0.38340049956420358, 1e-12);
    EXPECT_NEAR(out.residual.at(0, 0), 0.22313016014842982, 1e-12);
    EXPECT_NEAR(out.weights.at(0, 0), 0.39347, 1e-5);
    EXPECT_NEAR(out.weights.at(0, 1), 0.38340, 1e-5);
    double total = out.weights.at(0, 0) + out.weights.at(0, 1) + out.residual.at(0, 0);
    EXPECT_NEAR(total, 1.0, 1e-14);
}

TEST(Composite, WeightsPlusResidualAlwaysSumToOne) {
    Rng rng(11);
    const int R = 1000, S = 8;
    Tensor sigma(R, S), deltas(R, S);
    for (std::size_t i = 0; i < sigma.size(); ++i) {
        sigma[i] = 30.0 * rng.uniform();
        deltas[i] = 0.01 + rng.uniform();
    }
    Tensor colors = constant_colors(R * S, 0.5, 0.5, 0.5);
    auto out = composite(colors, sigma, deltas);
    for (int r = 0; r < R; ++r) {
        double total = out.residual.at(r, 0);
        for (int j = 0; j < S; ++j) total += out.weights.at(r, j);
        EXPECT_NEAR(total, 1.0, 1e-6);
    }
}

TEST(Composite, TransmittanceNeverIncreasesAlongRay) {
    Rng rng(12);
    Tensor sigma(5, 16), deltas(5, 16);
    for (std::size_t i = 0; i < sigma.size(); ++i) {
        sigma[i] = 10.0 * rng.uniform();
        deltas[i] = 0.05 + 0.2 * rng.uniform();
    }
    auto out = composite(constant_colors(5 * 16, 1, 1, 1), sigma, deltas);
    for (int r = 0; r < 5; ++r) {
        EXPECT_DOUBLE_EQ(out.trans.at(r, 0), 1.0);
        for (int j = 1; j < 16; ++j) EXPECT_LE(out.trans.at(r, j), out.trans.at(r, j - 1));
    }
}

TEST(Composite, ConstantMediumIsSampleCountInvariant) {
    // uniform density and color over a fixed span: the result depends only on
    // the optical depth of the span, not on how the span is partitioned
    const double near = 1.0, far = 3.0, density = 0.8;
    auto run = [&](int s) {
        std::vector<double> d(static_cast<std::size_t>(s));
        double bin = (far - near) / s;
        for (int j = 0; j < s; ++j) d[std::size_t(j)] = near + j * bin;
        Tensor sigma = Tensor::full(1, s, density);
        Tensor deltas(1, s);
        for (int j = 0; j < s; ++j)
            deltas.at(0, j) = (j + 1 < s ? d[std::size_t(j + 1)] : far) - d[std::size_t(j)];
        return composite(constant_colors(s, 0.3, 0.6, 0.9), sigma, deltas);
    };
    auto a = run(8), b = run(64);
    for (int c = 0; c < 3; ++c) EXPECT_NEAR(a.rgb.at(0, c), b.rgb.at(0, c), 1e-9);
    EXPECT_NEAR(a.residual.at(0, 0), b.residual.at(0, 0), 1e-12);
    EXPECT_NEAR(a.residual.at(0, 0), std::exp(-density * (far - near)), 1e-12);
}

TEST(Composite, RejectsInvalidInputs) {
    Tensor ok_sigma = Tensor::full(1, 2, 1.0);
    Tensor ok_deltas = Tensor::full(1, 2, 0.5);
    Tensor ok_colors = constant_colors(2, 1, 1, 1);
    Tensor neg_sigma = Tensor::from_rows(1, 2, {1.0, -0.5});
    Tensor zero_deltas = Tensor::from_rows(1, 2, {0.5, 0.0});
    EXPECT_THROW(composite(ok_colors, neg_sigma, ok_deltas), NumericError);
    EXPECT_THROW(composite(ok_colors, ok_sigma, zero_deltas), NumericError);
    EXPECT_THROW(composite(constant_colors(3, 1, 1, 1), ok_sigma, ok_deltas), UsageError);
    EXPECT_THROW(composite(ok_colors, ok_sigma, Tensor::full(2, 1, 0.5)), UsageError);
}

TEST(Composite, TapeVersionMatchesPlainVersion) {
    Rng rng(13);
    const int R = 4, S = 6;
    Tensor sigma(R, S), deltas(R, S), colors(R * S, 3);
    for (std::size_t i = 0; i < sigma.size(); ++i) {
        sigma[i] = 5.0 * rng.uniform();
        deltas[i] = 0.05 + 0.3 * rng.uniform();
    }
    for (std::size_t i = 0; i < colors.size(); ++i) colors[i] = rng.uniform();

    auto plain = composite(colors, sigma, deltas);
    Tape tape;
    auto out = composite_tape(tape.constant(colors), tape.constant(sigma), deltas);
    EXPECT_LT(max_abs_diff(out.rgb.val(), plain.rgb), 1e-12);
    EXPECT_LT(max_abs_diff(out.trans.val(), plain.trans), 1e-12);
    EXPECT_LT(max_abs_diff(out.occ.val(), plain.occ), 1e-12);
    EXPECT_LT(max_abs_diff(out.weights.val(), plain.weights), 1e-12);
    EXPECT_LT(max_abs_diff(out.residual.val(), plain.residual), 1e-12);
}

TEST(Composite, GradientOfMeanColorMatchesFiniteDifferences) {
    Rng rng(14);
    const int R = 2, S = 4;
    Tensor sigma(R, S), deltas(R, S), colors(R * S, 3);
    for (std::size_t i = 0; i < sigma.size(); ++i) {
        sigma[i] = 0.5 + 2.0 * rng.uniform();
        deltas[i] = 0.1 + 0.3 * rng.uniform();
    }
    for (std::size_t i = 0; i < colors.size(); ++i) colors[i] = rng.uniform();

    auto value = [&]() {
        Tape tape;
        auto out = composite_tape(tape.constant(colors), tape.constant(sigma), deltas);
        return mean(out.rgb).val().item();
    };

    Tape tape;
    Var vs = tape.leaf(sigma, true);
    Var vc = tape.leaf(colors, true);
    auto out = composite_tape(vc, vs, deltas);
    auto grads = tape.backward(mean(out.rgb));
    Tensor gs = grads.grad(vs);
    Tensor gc = grads.grad(vc);

    const double eps = 1e-5;
    for (std::size_t i = 0; i < sigma.size(); ++i) {
        double keep = sigma[i];
        sigma[i] = keep + eps;
        double hi = value();
        sigma[i] = keep - eps;
        double lo = value();
        sigma[i] = keep;
        EXPECT_NEAR(gs[i], (hi - lo) / (2 * eps), 1e-6);
    }
    for (std::size_t i = 0; i < colors.size(); i += 7) {
        double keep = colors[i];
        colors[i] = keep + eps;
        double hi = value();
        colors[i] = keep - eps;
        double lo = value();
        colors[i] = keep;
        EXPECT_NEAR(gc[i], (hi - lo) / (2 * eps), 1e-6);
    }
}
