#include <cstdlib>

#include <gtest/gtest.h>

#include "warpfield/optim.hpp"
#include "warpfield/threads.hpp"

using namespace warpfield;

TEST(Adam, FirstStepMatchesHandComputedUpdate) {
    Tensor p = Tensor::from_rows(1, 2, {1.0, -2.0});
    Tensor g = Tensor::from_rows(1, 2, {0.5, -3.0});
    Adam opt({{"p", &p}});
    opt.step({g}, 0.1);
    // after one step the bias-corrected moments are exactly g and g^2
    for (int c = 0; c < 2; ++c) {
        double want = (c == 0 ? 1.0 : -2.0) - 0.1 * g.at(0, c) / (std::abs(g.at(0, c)) + 1e-8);
        EXPECT_NEAR(p.at(0, c), want, 1e-15);
    }
    EXPECT_EQ(opt.step_count(), 1);
}

TEST(Adam, ZeroGradientIsAFixedPoint) {
    Tensor p = Tensor::from_rows(2, 2, {0.1, -0.2, 0.3, -0.4});
    Tensor before = p;
    Adam opt({{"p", &p}});
    for (int i = 0; i < 3; ++i) opt.step({Tensor(2, 2)}, 0.05);
    EXPECT_TRUE(bitwise_equal(p, before));
}

TEST(Adam, IdenticalRunsProduceBitwiseIdenticalTrajectories) {
    auto run = [&]() {
        Tensor p = Tensor::from_rows(2, 3, {1, 2, 3, 4, 5, 6});
        Adam opt({{"p", &p}});
        Rng rng(17);
        for (int i = 0; i < 5; ++i) opt.step({random_normal(2, 3, rng)}, 0.01);
        return p;
    };
    EXPECT_TRUE(bitwise_equal(run(), run()));
}

TEST(Adam, RejectsBadGradients) {
    Tensor p(2, 2);
    Adam opt({{"p", &p}});
    EXPECT_THROW(opt.step({Tensor(2, 3)}, 0.1), UsageError);
    EXPECT_THROW(opt.step({Tensor(2, 2), Tensor(2, 2)}, 0.1), UsageError);
    Tensor bad(2, 2);
    bad.at(0, 0) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(opt.step({bad}, 0.1), NumericError);
}

TEST(Adam, RestoreResumesTheExactTrajectory) {
    auto grads_at = [](int i) {
        Rng rng(100 + std::uint64_t(i));
        return random_normal(2, 2, rng);
    };
    Tensor p1 = Tensor::from_rows(2, 2, {1, 2, 3, 4});
    Adam a1({{"p", &p1}});
    for (int i = 0; i < 10; ++i) a1.step({grads_at(i)}, 0.02);

    Tensor p2 = Tensor::from_rows(2, 2, {1, 2, 3, 4});
    Adam a2({{"p", &p2}});
    for (int i = 0; i < 5; ++i) a2.step({grads_at(i)}, 0.02);
    Adam a3({{"p", &p2}});
    a3.restore(a2.first_moments(), a2.second_moments(), a2.step_count());
    for (int i = 5; i < 10; ++i) a3.step({grads_at(i)}, 0.02);

    EXPECT_TRUE(bitwise_equal(p1, p2));
}

TEST(Threads, EveryIndexVisitedExactlyOnce) {
    const int n = 1503;
    std::vector<int> marks(n, 0);
    parallel_for(n, [&](int b, int e) {
        for (int i = b; i < e; ++i) marks[std::size_t(i)] += 1;
    });
    for (int i = 0; i < n; ++i) EXPECT_EQ(marks[std::size_t(i)], 1);
}

TEST(Threads, EnvironmentVariableForcesSingleWorker) {
    setenv("WARPFIELD_THREADS", "0", 1);
    EXPECT_EQ(worker_count(), 1);
    setenv("WARPFIELD_THREADS", "3", 1);
    EXPECT_EQ(worker_count(), 3);
    unsetenv("WARPFIELD_THREADS");
    EXPECT_GE(worker_count(), 1);
}

TEST(Threads, ParallelAndSerialRunsProduceIdenticalBytes) {
    const int n = 4096;
    auto fill = [&](std::vector<double>& out) {
        parallel_for(n, [&](int b, int e) {
            for (int i = b; i < e; ++i) out[std::size_t(i)] = std::sin(0.1 * i) * std::exp(-1e-4 * i);
        });
    };
    std::vector<double> serial(n), parallel(n);
    setenv("WARPFIELD_THREADS", "1", 1);
    fill(serial);
    setenv("WARPFIELD_THREADS", "5", 1);
    fill(parallel);
    unsetenv("WARPFIELD_THREADS");
    for (int i = 0; i < n; ++i) EXPECT_EQ(serial[std::size_t(i)], parallel[std::size_t(i)]);
}

TEST(Threads, WorkerExceptionsPropagate) {
    setenv("WARPFIELD_THREADS", "4", 1);
    EXPECT_THROW(parallel_for(100,
                              [](int b, int) {
                                  if (b == 0) throw UsageError("boom");
                              }),
                 UsageError);
    unsetenv("WARPFIELD_THREADS");
}
