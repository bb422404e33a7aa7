#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "sdiff/curriculum.hpp"

using namespace sdiff;

namespace {

CurriculumConfig default_cfg() {
    CurriculumConfig cfg;
    cfg.n_min = 3;
    cfg.n_max = 8;
    cfg.total_steps = 2000;
    return cfg;
}

}  // namespace

TEST_CASE("static grid endpoints match the schedule") {
    const CurriculumConfig cfg = default_cfg();
    const IntrinsicEntropy intr = IntrinsicEntropy::defaults(cfg.n_min, cfg.n_max);

    StaticGrid g0 = static_grid(0, cfg.total_steps, cfg);
    CHECK(g0.task_marginal(Task::IPT) == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(g0.task_marginal(Task::PDT) == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(g0.task_marginal(Task::GRT) == doctest::Approx(0.1).epsilon(1e-12));
    // conditional mode at n_min when the ratio is below 1
    for (int n = cfg.n_min + 1; n <= cfg.n_max; ++n)
        CHECK(g0.frame_marginal(cfg.n_min) > g0.frame_marginal(n));

    StaticGrid g1 = static_grid(cfg.total_steps, cfg.total_steps, cfg);
    CHECK(g1.task_marginal(Task::GRT) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(g1.task_marginal(Task::IPT) == doctest::Approx(0.1).epsilon(1e-12));
    for (int n = cfg.n_min; n < cfg.n_max; ++n)
        CHECK(g1.frame_marginal(cfg.n_max) > g1.frame_marginal(n));

    CHECK_THROWS_AS(static_grid(-1, cfg.total_steps, cfg), std::invalid_argument);
    CHECK_THROWS_AS(static_grid(cfg.total_steps + 1, cfg.total_steps, cfg),
                    std::invalid_argument);

    // grids sum to 1 within 1e-12 at every probed step (validate() checks it)
    for (long t : {0L, 1L, 7L, 500L, 1999L, 2000L}) {
        static_grid(t, cfg.total_steps, cfg).validate();
        (void)intr;
    }
}

TEST_CASE("static entropy of degenerate and uniform grids") {
    const CurriculumConfig cfg = default_cfg();
    const IntrinsicEntropy intr = IntrinsicEntropy::defaults(cfg.n_min, cfg.n_max);

    SUBCASE("point mass") {
        StaticGrid g = uniform_grid(cfg);
        std::fill(g.p.begin(), g.p.end(), 0.0);
        g.cell_ref(Task::IPT, cfg.n_min) = 1.0;
        CHECK(static_entropy(g, intr) ==
              doctest::Approx(intr.task(Task::IPT) + std::log(3.0)).epsilon(1e-14));
    }

    SUBCASE("uniform grid gives the arithmetic mean") {
        StaticGrid g = uniform_grid(cfg);
        double mean = 0;
        int cells = 0;
        for (Task t : {Task::IPT, Task::PDT, Task::GRT})
            for (int n = cfg.n_min; n <= cfg.n_max; ++n) {
                mean += intr.cell(t, n);
                ++cells;
            }
        mean /= cells;
        CHECK(static_entropy(g, intr) == doctest::Approx(mean).epsilon(1e-13));
    }
}

TEST_CASE("static entropy increases strictly over the full default schedule") {
    const CurriculumConfig cfg = default_cfg();
    const IntrinsicEntropy intr = IntrinsicEntropy::defaults(cfg.n_min, cfg.n_max);
    double prev = -1e300;
    for (long t = 0; t <= cfg.total_steps; ++t) {
        const double h = static_entropy(static_grid(t, cfg.total_steps, cfg), intr);
        CHECK(h > prev);
        prev = h;
    }
}

TEST_CASE("marginal schedule rules: tasks shift hard, lengths shift long") {
    const CurriculumConfig cfg = default_cfg();
    double prev_ipt = 1e300, prev_grt = -1e300, prev_en = -1e300;
    for (long t = 0; t <= cfg.total_steps; t += 50) {
        const StaticGrid g = static_grid(t, cfg.total_steps, cfg);
        const double ipt = g.task_marginal(Task::IPT);
        const double grt = g.task_marginal(Task::GRT);
        CHECK(ipt <= prev_ipt + 1e-15);
        CHECK(grt >= prev_grt - 1e-15);
        prev_ipt = ipt;
        prev_grt = grt;
        // conditional expectation of N given any task is shared and non-decreasing
        double en = 0;
        for (int n = cfg.n_min; n <= cfg.n_max; ++n)
            en += n * g.cell(Task::IPT, n) / g.task_marginal(Task::IPT);
        CHECK(en >= prev_en - 1e-12);
        prev_en = en;
    }
}

TEST_CASE("loss deviation matches the prefix-mean oracle") {
    SUBCASE("constant sequence gives zero after the first step") {
        LossHistory h;
        CHECK(loss_deviation(h, 2.5) == 0.0);
        for (int i = 0; i < 10; ++i) CHECK(loss_deviation(h, 2.5) == doctest::Approx(0.0));
    }
    SUBCASE("hand value") {
        LossHistory h;
        loss_deviation(h, 1.0);
        CHECK(loss_deviation(h, 1.5) == doctest::Approx(0.5).epsilon(1e-15));
    }
    SUBCASE("random sequence against brute-force prefix mean") {
        Rng rng(5);
        LossHistory h;
        std::vector<double> seen;
        for (int i = 0; i < 200; ++i) {
            const double loss = rng.uniform(0.0, 3.0);
            const double dev = loss_deviation(h, loss);
            double mean = 0;
            for (double v : seen) mean += v;
            if (!seen.empty()) mean /= double(seen.size());
            const double expected = seen.empty() ? 0.0 : loss - mean;
            CHECK(std::abs(dev - expected) < 1e-12);
            seen.push_back(loss);
        }
    }
    SUBCASE("non-finite loss rejected") {
        LossHistory h;
        CHECK_THROWS_AS(loss_deviation(h, std::nan("")), std::invalid_argument);
    }
}

TEST_CASE("pid contract") {
    SUBCASE("zero gains give zero output forever") {
        PidState pid;
        pid.windup_bound = 10;
        Rng rng(9);
        for (int i = 0; i < 50; ++i) CHECK(pid_update(pid, rng.normal()) == 0.0);
    }
    SUBCASE("constant positive deviation decreases the score until anti-windup") {
        PidState pid;
        pid.kp = 0.3;
        pid.ki = 0.2;
        pid.windup_bound = 5.0;
        const double c = 1.0;
        double prev = 1e300;
        int saturated_at = -1;
        for (int i = 0; i < 60; ++i) {
            const double out = pid_update(pid, c);
            if (saturated_at < 0)
                CHECK(out < prev);  // strict decrease until the clamp engages
            else
                CHECK(out == doctest::Approx(prev).epsilon(1e-12));  // flat once clamped
            if (std::abs(pid.integral + pid.windup_bound) < 1e-12 && saturated_at < 0)
                saturated_at = i;
            prev = out;
        }
        CHECK(saturated_at > 0);
    }
    SUBCASE("derivative-only impulse response") {
        PidState pid;
        pid.kd = 0.7;
        pid.windup_bound = 10;
        const double c = 2.0;
        CHECK(pid_update(pid, c) == doctest::Approx(-0.7 * c).epsilon(1e-15));
        CHECK(pid_update(pid, 0.0) == doctest::Approx(+0.7 * c).epsilon(1e-15));
        CHECK(pid_update(pid, 0.0) == 0.0);
    }
}

TEST_CASE("adaptive entropy is a bounded strictly increasing correction") {
    const double h = 3.0, delta = 0.4;
    CHECK(adaptive_entropy(h, 0.0, delta) == h);
    CHECK(adaptive_entropy(h, 1e9, delta) == doctest::Approx(h + delta).epsilon(1e-12));
    CHECK(adaptive_entropy(h, -1e9, delta) == doctest::Approx(h - delta).epsilon(1e-12));
    Rng rng(3);
    for (int i = 0; i < 100; ++i) {
        const double a = rng.normal(), b = a + 0.01 + rng.uniform();
        CHECK(adaptive_entropy(h, a, delta) < adaptive_entropy(h, b, delta));
    }
}

TEST_CASE("fused target: endpoints and monotone realization") {
    SUBCASE("zero adaptive score leaves the static value") {
        FusedTarget f = fused_target(0.7, 2.0, 2.0, -1e300);
        CHECK(f.raw == doctest::Approx(2.0));
        CHECK(f.realized == doctest::Approx(2.0));
    }
    SUBCASE("realized trace is non-decreasing for arbitrary bounded loss traces") {
        // property test over random loss sequences through the full scheduler
        for (uint64_t seed = 1; seed <= 100; ++seed) {
            CurriculumConfig cfg = default_cfg();
            cfg.total_steps = 60;
            Scheduler sched(Strategy::dcl, cfg);
            Rng rng(seed);
            double prev = -1e300;
            for (int step = 0; step < 60; ++step) {
                Scheduler::Draw d = sched.next(rng);
                CHECK(d.h_realized >= prev);
                prev = d.h_realized;
                // adversarial bounded loss spikes
                sched.feedback(rng.below(2) ? 5.0 : 0.01);
            }
        }
    }
}

TEST_CASE("zero-gain scheduler reproduces the static schedule bit-exactly") {
    CurriculumConfig cfg = default_cfg();
    cfg.total_steps = 100;
    cfg.kp = cfg.ki = cfg.kd = 0;
    Scheduler sched(Strategy::dcl, cfg);
    const IntrinsicEntropy intr = IntrinsicEntropy::defaults(cfg.n_min, cfg.n_max);
    Rng rng(17);
    Rng noise(18);
    for (long t = 0; t <= 100; ++t) {
        const StaticGrid expect = static_grid(t, cfg.total_steps, cfg);
        const StaticGrid got = sched.grid_at(t);
        REQUIRE(got.p.size() == expect.p.size());
        for (size_t i = 0; i < got.p.size(); ++i) CHECK(got.p[i] == expect.p[i]);

        Scheduler::Draw d = sched.next(rng);
        CHECK(d.h_static == static_entropy(expect, intr));
        CHECK(d.h_adaptive == d.h_static);  // tanh(0) exactly
        CHECK(d.h_realized == d.h_raw);
        sched.feedback(noise.uniform());
        if (t >= 99) break;
    }
}

TEST_CASE("sampler tilt hits the target and matches empirical frequencies") {
    const CurriculumConfig cfg = default_cfg();
    const IntrinsicEntropy intr = IntrinsicEntropy::defaults(cfg.n_min, cfg.n_max);
    const StaticGrid grid = static_grid(700, cfg.total_steps, cfg);
    const double grid_mean = static_entropy(grid, intr);

    SUBCASE("target at the grid mean leaves the distribution untouched") {
        double beta = 99;
        std::vector<double> q = tilted_cells(grid, intr, grid_mean, &beta);
        CHECK(beta == 0.0);
        double tv = 0;
        for (size_t i = 0; i < q.size(); ++i) tv += std::abs(q[i] - grid.p[i]);
        CHECK(tv / 2 < 1e-6);
    }

    SUBCASE("target above the achievable maximum concentrates on the hardest cells") {
        Rng rng(31);
        TiltedDraw d = sample_task(grid, intr, 1e9, rng);
        std::vector<double> q = tilted_cells(grid, intr, 1e9, nullptr);
        double eq = 0;
        for (int ti = 0; ti < 3; ++ti)
            for (int n = grid.n_min; n <= grid.n_max; ++n)
                eq += q[size_t(ti) * grid.n_count() + (n - grid.n_min)] * intr.cell(Task(ti), n);
        CHECK(std::abs(eq - d.achieved) < 1e-12);
        // the achieved expectation sits within tolerance of the saturated tilt
        std::vector<double> qmax = tilted_cells(grid, intr, 1e18, nullptr);
        double emax = 0;
        for (int ti = 0; ti < 3; ++ti)
            for (int n = grid.n_min; n <= grid.n_max; ++n)
                emax += qmax[size_t(ti) * grid.n_count() + (n - grid.n_min)] *
                        intr.cell(Task(ti), n);
        CHECK(std::abs(d.achieved - emax) <= 1e-3);
        // mass concentrates near (GRT, n_max)
        CHECK(q.back() > 0.5);
    }

    SUBCASE("bisection reaches intermediate targets within 1e-3") {
        for (double frac : {0.1, 0.3, 0.6, 0.9}) {
            const double lo = intr.cell(Task::IPT, cfg.n_min);
            const double hi = intr.cell(Task::GRT, cfg.n_max);
            const double target = lo + frac * (hi - lo);
            std::vector<double> q = tilted_cells(grid, intr, target, nullptr);
            double eq = 0;
            for (int ti = 0; ti < 3; ++ti)
                for (int n = grid.n_min; n <= grid.n_max; ++n)
                    eq += q[size_t(ti) * grid.n_count() + (n - grid.n_min)] *
                          intr.cell(Task(ti), n);
            // the clamp keeps extreme targets inside the achievable band
            const double clamped = std::clamp(
                target,
                [&] {
                    std::vector<double> qq = tilted_cells(grid, intr, -1e18, nullptr);
                    double m = 0;
                    for (int ti = 0; ti < 3; ++ti)
                        for (int n = grid.n_min; n <= grid.n_max; ++n)
                            m += qq[size_t(ti) * grid.n_count() + (n - grid.n_min)] *
                                 intr.cell(Task(ti), n);
                    return m;
                }(),
                [&] {
                    std::vector<double> qq = tilted_cells(grid, intr, 1e18, nullptr);
                    double m = 0;
                    for (int ti = 0; ti < 3; ++ti)
                        for (int n = grid.n_min; n <= grid.n_max; ++n)
                            m += qq[size_t(ti) * grid.n_count() + (n - grid.n_min)] *
                                 intr.cell(Task(ti), n);
                    return m;
                }());
            CHECK(std::abs(eq - clamped) <= 1e-3);
        }
    }

    SUBCASE("draw frequencies stay within 3-sigma multinomial bounds") {
        const double target = grid_mean + 0.4;
        std::vector<double> q = tilted_cells(grid, intr, target, nullptr);
        Rng rng(79);
        const int draws = 100000;
        std::vector<int> counts(q.size(), 0);
        for (int i = 0; i < draws; ++i) {
            TiltedDraw d = sample_task(grid, intr, target, rng);
            counts[size_t(int(d.task)) * grid.n_count() + (d.n - grid.n_min)]++;
        }
        for (size_t i = 0; i < q.size(); ++i) {
            const double mean = draws * q[i];
            const double sigma = std::sqrt(draws * q[i] * (1 - q[i]));
            CHECK(std::abs(counts[i] - mean) <= 3 * sigma + 1);
        }
    }
}

TEST_CASE("condition-mask task frequencies match the grid marginals") {
    const CurriculumConfig cfg = default_cfg();
    const StaticGrid grid = static_grid(500, cfg.total_steps, cfg);
    CurriculumConfig c2 = cfg;
    Scheduler sched(Strategy::dcl, c2);
    (void)sched;
    Rng rng(55);
    const int draws = 10000;
    int task_counts[3] = {0, 0, 0};
    const IntrinsicEntropy intr = IntrinsicEntropy::defaults(cfg.n_min, cfg.n_max);
    const double target = static_entropy(grid, intr);  // zero tilt
    for (int i = 0; i < draws; ++i) {
        TiltedDraw d = sample_task(grid, intr, target, rng);
        task_counts[int(d.task)]++;
    }
    for (Task t : {Task::IPT, Task::PDT, Task::GRT}) {
        const double p = grid.task_marginal(t);
        const double sigma = std::sqrt(draws * p * (1 - p));
        CHECK(std::abs(task_counts[int(t)] - draws * p) <= 3 * sigma + 1);
    }
}

TEST_CASE("lcl grid: shared task endpoints, uniform frame marginal") {
    const CurriculumConfig cfg = default_cfg();
    const IntrinsicEntropy intr = IntrinsicEntropy::defaults(cfg.n_min, cfg.n_max);

    const StaticGrid l0 = lcl_grid(0, cfg.total_steps, cfg);
    const StaticGrid s0 = static_grid(0, cfg.total_steps, cfg);
    for (Task t : {Task::IPT, Task::PDT, Task::GRT})
        CHECK(l0.task_marginal(t) == doctest::Approx(s0.task_marginal(t)).epsilon(1e-14));

    for (long t : {0L, 321L, 1500L, 2000L}) {
        const StaticGrid g = lcl_grid(t, cfg.total_steps, cfg);
        for (int n = cfg.n_min; n <= cfg.n_max; ++n)
            CHECK(g.frame_marginal(n) == doctest::Approx(1.0 / g.n_count()).epsilon(1e-13));
    }

    // the task-entropy contribution is non-decreasing over the sweep
    double prev = -1e300;
    for (long t = 0; t <= cfg.total_steps; t += 100) {
        const StaticGrid g = lcl_grid(t, cfg.total_steps, cfg);
        double h = 0;
        for (Task tk : {Task::IPT, Task::PDT, Task::GRT})
            h += g.task_marginal(tk) * intr.task(tk);
        CHECK(h >= prev - 1e-15);
        prev = h;
    }
}

TEST_CASE("scheduler state round-trips through serialization") {
    CurriculumConfig cfg = default_cfg();
    cfg.total_steps = 50;
    Scheduler a(Strategy::dcl, cfg);
    Rng rng(3);
    for (int i = 0; i < 20; ++i) {
        a.next(rng);
        a.feedback(rng.uniform());
    }
    Scheduler b = Scheduler::deserialize(a.serialize(), Strategy::dcl, cfg);
    Rng r1(99), r2(99);
    for (int i = 0; i < 20; ++i) {
        Scheduler::Draw da = a.next(r1);
        Scheduler::Draw db = b.next(r2);
        CHECK(da.task == db.task);
        CHECK(da.n == db.n);
        CHECK(da.h_realized == db.h_realized);
        const double loss = 0.1 * i;
        auto [d1, p1] = a.feedback(loss);
        auto [d2, p2] = b.feedback(loss);
        CHECK(d1 == d2);
        CHECK(p1 == p2);
    }
}

TEST_CASE("intrinsic entropy validation") {
    CHECK_THROWS_AS(IntrinsicEntropy::defaults(3, 8, 2.0, 1.0, 3.0), std::invalid_argument);
    IntrinsicEntropy e = IntrinsicEntropy::defaults(3, 8);
    CHECK(e.frames(3) == doctest::Approx(std::log(3.0)));
    CHECK(e.cell(Task::GRT, 8) == doctest::Approx(3.0 + std::log(8.0)));
}
