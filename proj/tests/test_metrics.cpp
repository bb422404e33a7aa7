#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "sdiff/metrics.hpp"
#include "sdiff/rng.hpp"

using namespace sdiff;

namespace {

std::vector<Tensor> random_clip_set(Rng& rng, int count, std::vector<int> shape) {
    std::vector<Tensor> set;
    for (int i = 0; i < count; ++i) {
        Tensor t(shape);
        for (size_t j = 0; j < t.size(); ++j) t.mutable_data()[j] = rng.uniform();
        set.push_back(std::move(t));
    }
    return set;
}

}  // namespace

TEST_CASE("feature projection rows are orthonormal and deterministic") {
    FeatureSpec a = FeatureSpec::make(8, 128, 42);
    FeatureSpec b = FeatureSpec::make(8, 128, 42);
    for (size_t i = 0; i < a.projection.size(); ++i)
        CHECK(a.projection[i] == b.projection[i]);
    for (int i = 0; i < 8; ++i)
        for (int j = 0; j <= i; ++j) {
            double dot = 0;
            for (int k = 0; k < 128; ++k)
                dot += a.projection[size_t(i) * 128 + k] * a.projection[size_t(j) * 128 + k];
            CHECK(std::abs(dot - (i == j ? 1.0 : 0.0)) < 1e-10);
        }
    CHECK_THROWS_AS(FeatureSpec::make(17, 128, 1), std::invalid_argument);
    CHECK_THROWS_AS(FeatureSpec::make(8, 4, 1), std::invalid_argument);
}

TEST_CASE("toy_fvd: identity, symmetry, mean shift") {
    Rng rng(7);
    const std::vector<int> shape = {4, 4, 4, 1};
    FeatureSpec spec = FeatureSpec::make(6, 64, 9);
    std::vector<Tensor> a = random_clip_set(rng, 12, shape);

    SUBCASE("identical sets give zero") { CHECK(toy_fvd(a, a, spec) <= 1e-8); }

    SUBCASE("symmetry") {
        std::vector<Tensor> b = random_clip_set(rng, 12, shape);
        CHECK(std::abs(toy_fvd(a, b, spec) - toy_fvd(b, a, spec)) <= 1e-8);
        CHECK(toy_fvd(a, b, spec) >= 0.0);
    }

    SUBCASE("a uniform pixel shift moves the distance by the feature-shift norm") {
        const double c = 0.125;
        std::vector<Tensor> shifted;
        for (const Tensor& t : a) {
            Tensor s(t.shape());
            for (size_t i = 0; i < t.size(); ++i) s.mutable_data()[i] = t[i] + c;
            shifted.push_back(std::move(s));
        }
        // delta = projection of the constant-c clip
        Tensor ones = Tensor::full(shape, c);
        std::vector<double> delta = clip_feature(spec, ones);
        double expect = 0;
        for (double d : delta) expect += d * d;
        CHECK(toy_fvd(a, shifted, spec) == doctest::Approx(expect).epsilon(1e-6));
    }

    SUBCASE("sample order within a set does not change the result at all") {
        std::vector<Tensor> b = random_clip_set(rng, 15, shape);
        std::vector<Tensor> shuffled = b;
        std::reverse(shuffled.begin(), shuffled.end());
        std::swap(shuffled[2], shuffled[7]);
        CHECK(toy_fvd(a, b, spec) == toy_fvd(a, shuffled, spec));
    }

    SUBCASE("insufficient samples rejected") {
        std::vector<Tensor> tiny = random_clip_set(rng, 5, shape);
        CHECK_THROWS_AS(toy_fvd(tiny, a, spec), std::invalid_argument);
    }
    SUBCASE("shape mismatch rejected") {
        std::vector<Tensor> wrong = random_clip_set(rng, 12, {4, 4, 2, 1});
        CHECK_THROWS_AS(toy_fvd(wrong, a, spec), std::invalid_argument);
    }
}

TEST_CASE("jacobi eigenvalues match known spectra") {
    // diag(3,1) rotated by 45 degrees has eigenvalues {1,3}
    std::vector<double> m = {2, 1, 1, 2};
    std::vector<double> eig = symmetric_eigenvalues(m, 2);
    CHECK(eig[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(eig[1] == doctest::Approx(3.0).epsilon(1e-12));

    // random symmetric PSD: eigenvalues reproduce the trace
    Rng rng(3);
    const int n = 6;
    std::vector<double> a(size_t(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) a[size_t(i) * n + j] = rng.normal();
    std::vector<double> s(size_t(n) * n, 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0;
            for (int k = 0; k < n; ++k) acc += a[size_t(k) * n + i] * a[size_t(k) * n + j];
            s[size_t(i) * n + j] = acc;
        }
    double trace = 0;
    for (int i = 0; i < n; ++i) trace += s[size_t(i) * n + i];
    std::vector<double> ev = symmetric_eigenvalues(s, n);
    double sum = 0;
    for (double e : ev) {
        CHECK(e > -1e-10);
        sum += e;
    }
    CHECK(sum == doctest::Approx(trace).epsilon(1e-10));
}

TEST_CASE("psnr") {
    Tensor a = Tensor::full({2, 2, 2, 1}, 0.4);

    SUBCASE("identical clips saturate to infinity") {
        CHECK(std::isinf(psnr(a, a)));
    }
    SUBCASE("uniform error of 0.1 gives 20 dB") {
        Tensor b = Tensor::full(a.shape(), 0.5);
        CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));
    }
    SUBCASE("random pair matches the direct formula") {
        Rng rng(5);
        Tensor x(a.shape()), y(a.shape());
        for (size_t i = 0; i < x.size(); ++i) {
            x.mutable_data()[i] = rng.uniform();
            y.mutable_data()[i] = rng.uniform();
        }
        double mse = 0;
        for (size_t i = 0; i < x.size(); ++i) {
            const double d = x[i] - y[i];
            mse += d * d;
        }
        mse /= double(x.size());
        CHECK(std::abs(psnr(x, y) - 10 * std::log10(1 / mse)) < 1e-10);
    }
    SUBCASE("shape mismatch rejected") {
        CHECK_THROWS_AS(psnr(a, Tensor::zeros({2, 2, 2, 2})), std::invalid_argument);
    }
}

TEST_CASE("smoothness") {
    SUBCASE("constant and linear traces are perfectly smooth") {
        std::vector<double> constant(20, 3.0);
        CHECK(smoothness(constant, 4) == 0.0);
        std::vector<double> linear;
        for (int i = 0; i < 20; ++i) linear.push_back(0.5 * i - 2.0);
        CHECK(smoothness(linear, 4) < 1e-25);
    }
    SUBCASE("alternating trace matches the brute-force value") {
        std::vector<double> alt;
        for (int i = 0; i < 30; ++i) alt.push_back(i % 2 ? 1.0 : -1.0);
        const int w = 5;
        // brute force: recompute windows directly
        std::vector<double> diffs;
        for (size_t i = 0; i + 1 < alt.size(); ++i) diffs.push_back(alt[i + 1] - alt[i]);
        double expect = 0;
        const int windows = int(diffs.size()) - w + 1;
        for (int s = 0; s < windows; ++s) {
            double mean = 0;
            for (int i = 0; i < w; ++i) mean += diffs[size_t(s) + i];
            mean /= w;
            double var = 0;
            for (int i = 0; i < w; ++i) {
                const double d = diffs[size_t(s) + i] - mean;
                var += d * d;
            }
            expect += var / w;
        }
        expect /= windows;
        CHECK(std::abs(smoothness(alt, w) - expect) < 1e-12);
        // diffs alternate -2/+2: population variance within a window of 5 is 3.84
        CHECK(smoothness(alt, 5) == doctest::Approx(3.84).epsilon(1e-12));
    }
    SUBCASE("short trace rejected") {
        std::vector<double> t = {1, 2, 3};
        CHECK_THROWS_AS(smoothness(t, 5), std::invalid_argument);
        CHECK_THROWS_AS(smoothness(t, 1), std::invalid_argument);
    }
}

TEST_CASE("eigenvalue flooring is inert on well-conditioned fits") {
    // the symmetrized covariance product of healthy fits has no materially
    // negative eigenvalues, so the max(0, .) floor moves the trace-sqrt term
    // by less than 1e-6
    Rng rng(21);
    for (int trial = 0; trial < 20; ++trial) {
        const int m = 6, n = 40;
        std::vector<std::vector<double>> fa, fb;
        for (int i = 0; i < n; ++i) {
            std::vector<double> va(m), vb(m);
            for (int j = 0; j < m; ++j) {
                va[size_t(j)] = rng.normal();
                vb[size_t(j)] = 0.5 * rng.normal() + 0.2;
            }
            fa.push_back(va);
            fb.push_back(vb);
        }
        GaussianFit ga = fit_gaussian(fa), gb = fit_gaussian(fb);
        std::vector<double> prod(size_t(m) * m, 0.0), sym(size_t(m) * m, 0.0);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) {
                double acc = 0;
                for (int k = 0; k < m; ++k)
                    acc += ga.sigma[size_t(i) * m + k] * gb.sigma[size_t(k) * m + j];
                prod[size_t(i) * m + j] = acc;
            }
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j)
                sym[size_t(i) * m + j] = 0.5 * (prod[size_t(i) * m + j] + prod[size_t(j) * m + i]);
        double floored = 0, unfloored = 0;
        for (double ev : symmetric_eigenvalues(sym, m)) {
            floored += std::sqrt(std::max(0.0, ev));
            unfloored += std::sqrt(std::abs(ev));
        }
        CHECK(std::abs(floored - unfloored) * 2 < 1e-6);
    }
}
