#include "sdiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "sdiff/rng.hpp"

namespace sdiff {

FeatureSpec FeatureSpec::make(int m, int flat_dim, uint64_t seed) {
    if (m < 1 || m > 16) throw std::invalid_argument("FeatureSpec: m must lie in [1,16]");
    if (flat_dim < m) throw std::invalid_argument("FeatureSpec: flat_dim smaller than m");
    FeatureSpec spec;
    spec.m = m;
    spec.flat_dim = flat_dim;
    spec.seed = seed;
    Rng rng(mix64(seed ^ 0xfeedbeefcafe1234ull));
    Tensor proj = Tensor::gaussian({m, flat_dim}, rng);
    double* p = proj.mutable_data();
    // modified Gram-Schmidt
    for (int i = 0; i < m; ++i) {
        double* row = p + size_t(i) * flat_dim;
        for (int j = 0; j < i; ++j) {
            const double* prev = p + size_t(j) * flat_dim;
            double dot = 0;
            for (int k = 0; k < flat_dim; ++k) dot += row[k] * prev[k];
            for (int k = 0; k < flat_dim; ++k) row[k] -= dot * prev[k];
        }
        double norm = 0;
        for (int k = 0; k < flat_dim; ++k) norm += row[k] * row[k];
        norm = std::sqrt(norm);
        if (norm < 1e-12) throw std::runtime_error("FeatureSpec: degenerate projection row");
        for (int k = 0; k < flat_dim; ++k) row[k] /= norm;
    }
    spec.projection = std::move(proj);
    return spec;
}

std::vector<double> clip_feature(const FeatureSpec& spec, const Tensor& frames) {
    if (int(frames.size()) != spec.flat_dim)
        throw std::invalid_argument("clip_feature: clip of " + std::to_string(frames.size()) +
                                    " elements, projection expects " +
                                    std::to_string(spec.flat_dim));
    std::vector<double> f(static_cast<size_t>(spec.m));
    for (int i = 0; i < spec.m; ++i) {
        const double* row = spec.projection.data() + size_t(i) * spec.flat_dim;
        double acc = 0;
        for (int k = 0; k < spec.flat_dim; ++k) acc += row[k] * frames[size_t(k)];
        f[size_t(i)] = acc;
    }
    return f;
}

GaussianFit fit_gaussian(const std::vector<std::vector<double>>& features) {
    if (features.size() < 2) throw std::invalid_argument("fit_gaussian: need at least 2 samples");
    const int m = int(features[0].size());
    const int n = int(features.size());
    for (const auto& f : features)
        if (int(f.size()) != m) throw std::invalid_argument("fit_gaussian: ragged features");

    // canonical order: lexicographic over feature vectors
    std::vector<int> order(static_cast<size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return features[size_t(a)] < features[size_t(b)];
    });

    GaussianFit fit;
    fit.m = m;
    fit.mu.assign(size_t(m), 0.0);
    for (int idx : order)
        for (int i = 0; i < m; ++i) fit.mu[size_t(i)] += features[size_t(idx)][size_t(i)];
    for (double& v : fit.mu) v /= n;

    fit.sigma.assign(size_t(m) * m, 0.0);
    for (int idx : order)
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j)
                fit.sigma[size_t(i) * m + j] += (features[size_t(idx)][size_t(i)] - fit.mu[size_t(i)]) *
                                                (features[size_t(idx)][size_t(j)] - fit.mu[size_t(j)]);
    for (double& v : fit.sigma) v /= (n - 1);
    return fit;
}

std::vector<double> symmetric_eigenvalues(std::vector<double> a, int n) {
    // cyclic Jacobi rotations
    auto at = [&](int i, int j) -> double& { return a[size_t(i) * n + j]; };
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0;
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) off += at(i, j) * at(i, j);
        if (off < 1e-24) break;
        for (int p = 0; p < n - 1; ++p)
            for (int q = p + 1; q < n; ++q) {
                if (std::abs(at(p, q)) < 1e-300) continue;
                const double theta = (at(q, q) - at(p, p)) / (2.0 * at(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (int k = 0; k < n; ++k) {
                    const double akp = at(k, p), akq = at(k, q);
                    at(k, p) = c * akp - s * akq;
                    at(k, q) = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    const double apk = at(p, k), aqk = at(q, k);
                    at(p, k) = c * apk - s * aqk;
                    at(q, k) = s * apk + c * aqk;
                }
            }
    }
    std::vector<double> eig(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) eig[size_t(i)] = at(i, i);
    std::sort(eig.begin(), eig.end());
    return eig;
}

double frechet_distance(const GaussianFit& a, const GaussianFit& b) {
    if (a.m != b.m) throw std::invalid_argument("frechet_distance: dimension mismatch");
    const int m = a.m;

    double mean_term = 0;
    for (int i = 0; i < m; ++i) {
        const double d = a.mu[size_t(i)] - b.mu[size_t(i)];
        mean_term += d * d;
    }

    double trace_a = 0, trace_b = 0;
    for (int i = 0; i < m; ++i) {
        trace_a += a.sigma[size_t(i) * m + i];
        trace_b += b.sigma[size_t(i) * m + i];
    }

    // symmetrized product (Sa Sb + Sb Sa) / 2, eigenvalues floored at zero
    std::vector<double> ab(size_t(m) * m, 0.0), sym(size_t(m) * m, 0.0);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
            double acc = 0;
            for (int k = 0; k < m; ++k)
                acc += a.sigma[size_t(i) * m + k] * b.sigma[size_t(k) * m + j];
            ab[size_t(i) * m + j] = acc;
        }
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
            sym[size_t(i) * m + j] = 0.5 * (ab[size_t(i) * m + j] + ab[size_t(j) * m + i]);

    double trace_sqrt = 0;
    for (double ev : symmetric_eigenvalues(std::move(sym), m))
        trace_sqrt += std::sqrt(std::max(0.0, ev));

    return std::max(0.0, mean_term + trace_a + trace_b - 2.0 * trace_sqrt);
}

double toy_fvd(const std::vector<Tensor>& set_a, const std::vector<Tensor>& set_b,
               const FeatureSpec& spec) {
    const size_t need = size_t(spec.m) + 1;
    if (set_a.size() < need || set_b.size() < need)
        throw std::invalid_argument("toy_fvd: each set needs at least " + std::to_string(need) +
                                    " clips");
    auto featurize = [&](const std::vector<Tensor>& set) {
        std::vector<std::vector<double>> fs;
        fs.reserve(set.size());
        for (const Tensor& clip : set) {
            if (int(clip.size()) != spec.flat_dim)
                throw std::invalid_argument("toy_fvd: clip shape " + clip.shape_str() +
                                            " does not match the feature projection");
            fs.push_back(clip_feature(spec, clip));
        }
        return fs;
    };
    return frechet_distance(fit_gaussian(featurize(set_a)), fit_gaussian(featurize(set_b)));
}

double psnr(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw std::invalid_argument("psnr: shape mismatch " + a.shape_str() + " vs " +
                                    b.shape_str());
    double mse = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        mse += d * d;
    }
    mse /= double(a.size());
    if (mse == 0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

double smoothness(const std::vector<double>& trace, int window) {
    if (window < 2) throw std::invalid_argument("smoothness: window must be at least 2");
    if (int(trace.size()) <= window)
        throw std::invalid_argument("smoothness: trace of " + std::to_string(trace.size()) +
                                    " values too short for window " + std::to_string(window));
    std::vector<double> diffs(trace.size() - 1);
    for (size_t i = 0; i + 1 < trace.size(); ++i) diffs[i] = trace[i + 1] - trace[i];

    const int windows = int(diffs.size()) - window + 1;
    double acc = 0;
    for (int s = 0; s < windows; ++s) {
        double mean = 0;
        for (int i = 0; i < window; ++i) mean += diffs[size_t(s) + i];
        mean /= window;
        double var = 0;
        for (int i = 0; i < window; ++i) {
            const double d = diffs[size_t(s) + i] - mean;
            var += d * d;
        }
        acc += var / window;
    }
    return acc / windows;
}

}  // namespace sdiff
