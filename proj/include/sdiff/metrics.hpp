#pragma once

#include <cstdint>
#include <vector>

#include "sdiff/tensor.hpp"

// Dependency-free evaluation metrics: a Frechet distance between Gaussian
// fits of fixed-random-projection clip features, reconstruction PSNR, and a
// loss-curve smoothness statistic.

namespace sdiff {

struct FeatureSpec {
    int m = 8;           // feature dimension, at most 16
    int flat_dim = 0;    // flattened clip size the projection expects
    uint64_t seed = 0;
    Tensor projection;   // [m, flat_dim], orthonormal rows

    static FeatureSpec make(int m, int flat_dim, uint64_t seed);
};

std::vector<double> clip_feature(const FeatureSpec& spec, const Tensor& frames);

struct GaussianFit {
    int m = 0;
    std::vector<double> mu;
    std::vector<double> sigma;  // m*m, symmetric, unbiased estimator
};

// accumulation runs in a canonical sample order, so the fit is exactly
// invariant to input permutation
GaussianFit fit_gaussian(const std::vector<std::vector<double>>& features);

double frechet_distance(const GaussianFit& a, const GaussianFit& b);

double toy_fvd(const std::vector<Tensor>& set_a, const std::vector<Tensor>& set_b,
               const FeatureSpec& spec);

// 10 log10(1/mse) for clips in [0,1]; +infinity when identical
double psnr(const Tensor& a, const Tensor& b);

// mean over sliding windows of the population variance of first differences
double smoothness(const std::vector<double>& trace, int window);

// symmetric eigenvalues via cyclic Jacobi; exposed for tests
std::vector<double> symmetric_eigenvalues(std::vector<double> a, int n);

}  // namespace sdiff
