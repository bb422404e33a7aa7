#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "sdiff/autodiff.hpp"
#include "sdiff/masks.hpp"
#include "sdiff/rng.hpp"
#include "sdiff/tensor.hpp"

// Forward noising, the frame-masked training loss and a deterministic DDIM
// sampler over an evenly spaced sub-schedule.

namespace sdiff {

struct DiffusionSchedule {
    int t_max = 0;
    std::vector<double> alpha_bar;  // [0..t_max], alpha_bar[0] = 1, strictly decreasing

    // cumulative signal coefficients from a linear beta ramp; the terminal
    // alpha_bar must fall below 0.01
    static DiffusionSchedule linear_beta(int t_max, double beta_min, double beta_max);

    double signal(int t) const { return std::sqrt(alpha_bar.at(size_t(t))); }
    double noise(int t) const { return std::sqrt(1.0 - alpha_bar.at(size_t(t))); }
};

struct NoisySample {
    Tensor x_t;
    int t = 0;
    Tensor noise;
};

NoisySample forward_noise(const Tensor& x, int t, const Tensor& noise,
                          const DiffusionSchedule& sched);

// mean squared error over the elements of loss-mask-active frames only; the
// frame axis is the leading axis of pred/target
double masked_mse(const Tensor& pred, const Tensor& target, const LossMask& mask);
Var masked_mse(Var pred, const Tensor& target, const LossMask& mask);

using DenoiseFn = std::function<Tensor(const Tensor& x_t, int t)>;

// known frames re-noised into the trajectory at every step and restored
// exactly at the end
struct PinSpec {
    Tensor frames;
    std::vector<uint8_t> keep;
};

struct DdimOptions {
    std::optional<PinSpec> pin;
    std::optional<Tensor> x_init;  // start point instead of fresh noise
    bool clamp_output = true;
};

// deterministic DDIM (no stochastic term) over n_steps evenly spaced noise
// levels; output clamped to [0,1] at the final step
Tensor ddim_sample(const DenoiseFn& denoise, const DiffusionSchedule& sched, int n_steps,
                   const std::vector<int>& shape, Rng& rng, const DdimOptions& opts = {});

}  // namespace sdiff
