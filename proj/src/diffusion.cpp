#include "sdiff/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace sdiff {

DiffusionSchedule DiffusionSchedule::linear_beta(int t_max, double beta_min, double beta_max) {
    if (t_max < 1) throw std::invalid_argument("DiffusionSchedule: t_max must be positive");
    if (!(0 < beta_min && beta_min <= beta_max && beta_max < 1))
        throw std::invalid_argument("DiffusionSchedule: need 0 < beta_min <= beta_max < 1");
    DiffusionSchedule s;
    s.t_max = t_max;
    s.alpha_bar.resize(size_t(t_max) + 1);
    s.alpha_bar[0] = 1.0;
    for (int t = 1; t <= t_max; ++t) {
        const double beta =
            t_max == 1 ? beta_min : beta_min + (beta_max - beta_min) * double(t - 1) / (t_max - 1);
        s.alpha_bar[size_t(t)] = s.alpha_bar[size_t(t) - 1] * (1.0 - beta);
        if (s.alpha_bar[size_t(t)] >= s.alpha_bar[size_t(t) - 1])
            throw std::invalid_argument("DiffusionSchedule: alpha_bar not strictly decreasing");
    }
    if (s.alpha_bar.back() >= 0.01)
        throw std::invalid_argument(
            "DiffusionSchedule: terminal alpha_bar " + std::to_string(s.alpha_bar.back()) +
            " >= 0.01; raise t_max or beta_max");
    return s;
}

NoisySample forward_noise(const Tensor& x, int t, const Tensor& noise,
                          const DiffusionSchedule& sched) {
    if (t < 0 || t > sched.t_max)
        throw std::invalid_argument("forward_noise: step " + std::to_string(t) +
                                    " outside schedule");
    if (!x.same_shape(noise))
        throw std::invalid_argument("forward_noise: shape mismatch " + x.shape_str() + " vs " +
                                    noise.shape_str());
    const double a = sched.signal(t), b = sched.noise(t);
    Tensor out(x.shape());
    double* o = out.mutable_data();
    for (size_t i = 0; i < x.size(); ++i) o[i] = a * x[i] + b * noise[i];
    return NoisySample{std::move(out), t, noise};
}

namespace {

size_t frame_elems(const Tensor& t) {
    if (t.ndim() < 2) throw std::invalid_argument("masked_mse: input must have a frame axis");
    return t.size() / size_t(t.dim(0));
}

void check_mask(const Tensor& pred, const Tensor& target, const LossMask& mask) {
    if (!pred.same_shape(target))
        throw std::invalid_argument("masked_mse: shape mismatch " + pred.shape_str() + " vs " +
                                    target.shape_str());
    if (int(mask.weight.size()) != pred.dim(0))
        throw std::invalid_argument("masked_mse: mask length " +
                                    std::to_string(mask.weight.size()) + " vs " +
                                    std::to_string(pred.dim(0)) + " frames");
    if (mask.active() == 0)
        throw std::invalid_argument("masked_mse: all-zero loss mask gives no signal");
}

}  // namespace

double masked_mse(const Tensor& pred, const Tensor& target, const LossMask& mask) {
    check_mask(pred, target, mask);
    const size_t fe = frame_elems(pred);
    double acc = 0;
    size_t count = 0;
    for (int f = 0; f < pred.dim(0); ++f) {
        if (!mask.weight[size_t(f)]) continue;
        for (size_t i = size_t(f) * fe; i < size_t(f + 1) * fe; ++i) {
            const double d = pred[i] - target[i];
            acc += d * d;
        }
        count += fe;
    }
    return acc / double(count);
}

Var masked_mse(Var pred, const Tensor& target, const LossMask& mask) {
    check_mask(pred.val(), target, mask);
    const size_t fe = frame_elems(target);
    Tensor weights(target.shape());
    double* w = weights.mutable_data();
    size_t count = 0;
    for (int f = 0; f < target.dim(0); ++f) {
        if (!mask.weight[size_t(f)]) continue;
        std::fill(w + size_t(f) * fe, w + size_t(f + 1) * fe, 1.0);
        count += fe;
    }
    Var diff = sub_const(pred, target);
    return scale(sum(mul_const(square(diff), weights)), 1.0 / double(count));
}

Tensor ddim_sample(const DenoiseFn& denoise, const DiffusionSchedule& sched, int n_steps,
                   const std::vector<int>& shape, Rng& rng, const DdimOptions& opts) {
    if (n_steps < 1 || n_steps > sched.t_max)
        throw std::invalid_argument("ddim_sample: n_steps must lie in [1, t_max]");

    // evenly spaced sub-schedule tau_s = s * t_max / n_steps, descending
    std::vector<int> taus(static_cast<size_t>(n_steps));
    for (int s = 1; s <= n_steps; ++s)
        taus[size_t(s) - 1] = int(std::lround(double(s) * sched.t_max / n_steps));

    const size_t frame_sz = numel_of(shape) / size_t(shape.at(0));

    Tensor x;
    if (opts.x_init) {
        if (opts.x_init->shape() != shape)
            throw std::invalid_argument("ddim_sample: x_init shape mismatch");
        x = opts.x_init->clone();
    } else {
        x = Tensor::gaussian(shape, rng);
    }
    if (opts.pin && (opts.pin->frames.shape() != shape ||
                     int(opts.pin->keep.size()) != shape.at(0)))
        throw std::invalid_argument("ddim_sample: pin spec does not match output shape");

    for (int s = n_steps; s >= 1; --s) {
        const int t = taus[size_t(s) - 1];
        const int t_prev = s > 1 ? taus[size_t(s) - 2] : 0;

        if (opts.pin) {
            // overwrite known frames with their re-noised versions
            Tensor pin_noise = Tensor::gaussian(shape, rng);
            const double a = sched.signal(t), b = sched.noise(t);
            double* xd = x.mutable_data();
            for (int f = 0; f < shape.at(0); ++f) {
                if (!opts.pin->keep[size_t(f)]) continue;
                for (size_t i = size_t(f) * frame_sz; i < size_t(f + 1) * frame_sz; ++i)
                    xd[i] = a * opts.pin->frames[i] + b * pin_noise[i];
            }
        }

        Tensor eps = denoise(x, t);
        if (!eps.same_shape(x))
            throw std::runtime_error("ddim_sample: denoiser changed the shape at step " +
                                     std::to_string(s));
        const size_t bad = eps.first_nonfinite();
        if (bad != eps.size())
            throw std::runtime_error("ddim_sample: non-finite prediction at step " +
                                     std::to_string(s));

        const double at = sched.signal(t), bt = sched.noise(t);
        const double ap = sched.signal(t_prev), bp = sched.noise(t_prev);
        Tensor next(x.shape());
        double* nx = next.mutable_data();
        for (size_t i = 0; i < x.size(); ++i) {
            const double x0 = (x[i] - bt * eps[i]) / at;
            nx[i] = ap * x0 + bp * eps[i];
        }
        x = std::move(next);
    }

    if (opts.pin) {
        double* xd = x.mutable_data();
        for (int f = 0; f < shape.at(0); ++f) {
            if (!opts.pin->keep[size_t(f)]) continue;
            for (size_t i = size_t(f) * frame_sz; i < size_t(f + 1) * frame_sz; ++i)
                xd[i] = opts.pin->frames[i];
        }
    }
    if (opts.clamp_output) {
        double* xd = x.mutable_data();
        for (size_t i = 0; i < x.size(); ++i) xd[i] = std::clamp(xd[i], 0.0, 1.0);
    }
    return x;
}

}  // namespace sdiff
