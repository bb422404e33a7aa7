// Acceptance suite: one pass/fail line per criterion, non-zero exit when any
// criterion fails. Criterion 8 trains the full temporal-block x strategy grid
// and dominates the runtime.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <set>
#include <sstream>
#include <vector>

#include "sdiff/trainer.hpp"

using namespace sdiff;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int criterion, bool pass, const std::string& what) {
    std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", criterion, what.c_str());
    std::fflush(stdout);
    if (!pass) ++failures;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// criterion 1: gradient fidelity
// ---------------------------------------------------------------------------

void criterion_gradients() {
    const auto t0 = Clock::now();
    double worst = 0;
    std::string worst_site = "none";
    auto track = [&](const std::string& site, double err) {
        if (err > worst) {
            worst = err;
            worst_site = site;
        }
    };

    for (uint64_t seed = 1; seed <= 10; ++seed) {
        Rng rng(seed * 7919);
        auto rand = [&](std::vector<int> shape, double s = 1.0) {
            return Tensor::gaussian(std::move(shape), rng, s);
        };
        // magnitudes in [0.5, 1.5] with random sign: pointwise-product ops
        // get gradient coordinates bounded away from zero, where the
        // rel-error formula would otherwise amplify rounding noise
        auto rand_u = [&](std::vector<int> shape) {
            Tensor t(std::move(shape));
            for (size_t i = 0; i < t.size(); ++i)
                t.mutable_data()[i] = (rng.below(2) ? 1.0 : -1.0) * rng.uniform(0.5, 1.5);
            return t;
        };
        auto rand_pos = [&](std::vector<int> shape) {
            Tensor t(std::move(shape));
            for (size_t i = 0; i < t.size(); ++i) t.mutable_data()[i] = rng.uniform(0.5, 1.5);
            return t;
        };

        // every operation in the suite; auxiliary tensors are fixed before
        // each check so the probed function is pure in x
        const Tensor offset = Tensor::full({3, 4}, 0.3);
        track("add", gradcheck([&](Tape& t, Var x) {
                  return sum(square(add(x, t.leaf(offset))));
              }, rand_u({3, 4}), 1e-5));
        track("sub", gradcheck([&](Tape& t, Var x) {
                  return sum(square(sub(x, t.leaf(offset))));
              }, rand_u({3, 4}), 1e-5));
        const Tensor mul_other = rand_u({3, 4});
        track("mul", gradcheck([&](Tape& t, Var x) {
                  return sum(square(mul(x, t.leaf(mul_other))));
              }, rand_u({3, 4}), 1e-5));
        track("tanh", gradcheck([](Tape&, Var x) { return sum(square(vtanh(x))); },
                                rand_u({3, 4}), 1e-5));
        const Tensor mm_w = rand({4, 5});
        track("matmul", gradcheck([&](Tape& t, Var x) {
                  return sum(square(matmul(x, t.leaf(mm_w))));
              }, rand({3, 4}), 1e-5));
        track("softmax", gradcheck([](Tape&, Var x) { return sum(square(softmax(x))); },
                                   rand({3, 5}), 1e-5));
        const Tensor wq = rand({6, 6}, 0.5), wk = rand({6, 6}, 0.5);
        const Tensor wv = rand({6, 6}, 0.5), wo = rand({6, 6}, 0.5);
        track("attention", gradcheck([&](Tape& t, Var x) {
                  return sum(square(self_attention(x, t.leaf(wq), t.leaf(wk), t.leaf(wv),
                                                   t.leaf(wo), 2)));
              }, rand({5, 6}, 0.7), 1e-5));
        const Tensor conv_k = rand({6, 3}, 0.5);
        track("conv1d", gradcheck([&](Tape& t, Var x) {
                  return sum(square(conv1d_channels(x, t.leaf(conv_k))));
              }, rand({4, 6}), 1e-5));
        const Tensor conv3_k = rand({2, 3, 3, 3}, 0.4);
        track("conv3d", gradcheck([&](Tape& t, Var x) {
                  return sum(square(conv3d_depthwise(x, t.leaf(conv3_k))));
              }, rand({3, 4, 4, 2}), 1e-5));
        track("avg_pool", gradcheck([](Tape&, Var x) { return sum(square(avg_pool2d(x, 2))); },
                                    rand_pos({2, 4, 4, 2}), 1e-5));
        track("upsample",
              gradcheck([](Tape&, Var x) { return sum(square(upsample2d_nearest(x, 2))); },
                        rand_u({2, 2, 2, 2}), 1e-5));
        const Tensor ln_g = rand({6}), ln_b = rand({6});
        track("layer_norm", gradcheck([&](Tape& t, Var x) {
                  return sum(square(layer_norm(x, t.leaf(ln_g), t.leaf(ln_b))));
              }, rand({4, 6}), 1e-5));
        const Tensor lin_w = rand({4, 3}), lin_b = rand({3});
        track("linear", gradcheck([&](Tape& t, Var x) {
                  return sum(square(linear(x, t.leaf(lin_w), t.leaf(lin_b))));
              }, rand({2, 3, 4}), 1e-5));
        const Tensor rv = rand_u({3});
        const Tensor mc = rand_u({2, 6});
        track("shape plumbing", gradcheck([&](Tape& t, Var x) {
                  // reshape, slice, concat, broadcast add, scale and the
                  // constant-operand forms in one pass
                  Var flat = reshape(x, {4, 3});
                  Var lo = slice_last(flat, 0, 1);
                  Var hi = slice_last(flat, 1, 2);
                  Var swapped = concat_last({hi, lo});
                  Var shifted = add_rowvec(swapped, t.leaf(rv));
                  Var packed = reshape(shifted, {2, 6});
                  Var combined = mul_const(sub_const(scale(packed, -1.5), mc), mc);
                  return sum(square(combined));
              }, rand_u({2, 2, 3}), 1e-5));

        // full masked_loss(denoise) composition over every parameter
        DenoiserConfig cfg;
        cfg.height = cfg.width = 8;
        cfg.channels = 1;
        cfg.d = 8;
        cfg.gamma = 2;
        cfg.blocks = 2;
        ParamSet params = init_params(cfg, rng);
        for (int b = 0; b < cfg.blocks; ++b)
            params.at("block" + std::to_string(b) + ".fuse.w") =
                rand({2 * cfg.d, cfg.d}, 0.2);

        SpriteClip clip;
        clip.factors = {0, 1, 2};
        clip.caption = caption_of(clip.factors);
        Tensor frames({3, 8, 8, 1});
        for (size_t i = 0; i < frames.size(); ++i) frames.mutable_data()[i] = rng.uniform();
        clip.frames = std::move(frames);

        const ConditionMask cmask = condition_mask_from_index(Task::GRT, 3, 0);
        const Tensor noise = Tensor::gaussian(clip.frames.shape(), rng);
        const DiffusionSchedule sched = DiffusionSchedule::linear_beta(200, 1e-4, 0.05);
        const NoisySample ns = forward_noise(clip.frames, 60, noise, sched);
        const GuidancePack pack = pack_guidance(ns.x_t, clip, cmask, 60);
        LossMask lmask;
        lmask.weight = {1, 1, 1};

        Tensor flat({int(params.scalar_count())});
        size_t off = 0;
        for (const auto& [name, t] : params.items) {
            std::copy(t.data(), t.data() + t.size(), flat.mutable_data() + off);
            off += t.size();
        }
        // full composition: per-coordinate comparison with a small absolute
        // branch. At step 1e-5 a handful of the ~1800 parameter coordinates
        // have true gradients near the central-difference noise level, where
        // the pure ratio is uninformative; those must still agree absolutely.
        auto f = [&](Tape& tape, Var vflat) {
            ParamVars vars;
            size_t o = 0;
            for (const auto& [name, t] : params.items) {
                vars.vars.emplace(name,
                                  reshape(slice_last(vflat, int(o), int(t.size())), t.shape()));
                o += t.size();
            }
            return masked_mse(denoise(tape, pack, vars, cfg), noise, lmask);
        };
        Tensor analytic;
        {
            Tape tape;
            Var vx = tape.leaf(flat);
            Var y = f(tape, vx);
            tape.backward(y);
            analytic = tape.grad_of(vx);
        }
        auto eval_at = [&](size_t i, double d) {
            std::vector<double> v(flat.data(), flat.data() + flat.size());
            v[i] += d;
            Tape tape;
            Var vx = tape.leaf(Tensor(flat.shape(), std::move(v)));
            return f(tape, vx).val().item();
        };
        const double fd_step = 1e-5;
        for (size_t i = 0; i < flat.size(); ++i) {
            const double numeric = (eval_at(i, fd_step) - eval_at(i, -fd_step)) / (2 * fd_step);
            const double gap = std::abs(analytic[i] - numeric);
            const double rel = gap / std::max(1e-8, std::abs(numeric));
            if (gap < 1e-6) continue;  // below finite-difference resolution
            track("denoiser", rel);
        }
    }

    const double elapsed = seconds_since(t0);
    std::ostringstream os;
    os << "gradient fidelity: max rel err " << worst << " (at " << worst_site << ") over 10 seeds in "
       << int(elapsed) << "s";
    report(1, worst < 1e-4 && elapsed < 120.0, os.str());
}

// ---------------------------------------------------------------------------
// criterion 2: diffusion oracle
// ---------------------------------------------------------------------------

void criterion_ddim_oracle() {
    const DiffusionSchedule sched = DiffusionSchedule::linear_beta(200, 1e-4, 0.05);
    Rng rng(424242);
    double worst = 0;
    for (int trial = 0; trial < 5; ++trial) {
        Tensor x0({3, 8, 8, 1});
        for (size_t i = 0; i < x0.size(); ++i) x0.mutable_data()[i] = rng.uniform();
        const Tensor eps = Tensor::gaussian(x0.shape(), rng);
        const NoisySample terminal = forward_noise(x0, sched.t_max, eps, sched);
        DenoiseFn oracle = [&](const Tensor&, int) { return eps; };
        for (int steps : {1, 25}) {
            DdimOptions opts;
            opts.x_init = terminal.x_t;
            opts.clamp_output = false;
            Rng srng(1);
            const Tensor out = ddim_sample(oracle, sched, steps, x0.shape(), srng, opts);
            for (size_t i = 0; i < x0.size(); ++i)
                worst = std::max(worst, std::abs(out[i] - x0[i]));
        }
    }
    std::ostringstream os;
    os << "ddim true-noise reconstruction: max abs err " << worst
       << " over single-step and 25-step schedules";
    report(2, worst < 1e-8, os.str());
}

// ---------------------------------------------------------------------------
// criterion 3: clustering oracle
// ---------------------------------------------------------------------------

double exhaustive_wcss(const std::vector<const double*>& pts, size_t dim, int k) {
    const int n = int(pts.size());
    std::vector<int> assign(static_cast<size_t>(n));
    double best = std::numeric_limits<double>::infinity();
    auto wcss = [&]() {
        std::vector<std::vector<double>> cent(size_t(k), std::vector<double>(dim, 0.0));
        std::vector<int> cnt(size_t(k), 0);
        for (int i = 0; i < n; ++i) {
            cnt[size_t(assign[size_t(i)])]++;
            for (size_t j = 0; j < dim; ++j)
                cent[size_t(assign[size_t(i)])][j] += pts[size_t(i)][j];
        }
        for (int c = 0; c < k; ++c)
            for (size_t j = 0; j < dim; ++j) cent[size_t(c)][j] /= cnt[size_t(c)];
        double acc = 0;
        for (int i = 0; i < n; ++i)
            for (size_t j = 0; j < dim; ++j) {
                const double d = pts[size_t(i)][j] - cent[size_t(assign[size_t(i)])][j];
                acc += d * d;
            }
        return acc;
    };
    auto rec = [&](auto&& self, int i, int used) -> void {
        if (n - i < k - used) return;
        if (i == n) {
            if (used == k) best = std::min(best, wcss());
            return;
        }
        for (int c = 0; c < std::min(used + 1, k); ++c) {
            assign[size_t(i)] = c;
            self(self, i + 1, std::max(used, c + 1));
        }
    };
    rec(rec, 0, 0);
    return best;
}

void criterion_clustering() {
    GenConfig gc;
    gc.n_min = 3;
    gc.n_max = 8;
    Rng rng(20240601);
    int combos = 0, optimal = 0, fixed_point_band = 0, failed = 0, identity_ok = 0;
    double worst_ratio = 1.0;
    for (int t = 0; t < 100; ++t) {
        const SpriteClip clip = sample_clip(rng, gc);
        const int n = clip.frame_count();
        const size_t dim = 64;
        std::vector<const double*> pts;
        for (int i = 0; i < n; ++i) pts.push_back(clip.frames.data() + size_t(i) * dim);
        for (int k = 3; k <= n; ++k) {
            ++combos;
            Rng crng(rng.raw());
            const FrameClustering fc = cluster_frames(clip, k, crng);
            if (k == n) {
                bool id = fc.wcss == 0.0;
                for (int i = 0; i < n; ++i)
                    id = id && fc.assignment[size_t(i)] == i && fc.representatives[size_t(i)] == i;
                identity_ok += id;
                if (!id) ++failed;
                continue;
            }
            const double opt = exhaustive_wcss(pts, dim, k);
            if (fc.wcss <= opt + 1e-9) {
                ++optimal;
            } else if (fc.converged && fc.wcss <= 1.05 * opt) {
                ++fixed_point_band;
                worst_ratio = std::max(worst_ratio, fc.wcss / opt);
            } else {
                ++failed;
                worst_ratio = std::max(worst_ratio, opt > 0 ? fc.wcss / opt : 999.0);
            }
        }
    }
    std::ostringstream os;
    os << "clustering vs exhaustive optimum over " << combos << " (clip,k) pairs: " << optimal
       << " optimal, " << fixed_point_band << " fixed points within 1.05x (worst ratio "
       << worst_ratio << "), " << identity_ok << " exact k=N identities, " << failed
       << " failures";
    report(3, failed == 0, os.str());
}

// ---------------------------------------------------------------------------
// criterion 4: curriculum monotonicity
// ---------------------------------------------------------------------------

void criterion_curriculum() {
    CurriculumConfig cfg;
    cfg.n_min = 3;
    cfg.n_max = 12;
    cfg.total_steps = 2000;
    const IntrinsicEntropy intr = IntrinsicEntropy::defaults(cfg.n_min, cfg.n_max);

    bool strict = true;
    double prev = -1e300;
    for (long t = 0; t <= cfg.total_steps; ++t) {
        const double h = static_entropy(static_grid(t, cfg.total_steps, cfg), intr);
        strict = strict && h > prev;
        prev = h;
    }

    bool monotone_realized = true;
    for (uint64_t seed = 1; seed <= 100 && monotone_realized; ++seed) {
        CurriculumConfig c = cfg;
        c.total_steps = 200;
        Scheduler sched(Strategy::dcl, c);
        Rng rng(seed);
        double prev_r = -1e300;
        for (int s = 0; s < 200; ++s) {
            const Scheduler::Draw d = sched.next(rng);
            monotone_realized = monotone_realized && d.h_realized >= prev_r;
            prev_r = d.h_realized;
            sched.feedback(rng.uniform(0.0, 10.0));  // arbitrary bounded losses
        }
    }

    bool degenerate_exact = true;
    {
        CurriculumConfig c = cfg;
        c.kp = c.ki = c.kd = 0;
        Scheduler sched(Strategy::dcl, c);
        Rng rng(31);
        for (long t = 0; t <= 200; ++t) {
            const StaticGrid expect = static_grid(t, c.total_steps, c);
            const StaticGrid got = sched.grid_at(t);
            for (size_t i = 0; i < expect.p.size(); ++i)
                degenerate_exact = degenerate_exact && got.p[i] == expect.p[i];
            const Scheduler::Draw d = sched.next(rng);
            degenerate_exact =
                degenerate_exact && d.h_adaptive == d.h_static && d.h_realized == d.h_raw;
            sched.feedback(rng.uniform());
        }
    }

    std::ostringstream os;
    os << "curriculum: static entropy strictly increasing over 2000 steps (" << strict
       << "), realized target non-decreasing over 100 random traces (" << monotone_realized
       << "), zero-gain degeneracy bit-exact (" << degenerate_exact << ")";
    report(4, strict && monotone_realized && degenerate_exact, os.str());
}

// ---------------------------------------------------------------------------
// criterion 5: pid contract
// ---------------------------------------------------------------------------

void criterion_pid() {
    bool zero_ok = true;
    {
        PidState pid;
        pid.windup_bound = 10;
        Rng rng(3);
        for (int i = 0; i < 100; ++i) zero_ok = zero_ok && pid_update(pid, rng.normal()) == 0.0;
    }
    bool decreasing_ok = true;
    int saturated_at = -1;
    {
        PidState pid;
        pid.kp = 0.4;
        pid.ki = 0.25;
        pid.windup_bound = 4.0;
        double prev = 1e300;
        for (int i = 0; i < 50; ++i) {
            const double out = pid_update(pid, 1.0);
            if (saturated_at < 0)
                decreasing_ok = decreasing_ok && out < prev;
            else
                decreasing_ok = decreasing_ok && std::abs(out - prev) < 1e-12;
            if (saturated_at < 0 && std::abs(pid.integral + pid.windup_bound) < 1e-12)
                saturated_at = i;
            prev = out;
        }
    }
    std::ostringstream os;
    os << "pid: zero gains give identically zero output (" << zero_ok
       << "); constant positive deviation strictly decreases the score until anti-windup at step "
       << saturated_at << " (" << decreasing_ok << ")";
    report(5, zero_ok && decreasing_ok && saturated_at > 0, os.str());
}

// ---------------------------------------------------------------------------
// criterion 6: sampler tilt
// ---------------------------------------------------------------------------

void criterion_tilt() {
    CurriculumConfig cfg;
    cfg.n_min = 3;
    cfg.n_max = 12;
    cfg.total_steps = 2000;
    const IntrinsicEntropy intr = IntrinsicEntropy::defaults(cfg.n_min, cfg.n_max);
    const StaticGrid grid = static_grid(600, cfg.total_steps, cfg);

    auto mean_of = [&](const std::vector<double>& q) {
        double acc = 0;
        for (int ti = 0; ti < 3; ++ti)
            for (int n = grid.n_min; n <= grid.n_max; ++n)
                acc += q[size_t(ti) * grid.n_count() + (n - grid.n_min)] * intr.cell(Task(ti), n);
        return acc;
    };
    const double lo = mean_of(tilted_cells(grid, intr, -1e18, nullptr));
    const double hi = mean_of(tilted_cells(grid, intr, 1e18, nullptr));

    bool tilt_ok = true;
    double worst_gap = 0;
    for (double target : {lo - 5.0, lo + 0.1, 2.8, 3.4, 4.1, hi - 0.1, hi + 5.0}) {
        const std::vector<double> q = tilted_cells(grid, intr, target, nullptr);
        const double gap = std::abs(mean_of(q) - std::clamp(target, lo, hi));
        worst_gap = std::max(worst_gap, gap);
        tilt_ok = tilt_ok && gap <= 1e-3;
    }

    const double target = mean_of(tilted_cells(grid, intr, 3.6, nullptr));
    const std::vector<double> q = tilted_cells(grid, intr, target, nullptr);
    Rng rng(90211);
    const int draws = 100000;
    std::vector<int> counts(q.size(), 0);
    for (int i = 0; i < draws; ++i) {
        const TiltedDraw d = sample_task(grid, intr, target, rng);
        counts[size_t(int(d.task)) * grid.n_count() + (d.n - grid.n_min)]++;
    }
    bool freq_ok = true;
    for (size_t i = 0; i < q.size(); ++i) {
        const double mean = draws * q[i];
        const double sigma = std::sqrt(draws * q[i] * (1 - q[i]));
        freq_ok = freq_ok && std::abs(counts[i] - mean) <= 3 * sigma + 1;
    }

    std::ostringstream os;
    os << "sampler tilt: worst |E_Q - clamped target| = " << worst_gap << " (tol 1e-3); 1e5-draw"
       << " frequencies within 3-sigma bounds (" << freq_ok << ")";
    report(6, tilt_ok && freq_ok, os.str());
}

// ---------------------------------------------------------------------------
// criterion 7: metric sanity
// ---------------------------------------------------------------------------

void criterion_metrics() {
    Rng rng(5150);
    const std::vector<int> shape = {8, 8, 8, 1};
    const FeatureSpec spec = FeatureSpec::make(8, 512, 77);
    std::vector<Tensor> a;
    for (int i = 0; i < 20; ++i) {
        Tensor t(shape);
        for (size_t j = 0; j < t.size(); ++j) t.mutable_data()[j] = rng.uniform();
        a.push_back(std::move(t));
    }
    const double self = toy_fvd(a, a, spec);

    const double c = 0.1;
    std::vector<Tensor> shifted;
    for (const Tensor& t : a) {
        Tensor s(t.shape());
        for (size_t i = 0; i < t.size(); ++i) s.mutable_data()[i] = t[i] + c;
        shifted.push_back(std::move(s));
    }
    const std::vector<double> delta = clip_feature(spec, Tensor::full(shape, c));
    double expect = 0;
    for (double d : delta) expect += d * d;
    const double shift_err = std::abs(toy_fvd(a, shifted, spec) - expect);

    std::vector<Tensor> b;
    for (int i = 0; i < 17; ++i) {
        Tensor t(shape);
        for (size_t j = 0; j < t.size(); ++j) t.mutable_data()[j] = rng.uniform();
        b.push_back(std::move(t));
    }
    const double sym_err = std::abs(toy_fvd(a, b, spec) - toy_fvd(b, a, spec));

    std::ostringstream os;
    os << "toy_fvd: self-distance " << self << " (tol 1e-8), mean-shift error " << shift_err
       << " (tol 1e-6), asymmetry " << sym_err << " (tol 1e-8)";
    report(7, self <= 1e-8 && shift_err <= 1e-6 && sym_err <= 1e-8, os.str());
}

// ---------------------------------------------------------------------------
// criterion 8: directional ablation
// ---------------------------------------------------------------------------

double cell_value(const AblationResult& r, const std::string& temporal,
                  const std::string& strategy, double AblationCell::* field) {
    for (const AblationCell& c : r.cells)
        if (c.temporal == temporal && c.strategy == strategy) return c.*field;
    throw std::logic_error("missing ablation cell");
}

void criterion_ablation() {
    const auto t0 = Clock::now();
    RunConfig cfg;  // defaults pin the acceptance scale: 8x8x1, N in [3,12], 2000 steps
    validate(cfg);

    Dataset all = generate_dataset(cfg.gen_config(), cfg.data_count, cfg.seed);
    auto [train, eval_set] = split_dataset(all, cfg.data_holdout);
    const AblationResult r = run_ablation(cfg, train, eval_set, {1, 2, 3}, true);

    const bool six_rows = r.cells.size() == 6;

    // every training run must actually improve the deterministic eval loss
    bool improved = true;
    for (const AblationRun& run : r.runs)
        improved = improved && run.eval_loss < run.eval_loss_initial;

    // untrained weights must score strictly worse on the distribution metric
    // than the trained dcl cell
    double untrained_fvd;
    {
        std::vector<Tensor> reference;
        const int use = std::min(int(eval_set.clips.size()), cfg.eval_clips);
        for (int i = 0; i < use; ++i)
            reference.push_back(canonical_frames(eval_set.clips[size_t(i)], cfg.sample_frames));
        const FeatureSpec spec = FeatureSpec::make(cfg.eval_feature_dim,
                                                   int(reference[0].size()), mix64(cfg.seed));
        std::vector<double> vals;
        const ConditionMask grt = condition_mask_from_index(Task::GRT, cfg.sample_frames, 0);
        for (uint64_t seed : {1ull, 2ull, 3ull}) {
            Rng irng(mix64(seed ^ 0x136e99aa55ull));
            const ParamSet fresh = init_params(cfg.denoiser_config(), irng);
            std::vector<Tensor> generated;
            for (int i = 0; i < use; ++i) {
                SpriteClip guidance = eval_set.clips[size_t(i)];
                guidance.frames = reference[size_t(i)];
                generated.push_back(
                    sample_guided(cfg, fresh, guidance, grt, seed + uint64_t(i)));
            }
            vals.push_back(toy_fvd(generated, reference, spec));
        }
        std::sort(vals.begin(), vals.end());
        untrained_fvd = vals[1];
    }

    const double slack = 1.02;
    const double loss_dcl = cell_value(r, "sti", "dcl", &AblationCell::eval_loss);
    const double loss_lcl = cell_value(r, "sti", "lcl", &AblationCell::eval_loss);
    const double loss_none = cell_value(r, "sti", "none", &AblationCell::eval_loss);
    const bool loss_ok = loss_dcl <= loss_lcl * slack && loss_lcl <= loss_none * slack;

    const double smooth_dcl = cell_value(r, "sti", "dcl", &AblationCell::smoothness);
    const double smooth_lcl = cell_value(r, "sti", "lcl", &AblationCell::smoothness);
    const bool smooth_ok = smooth_dcl <= smooth_lcl * slack;

    // temporal-block comparison: median over all strategies and seeds
    std::vector<double> fvd_sti, fvd_conv;
    for (const AblationRun& run : r.runs)
        (run.temporal == "sti" ? fvd_sti : fvd_conv).push_back(run.fvd);
    std::sort(fvd_sti.begin(), fvd_sti.end());
    std::sort(fvd_conv.begin(), fvd_conv.end());
    const double med_sti = fvd_sti[fvd_sti.size() / 2];
    const double med_conv = fvd_conv[fvd_conv.size() / 2];
    const bool fvd_ok = med_sti <= med_conv * slack;

    std::printf("  ablation cells (median over seeds 1,2,3):\n");
    for (const AblationCell& c : r.cells)
        std::printf("    %-7s %-5s eval_loss %.5f  toy_fvd %.5f  smoothness %.7f\n",
                    c.temporal.c_str(), c.strategy.c_str(), c.eval_loss, c.fvd, c.smoothness);

    const double trained_fvd = cell_value(r, "sti", "dcl", &AblationCell::fvd);
    const bool training_helps = trained_fvd < untrained_fvd;

    std::ostringstream os;
    os << "directional ablation (2% slack): eval loss dcl " << loss_dcl << " <= lcl " << loss_lcl
       << " <= none " << loss_none << " (" << loss_ok << "); smoothness dcl " << smooth_dcl
       << " <= lcl " << smooth_lcl << " (" << smooth_ok << "); median toy_fvd sti " << med_sti
       << " <= conv3d " << med_conv << " (" << fvd_ok << "); 6 grid rows (" << six_rows
       << "); eval loss improves in every run (" << improved << "); trained fvd " << trained_fvd
       << " < untrained " << untrained_fvd << " (" << training_helps << "); wall time "
       << int(seconds_since(t0)) << "s";
    report(8, loss_ok && smooth_ok && fvd_ok && six_rows && improved && training_helps,
           os.str());
}

// ---------------------------------------------------------------------------
// criterion 9: determinism and persistence
// ---------------------------------------------------------------------------

void criterion_determinism() {
    RunConfig cfg;
    cfg.data_count = 120;
    cfg.train_steps = 60;
    cfg.train_checkpoint_every = 30;
    cfg.eval_battery_per_task = 4;
    cfg.eval_clips = 9;
    cfg.eval_feature_dim = 6;
    cfg.model_width = 16;
    cfg.diff_ddim_steps = 10;
    validate(cfg);

    Dataset all = generate_dataset(cfg.gen_config(), cfg.data_count, cfg.seed);
    auto [train, eval_set] = split_dataset(all, cfg.data_holdout);

    const TrainOutcome a = run_training(cfg, train, eval_set, "");
    const TrainOutcome b = run_training(cfg, train, eval_set, "");
    const bool logs_equal = train_log_csv(a.log, true) == train_log_csv(b.log, true) &&
                            a.eval_final == b.eval_final;

    // sample dumps
    SpriteClip guidance = eval_set.clips[0];
    guidance.frames = canonical_frames(guidance, cfg.sample_frames);
    const ConditionMask cmask = condition_mask_from_index(Task::IPT, cfg.sample_frames, 2);
    const Tensor s1 = sample_guided(cfg, a.params, guidance, cmask, 99);
    const Tensor s2 = sample_guided(cfg, b.params, guidance, cmask, 99);
    bool dumps_equal = s1.same_shape(s2);
    for (size_t i = 0; dumps_equal && i < s1.size(); ++i) dumps_equal = s1[i] == s2[i];

    // resume from the step-30 snapshot
    const std::string dir = "acceptance_resume_tmp";
    std::filesystem::remove_all(dir);
    const TrainOutcome with_files = run_training(cfg, train, eval_set, dir);
    const TrainOutcome resumed =
        run_training(cfg, train, eval_set, "", dir + "/state_000030.bin");
    std::vector<TrainLogRow> tail(with_files.log.begin() + 30, with_files.log.end());
    bool resume_equal = train_log_csv(resumed.log, false) == train_log_csv(tail, false);
    for (size_t i = 0; resume_equal && i < resumed.params.items.size(); ++i)
        for (size_t j = 0; resume_equal && j < resumed.params.items[i].second.size(); ++j)
            resume_equal =
                resumed.params.items[i].second[j] == with_files.params.items[i].second[j];
    std::filesystem::remove_all(dir);

    std::ostringstream os;
    os << "determinism: identical (config,seed) give bit-identical logs (" << logs_equal
       << ") and sample dumps (" << dumps_equal << "); checkpoint resume continues bit-exactly ("
       << resume_equal << ")";
    report(9, logs_equal && dumps_equal && resume_equal, os.str());
}

}  // namespace

int main(int argc, char** argv) {
    // `--fast` skips the training grid (criterion 8) for inner-loop work;
    // the registered ctest invocation always runs everything
    bool fast = false;
    for (int i = 1; i < argc; ++i) fast = fast || std::string(argv[i]) == "--fast";

    criterion_gradients();
    criterion_ddim_oracle();
    criterion_clustering();
    criterion_curriculum();
    criterion_pid();
    criterion_tilt();
    criterion_metrics();
    if (fast)
        std::printf("SKIP criterion 8: directional ablation (--fast)\n");
    else
        criterion_ablation();
    criterion_determinism();

    if (failures == 0)
        std::printf("acceptance: all criteria passed\n");
    else
        std::printf("acceptance: %d criterion(s) failed\n", failures);
    return failures;
}
