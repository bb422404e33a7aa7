#include "sdiff/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

namespace fs = std::filesystem;

namespace sdiff {

namespace {

constexpr uint64_t kParamTag = 0x706172616d737373ull;
constexpr uint64_t kTrainTag = 0x747261696e6e6e6eull;
constexpr uint64_t kEvalTag = 0x6576616c6c6c6c6cull;
constexpr uint64_t kSampleTag = 0x73616d706c656565ull;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

LossMask ones_mask(int n) {
    LossMask m;
    m.weight.assign(size_t(n), 1);
    return m;
}

SpriteClip clip_with_frames(const SpriteClip& src, Tensor frames) {
    SpriteClip c;
    c.frames = std::move(frames);
    c.caption = src.caption;
    c.factors = src.factors;
    return c;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::string train_log_csv(const std::vector<TrainLogRow>& rows, bool header) {
    std::ostringstream os;
    if (header)
        os << "step,task,frames,loss,loss_dev,pid_score,h_static,h_adaptive,h_realized\n";
    for (const TrainLogRow& r : rows)
        os << r.step << ',' << task_name(r.task) << ',' << r.n << ',' << fmt(r.loss) << ','
           << fmt(r.loss_dev) << ',' << fmt(r.pid_score) << ',' << fmt(r.h_static) << ','
           << fmt(r.h_adaptive) << ',' << fmt(r.h_realized) << '\n';
    return os.str();
}

std::string curriculum_trace_csv(const std::vector<TrainLogRow>& rows) {
    std::ostringstream os;
    os << "step,loss,loss_dev,pid_score,h_static,h_adaptive,h_raw,h_realized,task,frames\n";
    for (const TrainLogRow& r : rows)
        os << r.step << ',' << fmt(r.loss) << ',' << fmt(r.loss_dev) << ',' << fmt(r.pid_score)
           << ',' << fmt(r.h_static) << ',' << fmt(r.h_adaptive) << ',' << fmt(r.h_raw) << ','
           << fmt(r.h_realized) << ',' << task_name(r.task) << ',' << r.n << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// evaluation battery
// ---------------------------------------------------------------------------

EvalBattery make_battery(const RunConfig& cfg, const Dataset& eval_set) {
    if (eval_set.clips.empty())
        throw std::invalid_argument("make_battery: empty held-out set");
    Rng rng(mix64(cfg.seed ^ kEvalTag));
    EvalBattery battery;
    const int per_task = cfg.eval_battery_per_task;
    const int n_lo = cfg.data_n_min;
    const int n_hi = std::max(n_lo, std::min(cfg.data_n_max, 8));
    int counter = 0;
    for (Task task : {Task::IPT, Task::PDT, Task::GRT})
        for (int i = 0; i < per_task; ++i) {
            EvalBattery::Item item;
            item.task = task;
            item.n = n_lo + counter % (n_hi - n_lo + 1);
            item.clip_idx = int(rng.below(eval_set.clips.size()));
            item.mask_u = int(rng.below(uint64_t(condition_mask_outcomes(task, item.n))));
            const int total = 3 * per_task;
            item.t = 1 + int((long(counter) * (cfg.diff_t_max - 1)) / std::max(1, total - 1));
            item.noise_seed = rng.raw();
            battery.items.push_back(item);
            ++counter;
        }
    return battery;
}

double eval_loss(const RunConfig& cfg, const ParamSet& params, const Dataset& eval_set,
                 const EvalBattery& battery) {
    const DenoiserConfig dcfg = cfg.denoiser_config();
    const DiffusionSchedule sched =
        DiffusionSchedule::linear_beta(cfg.diff_t_max, cfg.diff_beta_min, cfg.diff_beta_max);
    double acc = 0;
    for (const EvalBattery::Item& item : battery.items) {
        const SpriteClip& src = eval_set.clips[size_t(item.clip_idx)];
        SpriteClip clip = clip_with_frames(src, canonical_frames(src, item.n));
        const ConditionMask cmask = condition_mask_from_index(item.task, item.n, item.mask_u);
        Rng noise_rng(item.noise_seed);
        const Tensor noise = Tensor::gaussian(clip.frames.shape(), noise_rng);
        const NoisySample ns = forward_noise(clip.frames, item.t, noise, sched);
        const GuidancePack pack = pack_guidance(ns.x_t, clip, cmask, item.t);
        const Tensor pred = denoise_tensor(pack, params, dcfg);
        acc += masked_mse(pred, noise, ones_mask(item.n));
    }
    return acc / double(battery.items.size());
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double holdout) {
    const int total = int(ds.clips.size());
    const int eval_count = int(std::lround(total * holdout));
    Dataset train, eval_set;
    train.manifest.seed = eval_set.manifest.seed = ds.manifest.seed;
    train.manifest.config_hash = eval_set.manifest.config_hash = ds.manifest.config_hash;
    for (int i = 0; i < total; ++i) {
        Dataset& dst = i >= total - eval_count ? eval_set : train;
        dst.manifest.records.push_back(ds.manifest.records[size_t(i)]);
        dst.clips.push_back(ds.clips[size_t(i)]);
    }
    return {std::move(train), std::move(eval_set)};
}

// ---------------------------------------------------------------------------
// training state files
// ---------------------------------------------------------------------------

namespace {

constexpr uint32_t kStateMagic = 0x53445354;  // "SDST"
constexpr uint32_t kStateVersion = 1;

template <typename T>
void wpod(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T rpod(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    return v;
}

void wstr(std::ostream& os, const std::string& s) {
    wpod(os, uint64_t(s.size()));
    os.write(s.data(), std::streamsize(s.size()));
}

std::string rstr(std::istream& is) {
    const uint64_t n = rpod<uint64_t>(is);
    std::string s(n, '\0');
    is.read(s.data(), std::streamsize(n));
    return s;
}

struct TrainState {
    long step = 0;
    double eval_initial = 0;
    std::string rng_blob;
    std::string scheduler_blob;
    ParamSet params;
};

TrainState load_train_state(const std::string& path, uint64_t expect_hash) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open state file " + path);
    if (rpod<uint32_t>(in) != kStateMagic)
        throw std::runtime_error("state file " + path + ": bad magic");
    if (rpod<uint32_t>(in) != kStateVersion)
        throw std::runtime_error("state file " + path + ": unsupported version");
    const uint64_t hash = rpod<uint64_t>(in);
    if (hash != expect_hash)
        throw std::runtime_error("state file " + path + " was written with a different config");
    TrainState st;
    st.step = rpod<int64_t>(in);
    st.eval_initial = rpod<double>(in);
    st.rng_blob = rstr(in);
    st.scheduler_blob = rstr(in);
    const std::string tmp = rstr(in);
    std::istringstream ps(tmp);
    const uint32_t count = rpod<uint32_t>(ps);
    for (uint32_t i = 0; i < count; ++i) {
        const std::string name = rstr(ps);
        const uint32_t ndim = rpod<uint32_t>(ps);
        std::vector<int> shape(ndim);
        for (uint32_t j = 0; j < ndim; ++j) shape[j] = rpod<int32_t>(ps);
        Tensor t(shape);
        ps.read(reinterpret_cast<char*>(t.mutable_data()),
                std::streamsize(t.size() * sizeof(double)));
        st.params.items.emplace_back(name, std::move(t));
    }
    if (!in && !in.eof()) throw std::runtime_error("state file " + path + ": truncated");
    return st;
}

}  // namespace

void save_train_state(const std::string& path, const RunConfig& cfg, long step,
                      double eval_initial, const std::string& rng_blob,
                      const std::string& scheduler_blob, const ParamSet& params) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open state file " + path + " for writing");
    wpod(out, kStateMagic);
    wpod(out, kStateVersion);
    wpod(out, config_hash(cfg));
    wpod(out, int64_t(step));
    wpod(out, eval_initial);
    wstr(out, rng_blob);
    wstr(out, scheduler_blob);
    std::ostringstream ps;
    wpod(ps, uint32_t(params.items.size()));
    for (const auto& [name, t] : params.items) {
        wstr(ps, name);
        wpod(ps, uint32_t(t.ndim()));
        for (int i = 0; i < t.ndim(); ++i) wpod(ps, int32_t(t.dim(i)));
        ps.write(reinterpret_cast<const char*>(t.data()),
                 std::streamsize(t.size() * sizeof(double)));
    }
    wstr(out, ps.str());
    if (!out) throw std::runtime_error("short write to state file " + path);
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

TrainOutcome run_training(const RunConfig& cfg, const Dataset& train_set,
                          const Dataset& eval_set, const std::string& out_dir,
                          const std::string& resume_state) {
    validate(cfg);
    if (train_set.clips.empty()) throw std::invalid_argument("run_training: empty training set");

    const DenoiserConfig dcfg = cfg.denoiser_config();
    const DiffusionSchedule sched =
        DiffusionSchedule::linear_beta(cfg.diff_t_max, cfg.diff_beta_min, cfg.diff_beta_max);
    const CurriculumConfig ccfg = cfg.curriculum_config();

    // clips usable for each target length
    std::vector<std::vector<int>> buckets(size_t(cfg.data_n_max) + 1);
    for (int n = cfg.data_n_min; n <= cfg.data_n_max; ++n)
        for (int i = 0; i < int(train_set.clips.size()); ++i)
            if (train_set.clips[size_t(i)].frame_count() >= n) buckets[size_t(n)].push_back(i);
    if (buckets[size_t(cfg.data_n_min)].empty())
        throw std::invalid_argument("run_training: no clip reaches the minimum length");

    const EvalBattery battery = make_battery(cfg, eval_set);

    TrainOutcome out;
    Rng rng(0);
    Scheduler scheduler(cfg.strategy(), ccfg);
    long start_step = 0;

    if (resume_state.empty()) {
        Rng init_rng(mix64(cfg.seed ^ kParamTag));
        out.params = init_params(dcfg, init_rng);
        rng = Rng(mix64(cfg.seed ^ kTrainTag));
        out.eval_initial = eval_loss(cfg, out.params, eval_set, battery);
    } else {
        TrainState st = load_train_state(resume_state, config_hash(cfg));
        out.params = std::move(st.params);
        rng = Rng::deserialize(st.rng_blob);
        scheduler = Scheduler::deserialize(st.scheduler_blob, cfg.strategy(), ccfg);
        start_step = st.step;
        out.eval_initial = st.eval_initial;
    }
    out.first_step = start_step + 1;

    std::ofstream events;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        events.open(fs::path(out_dir) / "events.log", std::ios::app);
    }

    const double lr = cfg.train_lr;
    for (long step = start_step + 1; step <= cfg.train_steps; ++step) {
        const Scheduler::Draw draw = scheduler.next(rng);

        // route lengths nobody can serve downward
        int n = draw.n;
        while (n > cfg.data_n_min && buckets[size_t(n)].empty()) --n;
        if (n != draw.n) {
            out.resampled_lengths += 1;
            if (events)
                events << "step " << step << ": no clip with " << draw.n
                       << " frames, using " << n << "\n";
        }

        const std::vector<int>& bucket = buckets[size_t(n)];
        const SpriteClip& src = train_set.clips[size_t(bucket[rng.below(bucket.size())])];

        SpriteClip clip;
        LossMask lmask;
        if (src.frame_count() > n) {
            const FrameClustering clustering = cluster_frames(src, n, rng);
            auto [condensed, mask] = condense_clip(src, clustering);
            clip = std::move(condensed);
            lmask = std::move(mask);
        } else {
            clip = src;
            lmask = ones_mask(src.frame_count());
        }

        ConditionMask cmask = make_condition_mask(draw.task, n, rng);
        if (cmask.text_active && cfg.train_text_augment > 0)
            clip.caption = augment_text(clip.caption, cfg.train_text_augment, rng);

        const int t_noise = 1 + int(rng.below(uint64_t(cfg.diff_t_max)));
        const Tensor noise = Tensor::gaussian(clip.frames.shape(), rng);
        const NoisySample ns = forward_noise(clip.frames, t_noise, noise, sched);
        const GuidancePack pack = pack_guidance(ns.x_t, clip, cmask, t_noise);

        Tape tape;
        ParamVars vars = watch(tape, out.params);
        Var pred = denoise(tape, pack, vars, dcfg);
        Var loss = masked_mse(pred, noise, lmask);
        tape.backward(loss);
        const double loss_value = loss.val().item();

        for (auto& [name, tensor] : out.params.items) {
            const Tensor g = tape.grad_of(vars.at(name));
            Tensor next(tensor.shape());
            double* nd = next.mutable_data();
            for (size_t i = 0; i < tensor.size(); ++i) nd[i] = tensor[i] - lr * g[i];
            tensor = std::move(next);
        }

        const auto [dev, pid_score] = scheduler.feedback(loss_value);

        TrainLogRow row;
        row.step = step;
        row.task = draw.task;
        row.n = n;
        row.loss = loss_value;
        row.loss_dev = dev;
        row.pid_score = pid_score;
        row.h_static = draw.h_static;
        row.h_adaptive = draw.h_adaptive;
        row.h_raw = draw.h_raw;
        row.h_realized = draw.h_realized;
        out.log.push_back(row);

        if (!out_dir.empty() &&
            (step % cfg.train_checkpoint_every == 0 || step == cfg.train_steps)) {
            char name[64];
            std::snprintf(name, sizeof name, "ckpt_%06ld.bin", step);
            save_params((fs::path(out_dir) / name).string(), out.params, config_hash(cfg));
            save_params((fs::path(out_dir) / "checkpoint.bin").string(), out.params,
                        config_hash(cfg));
            std::snprintf(name, sizeof name, "state_%06ld.bin", step);
            save_train_state((fs::path(out_dir) / name).string(), cfg, step, out.eval_initial,
                             rng.serialize(), scheduler.serialize(), out.params);
            fs::copy_file(fs::path(out_dir) / name, fs::path(out_dir) / "state.bin",
                          fs::copy_options::overwrite_existing);
            if (events) events << "step " << step << ": checkpoint ckpt_" << std::setw(6)
                               << std::setfill('0') << step << ".bin\n";
        }
    }

    out.eval_final = eval_loss(cfg, out.params, eval_set, battery);

    if (!out_dir.empty()) {
        const bool fresh = resume_state.empty();
        std::ofstream log(fs::path(out_dir) / "log.csv",
                          fresh ? std::ios::trunc : std::ios::app);
        log << train_log_csv(out.log, fresh);
        std::ofstream summary(fs::path(out_dir) / "summary.csv");
        summary << "metric,value\n";
        summary << "eval_loss_initial," << fmt(out.eval_initial) << "\n";
        summary << "eval_loss_final," << fmt(out.eval_final) << "\n";
        summary << "resampled_lengths," << out.resampled_lengths << "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// guided sampling
// ---------------------------------------------------------------------------

Tensor sample_guided(const RunConfig& cfg, const ParamSet& params, const SpriteClip& guidance,
                     const ConditionMask& cmask, uint64_t seed) {
    const DenoiserConfig dcfg = cfg.denoiser_config();
    const DiffusionSchedule sched =
        DiffusionSchedule::linear_beta(cfg.diff_t_max, cfg.diff_beta_min, cfg.diff_beta_max);
    if (int(cmask.keep.size()) != guidance.frame_count())
        throw std::invalid_argument("sample_guided: mask does not match the guidance clip");

    DenoiseFn fn = [&](const Tensor& x_t, int t) {
        const GuidancePack pack = pack_guidance(x_t, guidance, cmask, t);
        return denoise_tensor(pack, params, dcfg);
    };

    DdimOptions opts;
    opts.pin = PinSpec{guidance.frames, cmask.keep};
    Rng rng(mix64(seed ^ kSampleTag));
    return ddim_sample(fn, sched, cfg.diff_ddim_steps, guidance.frames.shape(), rng, opts);
}

// ---------------------------------------------------------------------------
// checkpoint evaluation
// ---------------------------------------------------------------------------

std::vector<EvalReportRow> evaluate_checkpoint(const RunConfig& cfg, const ParamSet& params,
                                               const Dataset& eval_set, uint64_t seed) {
    const int m = cfg.eval_feature_dim;
    const int frames = cfg.sample_frames;
    const int use = std::min(int(eval_set.clips.size()), cfg.eval_clips);
    if (use < m + 1)
        throw std::invalid_argument("evaluate_checkpoint: held-out split of " +
                                    std::to_string(eval_set.clips.size()) +
                                    " clips is too small for a Gaussian fit; need at least " +
                                    std::to_string(m + 1));

    std::vector<Tensor> reference;
    for (int i = 0; i < use; ++i)
        reference.push_back(canonical_frames(eval_set.clips[size_t(i)], frames));
    const FeatureSpec spec =
        FeatureSpec::make(m, int(reference[0].size()), mix64(cfg.seed ^ kEvalTag));

    Rng mask_rng(mix64(seed ^ kEvalTag));
    std::vector<EvalReportRow> rows;
    for (Task task : {Task::IPT, Task::PDT, Task::GRT}) {
        std::vector<Tensor> generated;
        std::vector<double> psnrs;
        for (int i = 0; i < use; ++i) {
            const SpriteClip& src = eval_set.clips[size_t(i)];
            SpriteClip guidance = clip_with_frames(src, reference[size_t(i)]);
            const int outcomes = condition_mask_outcomes(task, frames);
            const ConditionMask cmask =
                condition_mask_from_index(task, frames, int(mask_rng.below(uint64_t(outcomes))));
            const Tensor out = sample_guided(cfg, params, guidance, cmask, seed + uint64_t(i));
            generated.push_back(out);

            // reconstruction quality over the hidden frames only
            const int hidden = frames - cmask.kept();
            if (hidden > 0) {
                Tensor got({hidden, src.height(), src.width(), src.channels()});
                Tensor want(got.shape());
                const size_t fe = size_t(src.height()) * src.width() * src.channels();
                int w = 0;
                for (int f = 0; f < frames; ++f) {
                    if (cmask.keep[size_t(f)]) continue;
                    std::copy(out.data() + size_t(f) * fe, out.data() + size_t(f + 1) * fe,
                              got.mutable_data() + size_t(w) * fe);
                    std::copy(reference[size_t(i)].data() + size_t(f) * fe,
                              reference[size_t(i)].data() + size_t(f + 1) * fe,
                              want.mutable_data() + size_t(w) * fe);
                    ++w;
                }
                psnrs.push_back(psnr(got, want));
            }
        }
        rows.push_back({task, "toy_fvd", toy_fvd(generated, reference, spec), use, use, seed});
        rows.push_back({task, "psnr", median(psnrs), use, use, seed});
    }
    return rows;
}

std::string eval_report_csv(const std::vector<EvalReportRow>& rows) {
    std::ostringstream os;
    os << "task,metric,value,set_a,set_b,seed\n";
    for (const EvalReportRow& r : rows)
        os << task_name(r.task) << ',' << r.metric << ',' << fmt(r.value) << ',' << r.set_a
           << ',' << r.set_b << ',' << r.seed << '\n';
    return os.str();
}

// ---------------------------------------------------------------------------
// ablation grid
// ---------------------------------------------------------------------------

AblationResult run_ablation(const RunConfig& base, const Dataset& train_set,
                            const Dataset& eval_set, const std::vector<uint64_t>& seeds,
                            bool verbose) {
    AblationResult result;
    const int frames = base.sample_frames;

    std::vector<Tensor> reference;
    const int use = std::min(int(eval_set.clips.size()), base.eval_clips);
    for (int i = 0; i < use; ++i)
        reference.push_back(canonical_frames(eval_set.clips[size_t(i)], frames));

    for (const std::string& temporal : {std::string("sti"), std::string("conv3d")}) {
        for (const std::string& strategy : {std::string("none"), std::string("lcl"),
                                            std::string("dcl")}) {
            std::vector<double> losses, fvds, smooths;
            for (uint64_t seed : seeds) {
                RunConfig cfg = base;
                cfg.model_temporal = temporal;
                cfg.curr_strategy = strategy;
                cfg.seed = seed;
                if (verbose)
                    std::fprintf(stderr, "[ablate] %s/%s seed %llu\n", temporal.c_str(),
                                 strategy.c_str(), (unsigned long long)seed);
                const TrainOutcome run = run_training(cfg, train_set, eval_set, "");

                std::vector<double> trace;
                trace.reserve(run.log.size());
                for (const TrainLogRow& r : run.log) trace.push_back(r.loss);

                // text+image generation set for the distribution metric
                const FeatureSpec spec = FeatureSpec::make(
                    base.eval_feature_dim, int(reference[0].size()), mix64(base.seed ^ kEvalTag));
                std::vector<Tensor> generated;
                const ConditionMask grt = condition_mask_from_index(Task::GRT, frames, 0);
                for (int i = 0; i < use; ++i) {
                    SpriteClip guidance =
                        clip_with_frames(eval_set.clips[size_t(i)], reference[size_t(i)]);
                    generated.push_back(
                        sample_guided(cfg, run.params, guidance, grt, seed + uint64_t(i)));
                }

                AblationRun row;
                row.temporal = temporal;
                row.strategy = strategy;
                row.seed = seed;
                row.eval_loss = run.eval_final;
                row.eval_loss_initial = run.eval_initial;
                row.fvd = toy_fvd(generated, reference, spec);
                row.smoothness = smoothness(trace, base.eval_window);
                result.runs.push_back(row);
                losses.push_back(row.eval_loss);
                fvds.push_back(row.fvd);
                smooths.push_back(row.smoothness);
            }
            result.cells.push_back(
                {temporal, strategy, median(losses), median(fvds), median(smooths)});
        }
    }
    return result;
}

std::string ablation_csv(const AblationResult& result) {
    std::ostringstream os;
    os << "temporal,strategy,eval_loss,toy_fvd,smoothness\n";
    for (const AblationCell& c : result.cells)
        os << c.temporal << ',' << c.strategy << ',' << fmt(c.eval_loss) << ',' << fmt(c.fvd)
           << ',' << fmt(c.smoothness) << '\n';
    return os.str();
}

}  // namespace sdiff
