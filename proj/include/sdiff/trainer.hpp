#pragma once

#include <optional>
#include <string>
#include <vector>

#include "sdiff/config.hpp"
#include "sdiff/curriculum.hpp"
#include "sdiff/denoiser.hpp"
#include "sdiff/diffusion.hpp"
#include "sdiff/metrics.hpp"
#include "sdiff/sprites.hpp"

// Training orchestration: the per-step loop (curriculum draw, clip
// condensation, condition mask, noising, gradient step, feedback), a frozen
// deterministic evaluation battery, checkpoint/resume, guided sampling and
// the ablation grid.

namespace sdiff {

struct TrainLogRow {
    long step = 0;
    Task task = Task::IPT;
    int n = 0;
    double loss = 0;
    double loss_dev = 0;
    double pid_score = 0;
    double h_static = 0;
    double h_adaptive = 0;
    double h_raw = 0;
    double h_realized = 0;
};

std::string train_log_csv(const std::vector<TrainLogRow>& rows, bool header);
std::string curriculum_trace_csv(const std::vector<TrainLogRow>& rows);

// deterministic (clip, task, length, mask, timestep, noise) tuples
struct EvalBattery {
    struct Item {
        int clip_idx;
        Task task;
        int n;
        int mask_u;
        int t;
        uint64_t noise_seed;
    };
    std::vector<Item> items;
};

EvalBattery make_battery(const RunConfig& cfg, const Dataset& eval_set);
double eval_loss(const RunConfig& cfg, const ParamSet& params, const Dataset& eval_set,
                 const EvalBattery& battery);

std::pair<Dataset, Dataset> split_dataset(const Dataset& ds, double holdout);

struct TrainOutcome {
    std::vector<TrainLogRow> log;  // rows for the steps this call executed
    ParamSet params;
    double eval_initial = 0;
    double eval_final = 0;
    long first_step = 1;
    long resampled_lengths = 0;  // draws where no clip was long enough
};

// out_dir may be empty (no files); resume_state points at a state file
// written by a previous run with the same config
TrainOutcome run_training(const RunConfig& cfg, const Dataset& train_set,
                          const Dataset& eval_set, const std::string& out_dir,
                          const std::string& resume_state = "");

void save_train_state(const std::string& path, const RunConfig& cfg, long step,
                      double eval_initial, const std::string& rng_blob,
                      const std::string& scheduler_blob, const ParamSet& params);

// guided sampling: kept frames of the guidance clip are pinned through the
// trajectory and restored exactly in the output
Tensor sample_guided(const RunConfig& cfg, const ParamSet& params, const SpriteClip& guidance,
                     const ConditionMask& cmask, uint64_t seed);

struct EvalReportRow {
    Task task;
    std::string metric;
    double value;
    int set_a;
    int set_b;
    uint64_t seed;
};

std::vector<EvalReportRow> evaluate_checkpoint(const RunConfig& cfg, const ParamSet& params,
                                               const Dataset& eval_set, uint64_t seed);
std::string eval_report_csv(const std::vector<EvalReportRow>& rows);

struct AblationRun {
    std::string temporal;
    std::string strategy;
    uint64_t seed;
    double eval_loss;
    double eval_loss_initial;
    double fvd;
    double smoothness;
};

struct AblationCell {
    std::string temporal;
    std::string strategy;
    double eval_loss;   // medians over seeds
    double fvd;
    double smoothness;
};

struct AblationResult {
    std::vector<AblationRun> runs;
    std::vector<AblationCell> cells;  // 6 rows: {sti, conv3d} x {none, lcl, dcl}
};

AblationResult run_ablation(const RunConfig& base, const Dataset& train_set,
                            const Dataset& eval_set, const std::vector<uint64_t>& seeds,
                            bool verbose = false);
std::string ablation_csv(const AblationResult& result);

}  // namespace sdiff
