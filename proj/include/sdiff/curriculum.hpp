#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "sdiff/masks.hpp"
#include "sdiff/rng.hpp"

// Difficulty scheduling over (task, frame-length) pairs. The static schedule
// moves probability mass from easy to hard cells over training; a PID
// controller driven by the loss deviation adds a bounded adaptive correction;
// the fused target is clamped to be non-decreasing and realized by
// exponential tilting of the static grid.

namespace sdiff {

struct IntrinsicEntropy {
    double h_task[3] = {1.0, 2.0, 3.0};  // IPT < PDT < GRT
    std::vector<double> h_frames;        // per N over [n_min, n_max]
    int n_min = 3;

    // default table: H^N = ln N
    static IntrinsicEntropy defaults(int n_min, int n_max, double h_ipt = 1.0, double h_pdt = 2.0,
                                     double h_grt = 3.0);

    double task(Task t) const { return h_task[int(t)]; }
    double frames(int n) const { return h_frames.at(size_t(n - n_min)); }
    double cell(Task t, int n) const { return task(t) + frames(n); }

    void validate() const;  // ordering and strict increase
};

struct StaticGrid {
    int n_min = 3;
    int n_max = 8;
    std::vector<double> p;  // 3 * (n_max - n_min + 1), task-major

    int n_count() const { return n_max - n_min + 1; }
    double cell(Task t, int n) const { return p[size_t(int(t)) * n_count() + (n - n_min)]; }
    double& cell_ref(Task t, int n) { return p[size_t(int(t)) * n_count() + (n - n_min)]; }
    double task_marginal(Task t) const;
    double frame_marginal(int n) const;
    void validate() const;  // non-negative, sums to 1 within 1e-12
};

struct CurriculumConfig {
    int n_min = 3;
    int n_max = 8;
    long total_steps = 2000;
    double lambda = 0.7;  // static weight in the fused target
    double kp = 0.5;
    double ki = 0.05;
    double kd = 0.1;
    double delta_scale = 0.2;  // adaptive half-width as a share of the entropy span
    double h_ipt = 1.0, h_pdt = 2.0, h_grt = 3.0;
};

// task marginal interpolates (0.7,0.2,0.1) -> (0.1,0.3,0.6) linearly in
// t/total; the frame conditional is a truncated geometric whose ratio moves
// log-linearly 0.5 -> 2.0
StaticGrid static_grid(long t, long total_steps, const CurriculumConfig& cfg);

// task marginal as above, frame marginal fixed uniform
StaticGrid lcl_grid(long t, long total_steps, const CurriculumConfig& cfg);

StaticGrid uniform_grid(const CurriculumConfig& cfg);

double static_entropy(const StaticGrid& grid, const IntrinsicEntropy& intrinsic);

struct PidState {
    double kp = 0, ki = 0, kd = 0;
    double integral = 0;
    double prev_error = 0;
    double windup_bound = 0;

    void validate() const;
};

// running loss statistics for the deviation signal
struct LossHistory {
    long count = 0;
    double sum = 0;
};

// L_s = current loss minus the mean of all previous losses (0 on the first
// step); the current loss then joins the history
double loss_deviation(LossHistory& history, double current_loss);

// control error is the negated deviation, so hard batches push the score down
double pid_update(PidState& pid, double loss_dev);

double adaptive_entropy(double h_static, double pid_score, double delta);

struct FusedTarget {
    double raw = 0;
    double realized = 0;
};

// raw = lambda*static + (1-lambda)*adaptive, realized clamped non-decreasing
FusedTarget fused_target(double lambda, double h_static, double h_adaptive,
                         double prev_realized);

struct TiltedDraw {
    Task task = Task::IPT;
    int n = 0;
    double beta = 0;
    double achieved = 0;  // E_Q of the cell entropy actually hit
};

// Q ∝ P * exp(beta * cell entropy), beta solved by bisection on [-50,50] so
// the expected cell entropy matches the target clamped to the achievable
// range within 1e-3
TiltedDraw sample_task(const StaticGrid& grid, const IntrinsicEntropy& intrinsic,
                       double target_entropy, Rng& rng);

// tilted cell distribution itself, exposed for tests
std::vector<double> tilted_cells(const StaticGrid& grid, const IntrinsicEntropy& intrinsic,
                                 double target_entropy, double* beta_out = nullptr);

enum class Strategy { none, lcl, dcl };

const char* strategy_name(Strategy s);
Strategy strategy_of(const std::string& name);

// one row of the curriculum trace
struct CurriculumTraceRow {
    long step = 0;
    double loss = 0;
    double loss_dev = 0;
    double pid_score = 0;
    double h_static = 0;
    double h_adaptive = 0;
    double h_raw = 0;
    double h_realized = 0;
    Task task = Task::IPT;
    int n = 0;
};

class Scheduler {
public:
    Scheduler(Strategy strategy, const CurriculumConfig& cfg);

    struct Draw {
        Task task;
        int n;
        double h_static, h_adaptive, h_raw, h_realized;
    };

    // grid + target for the current step, then a (task, n) draw
    Draw next(Rng& rng);

    // feed back the batch loss; returns (loss deviation, pid score)
    std::pair<double, double> feedback(double loss);

    long step() const { return step_; }
    Strategy strategy() const { return strategy_; }
    const CurriculumConfig& config() const { return cfg_; }
    const IntrinsicEntropy& intrinsic() const { return intrinsic_; }
    StaticGrid grid_at(long t) const;

    std::string serialize() const;
    static Scheduler deserialize(const std::string& blob, Strategy strategy,
                                 const CurriculumConfig& cfg);

private:
    Strategy strategy_;
    CurriculumConfig cfg_;
    IntrinsicEntropy intrinsic_;
    PidState pid_;
    LossHistory history_;
    long step_ = 0;  // completed draws
    double pid_score_ = 0;
    double prev_realized_ = 0;
    bool has_realized_ = false;
    double delta_ = 0;
};

}  // namespace sdiff
