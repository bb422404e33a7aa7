#include "sdiff/curriculum.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace sdiff {

namespace {

constexpr double kTaskStart[3] = {0.7, 0.2, 0.1};
constexpr double kTaskEnd[3] = {0.1, 0.3, 0.6};
constexpr double kRatioStart = 0.5;
constexpr double kRatioEnd = 2.0;
constexpr double kBetaLimit = 50.0;
constexpr double kTiltTolerance = 1e-3;

double step_fraction(long t, long total_steps) {
    if (total_steps < 1) throw std::invalid_argument("total_steps must be positive");
    if (t < 0 || t > total_steps)
        throw std::invalid_argument("step " + std::to_string(t) + " outside [0," +
                                    std::to_string(total_steps) + "]");
    return double(t) / double(total_steps);
}

// truncated geometric with ratio r over n_count cells
std::vector<double> geometric_conditional(double ratio, int n_count) {
    std::vector<double> p(static_cast<size_t>(n_count));
    double z = 0, w = 1;
    for (int i = 0; i < n_count; ++i) {
        p[size_t(i)] = w;
        z += w;
        w *= ratio;
    }
    for (double& x : p) x /= z;
    return p;
}

}  // namespace

IntrinsicEntropy IntrinsicEntropy::defaults(int n_min, int n_max, double h_ipt, double h_pdt,
                                            double h_grt) {
    IntrinsicEntropy e;
    e.h_task[0] = h_ipt;
    e.h_task[1] = h_pdt;
    e.h_task[2] = h_grt;
    e.n_min = n_min;
    for (int n = n_min; n <= n_max; ++n) e.h_frames.push_back(std::log(double(n)));
    e.validate();
    return e;
}

void IntrinsicEntropy::validate() const {
    if (!(h_task[0] < h_task[1] && h_task[1] < h_task[2]))
        throw std::invalid_argument("intrinsic task entropies must be strictly increasing");
    for (size_t i = 1; i < h_frames.size(); ++i)
        if (!(h_frames[i - 1] < h_frames[i]))
            throw std::invalid_argument("intrinsic frame entropies must be strictly increasing");
    if (h_frames.empty()) throw std::invalid_argument("empty frame entropy table");
}

double StaticGrid::task_marginal(Task t) const {
    double acc = 0;
    for (int n = n_min; n <= n_max; ++n) acc += cell(t, n);
    return acc;
}

double StaticGrid::frame_marginal(int n) const {
    double acc = 0;
    for (Task t : {Task::IPT, Task::PDT, Task::GRT}) acc += cell(t, n);
    return acc;
}

void StaticGrid::validate() const {
    if (int(p.size()) != 3 * n_count()) throw std::invalid_argument("grid size mismatch");
    double z = 0;
    for (double x : p) {
        if (x < 0) throw std::invalid_argument("negative grid cell");
        z += x;
    }
    if (std::abs(z - 1.0) > 1e-12)
        throw std::invalid_argument("grid sums to " + std::to_string(z) + ", not 1");
}

StaticGrid static_grid(long t, long total_steps, const CurriculumConfig& cfg) {
    const double u = step_fraction(t, total_steps);
    StaticGrid g;
    g.n_min = cfg.n_min;
    g.n_max = cfg.n_max;
    const int nc = g.n_count();
    g.p.assign(size_t(3 * nc), 0.0);

    double task_p[3];
    for (int i = 0; i < 3; ++i) task_p[i] = (1 - u) * kTaskStart[i] + u * kTaskEnd[i];
    // log-linear ratio sweep keeps the conditional a geometric at every step
    const double ratio = kRatioStart * std::pow(kRatioEnd / kRatioStart, u);
    const std::vector<double> cond = geometric_conditional(ratio, nc);

    for (int ti = 0; ti < 3; ++ti)
        for (int i = 0; i < nc; ++i) g.p[size_t(ti) * nc + i] = task_p[ti] * cond[size_t(i)];
    g.validate();
    return g;
}

StaticGrid lcl_grid(long t, long total_steps, const CurriculumConfig& cfg) {
    const double u = step_fraction(t, total_steps);
    StaticGrid g;
    g.n_min = cfg.n_min;
    g.n_max = cfg.n_max;
    const int nc = g.n_count();
    g.p.assign(size_t(3 * nc), 0.0);
    double task_p[3];
    for (int i = 0; i < 3; ++i) task_p[i] = (1 - u) * kTaskStart[i] + u * kTaskEnd[i];
    for (int ti = 0; ti < 3; ++ti)
        for (int i = 0; i < nc; ++i) g.p[size_t(ti) * nc + i] = task_p[ti] / nc;
    g.validate();
    return g;
}

StaticGrid uniform_grid(const CurriculumConfig& cfg) {
    StaticGrid g;
    g.n_min = cfg.n_min;
    g.n_max = cfg.n_max;
    const int nc = g.n_count();
    g.p.assign(size_t(3 * nc), 1.0 / (3 * nc));
    g.validate();
    return g;
}

double static_entropy(const StaticGrid& grid, const IntrinsicEntropy& intrinsic) {
    grid.validate();
    double acc = 0;
    for (Task t : {Task::IPT, Task::PDT, Task::GRT})
        for (int n = grid.n_min; n <= grid.n_max; ++n)
            acc += grid.cell(t, n) * intrinsic.cell(t, n);
    return acc;
}

void PidState::validate() const {
    if (kp < 0 || ki < 0 || kd < 0)
        throw std::invalid_argument("PID gains must be non-negative");
    if (windup_bound < 0) throw std::invalid_argument("negative anti-windup bound");
    if (std::abs(integral) > windup_bound + 1e-12)
        throw std::invalid_argument("integral outside the anti-windup bound");
}

double loss_deviation(LossHistory& history, double current_loss) {
    if (!std::isfinite(current_loss))
        throw std::invalid_argument("loss_deviation: non-finite loss");
    double dev = 0;
    if (history.count > 0) dev = current_loss - history.sum / double(history.count);
    history.count += 1;
    history.sum += current_loss;
    return dev;
}

double pid_update(PidState& pid, double loss_dev) {
    if (!std::isfinite(loss_dev)) throw std::invalid_argument("pid_update: non-finite input");
    const double error = -loss_dev;
    pid.integral = std::clamp(pid.integral + error, -pid.windup_bound, pid.windup_bound);
    const double derivative = error - pid.prev_error;
    pid.prev_error = error;
    return pid.kp * error + pid.ki * pid.integral + pid.kd * derivative;
}

double adaptive_entropy(double h_static, double pid_score, double delta) {
    return h_static + delta * std::tanh(pid_score);
}

FusedTarget fused_target(double lambda, double h_static, double h_adaptive,
                         double prev_realized) {
    FusedTarget f;
    f.raw = lambda * h_static + (1 - lambda) * h_adaptive;
    f.realized = std::max(prev_realized, f.raw);
    return f;
}

std::vector<double> tilted_cells(const StaticGrid& grid, const IntrinsicEntropy& intrinsic,
                                 double target_entropy, double* beta_out) {
    grid.validate();
    if (!std::isfinite(target_entropy))
        throw std::invalid_argument("sample_task: non-finite entropy target");

    const int nc = grid.n_count();
    std::vector<double> h(static_cast<size_t>(3 * nc));
    for (int ti = 0; ti < 3; ++ti)
        for (int i = 0; i < nc; ++i)
            h[size_t(ti) * nc + i] = intrinsic.cell(Task(ti), grid.n_min + i);

    auto tilt = [&](double beta) {
        std::vector<double> q(static_cast<size_t>(3 * nc));
        if (beta == 0.0) {
            q = grid.p;
            return q;
        }
        double mx = -1e300;
        for (size_t i = 0; i < q.size(); ++i)
            if (grid.p[i] > 0) mx = std::max(mx, std::log(grid.p[i]) + beta * h[i]);
        double z = 0;
        for (size_t i = 0; i < q.size(); ++i) {
            q[i] = grid.p[i] > 0 ? std::exp(std::log(grid.p[i]) + beta * h[i] - mx) : 0.0;
            z += q[i];
        }
        for (double& x : q) x /= z;
        return q;
    };
    auto mean_h = [&](const std::vector<double>& q) {
        double acc = 0;
        for (size_t i = 0; i < q.size(); ++i) acc += q[i] * h[i];
        return acc;
    };

    // the achievable range under the bounded tilt
    const double lo = mean_h(tilt(-kBetaLimit));
    const double hi = mean_h(tilt(kBetaLimit));
    const double target = std::clamp(target_entropy, lo, hi);

    // E_Q is monotone in beta; bisect, checking beta = 0 first so an exactly
    // centered target leaves the grid untouched
    double beta = 0.0;
    std::vector<double> q = tilt(beta);
    if (std::abs(mean_h(q) - target) > kTiltTolerance) {
        double a = -kBetaLimit, b = kBetaLimit;
        if (mean_h(q) < target)
            a = 0;
        else
            b = 0;
        bool ok = false;
        for (int it = 0; it < 200; ++it) {
            beta = 0.5 * (a + b);
            q = tilt(beta);
            const double m = mean_h(q);
            if (std::abs(m - target) <= kTiltTolerance) {
                ok = true;
                break;
            }
            if (m < target)
                a = beta;
            else
                b = beta;
        }
        if (!ok)
            throw std::runtime_error("sample_task: bisection failed to reach the tilt target");
    }
    if (beta_out) *beta_out = beta;
    return q;
}

TiltedDraw sample_task(const StaticGrid& grid, const IntrinsicEntropy& intrinsic,
                       double target_entropy, Rng& rng) {
    TiltedDraw draw;
    std::vector<double> q = tilted_cells(grid, intrinsic, target_entropy, &draw.beta);

    const int nc = grid.n_count();
    double achieved = 0;
    for (int ti = 0; ti < 3; ++ti)
        for (int i = 0; i < nc; ++i)
            achieved += q[size_t(ti) * nc + i] * intrinsic.cell(Task(ti), grid.n_min + i);
    draw.achieved = achieved;

    const double u = rng.uniform();
    double acc = 0;
    size_t pick = q.size() - 1;
    for (size_t i = 0; i < q.size(); ++i) {
        acc += q[i];
        if (u < acc) {
            pick = i;
            break;
        }
    }
    draw.task = Task(int(pick) / nc);
    draw.n = grid.n_min + int(pick) % nc;
    return draw;
}

const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::none: return "none";
        case Strategy::lcl: return "lcl";
        default: return "dcl";
    }
}

Strategy strategy_of(const std::string& name) {
    if (name == "none") return Strategy::none;
    if (name == "lcl") return Strategy::lcl;
    if (name == "dcl") return Strategy::dcl;
    throw std::invalid_argument("unknown curriculum strategy '" + name + "'");
}

// ---------------------------------------------------------------------------
// Scheduler
// ---------------------------------------------------------------------------

Scheduler::Scheduler(Strategy strategy, const CurriculumConfig& cfg)
    : strategy_(strategy), cfg_(cfg) {
    if (!(cfg.lambda > 0 && cfg.lambda < 1))
        throw std::invalid_argument("lambda must lie strictly inside (0,1)");
    if (cfg.n_min < 3 || cfg.n_min > cfg.n_max)
        throw std::invalid_argument("bad curriculum frame range");
    intrinsic_ = IntrinsicEntropy::defaults(cfg.n_min, cfg.n_max, cfg.h_ipt, cfg.h_pdt, cfg.h_grt);
    const double span = intrinsic_.cell(Task::GRT, cfg.n_max) - intrinsic_.cell(Task::IPT, cfg.n_min);
    delta_ = cfg.delta_scale * span;
    pid_.kp = cfg.kp;
    pid_.ki = cfg.ki;
    pid_.kd = cfg.kd;
    pid_.windup_bound = 10.0 * delta_ / std::max(1.0, cfg.ki);
    pid_.validate();
}

StaticGrid Scheduler::grid_at(long t) const {
    switch (strategy_) {
        case Strategy::none: return uniform_grid(cfg_);
        case Strategy::lcl: return lcl_grid(t, cfg_.total_steps, cfg_);
        default: return static_grid(t, cfg_.total_steps, cfg_);
    }
}

Scheduler::Draw Scheduler::next(Rng& rng) {
    const long t = std::min(step_, cfg_.total_steps);
    const StaticGrid grid = grid_at(t);
    const double h_static = static_entropy(grid, intrinsic_);

    Draw d{};
    d.h_static = h_static;
    if (strategy_ == Strategy::dcl) {
        d.h_adaptive = adaptive_entropy(h_static, pid_score_, delta_);
        const FusedTarget f =
            fused_target(cfg_.lambda, h_static, d.h_adaptive,
                         has_realized_ ? prev_realized_ : -1e300);
        d.h_raw = f.raw;
        d.h_realized = f.realized;
        prev_realized_ = f.realized;
        has_realized_ = true;
        const TiltedDraw td = sample_task(grid, intrinsic_, f.realized, rng);
        d.task = td.task;
        d.n = td.n;
    } else {
        d.h_adaptive = h_static;
        d.h_raw = h_static;
        d.h_realized = h_static;
        // direct draw from the grid, same cell order as the tilted path
        const double u = rng.uniform();
        const int nc = grid.n_count();
        double acc = 0;
        size_t pick = grid.p.size() - 1;
        for (size_t i = 0; i < grid.p.size(); ++i) {
            acc += grid.p[i];
            if (u < acc) {
                pick = i;
                break;
            }
        }
        d.task = Task(int(pick) / nc);
        d.n = grid.n_min + int(pick) % nc;
    }
    step_ += 1;
    return d;
}

std::pair<double, double> Scheduler::feedback(double loss) {
    const double dev = loss_deviation(history_, loss);
    if (strategy_ == Strategy::dcl) pid_score_ = pid_update(pid_, dev);
    return {dev, pid_score_};
}

std::string Scheduler::serialize() const {
    std::ostringstream os;
    os.precision(17);
    os << step_ << ' ' << history_.count << ' ' << history_.sum << ' ' << pid_.integral << ' '
       << pid_.prev_error << ' ' << pid_score_ << ' ' << prev_realized_ << ' '
       << (has_realized_ ? 1 : 0);
    return os.str();
}

Scheduler Scheduler::deserialize(const std::string& blob, Strategy strategy,
                                 const CurriculumConfig& cfg) {
    Scheduler s(strategy, cfg);
    std::istringstream is(blob);
    int has = 0;
    is >> s.step_ >> s.history_.count >> s.history_.sum >> s.pid_.integral >> s.pid_.prev_error >>
        s.pid_score_ >> s.prev_realized_ >> has;
    if (!is) throw std::runtime_error("bad scheduler state blob");
    s.has_realized_ = has != 0;
    return s;
}

}  // namespace sdiff
