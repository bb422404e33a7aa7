#include "sdiff/masks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace sdiff {

const char* task_name(Task t) {
    switch (t) {
        case Task::IPT: return "IPT";
        case Task::PDT: return "PDT";
        default: return "GRT";
    }
}

Task task_of(const std::string& name) {
    if (name == "IPT" || name == "ipt") return Task::IPT;
    if (name == "PDT" || name == "pdt") return Task::PDT;
    if (name == "GRT" || name == "grt") return Task::GRT;
    throw std::invalid_argument("unknown task '" + name + "'");
}

int condition_mask_outcomes(Task task, int n) {
    if (n < 3) throw std::invalid_argument("condition mask needs at least 3 frames");
    switch (task) {
        case Task::IPT: return (n - 2) * (n - 1) / 2;  // contiguous interior blocks
        case Task::PDT: return 2 * (n - 1);            // prefixes and suffixes of length 1..n-1
        default: return 1;
    }
}

ConditionMask condition_mask_from_index(Task task, int n, int u) {
    const int total = condition_mask_outcomes(task, n);
    if (u < 0 || u >= total) throw std::invalid_argument("mask outcome index out of range");
    ConditionMask m;
    m.task = task;
    m.keep.assign(size_t(n), 1);
    switch (task) {
        case Task::IPT: {
            // enumerate (start, len) over interior blocks within [1, n-2]
            int start = 1, remaining = u;
            while (remaining >= n - 1 - start) {
                remaining -= n - 1 - start;
                ++start;
            }
            const int len = remaining + 1;
            for (int i = start; i < start + len; ++i) m.keep[size_t(i)] = 0;
            break;
        }
        case Task::PDT: {
            const bool suffix = u >= n - 1;
            const int len = (suffix ? u - (n - 1) : u) + 1;
            if (suffix)
                for (int i = n - len; i < n; ++i) m.keep[size_t(i)] = 0;
            else
                for (int i = 0; i < len; ++i) m.keep[size_t(i)] = 0;
            break;
        }
        default: {
            m.keep.assign(size_t(n), 0);
            m.keep[0] = 1;
            m.text_active = true;
            break;
        }
    }
    return m;
}

ConditionMask make_condition_mask(Task task, int n, Rng& rng) {
    const int total = condition_mask_outcomes(task, n);
    return condition_mask_from_index(task, n, int(rng.below(uint64_t(total))));
}

// ---------------------------------------------------------------------------
// frame clustering
// ---------------------------------------------------------------------------

namespace {

double sq_dist(const double* a, const double* b, size_t d) {
    double acc = 0;
    for (size_t i = 0; i < d; ++i) {
        const double t = a[i] - b[i];
        acc += t * t;
    }
    return acc;
}

struct LloydResult {
    std::vector<int> assignment;
    std::vector<std::vector<double>> centroids;
    double wcss = 0;
    int iterations = 0;
    bool converged = false;
};

double wcss_of(const std::vector<const double*>& pts, size_t d, const std::vector<int>& assign,
               const std::vector<std::vector<double>>& centroids) {
    double acc = 0;
    for (size_t i = 0; i < pts.size(); ++i)
        acc += sq_dist(pts[i], centroids[size_t(assign[i])].data(), d);
    return acc;
}

LloydResult lloyd(const std::vector<const double*>& pts, size_t d, int k, Rng& rng) {
    const int n = int(pts.size());
    LloydResult res;

    // k-means++ seeding; exhausted distance mass falls back to the lowest
    // unchosen index (exact-duplicate inputs)
    std::vector<int> centers;
    std::vector<double> dist(size_t(n), std::numeric_limits<double>::infinity());
    centers.push_back(int(rng.below(uint64_t(n))));
    while (int(centers.size()) < k) {
        double total = 0;
        for (int i = 0; i < n; ++i) {
            const double dd = sq_dist(pts[size_t(i)], pts[size_t(centers.back())], d);
            if (dd < dist[size_t(i)]) dist[size_t(i)] = dd;
            total += dist[size_t(i)];
        }
        int pick = -1;
        if (total > 0) {
            const double target = rng.uniform() * total;
            double acc = 0;
            for (int i = 0; i < n; ++i) {
                acc += dist[size_t(i)];
                if (target < acc) {
                    pick = i;
                    break;
                }
            }
            if (pick < 0) pick = n - 1;
        }
        if (pick < 0 || dist[size_t(pick)] == 0.0) {
            pick = -1;
            for (int i = 0; i < n && pick < 0; ++i)
                if (std::find(centers.begin(), centers.end(), i) == centers.end()) pick = i;
        }
        centers.push_back(pick);
    }

    res.centroids.assign(size_t(k), std::vector<double>(d));
    for (int c = 0; c < k; ++c)
        std::copy(pts[size_t(centers[size_t(c)])], pts[size_t(centers[size_t(c)])] + d,
                  res.centroids[size_t(c)].begin());

    res.assignment.assign(size_t(n), -1);
    double prev_wcss = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < 50; ++iter) {
        // assign to nearest centroid, ties to the lowest cluster id
        bool changed = false;
        for (int i = 0; i < n; ++i) {
            int best = 0;
            double best_d = sq_dist(pts[size_t(i)], res.centroids[0].data(), d);
            for (int c = 1; c < k; ++c) {
                const double dd = sq_dist(pts[size_t(i)], res.centroids[size_t(c)].data(), d);
                if (dd < best_d) {
                    best_d = dd;
                    best = c;
                }
            }
            if (res.assignment[size_t(i)] != best) {
                res.assignment[size_t(i)] = best;
                changed = true;
            }
        }

        // repopulate empty clusters with the farthest point, lowest index on ties
        for (int c = 0; c < k; ++c) {
            if (std::count(res.assignment.begin(), res.assignment.end(), c) > 0) continue;
            int far = 0;
            double far_d = -1;
            for (int i = 0; i < n; ++i) {
                if (std::count(res.assignment.begin(), res.assignment.end(),
                               res.assignment[size_t(i)]) <= 1)
                    continue;  // do not empty a singleton
                const double dd =
                    sq_dist(pts[size_t(i)], res.centroids[size_t(res.assignment[size_t(i)])].data(), d);
                if (dd > far_d) {
                    far_d = dd;
                    far = i;
                }
            }
            res.assignment[size_t(far)] = c;
            changed = true;
        }

        // means
        std::vector<int> counts(size_t(k), 0);
        for (auto& cen : res.centroids) std::fill(cen.begin(), cen.end(), 0.0);
        for (int i = 0; i < n; ++i) {
            const int c = res.assignment[size_t(i)];
            counts[size_t(c)]++;
            for (size_t j = 0; j < d; ++j) res.centroids[size_t(c)][j] += pts[size_t(i)][j];
        }
        for (int c = 0; c < k; ++c)
            for (size_t j = 0; j < d; ++j) res.centroids[size_t(c)][j] /= counts[size_t(c)];

        res.wcss = wcss_of(pts, d, res.assignment, res.centroids);
        res.iterations = iter + 1;
        if (res.wcss > prev_wcss + 1e-12 * std::max(1.0, prev_wcss))
            throw std::logic_error("cluster_frames: within-cluster sum of squares increased");
        prev_wcss = res.wcss;

        if (!changed) {
            res.converged = true;
            break;
        }
    }
    return res;
}

}  // namespace

FrameClustering cluster_frames(const SpriteClip& clip, int k, Rng& rng) {
    const int n = clip.frame_count();
    if (k < 1) throw std::invalid_argument("cluster_frames: k must be positive");
    if (k > n)
        throw std::invalid_argument("cluster_frames: k=" + std::to_string(k) + " exceeds " +
                                    std::to_string(n) + " frames");

    const size_t d = size_t(clip.height()) * clip.width() * clip.channels();
    std::vector<const double*> pts(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) pts[size_t(i)] = clip.frames.data() + size_t(i) * d;

    FrameClustering out;
    out.k = k;

    if (k == n) {
        // exact identity clustering
        out.assignment.resize(size_t(n));
        out.centroids.assign(size_t(n), std::vector<double>(d));
        out.representatives.resize(size_t(n));
        for (int i = 0; i < n; ++i) {
            out.assignment[size_t(i)] = i;
            std::copy(pts[size_t(i)], pts[size_t(i)] + d, out.centroids[size_t(i)].begin());
            out.representatives[size_t(i)] = i;
        }
        out.wcss = 0;
        out.converged = true;
        return out;
    }

    // restarts are cheap at clip scale; collinear sprite trajectories create
    // local minima that a single seeding hits often
    const int restarts = n <= 16 ? 24 : 8;
    LloydResult best;
    bool have = false;
    for (int r = 0; r < restarts; ++r) {
        LloydResult res = lloyd(pts, d, k, rng);
        if (!have || res.wcss < best.wcss) {
            best = std::move(res);
            have = true;
        }
    }

    out.assignment = best.assignment;
    out.centroids = best.centroids;
    out.wcss = best.wcss;
    out.lloyd_iterations = best.iterations;
    out.converged = best.converged;

    // representative per cluster: frame nearest its centroid, lowest index on ties
    std::vector<int> rep(size_t(k), -1);
    std::vector<double> rep_d(size_t(k), std::numeric_limits<double>::infinity());
    for (int i = 0; i < n; ++i) {
        const int c = out.assignment[size_t(i)];
        const double dd = sq_dist(pts[size_t(i)], out.centroids[size_t(c)].data(), d);
        if (dd < rep_d[size_t(c)]) {
            rep_d[size_t(c)] = dd;
            rep[size_t(c)] = i;
        }
    }
    out.representatives = rep;
    std::sort(out.representatives.begin(), out.representatives.end());
    return out;
}

std::pair<SpriteClip, LossMask> condense_clip(const SpriteClip& clip,
                                              const FrameClustering& clustering) {
    const int n = clip.frame_count();
    if (int(clustering.assignment.size()) != n ||
        int(clustering.representatives.size()) != clustering.k)
        throw std::invalid_argument("condense_clip: clustering does not match clip");
    for (int idx : clustering.representatives)
        if (idx < 0 || idx >= n)
            throw std::invalid_argument("condense_clip: representative index out of range");

    const int k = clustering.k;
    const size_t frame_sz = size_t(clip.height()) * clip.width() * clip.channels();
    SpriteClip out;
    out.caption = clip.caption;
    out.factors = clip.factors;
    Tensor frames({k, clip.height(), clip.width(), clip.channels()});
    for (int i = 0; i < k; ++i) {
        const int src = clustering.representatives[size_t(i)];
        std::copy(clip.frames.data() + size_t(src) * frame_sz,
                  clip.frames.data() + size_t(src + 1) * frame_sz,
                  frames.mutable_data() + size_t(i) * frame_sz);
    }
    out.frames = std::move(frames);

    LossMask lm;
    lm.weight.assign(size_t(k), 1);
    return {std::move(out), std::move(lm)};
}

MaskedViews apply_masks(const SpriteClip& clip, const ConditionMask& cmask) {
    const int n = clip.frame_count();
    if (int(cmask.keep.size()) != n)
        throw std::invalid_argument("apply_masks: mask length " +
                                    std::to_string(cmask.keep.size()) + " vs " +
                                    std::to_string(n) + " frames");
    const int h = clip.height(), w = clip.width(), c = clip.channels();
    const size_t frame_sz = size_t(h) * w * c;

    MaskedViews views;
    views.targets = clip.frames;
    Tensor guidance({n, h, w, c});
    Tensor keep_plane({n, h, w, 1});
    double* g = guidance.mutable_data();
    double* kp = keep_plane.mutable_data();
    for (int i = 0; i < n; ++i) {
        if (cmask.keep[size_t(i)]) {
            std::copy(clip.frames.data() + size_t(i) * frame_sz,
                      clip.frames.data() + size_t(i + 1) * frame_sz, g + size_t(i) * frame_sz);
            std::fill(kp + size_t(i) * h * w, kp + size_t(i + 1) * h * w, 1.0);
        }
    }
    views.guidance = std::move(guidance);
    views.keep_plane = std::move(keep_plane);
    return views;
}

}  // namespace sdiff
