#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdiff/rng.hpp"
#include "sdiff/sprites.hpp"
#include "sdiff/tensor.hpp"

// Dual-mask machinery: condition masks turn one clip into three training
// tasks by hiding parts of the guidance; loss masks come from k-means frame
// condensation of long clips.

namespace sdiff {

enum class Task { IPT, PDT, GRT };

const char* task_name(Task t);
Task task_of(const std::string& name);

struct ConditionMask {
    Task task = Task::IPT;
    std::vector<uint8_t> keep;  // per frame
    bool text_active = false;

    int kept() const {
        int k = 0;
        for (uint8_t b : keep) k += b;
        return k;
    }
};

// number of distinct mask patterns the rng can draw for (task, n)
int condition_mask_outcomes(Task task, int n);

// deterministic core: pattern for outcome index u in [0, outcomes)
ConditionMask condition_mask_from_index(Task task, int n, int u);

ConditionMask make_condition_mask(Task task, int n, Rng& rng);

struct LossMask {
    std::vector<uint8_t> weight;  // {0,1} per frame

    int active() const {
        int k = 0;
        for (uint8_t b : weight) k += b;
        return k;
    }
};

struct FrameClustering {
    int k = 0;
    std::vector<int> assignment;       // cluster id per frame
    std::vector<std::vector<double>> centroids;
    std::vector<int> representatives;  // frame indices, ascending
    double wcss = 0.0;
    int lloyd_iterations = 0;
    bool converged = false;  // assignment fixed point reached
};

// k-means over per-frame flattened pixel features, k-means++ init, Lloyd
// iterations to an assignment fixed point (at most 50), best of a few
// restarts; ties always break toward the lowest index
FrameClustering cluster_frames(const SpriteClip& clip, int k, Rng& rng);

// condensed clip = one representative frame per cluster in temporal order,
// with an all-ones loss mask of length k
std::pair<SpriteClip, LossMask> condense_clip(const SpriteClip& clip,
                                              const FrameClustering& clustering);

struct MaskedViews {
    Tensor guidance;    // clip frames with masked frames zeroed
    Tensor keep_plane;  // [N,H,W,1] binary
    Tensor targets;     // untouched frames
};

MaskedViews apply_masks(const SpriteClip& clip, const ConditionMask& cmask);

}  // namespace sdiff
