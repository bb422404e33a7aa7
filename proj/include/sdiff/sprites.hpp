#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdiff/rng.hpp"
#include "sdiff/tensor.hpp"

// Procedural captioned sprite-animation clips with a long-tail frame-length
// law. Clip generation is pure given (rng substream, config), so a dataset is
// reproducible bit-for-bit from its seed.

namespace sdiff {

// token vocabulary (table has kVocabSize rows; ids beyond kTokenCount unused)
constexpr int kHashToken = 0;
constexpr int kColorTokenBase = 1;   // red, green, blue, yellow
constexpr int kShapeTokenBase = 5;   // circle, square, bar
constexpr int kMotionTokenBase = 8;  // translate, bounce, blink, grow
constexpr int kColorCount = 4;
constexpr int kShapeCount = 3;
constexpr int kMotionCount = 4;
constexpr int kTokenCount = 12;
constexpr int kVocabSize = 64;

const char* token_name(int id);
int token_of(const std::string& name);  // -1 if unknown

struct Factors {
    int shape = 0;
    int color = 0;
    int motion = 0;

    bool operator==(const Factors&) const = default;
};

struct SpriteClip {
    Tensor frames;             // [N,H,W,C], values on the 8-bit grid in [0,1]
    std::vector<int> caption;  // [color, shape, motion] token ids
    Factors factors;

    int frame_count() const { return frames.dim(0); }
    int height() const { return frames.dim(1); }
    int width() const { return frames.dim(2); }
    int channels() const { return frames.dim(3); }
};

struct GenConfig {
    int height = 8;
    int width = 8;
    int channels = 1;
    int n_min = 3;
    int n_max = 24;
    double tail_exponent = 2.0;
};

void validate(const GenConfig& cfg);
uint64_t config_hash(const GenConfig& cfg);

std::vector<int> caption_of(const Factors& f);
Factors factors_of(const std::vector<int>& caption);

// frame-count law P(N) ∝ N^(-s) on [n_min, n_max]
std::vector<double> frame_count_pmf(const GenConfig& cfg);
int sample_frame_count(Rng& rng, const GenConfig& cfg);

SpriteClip sample_clip(Rng& rng, const GenConfig& cfg);

// single frame of the clip's animation; exposed for tests
Tensor render_frame(const Factors& f, const GenConfig& cfg, int frame_index, int phase);

// deterministic length canonicalization for evaluation sets: evenly spaced
// frame selection when longer, cyclic repetition when shorter
Tensor canonical_frames(const SpriteClip& clip, int n);

// ---------------------------------------------------------------------------
// on-disk dataset
// ---------------------------------------------------------------------------

struct ClipRecord {
    std::string id;
    int frame_count = 0;
    Factors factors;
    std::vector<int> caption;
    std::string path_prefix;
};

struct DatasetManifest {
    uint64_t seed = 0;
    uint64_t config_hash = 0;
    std::vector<ClipRecord> records;
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<SpriteClip> clips;

    size_t size() const { return clips.size(); }
};

Dataset generate_dataset(const GenConfig& cfg, int count, uint64_t seed);

void write_dataset(const Dataset& ds, const std::string& dir);
Dataset read_dataset(const std::string& dir);

std::string manifest_to_string(const DatasetManifest& m);

}  // namespace sdiff
