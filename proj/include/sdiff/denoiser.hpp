#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sdiff/autodiff.hpp"
#include "sdiff/masks.hpp"
#include "sdiff/rng.hpp"
#include "sdiff/sprites.hpp"
#include "sdiff/tensor.hpp"

// Noise-prediction network for sprite clips. Guidance (reference image,
// visible frames, keep plane) is channel-concatenated with the noisy frames;
// two temporal blocks carry the inter-frame modelling. The default block
// splits into a downsampled cross-frame attention branch and a channel-wise
// convolution branch fused by a zero-initialized linear layer behind a
// residual connection; a depthwise 3-d convolution block is the ablation
// alternative.

namespace sdiff {

enum class TemporalKind { sti, conv3d };

const char* temporal_name(TemporalKind k);
TemporalKind temporal_of(const std::string& name);

struct DenoiserConfig {
    int frames_max = 24;  // positional table rows
    int height = 8;
    int width = 8;
    int channels = 1;
    int d = 32;           // feature width
    int gamma = 2;        // spatial downsample factor of the attention branch
    int conv_window = 3;  // channel-conv window j
    int heads = 1;
    int blocks = 2;
    bool pos_emb = true;
    TemporalKind temporal = TemporalKind::sti;
    int vocab = kVocabSize;

    int guidance_channels() const { return 3 * channels + 1; }
    void validate() const;
};

// ordered parameter registry; the order defines the checkpoint manifest
struct ParamSet {
    std::vector<std::pair<std::string, Tensor>> items;

    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const;
    size_t scalar_count() const;
};

ParamSet init_params(const DenoiserConfig& cfg, Rng& rng);

// every parameter registered on the tape, keyed by name
struct ParamVars {
    std::map<std::string, Var> vars;

    Var at(const std::string& name) const;
};

ParamVars watch(Tape& tape, const ParamSet& params);

struct GuidancePack {
    Tensor input;  // [F,H,W, C_noisy + C_ref + C_cond + 1]
    int t = 0;
    std::vector<int> caption;
    bool text_active = false;
};

// channel concatenation of noisy frames, the broadcast reference frame (frame
// 0 of the clip, average-pooled down if larger), masked visible frames, and
// the binary keep plane
GuidancePack pack_guidance(const Tensor& noisy, const SpriteClip& clip,
                           const ConditionMask& cmask, int t);

// each token independently replaced by '#' with probability p
std::vector<int> augment_text(const std::vector<int>& tokens, double p, Rng& rng);

// mean of embedding-table rows, then a linear map to width d
Var embed_text(Tape& tape, const std::vector<int>& tokens, Var table, Var proj_w, Var proj_b);

// sinusoidal position code for a timestep, width d
Tensor sinusoidal_embedding(int t, int d);

// temporal blocks; h is [F,H,W,d]
Var sti_forward(Tape& tape, Var h, const ParamVars& params, const std::string& prefix,
                const DenoiserConfig& cfg);
Var conv3d_block(Tape& tape, Var h, const ParamVars& params, const std::string& prefix);

// full forward pass to predicted noise [F,H,W,C]
Var denoise(Tape& tape, const GuidancePack& pack, const ParamVars& params,
            const DenoiserConfig& cfg);

// convenience: plain-tensor forward for sampling/eval
Tensor denoise_tensor(const GuidancePack& pack, const ParamSet& params,
                      const DenoiserConfig& cfg);

// ---------------------------------------------------------------------------
// checkpoints: magic, version, config hash, manifest (name, shape), then raw
// little-endian float64 payload in manifest order
// ---------------------------------------------------------------------------

void save_params(const std::string& path, const ParamSet& params, uint64_t config_hash);
ParamSet load_params(const std::string& path, uint64_t* config_hash_out = nullptr);

}  // namespace sdiff
