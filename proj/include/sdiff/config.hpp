#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "sdiff/curriculum.hpp"
#include "sdiff/denoiser.hpp"
#include "sdiff/sprites.hpp"

// Flat `key = value` run configuration. Unknown keys are errors; the config
// hash runs over the canonical sorted dump, so it does not depend on the
// order keys appear in the file.

namespace sdiff {

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RunConfig {
    uint64_t seed = 1;

    // dataset
    int data_height = 8;
    int data_width = 8;
    int data_channels = 1;
    int data_n_min = 3;
    int data_n_max = 12;
    double data_tail = 2.0;
    int data_count = 400;
    double data_holdout = 0.1;

    // model
    int model_width = 32;
    int model_gamma = 2;
    int model_conv_window = 3;
    int model_heads = 1;
    int model_blocks = 2;
    bool model_pos_emb = true;
    std::string model_temporal = "sti";

    // diffusion
    int diff_t_max = 200;
    double diff_beta_min = 1e-4;
    double diff_beta_max = 0.05;
    int diff_ddim_steps = 25;

    // curriculum
    std::string curr_strategy = "dcl";
    double curr_lambda = 0.7;
    double curr_kp = 0.5;
    double curr_ki = 0.05;
    double curr_kd = 0.1;
    double curr_delta_scale = 0.2;
    double curr_h_ipt = 1.0;
    double curr_h_pdt = 2.0;
    double curr_h_grt = 3.0;

    // training
    long train_steps = 2000;
    double train_lr = 1e-3;
    long train_checkpoint_every = 500;
    double train_text_augment = 0.1;

    // evaluation
    int eval_clips = 20;
    int eval_feature_dim = 8;
    int eval_window = 50;
    int eval_battery_per_task = 12;

    int sample_frames = 8;

    GenConfig gen_config() const;
    DenoiserConfig denoiser_config() const;
    CurriculumConfig curriculum_config() const;
    Strategy strategy() const { return strategy_of(curr_strategy); }
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);
void validate(const RunConfig& cfg);

std::string dump_config(const RunConfig& cfg);   // canonical sorted key = value
uint64_t config_hash(const RunConfig& cfg);

}  // namespace sdiff
