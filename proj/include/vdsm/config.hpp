// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <string>
#include <vector>

namespace vdsm {

// One flat run configuration: model dims, training protocol, schedules, data
// generation. Parsed from "key = value" lines; unknown keys are rejected so
// typos fail loudly. Command-line flags override file values.
struct Config {
    // Latent dimensions.
    int kappa_z = 12;   // pose code per frame
    int kappa_s = 8;    // identity code per sequence (also the expert count)
    int kappa_d = 16;   // dynamics code per sequence
    int n_experts = 8;  // must equal kappa_s, or 1 for the single-decoder ablation

    // Frames.
    int frame_channels = 3;
    int frame_size = 32;  // square, power of two, >= 2

    // Encoder / decoder widths. Empty = derived from frame_size.
    std::vector<int> enc_widths;
    std::vector<int> dec_widths;
    int feat_s = 64;        // identity feature width between trunk and s heads
    bool enc_blur = false;  // average-blur after each strided conv

    // Sequence model.
    int rnn_hidden = 64;
    int rnn_token_dim = 8;  // learned constant decoder input token
    int trans_hidden = 16;

    // Training.
    int seq_len = 16;
    int epochs_pretrain = 60;
    int epochs_sequence = 40;
    int batch_pretrain = 16;  // frames per identity-grouped batch
    int batch_sequence = 8;   // sequences per batch
    int batches_per_epoch_pretrain = 50;
    int batches_per_epoch_sequence = 25;
    double lr_pretrain = 5e-4;
    double lr_sequence = 1e-3;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
    double grad_clip = 10.0;
    unsigned long long seed = 7;

    // Annealing.
    double lambda_z_pre_start = 30.0;
    double lambda_z_pre_end = 1.0;
    double lambda_s_pre_start = 0.1;
    double lambda_s_pre_end = 1.0;
    double lambda_z_seq_start = 0.1;
    double lambda_z_seq_end = 1.0;
    double lambda_s_seq = 1.0;
    double lambda_d = 1.0;
    double tau_min = 1.0;
    double tau_max = 10.0;

    // Data generation.
    std::string dataset = "pendulum";  // pendulum | shapes
    int gen_count = 200;
    int gen_colors = 7;
    int gen_speeds = 2;
    int gen_shapes = 4;
    int gen_motions = 4;

    // Derived helpers.
    std::vector<int> encoder_widths() const;
    std::vector<int> decoder_widths() const;
    int trunk_spatial() const;  // spatial side after the conv stack
    int latent_in() const { return kappa_s + kappa_z; }

    void validate() const;

    // key=value round trip. serialize() emits every key; apply_kv sets one.
    std::string serialize() const;
    void apply_kv(const std::string& key, const std::string& value);
};

Config parse_config_file(const std::string& path);
Config parse_config_text(const std::string& text);

}  // namespace vdsm
