// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "vdsm/rng.hpp"
#include "vdsm/tensor.hpp"

namespace vdsm {

// One sequence with its ground-truth factor labels. Labels exist only for
// evaluation; the trainer never reads them.
struct LabeledSequence {
    Tensor frames;  // [T, C, H, W], pixels in [0,1]
    int identity_label = 0;
    int action_label = 0;
};

// Per-sequence pendulum draw: angle theta(t) = A*sin(omega*t + phi0).
struct PendulumParams {
    double omega = 0.0;
    double phi0 = 0.0;
};

// Closed-form glyph trajectory (top-left corner coordinates).
struct ShapeTrajectory {
    int motion = 0;  // 0 horizontal, 1 vertical, 2 diagonal, 3 circular
    double x0 = 0.0, y0 = 0.0;
    double speed = 0.0;
    double phase = 0.0;         // circular only
    double lo = 0.0, hi = 0.0;  // valid top-left range per axis
};

struct Dataset {
    std::string kind;  // "pendulum" | "shapes"
    int frame_channels = 0;
    int frame_size = 0;
    int seq_len = 0;
    int n_identities = 0;
    int n_actions = 0;
    std::vector<std::string> identity_names;
    std::vector<std::string> action_names;
    std::vector<LabeledSequence> sequences;
    // Ground-truth generator draws, indexed like sequences and persisted with
    // them. Evaluation-only, like the labels; the trainer never reads them.
    std::vector<PendulumParams> pendulum_params;
    std::vector<ShapeTrajectory> shape_trajectories;
};

// Colored pendulum swinging on a fixed pivot at (0.5*F, 0.25*F) with rod
// length 0.45*F: theta(t) = A*sin(w*t + phi0) with A = 45 degrees and
// per-sequence random phase. Identity = color, action = speed. Speeds
// complete an integer number of periods inside the 16-frame base cycle so
// time-pooled statistics carry no speed information.
Dataset gen_pendulum(int n_colors, int n_speeds, int T, int count, int frame_size,
                     unsigned long long seed, int threads = 1);

// Closed-form position of the swinging bob center at time t, in pixels.
std::pair<double, double> pendulum_bob_center(int frame_size, double omega, double phi0, int t);

// Grayscale glyph translating along a closed-form trajectory with reflecting
// boundaries. Identity = glyph shape, action = motion pattern.
Dataset gen_moving_shapes(int n_shapes, int n_motions, int T, int count, int frame_size,
                          unsigned long long seed, int threads = 1);

// Glyph top-left corner at time t for a trajectory spec.
std::pair<double, double> shape_position(const ShapeTrajectory& traj, int t);

// The G x G bitmap (values {0,1}) for identity index shape in 0..7, and the
// side length used at a given frame size.
Tensor glyph_bitmap(int shape, int G);
int glyph_size(int frame_size);

// Big-endian IDX container (magic 0x803 for images, 0x801 for labels).
struct IdxData {
    std::vector<Tensor> images;  // each [1, rows, cols], scaled to [0,1]
    std::vector<int> labels;
};
IdxData load_idx(const std::string& path);

// Flat binary dataset file plus a small JSON manifest next to it.
void save_dataset(const Dataset& ds, const std::string& bin_path, const std::string& manifest_path);
Dataset load_dataset(const std::string& bin_path);

// Identity-grouped frame batches for pretraining. Groups are sequences (the
// label-free grouping); each epoch shuffles group order and frame order within
// groups, then emits per-group chunks so every batch holds one identity.
class IdentityBatcher {
public:
    IdentityBatcher(const Dataset& ds, int batch_size, unsigned long long seed);

    // Frames [n, C, H, W] with n <= batch_size (tail chunks are short).
    Tensor next();
    int batches_per_epoch() const { return batches_per_epoch_; }
    int epoch() const { return epoch_; }

private:
    void build_epoch();

    const Dataset* ds_;
    int batch_size_;
    unsigned long long seed_;
    int epoch_ = -1;
    int batches_per_epoch_ = 0;
    std::vector<std::pair<int, std::vector<int>>> plan_;  // (sequence, frame order)
    size_t group_pos_ = 0;
    size_t frame_pos_ = 0;
};

// Whole-sequence batches for the sequential stage.
class SequenceBatcher {
public:
    SequenceBatcher(const Dataset& ds, int batch_size, unsigned long long seed);

    // Sequences [B, T, C, H, W] with B <= batch_size.
    Tensor next();
    std::vector<int> last_indices() const { return last_; }
    int batches_per_epoch() const { return batches_per_epoch_; }
    int epoch() const { return epoch_; }

private:
    void build_epoch();

    const Dataset* ds_;
    int batch_size_;
    unsigned long long seed_;
    int epoch_ = -1;
    int batches_per_epoch_ = 0;
    std::vector<int> order_;
    size_t pos_ = 0;
    std::vector<int> last_;
};

}  // namespace vdsm
