// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

#include "vdsm/trainer.hpp"

namespace vdsm {

// Checkpoint failures, split so callers can tell a foreign file from a stale
// one from a corrupted one.
struct CheckpointError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CheckpointFormatError : CheckpointError {
    using CheckpointError::CheckpointError;
};
struct CheckpointVersionError : CheckpointError {
    using CheckpointError::CheckpointError;
};
struct CheckpointShapeError : CheckpointError {
    using CheckpointError::CheckpointError;
};
struct CheckpointTruncationError : CheckpointError {
    using CheckpointError::CheckpointError;
};

inline constexpr unsigned kCheckpointVersion = 1;

// Binary layout (little endian throughout), byte-documented in the README:
// magic "VDSM", u32 version, length-prefixed config text, stage byte,
// pretrain-complete byte, epoch counters, optimizer step, the annealing
// snapshot, the RNG state string, then three tensor sections (parameters,
// first moments, second moments), each a count followed by name / shape /
// 32-bit float data records.
void save_checkpoint(const ModelState& state, const std::string& path);

// Validates magic, version and every tensor's name and shape against the
// embedded config before reconstructing the state.
ModelState load_checkpoint(const std::string& path);

}  // namespace vdsm
