// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "vdsm/tensor.hpp"

namespace vdsm {

// Tiles sequences into one image: each row is a sequence laid out frame by
// frame left to right, separated by pad pixels of white. Every row must share
// [T,C,H,W]. Returns [C, H', W'].
Tensor assemble_grid(const std::vector<Tensor>& rows, int pad = 2);

// image is [C,H,W] with C 1 (grayscale) or 3 (RGB), values clamped to [0,1].
void write_png(const Tensor& image, const std::string& path);

}  // namespace vdsm
