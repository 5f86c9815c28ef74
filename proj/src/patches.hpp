#pragma once

// Lossless conversion between images and patch-token matrices, plus the
// per-token grid coordinates used for positional embeddings.
//
// Layout contract: patches are ordered row-major over the grid (top-left to
// bottom-right); inside a patch, pixels are row-major with channel fastest.
// Images are H x W x C row-major with channel fastest, values in [-1, 1].

#include <cstdint>
#include <utility>
#include <vector>

#include "tensor.hpp"

namespace pxf {

struct PatchGrid {
    int height_px = 0;
    int width_px = 0;
    int channels = 0;
    int patch_size = 0;

    PatchGrid() = default;
    PatchGrid(int height, int width, int chans, int patch);

    int rows() const { return height_px / patch_size; }
    int cols() const { return width_px / patch_size; }
    int token_count() const { return rows() * cols(); }
    int token_dim() const { return patch_size * patch_size * channels; }
    int64_t pixel_count() const { return static_cast<int64_t>(height_px) * width_px * channels; }

    std::vector<int> image_shape() const { return {height_px, width_px, channels}; }
    std::vector<int> token_shape() const { return {token_count(), token_dim()}; }

    bool operator==(const PatchGrid&) const = default;
};

template <typename T>
Tensor<T> patchify(const Tensor<T>& image, const PatchGrid& grid);

template <typename T>
Tensor<T> unpatchify(const Tensor<T>& tokens, const PatchGrid& grid);

// (row, col) grid coordinates per token, in patchify order.
std::vector<std::pair<int, int>> position_ids(const PatchGrid& grid);

// Element permutation realizing unpatchify as out[i] = tokens[perm[i]], for
// running the reshape inside a differentiable graph.
std::vector<int64_t> unpatchify_permutation(const PatchGrid& grid);

}  // namespace pxf
