#include "patches.hpp"

#include <stdexcept>
#include <string>

namespace pxf {

PatchGrid::PatchGrid(int height, int width, int chans, int patch)
    : height_px(height), width_px(width), channels(chans), patch_size(patch) {
    if (height <= 0 || width <= 0 || chans <= 0 || patch <= 0) {
        throw std::invalid_argument("PatchGrid: all dimensions must be positive");
    }
    if (height % patch != 0 || width % patch != 0) {
        throw std::invalid_argument("PatchGrid: patch size " + std::to_string(patch) + " does not divide " +
                                    std::to_string(height) + "x" + std::to_string(width));
    }
}

namespace {

// image flat index for pixel (y, x, c)
inline int64_t img_idx(const PatchGrid& g, int y, int x, int c) {
    return (static_cast<int64_t>(y) * g.width_px + x) * g.channels + c;
}

}  // namespace

template <typename T>
Tensor<T> patchify(const Tensor<T>& image, const PatchGrid& grid) {
    if (image.shape != grid.image_shape()) {
        throw std::invalid_argument("patchify: image shape " + shape_str(image.shape) + " does not match grid " +
                                    shape_str(grid.image_shape()));
    }
    const int p = grid.patch_size, c = grid.channels, d = grid.token_dim();
    Tensor<T> tokens(grid.token_shape());
    int n = 0;
    for (int gr = 0; gr < grid.rows(); ++gr) {
        for (int gc = 0; gc < grid.cols(); ++gc, ++n) {
            T* tok = tokens.data.data() + static_cast<size_t>(n) * d;
            for (int pr = 0; pr < p; ++pr) {
                for (int pc = 0; pc < p; ++pc) {
                    for (int ch = 0; ch < c; ++ch) {
                        tok[(pr * p + pc) * c + ch] =
                            image.data[static_cast<size_t>(img_idx(grid, gr * p + pr, gc * p + pc, ch))];
                    }
                }
            }
        }
    }
    return tokens;
}

template <typename T>
Tensor<T> unpatchify(const Tensor<T>& tokens, const PatchGrid& grid) {
    if (tokens.shape != grid.token_shape()) {
        throw std::invalid_argument("unpatchify: token shape " + shape_str(tokens.shape) + " does not match grid " +
                                    shape_str(grid.token_shape()));
    }
    const int p = grid.patch_size, c = grid.channels, d = grid.token_dim();
    Tensor<T> image(grid.image_shape());
    int n = 0;
    for (int gr = 0; gr < grid.rows(); ++gr) {
        for (int gc = 0; gc < grid.cols(); ++gc, ++n) {
            const T* tok = tokens.data.data() + static_cast<size_t>(n) * d;
            for (int pr = 0; pr < p; ++pr) {
                for (int pc = 0; pc < p; ++pc) {
                    for (int ch = 0; ch < c; ++ch) {
                        image.data[static_cast<size_t>(img_idx(grid, gr * p + pr, gc * p + pc, ch))] =
                            tok[(pr * p + pc) * c + ch];
                    }
                }
            }
        }
    }
    return image;
}

std::vector<std::pair<int, int>> position_ids(const PatchGrid& grid) {
    std::vector<std::pair<int, int>> ids;
    ids.reserve(static_cast<size_t>(grid.token_count()));
    for (int r = 0; r < grid.rows(); ++r) {
        for (int c = 0; c < grid.cols(); ++c) ids.emplace_back(r, c);
    }
    return ids;
}

std::vector<int64_t> unpatchify_permutation(const PatchGrid& grid) {
    const int p = grid.patch_size, c = grid.channels, d = grid.token_dim();
    std::vector<int64_t> perm(static_cast<size_t>(grid.pixel_count()));
    for (int y = 0; y < grid.height_px; ++y) {
        for (int x = 0; x < grid.width_px; ++x) {
            const int n = (y / p) * grid.cols() + (x / p);
            const int base = ((y % p) * p + (x % p)) * c;
            for (int ch = 0; ch < c; ++ch) {
                perm[static_cast<size_t>(img_idx(grid, y, x, ch))] = static_cast<int64_t>(n) * d + base + ch;
            }
        }
    }
    return perm;
}

template Tensor<float> patchify(const Tensor<float>&, const PatchGrid&);
template Tensor<double> patchify(const Tensor<double>&, const PatchGrid&);
template Tensor<float> unpatchify(const Tensor<float>&, const PatchGrid&);
template Tensor<double> unpatchify(const Tensor<double>&, const PatchGrid&);

}  // namespace pxf
