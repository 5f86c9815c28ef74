#pragma once

// Image quality metrics and the programmatic scene checker. PSNR/SSIM map
// the signed [-1,1] pixel range to [0,1] internally; the checker classifies
// each grid cell against rendered candidate templates (background only, or
// one object of each shape/size/color), which recovers rasterizer output
// exactly and degrades gracefully on model output.

#include "scene.hpp"
#include "tensor.hpp"

namespace pxf {

// Peak signal-to-noise ratio in dB on the [0,1] scale, capped at 99.
double psnr(const Tensor<float>& a, const Tensor<float>& b);

// Mean SSIM over non-overlapping 8x8 windows per channel (trailing partial
// windows kept), uniform weighting, C1 = 1e-4, C2 = 9e-4.
double ssim(const Tensor<float>& a, const Tensor<float>& b);

// Cell-by-cell nearest-template readout of an image: background color plus
// the object (if any) in each cell. The result may violate scene invariants
// (e.g. more objects than a generator would place) — it reports what is seen.
Scene classify_image(const Tensor<float>& image);

struct CheckResult {
    bool shape_ok = false;     // every expected shape is present somewhere
    bool color_ok = false;     // every expected (shape, color) pair is present
    bool position_ok = false;  // every expected cell holds an object of the expected shape
    bool count_ok = false;     // object counts match

    int passed() const { return int(shape_ok) + int(color_ok) + int(position_ok) + int(count_ok); }
    bool all() const { return passed() == 4; }
};

CheckResult compositional_check(const Tensor<float>& image, const Scene& expected);

}  // namespace pxf
