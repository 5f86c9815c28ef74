#include "quality.hpp"

#include <cmath>
#include <stdexcept>

namespace pxf {

namespace {

inline double to_unit(float v) { return (static_cast<double>(v) + 1.0) * 0.5; }

void require_pair(const Tensor<float>& a, const Tensor<float>& b, const char* op) {
    require_same_shape(a.shape, b.shape, op);
    if (a.numel() == 0) throw std::invalid_argument(std::string(op) + ": empty tensors");
}

}  // namespace

double psnr(const Tensor<float>& a, const Tensor<float>& b) {
    require_pair(a, b, "psnr");
    double mse = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        const double d = to_unit(a.data[i]) - to_unit(b.data[i]);
        mse += d * d;
    }
    mse /= static_cast<double>(a.numel());
    if (mse <= 0.0) return 99.0;
    return std::min(99.0, 10.0 * std::log10(1.0 / mse));
}

double ssim(const Tensor<float>& a, const Tensor<float>& b) {
    require_pair(a, b, "ssim");
    if (a.rank() != 3) throw std::invalid_argument("ssim: expected an (H, W, C) tensor");
    const int h = a.shape[0], w = a.shape[1], c = a.shape[2];
    constexpr int kWin = 8;
    constexpr double kC1 = 1e-4;  // (0.01 * range)^2 on the [0,1] scale
    constexpr double kC2 = 9e-4;  // (0.03 * range)^2
    double total = 0.0;
    int windows = 0;
    for (int ch = 0; ch < c; ++ch) {
        for (int y0 = 0; y0 < h; y0 += kWin) {
            for (int x0 = 0; x0 < w; x0 += kWin) {
                const int y1 = std::min(y0 + kWin, h), x1 = std::min(x0 + kWin, w);
                const int n = (y1 - y0) * (x1 - x0);
                double ma = 0, mb = 0;
                for (int y = y0; y < y1; ++y) {
                    for (int x = x0; x < x1; ++x) {
                        const size_t idx = (static_cast<size_t>(y) * w + x) * c + ch;
                        ma += to_unit(a.data[idx]);
                        mb += to_unit(b.data[idx]);
                    }
                }
                ma /= n;
                mb /= n;
                double va = 0, vb = 0, cov = 0;
                for (int y = y0; y < y1; ++y) {
                    for (int x = x0; x < x1; ++x) {
                        const size_t idx = (static_cast<size_t>(y) * w + x) * c + ch;
                        const double da = to_unit(a.data[idx]) - ma;
                        const double db = to_unit(b.data[idx]) - mb;
                        va += da * da;
                        vb += db * db;
                        cov += da * db;
                    }
                }
                va /= n;
                vb /= n;
                cov /= n;
                total += ((2 * ma * mb + kC1) * (2 * cov + kC2)) /
                         ((ma * ma + mb * mb + kC1) * (va + vb + kC2));
                ++windows;
            }
        }
    }
    return total / windows;
}

namespace {

// Squared error of the image's cell rectangle against a fully rendered
// candidate scene.
double cell_error(const Tensor<float>& image, const Tensor<float>& candidate, const CellRect& r) {
    const int w = image.shape[1], c = image.shape[2];
    double err = 0.0;
    for (int y = r.y0; y < r.y0 + r.h; ++y) {
        for (int x = r.x0; x < r.x0 + r.w; ++x) {
            for (int ch = 0; ch < c; ++ch) {
                const size_t idx = (static_cast<size_t>(y) * w + x) * c + ch;
                const double d = static_cast<double>(image.data[idx]) - candidate.data[idx];
                err += d * d;
            }
        }
    }
    return err;
}

// Squared error of the image's cell rectangle against plain background.
double background_error(const Tensor<float>& image, BackgroundColor bg, const CellRect& r) {
    const int w = image.shape[1];
    const Rgb rgb = background_rgb(bg);
    const double ref[3] = {rgb.r, rgb.g, rgb.b};
    double err = 0.0;
    for (int y = r.y0; y < r.y0 + r.h; ++y) {
        for (int x = r.x0; x < r.x0 + r.w; ++x) {
            for (int ch = 0; ch < 3; ++ch) {
                const size_t idx = (static_cast<size_t>(y) * w + x) * 3 + ch;
                const double d = static_cast<double>(image.data[idx]) - ref[ch];
                err += d * d;
            }
        }
    }
    return err;
}

struct CellRead {
    bool occupied = false;
    SceneObject object{};
    double error = 0.0;
};

// Best template for one cell under a fixed background hypothesis.
CellRead read_cell(const Tensor<float>& image, BackgroundColor bg, int cell) {
    const int h = image.shape[0], w = image.shape[1];
    const CellRect rect = cell_rect(h, w, cell);
    CellRead best;
    best.error = background_error(image, bg, rect);
    for (int s = 0; s < kShapeCount; ++s) {
        for (int z = 0; z < kSizeCount; ++z) {
            for (int col = 0; col < kColorCount; ++col) {
                SceneObject obj{static_cast<ShapeKind>(s), static_cast<ColorName>(col), cell,
                                static_cast<SizeTag>(z)};
                const double err = cell_error(image, rasterize<float>(Scene{{obj}, bg}, h, w), rect);
                if (err < best.error) {
                    best = CellRead{true, obj, err};
                }
            }
        }
    }
    return best;
}

}  // namespace

Scene classify_image(const Tensor<float>& image) {
    if (image.rank() != 3 || image.shape[2] != 3) {
        throw std::invalid_argument("classify_image: expected an (H, W, 3) tensor");
    }
    Scene best{};
    double best_total = 0.0;
    for (int b = 0; b < kBackgroundCount; ++b) {
        const BackgroundColor bg = static_cast<BackgroundColor>(b);
        Scene scene{{}, bg};
        double total = 0.0;
        for (int cell = 0; cell < kCellCount; ++cell) {
            const CellRead read = read_cell(image, bg, cell);
            total += read.error;
            if (read.occupied) scene.objects.push_back(read.object);
        }
        if (b == 0 || total < best_total) {
            best = scene;
            best_total = total;
        }
    }
    return best;
}

CheckResult compositional_check(const Tensor<float>& image, const Scene& expected) {
    const Scene seen = classify_image(image);
    CheckResult res;
    res.count_ok = seen.objects.size() == expected.objects.size();

    // Multiset containment via greedy matching on used flags.
    std::vector<bool> used_shape(seen.objects.size(), false);
    std::vector<bool> used_pair(seen.objects.size(), false);
    res.shape_ok = true;
    res.color_ok = true;
    res.position_ok = true;
    for (const SceneObject& want : expected.objects) {
        bool shape_found = false;
        for (size_t i = 0; i < seen.objects.size(); ++i) {
            if (!used_shape[i] && seen.objects[i].shape == want.shape) {
                used_shape[i] = true;
                shape_found = true;
                break;
            }
        }
        if (!shape_found) res.shape_ok = false;

        bool pair_found = false;
        for (size_t i = 0; i < seen.objects.size(); ++i) {
            if (!used_pair[i] && seen.objects[i].shape == want.shape && seen.objects[i].color == want.color) {
                used_pair[i] = true;
                pair_found = true;
                break;
            }
        }
        if (!pair_found) res.color_ok = false;

        const int at = seen.object_in_cell(want.cell);
        if (at < 0 || seen.objects[static_cast<size_t>(at)].shape != want.shape) res.position_ok = false;
    }
    return res;
}

}  // namespace pxf
