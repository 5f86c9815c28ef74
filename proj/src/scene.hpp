#pragma once

// Closed procedural scene world: one or two colored shapes on a 2x2 cell
// grid, rasterized with hard edges so pixel-level oracles are exact.

#include <string>
#include <vector>

#include "rng.hpp"
#include "tensor.hpp"

namespace pxf {

enum class ShapeKind { circle, square, triangle };
enum class ColorName { red, green, blue, yellow, purple, white };
enum class SizeTag { small, large };
enum class BackgroundColor { black, gray };

inline constexpr int kShapeCount = 3;
inline constexpr int kColorCount = 6;
inline constexpr int kSizeCount = 2;
inline constexpr int kCellCount = 4;  // 2x2 grid: top-left, top-right, bottom-left, bottom-right
inline constexpr int kBackgroundCount = 2;

const char* shape_word(ShapeKind s);
const char* shape_plural(ShapeKind s);
const char* color_word(ColorName c);
const char* size_word(SizeTag s);
const char* background_word(BackgroundColor b);
std::string cell_phrase(int cell);  // "top left" etc.

ShapeKind parse_shape(const std::string& w);
ColorName parse_color(const std::string& w);
SizeTag parse_size(const std::string& w);
BackgroundColor parse_background(const std::string& w);
int parse_cell(const std::string& two_words);

// RGB in [-1, 1]
struct Rgb {
    double r, g, b;
};
Rgb color_rgb(ColorName c);
Rgb background_rgb(BackgroundColor b);

struct SceneObject {
    ShapeKind shape;
    ColorName color;
    int cell = 0;  // 0..3, row-major over the 2x2 grid
    SizeTag size = SizeTag::large;

    bool operator==(const SceneObject&) const = default;
};

struct Scene {
    std::vector<SceneObject> objects;  // 1..2, distinct cells, sorted by cell
    BackgroundColor background = BackgroundColor::black;

    bool operator==(const Scene&) const = default;
    // object occupying a cell, or -1
    int object_in_cell(int cell) const;
    // index of the unique object with this shape, or -1 when absent/ambiguous
    int unique_shape(ShapeKind s) const;
};

void validate_scene(const Scene& scene);

// Uniform draw over valid scenes with the given object count (cells distinct,
// objects sorted by cell so equal scenes have equal representations).
Scene gen_scene(RandomStream& stream, int n_objects);

// Deterministic hard-edge rasterization to an (H, W, 3) tensor in [-1, 1].
template <typename T>
Tensor<T> rasterize(const Scene& scene, int height, int width);

// Pixel rectangle of a grid cell: {y0, x0, h, w}.
struct CellRect {
    int y0, x0, h, w;
};
CellRect cell_rect(int height, int width, int cell);

// True when the shape covers the pixel at (y, x) inside a cell of the given
// geometry; shared by the rasterizer and the evaluation templates.
bool shape_covers(ShapeKind shape, SizeTag size, const CellRect& rect, int y, int x);

}  // namespace pxf
