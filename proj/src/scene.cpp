#include "scene.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace pxf {

const char* shape_word(ShapeKind s) {
    switch (s) {
        case ShapeKind::circle: return "circle";
        case ShapeKind::square: return "square";
        case ShapeKind::triangle: return "triangle";
    }
    return "?";
}

const char* shape_plural(ShapeKind s) {
    switch (s) {
        case ShapeKind::circle: return "circles";
        case ShapeKind::square: return "squares";
        case ShapeKind::triangle: return "triangles";
    }
    return "?";
}

const char* color_word(ColorName c) {
    switch (c) {
        case ColorName::red: return "red";
        case ColorName::green: return "green";
        case ColorName::blue: return "blue";
        case ColorName::yellow: return "yellow";
        case ColorName::purple: return "purple";
        case ColorName::white: return "white";
    }
    return "?";
}

const char* size_word(SizeTag s) { return s == SizeTag::small ? "small" : "large"; }

const char* background_word(BackgroundColor b) { return b == BackgroundColor::black ? "black" : "gray"; }

std::string cell_phrase(int cell) {
    switch (cell) {
        case 0: return "top left";
        case 1: return "top right";
        case 2: return "bottom left";
        case 3: return "bottom right";
    }
    throw std::out_of_range("cell_phrase: cell " + std::to_string(cell));
}

ShapeKind parse_shape(const std::string& w) {
    for (ShapeKind s : {ShapeKind::circle, ShapeKind::square, ShapeKind::triangle}) {
        if (w == shape_word(s) || w == shape_plural(s)) return s;
    }
    throw std::invalid_argument("not a shape word: '" + w + "'");
}

ColorName parse_color(const std::string& w) {
    for (ColorName c : {ColorName::red, ColorName::green, ColorName::blue, ColorName::yellow, ColorName::purple,
                        ColorName::white}) {
        if (w == color_word(c)) return c;
    }
    throw std::invalid_argument("not a color word: '" + w + "'");
}

SizeTag parse_size(const std::string& w) {
    if (w == "small") return SizeTag::small;
    if (w == "large") return SizeTag::large;
    throw std::invalid_argument("not a size word: '" + w + "'");
}

BackgroundColor parse_background(const std::string& w) {
    if (w == "black") return BackgroundColor::black;
    if (w == "gray") return BackgroundColor::gray;
    throw std::invalid_argument("not a background word: '" + w + "'");
}

int parse_cell(const std::string& two_words) {
    for (int c = 0; c < kCellCount; ++c) {
        if (two_words == cell_phrase(c)) return c;
    }
    throw std::invalid_argument("not a cell phrase: '" + two_words + "'");
}

Rgb color_rgb(ColorName c) {
    switch (c) {
        case ColorName::red: return {1, -1, -1};
        case ColorName::green: return {-1, 1, -1};
        case ColorName::blue: return {-1, -1, 1};
        case ColorName::yellow: return {1, 1, -1};
        case ColorName::purple: return {1, -1, 1};
        case ColorName::white: return {1, 1, 1};
    }
    return {0, 0, 0};
}

Rgb background_rgb(BackgroundColor b) { return b == BackgroundColor::black ? Rgb{-1, -1, -1} : Rgb{0, 0, 0}; }

int Scene::object_in_cell(int cell) const {
    for (size_t i = 0; i < objects.size(); ++i) {
        if (objects[i].cell == cell) return static_cast<int>(i);
    }
    return -1;
}

int Scene::unique_shape(ShapeKind s) const {
    int found = -1;
    for (size_t i = 0; i < objects.size(); ++i) {
        if (objects[i].shape == s) {
            if (found >= 0) return -1;  // ambiguous
            found = static_cast<int>(i);
        }
    }
    return found;
}

void validate_scene(const Scene& scene) {
    if (scene.objects.empty() || scene.objects.size() > 2) {
        throw std::invalid_argument("scene: must contain one or two objects");
    }
    for (const SceneObject& o : scene.objects) {
        if (o.cell < 0 || o.cell >= kCellCount) throw std::invalid_argument("scene: cell out of range");
    }
    if (scene.objects.size() == 2) {
        if (scene.objects[0].cell == scene.objects[1].cell) {
            throw std::invalid_argument("scene: objects must occupy distinct cells");
        }
        if (scene.objects[0].cell > scene.objects[1].cell) {
            throw std::invalid_argument("scene: objects must be sorted by cell");
        }
    }
}

Scene gen_scene(RandomStream& stream, int n_objects) {
    if (n_objects < 1 || n_objects > 2) throw std::invalid_argument("gen_scene: object count must be 1 or 2");
    Scene scene;
    scene.background = static_cast<BackgroundColor>(stream.below(kBackgroundCount));
    std::vector<int> cells = stream.sample_without_replacement(kCellCount, n_objects);  // sorted
    for (int i = 0; i < n_objects; ++i) {
        SceneObject o;
        o.shape = static_cast<ShapeKind>(stream.below(kShapeCount));
        o.color = static_cast<ColorName>(stream.below(kColorCount));
        o.size = static_cast<SizeTag>(stream.below(kSizeCount));
        o.cell = cells[static_cast<size_t>(i)];
        scene.objects.push_back(o);
    }
    validate_scene(scene);
    return scene;
}

CellRect cell_rect(int height, int width, int cell) {
    const int ch = height / 2, cw = width / 2;
    const int row = cell / 2, col = cell % 2;
    return {row * ch, col * cw, ch, cw};
}

bool shape_covers(ShapeKind shape, SizeTag size, const CellRect& rect, int y, int x) {
    // geometry in pixel-center coordinates within the cell
    const double cy = rect.y0 + (rect.h - 1) / 2.0;
    const double cx = rect.x0 + (rect.w - 1) / 2.0;
    const double unit = std::min(rect.h, rect.w);
    const double r = (size == SizeTag::large ? 0.375 : 0.1875) * unit;
    const double dy = y - cy, dx = x - cx;
    switch (shape) {
        case ShapeKind::circle:
            return dy * dy + dx * dx <= r * r;
        case ShapeKind::square:
            return std::fabs(dy) <= r && std::fabs(dx) <= r;
        case ShapeKind::triangle: {
            // upward triangle: apex at cy - r, base at cy + r
            if (dy < -r || dy > r) return false;
            const double f = (dy + r) / (2.0 * r);  // 0 at apex, 1 at base
            return std::fabs(dx) <= f * r;
        }
    }
    return false;
}

template <typename T>
Tensor<T> rasterize(const Scene& scene, int height, int width) {
    validate_scene(scene);
    if (height < 16 || width < 16) throw std::invalid_argument("rasterize: image must be at least 16x16");
    Tensor<T> img({height, width, 3});
    const Rgb bg = background_rgb(scene.background);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const size_t base = (static_cast<size_t>(y) * width + x) * 3;
            img.data[base + 0] = static_cast<T>(bg.r);
            img.data[base + 1] = static_cast<T>(bg.g);
            img.data[base + 2] = static_cast<T>(bg.b);
        }
    }
    for (const SceneObject& o : scene.objects) {
        const CellRect rect = cell_rect(height, width, o.cell);
        const Rgb col = color_rgb(o.color);
        for (int y = rect.y0; y < rect.y0 + rect.h; ++y) {
            for (int x = rect.x0; x < rect.x0 + rect.w; ++x) {
                if (!shape_covers(o.shape, o.size, rect, y, x)) continue;
                const size_t base = (static_cast<size_t>(y) * width + x) * 3;
                img.data[base + 0] = static_cast<T>(col.r);
                img.data[base + 1] = static_cast<T>(col.g);
                img.data[base + 2] = static_cast<T>(col.b);
            }
        }
    }
    return img;
}

template Tensor<float> rasterize(const Scene&, int, int);
template Tensor<double> rasterize(const Scene&, int, int);

}  // namespace pxf
