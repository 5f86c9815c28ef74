#include "grammar.hpp"

#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace pxf {

namespace {

const std::vector<std::string>& word_list() {
    static const std::vector<std::string> words = {
        "<pad>", "<bos>", "<eos>", "<sep>",
        // glue + question words
        "a", "the", "in", "on", "and", "is", "are", "what", "how", "many", "objects", "color", "shape", "of", "there",
        "where", "background",
        // shapes
        "circle", "square", "triangle", "circles", "squares", "triangles",
        // colors
        "red", "green", "blue", "yellow", "purple", "white",
        // sizes
        "small", "large",
        // cells
        "top", "bottom", "left", "right",
        // backgrounds
        "black", "gray",
        // counts
        "zero", "one", "two",
        // edit verbs
        "make", "move", "remove", "add", "to"};
    return words;
}

}  // namespace

Vocab::Vocab() : words_(word_list()) {}

int Vocab::id(const std::string& word) const {
    for (size_t i = 0; i < words_.size(); ++i) {
        if (words_[i] == word) return static_cast<int>(i);
    }
    throw std::invalid_argument("out-of-vocab word: '" + word + "'");
}

const std::string& Vocab::word(int id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("vocab: id " + std::to_string(id) + " out of range");
    return words_[static_cast<size_t>(id)];
}

bool Vocab::contains(const std::string& word) const {
    for (const auto& w : words_) {
        if (w == word) return true;
    }
    return false;
}

const Vocab& vocab() {
    static const Vocab v;
    return v;
}

std::vector<std::string> split_words(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream is(text);
    std::string w;
    while (is >> w) out.push_back(w);
    return out;
}

std::string join_words(const std::vector<std::string>& words) {
    std::string out;
    for (size_t i = 0; i < words.size(); ++i) {
        if (i) out += ' ';
        out += words[i];
    }
    return out;
}

std::vector<int> tokenize(const std::string& text) {
    const Vocab& v = vocab();
    std::vector<int> ids{v.bos()};
    for (const std::string& w : split_words(text)) ids.push_back(v.id(w));
    ids.push_back(v.eos());
    return ids;
}

std::vector<int> tokenize_words(const std::string& text) {
    const Vocab& v = vocab();
    std::vector<int> ids;
    for (const std::string& w : split_words(text)) ids.push_back(v.id(w));
    return ids;
}

std::string detokenize(const std::vector<int>& ids) {
    const Vocab& v = vocab();
    std::vector<std::string> words;
    for (int id : ids) {
        if (id == v.pad() || id == v.bos() || id == v.eos() || id == v.sep()) continue;
        words.push_back(v.word(id));
    }
    return join_words(words);
}

// ---------------------------------------------------------------------------
// captions
// ---------------------------------------------------------------------------

namespace {

std::string object_phrase(const SceneObject& o) {
    return std::string("a ") + size_word(o.size) + " " + color_word(o.color) + " " + shape_word(o.shape) +
           " in the " + cell_phrase(o.cell);
}

}  // namespace

std::string caption(const Scene& scene) {
    validate_scene(scene);
    std::string text = object_phrase(scene.objects[0]);
    if (scene.objects.size() == 2) text += " and " + object_phrase(scene.objects[1]);
    text += std::string(" on ") + background_word(scene.background);
    return text;
}

namespace {

// token cursor with one-word lookahead for the tiny recursive parsers
struct Cursor {
    const std::vector<std::string>& w;
    size_t i = 0;

    bool done() const { return i >= w.size(); }
    const std::string& peek() const {
        if (done()) throw std::invalid_argument("parse: unexpected end of text");
        return w[i];
    }
    std::string take() {
        std::string out = peek();
        ++i;
        return out;
    }
    void expect(const std::string& lit) {
        if (take() != lit) throw std::invalid_argument("parse: expected '" + lit + "'");
    }
};

int parse_cell_words(Cursor& c) {
    const std::string a = c.take();
    const std::string b = c.take();
    return parse_cell(a + " " + b);
}

SceneObject parse_object_phrase(Cursor& c) {
    c.expect("a");
    SceneObject o;
    o.size = parse_size(c.take());
    o.color = parse_color(c.take());
    o.shape = parse_shape(c.take());
    c.expect("in");
    c.expect("the");
    o.cell = parse_cell_words(c);
    return o;
}

}  // namespace

Scene parse_caption(const std::string& text) {
    const std::vector<std::string> words = split_words(text);
    Cursor c{words};
    Scene scene;
    scene.objects.push_back(parse_object_phrase(c));
    if (c.peek() == "and") {
        c.take();
        scene.objects.push_back(parse_object_phrase(c));
    }
    c.expect("on");
    scene.background = parse_background(c.take());
    if (!c.done()) throw std::invalid_argument("parse: trailing words after caption");
    validate_scene(scene);
    return scene;
}

// ---------------------------------------------------------------------------
// question/answer templates
// ---------------------------------------------------------------------------

namespace {

const char* count_word(int n) {
    switch (n) {
        case 0: return "zero";
        case 1: return "one";
        case 2: return "two";
    }
    throw std::out_of_range("count_word: " + std::to_string(n));
}

constexpr ShapeKind kShapes[] = {ShapeKind::circle, ShapeKind::square, ShapeKind::triangle};

}  // namespace

QaPair qa_pair(const Scene& scene, RandomStream& stream) {
    validate_scene(scene);
    std::vector<QaPair> candidates;
    for (ShapeKind s : kShapes) {
        const int i = scene.unique_shape(s);
        if (i >= 0) {
            candidates.push_back({std::string("what color is the ") + shape_word(s),
                                  color_word(scene.objects[static_cast<size_t>(i)].color)});
        }
    }
    for (const SceneObject& o : scene.objects) {
        candidates.push_back({"what shape is in the " + cell_phrase(o.cell), shape_word(o.shape)});
    }
    for (ShapeKind s : kShapes) {
        int n = 0;
        for (const SceneObject& o : scene.objects) n += o.shape == s ? 1 : 0;
        candidates.push_back({std::string("how many ") + shape_plural(s) + " are there", count_word(n)});
    }
    candidates.push_back({"how many objects are there", count_word(static_cast<int>(scene.objects.size()))});
    candidates.push_back({"what color is the background", background_word(scene.background)});
    return candidates[static_cast<size_t>(stream.below(candidates.size()))];
}

std::string answer_question(const Scene& scene, const std::string& question) {
    validate_scene(scene);
    const std::vector<std::string> w = split_words(question);
    Cursor c{w};
    const std::string first = c.take();
    if (first == "what") {
        const std::string kind = c.take();
        if (kind == "color") {
            c.expect("is");
            c.expect("the");
            const std::string subject = c.take();
            if (subject == "background") return background_word(scene.background);
            const int i = scene.unique_shape(parse_shape(subject));
            if (i < 0) throw std::invalid_argument("question has no unique referent: '" + question + "'");
            return color_word(scene.objects[static_cast<size_t>(i)].color);
        }
        if (kind == "shape") {
            c.expect("is");
            c.expect("in");
            c.expect("the");
            const int cell = parse_cell_words(c);
            const int i = scene.object_in_cell(cell);
            if (i < 0) throw std::invalid_argument("question about an empty cell: '" + question + "'");
            return shape_word(scene.objects[static_cast<size_t>(i)].shape);
        }
        throw std::invalid_argument("unrecognized question: '" + question + "'");
    }
    if (first == "how") {
        c.expect("many");
        const std::string subject = c.take();
        c.expect("are");
        c.expect("there");
        if (subject == "objects") return count_word(static_cast<int>(scene.objects.size()));
        const ShapeKind s = parse_shape(subject);
        int n = 0;
        for (const SceneObject& o : scene.objects) n += o.shape == s ? 1 : 0;
        return count_word(n);
    }
    throw std::invalid_argument("unrecognized question: '" + question + "'");
}

// ---------------------------------------------------------------------------
// edits
// ---------------------------------------------------------------------------

namespace {

// "the {shape}" when the shape is unique in the scene, otherwise
// "the {shape} in the {cell}"
std::string object_reference(const Scene& scene, const SceneObject& o) {
    std::string ref = std::string("the ") + shape_word(o.shape);
    if (scene.unique_shape(o.shape) < 0) ref += " in the " + cell_phrase(o.cell);
    return ref;
}

std::vector<int> empty_cells(const Scene& scene) {
    std::vector<int> cells;
    for (int c = 0; c < kCellCount; ++c) {
        if (scene.object_in_cell(c) < 0) cells.push_back(c);
    }
    return cells;
}

void sort_objects(Scene& scene) {
    if (scene.objects.size() == 2 && scene.objects[0].cell > scene.objects[1].cell) {
        std::swap(scene.objects[0], scene.objects[1]);
    }
}

// resolves "the {shape} [in the {cell}]" against a scene
int parse_reference(const Scene& scene, Cursor& c) {
    c.expect("the");
    const ShapeKind shape = parse_shape(c.take());
    if (!c.done() && c.peek() == "in") {
        c.take();
        c.expect("the");
        const int cell = parse_cell_words(c);
        const int i = scene.object_in_cell(cell);
        if (i < 0 || scene.objects[static_cast<size_t>(i)].shape != shape) {
            throw std::invalid_argument("instruction refers to an absent object");
        }
        return i;
    }
    const int i = scene.unique_shape(shape);
    if (i < 0) throw std::invalid_argument("instruction reference is ambiguous or absent");
    return i;
}

}  // namespace

Scene apply_instruction(const Scene& scene, const std::string& instruction) {
    validate_scene(scene);
    const std::vector<std::string> w = split_words(instruction);
    Cursor c{w};
    Scene out = scene;
    const std::string verb = c.take();
    if (verb == "make") {
        const int i = parse_reference(out, c);
        const ColorName color = parse_color(c.take());
        if (out.objects[static_cast<size_t>(i)].color == color) {
            throw std::invalid_argument("recolor instruction changes nothing");
        }
        out.objects[static_cast<size_t>(i)].color = color;
    } else if (verb == "move") {
        const int i = parse_reference(out, c);
        c.expect("to");
        c.expect("the");
        const int cell = parse_cell_words(c);
        if (out.object_in_cell(cell) >= 0) throw std::invalid_argument("move target cell is occupied");
        out.objects[static_cast<size_t>(i)].cell = cell;
    } else if (verb == "remove") {
        const int i = parse_reference(out, c);
        if (out.objects.size() < 2) throw std::invalid_argument("cannot remove the only object");
        out.objects.erase(out.objects.begin() + i);
    } else if (verb == "add") {
        c.expect("a");
        SceneObject o;
        o.size = parse_size(c.take());
        o.color = parse_color(c.take());
        o.shape = parse_shape(c.take());
        c.expect("in");
        c.expect("the");
        o.cell = parse_cell_words(c);
        if (out.object_in_cell(o.cell) >= 0) throw std::invalid_argument("add target cell is occupied");
        if (out.objects.size() >= 2) throw std::invalid_argument("scene already has two objects");
        out.objects.push_back(o);
    } else {
        throw std::invalid_argument("unrecognized instruction: '" + instruction + "'");
    }
    if (!c.done()) throw std::invalid_argument("trailing words in instruction");
    sort_objects(out);
    validate_scene(out);
    return out;
}

EditSpec edit_pair(const Scene& scene, RandomStream& stream) {
    validate_scene(scene);
    enum Kind { recolor, move_obj, remove_obj, add_obj };
    const std::vector<Kind> kinds = scene.objects.size() == 1 ? std::vector<Kind>{recolor, move_obj, add_obj}
                                                              : std::vector<Kind>{recolor, move_obj, remove_obj};
    const Kind kind = kinds[static_cast<size_t>(stream.below(kinds.size()))];

    EditSpec spec;
    spec.source = scene;
    const int oi = static_cast<int>(stream.below(scene.objects.size()));
    const SceneObject& obj = scene.objects[static_cast<size_t>(oi)];
    switch (kind) {
        case recolor: {
            ColorName next = static_cast<ColorName>(stream.below(kColorCount));
            while (next == obj.color) next = static_cast<ColorName>(stream.below(kColorCount));
            spec.instruction = "make " + object_reference(scene, obj) + " " + color_word(next);
            spec.touched_cells = {obj.cell};
            break;
        }
        case move_obj: {
            const std::vector<int> empties = empty_cells(scene);
            const int cell = empties[static_cast<size_t>(stream.below(empties.size()))];
            spec.instruction = "move " + object_reference(scene, obj) + " to the " + cell_phrase(cell);
            spec.touched_cells = {obj.cell, cell};
            break;
        }
        case remove_obj:
            spec.instruction = "remove " + object_reference(scene, obj);
            spec.touched_cells = {obj.cell};
            break;
        case add_obj: {
            const std::vector<int> empties = empty_cells(scene);
            SceneObject o;
            o.size = static_cast<SizeTag>(stream.below(kSizeCount));
            o.color = static_cast<ColorName>(stream.below(kColorCount));
            o.shape = static_cast<ShapeKind>(stream.below(kShapeCount));
            o.cell = empties[static_cast<size_t>(stream.below(empties.size()))];
            spec.instruction = "add " + object_phrase(o);
            spec.touched_cells = {o.cell};
            break;
        }
    }
    spec.target = apply_instruction(scene, spec.instruction);
    return spec;
}

}  // namespace pxf
