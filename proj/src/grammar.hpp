#pragma once

// Closed word-level language over the scene world: canonical captions with an
// exact inverse parser, question/answer templates whose answers are single
// words, atomic edit instructions, and the tokenizer shared with the model.

#include <string>
#include <vector>

#include "rng.hpp"
#include "scene.hpp"

namespace pxf {

class Vocab {
public:
    Vocab();

    int size() const { return static_cast<int>(words_.size()); }
    int id(const std::string& word) const;  // throws on out-of-vocab
    const std::string& word(int id) const;
    bool contains(const std::string& word) const;

    int pad() const { return 0; }
    int bos() const { return 1; }
    int eos() const { return 2; }
    int sep() const { return 3; }

private:
    std::vector<std::string> words_;
};

const Vocab& vocab();

// Whitespace word split / join.
std::vector<std::string> split_words(const std::string& text);
std::string join_words(const std::vector<std::string>& words);

// [BOS, word ids..., EOS]; empty text gives [BOS, EOS].
std::vector<int> tokenize(const std::string& text);

// Word ids only, no sentence framing.
std::vector<int> tokenize_words(const std::string& text);

// Inverse of tokenize on grammar output: special tokens are dropped.
std::string detokenize(const std::vector<int>& ids);

// Canonical caption, e.g. "a large red circle in the top left on black";
// two-object scenes join both descriptions with "and". One caption per scene.
std::string caption(const Scene& scene);

// Exact inverse of caption(); throws on text outside the caption language.
Scene parse_caption(const std::string& text);

struct QaPair {
    std::string question;
    std::string answer;  // single vocab word
};

// One question drawn uniformly from the applicable templates: color of a
// uniquely-shaped object, shape at an occupied cell, per-shape count,
// object count, background color.
QaPair qa_pair(const Scene& scene, RandomStream& stream);

// Oracle answer for any question the templates can produce.
std::string answer_question(const Scene& scene, const std::string& question);

struct EditSpec {
    Scene source;
    Scene target;
    std::string instruction;
    std::vector<int> touched_cells;  // cells whose pixels may change
};

// One atomic edit drawn uniformly from the applicable kinds: recolor a
// uniquely-shaped object, move it to an empty cell, remove it (two-object
// scenes only), or add an object to an empty cell (one-object scenes only).
// The target always differs from the source.
EditSpec edit_pair(const Scene& scene, RandomStream& stream);

// Applies an instruction produced by edit_pair to a scene (the oracle used
// to check model edits); throws on unparseable instructions.
Scene apply_instruction(const Scene& scene, const std::string& instruction);

}  // namespace pxf
