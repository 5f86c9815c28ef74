#pragma once

// Schema-driven configuration: sectioned key=value files, dotted-path
// overrides, strict unknown-key rejection, and deterministic rendering for
// both --help (keys with defaults and descriptions) and the resolved-config
// snapshot written beside run outputs.

#include <cstdint>
#include <string>
#include <vector>

#include "dataset.hpp"
#include "model.hpp"
#include "sampler.hpp"
#include "train.hpp"

namespace pxf {

enum class ConfKind { integer, real, boolean, text };

struct ConfKeySpec {
    std::string section;
    std::string key;
    ConfKind kind;
    std::string default_value;  // canonical text
    std::string description;
};

class Config {
public:
    explicit Config(std::vector<ConfKeySpec> schema);

    // Sets a value, validating the key exists and the text parses for its
    // kind. `dotted` is "section.key".
    void set(const std::string& dotted, const std::string& value);

    // Changes the effective default (used by stage presets) without marking
    // the key user-set.
    void set_default(const std::string& dotted, const std::string& value);

    // Parses a sectioned key=value file; '#' starts a comment. Unknown
    // sections or keys are errors.
    void load_file(const std::string& path);

    int64_t get_int(const std::string& dotted) const;
    double get_real(const std::string& dotted) const;
    bool get_bool(const std::string& dotted) const;
    const std::string& get_text(const std::string& dotted) const;
    bool explicitly_set(const std::string& dotted) const;

    // Current values in file syntax, sections and keys in schema order.
    std::string render() const;

    // One line per key: dotted name, default, description.
    std::string help() const;

    const std::vector<ConfKeySpec>& schema() const { return schema_; }

private:
    int find(const std::string& dotted) const;  // -1 when absent
    int require(const std::string& dotted) const;

    std::vector<ConfKeySpec> schema_;
    std::vector<std::string> values_;
    std::vector<bool> user_set_;
};

// The full key set with struct-matching defaults.
Config default_config();

// Struct builders; each validates the result.
ModelConfig model_from(const Config& conf);
TrainConfig train_from(const Config& conf, TrainStage stage, uint64_t seed);
SampleRunConfig sample_from(const Config& conf, uint64_t seed);
SceneStore store_from(const Config& conf);

}  // namespace pxf
