#include "checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace pxf {

using json = nlohmann::ordered_json;

namespace {

constexpr char kMagic[4] = {'P', 'X', 'F', 'U'};
constexpr uint32_t kVersion = 1;
constexpr uint8_t kDtypeF32 = 0;

// little-endian scalar I/O (byte-by-byte so the format is endian-independent)
template <typename U>
void write_le(std::ostream& out, U value) {
    for (size_t i = 0; i < sizeof(U); ++i) out.put(static_cast<char>((value >> (8 * i)) & 0xff));
}

template <typename U>
U read_le(std::istream& in, const std::string& path) {
    U value = 0;
    for (size_t i = 0; i < sizeof(U); ++i) {
        const int c = in.get();
        if (c < 0) throw std::runtime_error(path + ": truncated checkpoint");
        value |= static_cast<U>(static_cast<uint8_t>(c)) << (8 * i);
    }
    return value;
}

void write_string(std::ostream& out, const std::string& s) {
    write_le<uint32_t>(out, static_cast<uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::istream& in, const std::string& path, uint32_t max_len = 1u << 20) {
    const auto len = read_le<uint32_t>(in, path);
    if (len > max_len) throw std::runtime_error(path + ": implausible string length in checkpoint");
    std::string s(len, '\0');
    in.read(s.data(), static_cast<std::streamsize>(len));
    if (static_cast<uint32_t>(in.gcount()) != len) throw std::runtime_error(path + ": truncated checkpoint");
    return s;
}

void write_tensor(std::ostream& out, const std::string& name, const Tensor<float>& t) {
    write_string(out, name);
    out.put(static_cast<char>(kDtypeF32));
    write_le<uint32_t>(out, static_cast<uint32_t>(t.rank()));
    for (int d : t.shape) write_le<uint64_t>(out, static_cast<uint64_t>(d));
    for (float v : t.data) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        write_le<uint32_t>(out, bits);
    }
}

std::pair<std::string, Tensor<float>> read_tensor(std::istream& in, const std::string& path) {
    std::string name = read_string(in, path);
    const int dtype = in.get();
    if (dtype != kDtypeF32) throw std::runtime_error(path + ": unsupported tensor dtype in '" + name + "'");
    const auto rank = read_le<uint32_t>(in, path);
    if (rank > 8) throw std::runtime_error(path + ": implausible tensor rank in '" + name + "'");
    std::vector<int> shape;
    for (uint32_t i = 0; i < rank; ++i) {
        const auto d = read_le<uint64_t>(in, path);
        if (d == 0 || d > (1u << 24)) throw std::runtime_error(path + ": implausible dimension in '" + name + "'");
        shape.push_back(static_cast<int>(d));
    }
    Tensor<float> t(shape);
    for (auto& v : t.data) {
        const auto bits = read_le<uint32_t>(in, path);
        std::memcpy(&v, &bits, 4);
    }
    return {std::move(name), std::move(t)};
}

json config_to_json(const ModelConfig& c) {
    return {{"d_model", c.d_model},       {"n_layers", c.n_layers},   {"n_heads", c.n_heads},
            {"ffn_mult", c.ffn_mult},     {"vocab_size", c.vocab_size}, {"max_seq_len", c.max_seq_len},
            {"image_size", c.image_size}, {"channels", c.channels},   {"patch_size", c.patch_size},
            {"eps_t", c.eps_t}};
}

ModelConfig config_from_json(const json& j) {
    ModelConfig c;
    c.d_model = j.at("d_model").get<int>();
    c.n_layers = j.at("n_layers").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.ffn_mult = j.at("ffn_mult").get<int>();
    c.vocab_size = j.at("vocab_size").get<int>();
    c.max_seq_len = j.at("max_seq_len").get<int>();
    c.image_size = j.at("image_size").get<int>();
    c.channels = j.at("channels").get<int>();
    c.patch_size = j.at("patch_size").get<int>();
    c.eps_t = j.at("eps_t").get<double>();
    return c;
}

void check_against_schema(const ModelConfig& cfg, const NamedTensors<float>& tensors, const std::string& path,
                          const char* what) {
    const auto schema = param_schema(cfg);
    if (tensors.size() != schema.size()) {
        throw std::runtime_error(path + ": " + what + " holds " + std::to_string(tensors.size()) +
                                 " tensors, config implies " + std::to_string(schema.size()));
    }
    for (size_t i = 0; i < schema.size(); ++i) {
        if (tensors.names[i] != schema[i].first) {
            throw std::runtime_error(path + ": " + what + " tensor '" + tensors.names[i] + "' where '" +
                                     schema[i].first + "' was expected");
        }
        if (tensors.values[i].shape != schema[i].second) {
            throw std::runtime_error(path + ": tensor '" + tensors.names[i] + "' has shape " +
                                     shape_str(tensors.values[i].shape) + ", config implies " +
                                     shape_str(schema[i].second));
        }
        if (!tensors.values[i].all_finite()) {
            throw std::runtime_error(path + ": tensor '" + tensors.names[i] + "' contains non-finite values");
        }
    }
}

}  // namespace

Checkpoint fresh_checkpoint(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    Checkpoint ckpt;
    ckpt.config = cfg;
    RandomStream init_stream = RandomStream(seed).split(0);
    ckpt.params = init_params<float>(cfg, init_stream);
    ckpt.rng_digest = init_stream.state_digest();
    return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out.write(kMagic, 4);
    write_le<uint32_t>(out, kVersion);
    json meta;
    meta["model"] = config_to_json(ckpt.config);
    meta["step"] = ckpt.step;
    meta["rng_digest"] = ckpt.rng_digest;
    meta["has_optimizer"] = ckpt.has_optimizer;
    write_string(out, meta.dump());
    const uint32_t per_param = ckpt.has_optimizer ? 3 : 1;
    write_le<uint32_t>(out, static_cast<uint32_t>(ckpt.params.size()) * per_param);
    for (size_t i = 0; i < ckpt.params.size(); ++i) {
        write_tensor(out, ckpt.params.names[i], ckpt.params.values[i]);
        if (ckpt.has_optimizer) {
            write_tensor(out, "opt_m." + ckpt.params.names[i], ckpt.opt_m.values[i]);
            write_tensor(out, "opt_v." + ckpt.params.names[i], ckpt.opt_v.values[i]);
        }
    }
    if (!out) throw std::runtime_error(path + ": write failed");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path + ": cannot open");
    char magic[4] = {};
    in.read(magic, 4);
    if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0) {
        throw std::runtime_error(path + ": not a checkpoint file (bad magic)");
    }
    const auto version = read_le<uint32_t>(in, path);
    if (version != kVersion) {
        throw std::runtime_error(path + ": unsupported checkpoint version " + std::to_string(version));
    }
    json meta;
    try {
        meta = json::parse(read_string(in, path));
    } catch (const std::exception& e) {
        throw std::runtime_error(path + ": bad metadata block: " + e.what());
    }
    Checkpoint ckpt;
    ckpt.config = config_from_json(meta.at("model"));
    ckpt.config.validate();
    ckpt.step = meta.at("step").get<int64_t>();
    ckpt.rng_digest = meta.at("rng_digest").get<uint64_t>();
    ckpt.has_optimizer = meta.at("has_optimizer").get<bool>();
    const auto count = read_le<uint32_t>(in, path);
    for (uint32_t i = 0; i < count; ++i) {
        auto [name, tensor] = read_tensor(in, path);
        if (name.rfind("opt_m.", 0) == 0) {
            ckpt.opt_m.add(name.substr(6), std::move(tensor));
        } else if (name.rfind("opt_v.", 0) == 0) {
            ckpt.opt_v.add(name.substr(6), std::move(tensor));
        } else {
            ckpt.params.add(std::move(name), std::move(tensor));
        }
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw std::runtime_error(path + ": trailing bytes after checkpoint payload");
    }
    check_against_schema(ckpt.config, ckpt.params, path, "parameter set");
    if (ckpt.has_optimizer) {
        check_against_schema(ckpt.config, ckpt.opt_m, path, "optimizer first moment");
        check_against_schema(ckpt.config, ckpt.opt_v, path, "optimizer second moment");
    } else if (ckpt.opt_m.size() != 0 || ckpt.opt_v.size() != 0) {
        throw std::runtime_error(path + ": optimizer tensors present but not declared");
    }
    return ckpt;
}

}  // namespace pxf
