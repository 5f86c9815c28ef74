#include "image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace pxf {

uint8_t unit_to_byte(double v01) {
    const long b = std::lround(std::clamp(v01, 0.0, 1.0) * 255.0);
    return static_cast<uint8_t>(std::clamp(b, 0L, 255L));
}

uint8_t signed_to_byte(double v) {
    const long b = std::lround((std::clamp(v, -1.0, 1.0) + 1.0) * 127.5);
    return static_cast<uint8_t>(std::clamp(b, 0L, 255L));
}

double byte_to_signed(uint8_t b) { return b / 127.5 - 1.0; }

namespace {

struct PnmHeader {
    int width = 0;
    int height = 0;
};

// reads "Pk\n<w> <h>\n255\n" allowing any whitespace layout
PnmHeader read_header(std::ifstream& in, const std::string& path, const char* magic) {
    std::string tag;
    in >> tag;
    if (tag != magic) {
        throw std::runtime_error(path + ": expected " + magic + " header, found '" + tag + "'");
    }
    PnmHeader h;
    int maxval = 0;
    in >> h.width >> h.height >> maxval;
    if (!in || h.width <= 0 || h.height <= 0) throw std::runtime_error(path + ": malformed image dimensions");
    if (maxval != 255) throw std::runtime_error(path + ": only 8-bit images are supported");
    in.get();  // single whitespace byte before pixel data
    return h;
}

std::vector<uint8_t> read_payload(std::ifstream& in, const std::string& path, size_t count) {
    std::vector<uint8_t> bytes(count);
    in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(count));
    if (static_cast<size_t>(in.gcount()) != count) throw std::runtime_error(path + ": truncated pixel data");
    return bytes;
}

}  // namespace

template <typename T>
void write_ppm(const std::string& path, const Tensor<T>& image) {
    if (image.rank() != 3 || image.shape[2] != 3) {
        throw std::invalid_argument("write_ppm: need an (H, W, 3) tensor, got " + shape_str(image.shape));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << "P6\n" << image.shape[1] << " " << image.shape[0] << "\n255\n";
    std::vector<uint8_t> bytes(static_cast<size_t>(image.numel()));
    for (int64_t i = 0; i < image.numel(); ++i) {
        bytes[static_cast<size_t>(i)] = signed_to_byte(static_cast<double>(image.data[static_cast<size_t>(i)]));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error(path + ": write failed");
}

template <typename T>
Tensor<T> read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path + ": cannot open");
    const PnmHeader h = read_header(in, path, "P6");
    const auto bytes = read_payload(in, path, static_cast<size_t>(h.width) * h.height * 3);
    Tensor<T> image({h.height, h.width, 3});
    for (size_t i = 0; i < bytes.size(); ++i) image.data[i] = static_cast<T>(byte_to_signed(bytes[i]));
    return image;
}

template <typename T>
void write_pgm(const std::string& path, const Tensor<T>& gray) {
    if (gray.rank() != 2) {
        throw std::invalid_argument("write_pgm: need an (H, W) tensor, got " + shape_str(gray.shape));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path + ": cannot open for writing");
    out << "P5\n" << gray.shape[1] << " " << gray.shape[0] << "\n255\n";
    std::vector<uint8_t> bytes(static_cast<size_t>(gray.numel()));
    for (int64_t i = 0; i < gray.numel(); ++i) {
        bytes[static_cast<size_t>(i)] = unit_to_byte(static_cast<double>(gray.data[static_cast<size_t>(i)]));
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error(path + ": write failed");
}

template <typename T>
Tensor<T> read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error(path + ": cannot open");
    const PnmHeader h = read_header(in, path, "P5");
    const auto bytes = read_payload(in, path, static_cast<size_t>(h.width) * h.height);
    Tensor<T> gray({h.height, h.width});
    for (size_t i = 0; i < bytes.size(); ++i) gray.data[i] = static_cast<T>(bytes[i] / 255.0);
    return gray;
}

template void write_ppm(const std::string&, const Tensor<float>&);
template void write_ppm(const std::string&, const Tensor<double>&);
template Tensor<float> read_ppm(const std::string&);
template Tensor<double> read_ppm(const std::string&);
template void write_pgm(const std::string&, const Tensor<float>&);
template void write_pgm(const std::string&, const Tensor<double>&);
template Tensor<float> read_pgm(const std::string&);
template Tensor<double> read_pgm(const std::string&);

}  // namespace pxf
