#pragma once

// Binary PPM (P6) / PGM (P5) image files, 8-bit, written with a fixed header
// so identical tensors produce byte-identical files. Color images use the
// [-1, 1] convention (byte = round((v+1)*127.5)); grayscale maps use [0, 1].

#include <cstdint>
#include <string>

#include "tensor.hpp"

namespace pxf {

// (H, W, 3) in [-1, 1] -> P6
template <typename T>
void write_ppm(const std::string& path, const Tensor<T>& image);

// P6 -> (H, W, 3) in [-1, 1]
template <typename T>
Tensor<T> read_ppm(const std::string& path);

// (H, W) in [0, 1] -> P5
template <typename T>
void write_pgm(const std::string& path, const Tensor<T>& gray);

template <typename T>
Tensor<T> read_pgm(const std::string& path);

uint8_t unit_to_byte(double v01);            // [0,1] -> 0..255
uint8_t signed_to_byte(double v);            // [-1,1] -> 0..255
double byte_to_signed(uint8_t b);            // exact inverse direction of signed_to_byte

}  // namespace pxf
