#pragma once

// PFM (float depth / color) and binary PPM (8-bit RGB) readers and writers.
//
// PFM: "Pf" (1 channel) or "PF" (3 channels, interleaved), then "W H", then
// the scale line; a negative scale marks little-endian data. The writer always
// emits "-1.0" and little-endian float32 rows from the bottom image row up.
// PPM: "P6\nW H\n255\n" then interleaved bytes; floor(v * 255 + 0.5) on write,
// byte / maxval on read.

#include <string>

#include "ldc/tensor.hpp"

namespace ldc {

/// `t` must be 1 x C x H x W with C in {1, 3}.
void write_pfm(const std::string& path, const Tensor& t);
std::string encode_pfm(const Tensor& t);
/// Returns 1 x C x H x W.
Tensor read_pfm(const std::string& path);
Tensor decode_pfm(const std::string& bytes);

/// `rgb` must be 1 x 3 x H x W; values are clamped to [0, 1].
void write_ppm(const std::string& path, const Tensor& rgb);
std::string encode_ppm(const Tensor& rgb);
Tensor read_ppm(const std::string& path);
Tensor decode_ppm(const std::string& bytes);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace ldc
