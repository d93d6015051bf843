#pragma once

#include <string>

#include "core/tensor.hpp"

namespace agcu {

/// Netpbm codecs, the only image formats handled natively. Binary and ASCII
/// variants are both read (P6/P3 color, P5/P2 grayscale); writes are binary
/// with maxval 255.

/// Reads a PPM or PGM file into [3,H,W] reals in [0,1]; grayscale files are
/// replicated across the three channels.
Tensor<float> read_image(const std::string& path);

/// Reads a PPM or PGM file as one grayscale channel [H,W] in [0,1]; color
/// files are averaged across channels.
Tensor<float> read_gray(const std::string& path);

/// Writes [3,H,W] reals in [0,1] as binary PPM.
void write_ppm(const std::string& path, const Tensor<float>& image);

/// Writes [H,W] reals in [0,1] as binary PGM.
void write_pgm(const std::string& path, const Tensor<float>& gray);

}  // namespace agcu
