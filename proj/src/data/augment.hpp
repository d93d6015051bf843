#pragma once

#include <vector>

#include "data/dataset.hpp"

namespace agcu {

/// Produces the twelve augmentation variants of one pair, in this order:
///
///   rot90 rot180 rot270      counter-clockwise rotations
///   hflip vflip               left-right / top-bottom mirror
///   scale090 scale110 scale115 scale120
///                             rescale by the factor, then zero-pad (< 1)
///                             or center-crop (> 1) back to the input size
///   blur                      5x5 Gaussian, sigma 1.0, image only
///   brighten                  intensity x1.5, clamped to [0,1], image only
///   darken                    contrast 0.5, contraction toward the image
///                             mean, image only
///
/// Geometric variants apply the same transform to image and mask (nearest
/// resampling keeps the mask binary); photometric variants copy the mask
/// untouched. Variant ids are the input id plus "." plus the names above.
std::vector<SamplePair> augment_twelve(const SamplePair& s);

/// Rotates a [C,H,W] tensor 90 degrees counter-clockwise: the output is
/// [C,W,H] with out[r][c] = in[H-1-c][r].
Tensor<float> rot90_ccw(const Tensor<float>& in);

/// 5x5 Gaussian blur, sigma 1.0, applied per channel of a [C,H,W] tensor
/// with clamp-to-edge borders.
Tensor<float> gaussian_blur5(const Tensor<float>& in);

}  // namespace agcu
