#pragma once

#include <filesystem>

#include "dnres/tensor.hpp"

namespace dnres {

/// Reads a PGM (P5 binary or P2 ASCII, grayscale) or PPM (P6, RGB) file.
/// Returns a 1 x C x H x W tensor with every sample v mapped to v / maxval.
/// Throws FormatError on an unsupported magic, malformed header or short
/// payload, IoError if the file cannot be opened.
TensorF load_image(const std::filesystem::path& path);
TensorF decode_pnm(const std::string& bytes);

/// Writes plane (0, 0) as 8-bit P5: values are clamped to [0, 1] and
/// rounded to the nearest of 256 levels.
void write_pgm(const std::filesystem::path& path, const TensorF& image);
std::string encode_pgm(const TensorF& image);

/// BT.601 luma of a 3-channel [0,1] image: 0.299 r + 0.587 g + 0.114 b.
template <class T>
Tensor<T> rgb_to_y(const Tensor<T>& rgb);

/// Image as a single grayscale plane: PGM as is, PPM through rgb_to_y.
TensorF load_grayscale(const std::filesystem::path& path);

/// Rounds every value to the nearest 8-bit level after clamping.
TensorF quantize_8bit(const TensorF& image);

}  // namespace dnres
