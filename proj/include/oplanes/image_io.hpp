#pragma once

#include <filesystem>

#include "oplanes/image.hpp"

namespace oplanes {

// PFM, single channel ("Pf"), little-endian (negative scale), rows stored
// bottom to top as the format prescribes.
void save_pfm(const DepthMap& depth, const std::filesystem::path& path);
DepthMap load_pfm(const std::filesystem::path& path);

// Raw little-endian float32 with a one-line text header "DPT <width> <height>".
void save_dpt(const DepthMap& depth, const std::filesystem::path& path);
DepthMap load_dpt(const std::filesystem::path& path);

// Picks the depth reader from the file's leading bytes.
DepthMap load_depth(const std::filesystem::path& path);

// PGM P5; 255 = foreground. Loading maps any nonzero byte to 1.
void save_mask_pgm(const Mask& mask, const std::filesystem::path& path);
Mask load_mask_pgm(const std::filesystem::path& path);

// 8-bit RGB PNG; values clamped to [0, 1] and rounded.
void save_png(const RgbImage& rgb, const std::filesystem::path& path);
RgbImage load_png(const std::filesystem::path& path);

}  // namespace oplanes
