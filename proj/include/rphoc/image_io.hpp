#pragma once

#include <filesystem>

#include "rphoc/imaging.hpp"

namespace rphoc {

// Reads binary PGM (P5, maxval <= 255) or PNG; colour PNGs are converted to gray.
GrayImage load_image(const std::filesystem::path& path);
GrayImage load_pgm(const std::filesystem::path& path);
GrayImage load_png(const std::filesystem::path& path);

void save_pgm(const GrayImage& img, const std::filesystem::path& path);

}  // namespace rphoc
