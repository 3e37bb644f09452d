#pragma once

#include "msatl/dataset.hpp"

#include <filesystem>

namespace msatl {

// Single-file image I/O (PNG/JPEG); images are RGB in memory.
ImageU8 read_image(const std::filesystem::path& file);
void write_image(const ImageU8& img, const std::filesystem::path& file);

}  // namespace msatl
