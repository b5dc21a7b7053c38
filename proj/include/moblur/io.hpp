#pragma once

#include "moblur/core.hpp"

#include <string>

namespace moblur {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// 8-bit gray/RGB PNG, values normalized to [0,1]. 16-bit files are rejected.
Image read_png(const std::string& path);
void write_png(const std::string& path, const Image& img);  // clamps to [0,1]
void write_png(const std::string& path, const Planed& gray);

// Portable float map, little-endian (negative scale header).
// 1 plane -> "Pf", 3 planes -> "PF".
void write_pfm(const std::string& path, const Image& img);
Image read_pfm(const std::string& path);

}  // namespace moblur
