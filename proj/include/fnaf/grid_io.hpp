#pragma once

#include <filesystem>
#include <string>

#include "fnaf/field.hpp"

namespace fnaf::io {

/// FGRID v1: `<stem>.json` sidecar {format, rows, cols, dtype, byte_order,
/// payload} next to a raw little-endian row-major payload `<stem>.bin`.
/// Real images are stored as "f32", complex grids as "c64" (two f32 per value).
void write_fgrid(const std::filesystem::path& stem, const Image2D& img);
void write_fgrid(const std::filesystem::path& stem, const ComplexGrid& grid);

Image2D read_fgrid_image(const std::filesystem::path& stem);
ComplexGrid read_fgrid_complex(const std::filesystem::path& stem);

/// Reads one f32 sub-rectangle of an FGRID image without loading the whole payload.
Image2D read_fgrid_window(const std::filesystem::path& stem, std::size_t row, std::size_t col, std::size_t height,
                          std::size_t width);

/// 8-bit binary PGM (P5), min-max normalized.
void write_pgm(const std::filesystem::path& path, const Image2D& img);

/// Several images side by side in one PGM, each normalized independently.
void write_pgm_strip(const std::filesystem::path& path, const std::vector<Image2D>& panels);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

} // namespace fnaf::io
