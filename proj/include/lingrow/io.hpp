#pragma once

// PGM (P2 / P5) and CSV import/export of fields and masks.

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "lingrow/grid.hpp"

namespace lingrow {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct PgmImage {
  int width = 0;
  int height = 0;
  int maxval = 255;
  std::vector<std::uint16_t> pixels;  // row-major, first row on top

  std::uint16_t at(int x, int row) const { return pixels[static_cast<std::size_t>(row) * width + x]; }
};

enum class PgmEncoding { Ascii, Binary };

PgmImage parse_pgm(const std::string& bytes);
PgmImage read_pgm(const std::filesystem::path& path);
std::string encode_pgm(const PgmImage& image, PgmEncoding encoding);
void write_pgm(const std::filesystem::path& path, const PgmImage& image, PgmEncoding encoding);

/// Pixel p maps linearly to lo + (hi - lo) p / maxval. Image column x is
/// cell i, image row r is cell j = ny - 1 - r (y grows upwards).
Field field_from_pgm(const PgmImage& image, const Grid2& grid, double lo, double hi);
/// Inverse mapping of one channel, rounded and clamped to [0, maxval].
PgmImage pgm_from_field(const Field& field, double lo, double hi, int maxval = 65535, int channel = 0);
/// Nonzero pixel = cell in the region.
Mask mask_from_pgm(const PgmImage& image, const Grid2& grid);

/// Lines "x,y,channel,value" after a header, cells in storage order.
std::string field_to_csv(const Field& field);
/// Every (cell, channel) must appear exactly once; x, y are cell centres.
Field field_from_csv(const std::string& text, const Grid2& grid, int channels);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

/// printf("%.17g"), locale independent.
std::string format_double(double v);

}  // namespace lingrow
