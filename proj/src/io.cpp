#include "lingrow/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace lingrow {

namespace {

class PgmReader {
 public:
  explicit PgmReader(const std::string& bytes) : bytes_(bytes) {}

  int next_int() {
    skip_space_and_comments();
    if (pos_ >= bytes_.size() || !std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      throw FormatError("PGM: expected an integer");
    }
    long value = 0;
    while (pos_ < bytes_.size() && std::isdigit(static_cast<unsigned char>(bytes_[pos_]))) {
      value = value * 10 + (bytes_[pos_++] - '0');
      if (value > 1 << 30) throw FormatError("PGM: integer out of range");
    }
    return static_cast<int>(value);
  }

  std::string magic() {
    if (bytes_.size() < 2) throw FormatError("PGM: truncated header");
    pos_ = 2;
    return bytes_.substr(0, 2);
  }

  // Exactly one whitespace byte separates the header from binary data.
  void end_header() {
    if (pos_ >= bytes_.size() || !std::isspace(static_cast<unsigned char>(bytes_[pos_]))) {
      throw FormatError("PGM: missing whitespace after header");
    }
    ++pos_;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }
  unsigned char byte() { return static_cast<unsigned char>(bytes_[pos_++]); }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      const char c = bytes_[pos_];
      if (c == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        ++pos_;
      } else {
        break;
      }
    }
  }

  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

PgmImage parse_pgm(const std::string& bytes) {
  PgmReader reader(bytes);
  const std::string magic = reader.magic();
  if (magic != "P2" && magic != "P5") throw FormatError("PGM: unsupported magic " + magic);
  PgmImage img;
  img.width = reader.next_int();
  img.height = reader.next_int();
  img.maxval = reader.next_int();
  if (img.width < 1 || img.height < 1) throw FormatError("PGM: empty image");
  if (img.maxval < 1 || img.maxval > 65535) throw FormatError("PGM: maxval must lie in [1, 65535]");
  const std::size_t count = static_cast<std::size_t>(img.width) * img.height;
  img.pixels.resize(count);
  if (magic == "P2") {
    for (auto& p : img.pixels) {
      const int v = reader.next_int();
      if (v > img.maxval) throw FormatError("PGM: pixel exceeds maxval");
      p = static_cast<std::uint16_t>(v);
    }
    return img;
  }
  reader.end_header();
  const std::size_t width = img.maxval > 255 ? 2 : 1;
  if (reader.remaining() < count * width) throw FormatError("PGM: truncated pixel data");
  for (auto& p : img.pixels) {
    unsigned v = reader.byte();
    if (width == 2) v = (v << 8) | reader.byte();
    if (v > static_cast<unsigned>(img.maxval)) throw FormatError("PGM: pixel exceeds maxval");
    p = static_cast<std::uint16_t>(v);
  }
  return img;
}

PgmImage read_pgm(const std::filesystem::path& path) { return parse_pgm(read_text(path)); }

std::string encode_pgm(const PgmImage& img, PgmEncoding encoding) {
  std::ostringstream os;
  os << (encoding == PgmEncoding::Ascii ? "P2" : "P5") << '\n'
     << img.width << ' ' << img.height << '\n'
     << img.maxval << '\n';
  if (encoding == PgmEncoding::Ascii) {
    for (int r = 0; r < img.height; ++r) {
      for (int x = 0; x < img.width; ++x) os << (x ? " " : "") << img.at(x, r);
      os << '\n';
    }
    return os.str();
  }
  std::string out = os.str();
  for (auto p : img.pixels) {
    if (img.maxval > 255) out.push_back(static_cast<char>(p >> 8));
    out.push_back(static_cast<char>(p & 0xff));
  }
  return out;
}

void write_pgm(const std::filesystem::path& path, const PgmImage& image, PgmEncoding encoding) {
  write_text(path, encode_pgm(image, encoding));
}

Field field_from_pgm(const PgmImage& img, const Grid2& grid, double lo, double hi) {
  if (img.width != grid.nx || img.height != grid.ny) {
    throw FormatError("PGM size " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                      " does not match the grid");
  }
  Field f(grid, 1);
  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i < grid.nx; ++i) {
      f(i, j) = lo + (hi - lo) * img.at(i, grid.ny - 1 - j) / img.maxval;
    }
  }
  return f;
}

PgmImage pgm_from_field(const Field& field, double lo, double hi, int maxval, int channel) {
  if (!(hi > lo)) throw std::invalid_argument("PGM range needs hi > lo");
  const Grid2& g = field.grid();
  PgmImage img;
  img.width = g.nx;
  img.height = g.ny;
  img.maxval = maxval;
  img.pixels.resize(static_cast<std::size_t>(g.nx) * g.ny);
  for (int j = 0; j < g.ny; ++j) {
    for (int i = 0; i < g.nx; ++i) {
      const double scaled = std::round((field(i, j, channel) - lo) / (hi - lo) * maxval);
      const double clamped = std::min<double>(maxval, std::max(0.0, scaled));
      img.pixels[static_cast<std::size_t>(g.ny - 1 - j) * g.nx + i] = static_cast<std::uint16_t>(clamped);
    }
  }
  return img;
}

Mask mask_from_pgm(const PgmImage& img, const Grid2& grid) {
  if (img.width != grid.nx || img.height != grid.ny) throw FormatError("mask size does not match the grid");
  std::vector<std::uint8_t> member(grid.cells());
  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i < grid.nx; ++i) member[grid.index(i, j)] = img.at(i, grid.ny - 1 - j) != 0;
  }
  return Mask(grid, std::move(member));
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string field_to_csv(const Field& field) {
  const Grid2& g = field.grid();
  std::string out = "x,y,channel,value\n";
  for (int c = 0; c < field.channels(); ++c) {
    for (int j = 0; j < g.ny; ++j) {
      for (int i = 0; i < g.nx; ++i) {
        const Eigen::Vector2d x = g.center(i, j);
        out += format_double(x.x()) + ',' + format_double(x.y()) + ',' + std::to_string(c) + ',' +
               format_double(field(i, j, c)) + '\n';
      }
    }
  }
  return out;
}

Field field_from_csv(const std::string& text, const Grid2& grid, int channels) {
  Field f(grid, channels);
  std::vector<std::uint8_t> seen(static_cast<std::size_t>(grid.cells()) * channels, 0);
  std::istringstream in(text);
  std::string line;
  bool header = true;
  std::size_t filled = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line.rfind("x,", 0) == 0) continue;
    }
    double x, y, value;
    int c;
    char sep1, sep2, sep3;
    std::istringstream row(line);
    if (!(row >> x >> sep1 >> y >> sep2 >> c >> sep3 >> value) || sep1 != ',' || sep2 != ',' || sep3 != ',') {
      throw FormatError("CSV: malformed line '" + line + "'");
    }
    const long i = std::lround((x - grid.origin.x()) / grid.h - 0.5);
    const long j = std::lround((y - grid.origin.y()) / grid.h - 0.5);
    if (i < 0 || i >= grid.nx || j < 0 || j >= grid.ny || c < 0 || c >= channels) {
      throw FormatError("CSV: entry outside the grid: '" + line + "'");
    }
    const std::size_t slot = static_cast<std::size_t>(grid.index(i, j)) * channels + c;
    if (seen[slot]) throw FormatError("CSV: duplicate entry '" + line + "'");
    seen[slot] = 1;
    ++filled;
    f(static_cast<int>(i), static_cast<int>(j), c) = value;
  }
  if (filled != seen.size()) throw FormatError("CSV: missing entries");
  if (!f.all_finite()) throw FormatError("CSV: non-finite values");
  return f;
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

}  // namespace lingrow
