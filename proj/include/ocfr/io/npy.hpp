#pragma once

// Minimal NumPy .npy (format 1.0) writer/reader for 2D little-endian float64 arrays.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <regex>
#include <string>

#include "ocfr/error.hpp"
#include "ocfr/grid.hpp"

namespace ocfr::io {

static_assert(std::endian::native == std::endian::little, "npy writer assumes a little-endian host");

inline void write_npy(const std::filesystem::path& path, const Grid<double>& a) {
  std::string header = "{'descr': '<f8', 'fortran_order': False, 'shape': (" + std::to_string(a.rows()) + ", " +
                       std::to_string(a.cols()) + "), }";
  const std::size_t preamble = 10;
  const std::size_t total = ((preamble + header.size() + 1 + 63) / 64) * 64;
  header.append(total - preamble - header.size() - 1, ' ');
  header.push_back('\n');
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError(path.string() + ": cannot open for writing");
  const char magic[] = {'\x93', 'N', 'U', 'M', 'P', 'Y', 1, 0};
  f.write(magic, sizeof magic);
  const auto len = static_cast<std::uint16_t>(header.size());
  f.put(static_cast<char>(len & 0xFF));
  f.put(static_cast<char>(len >> 8));
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  f.write(reinterpret_cast<const char*>(a.data()), static_cast<std::streamsize>(a.size() * sizeof(double)));
  if (!f) throw IoError(path.string() + ": write failed");
}

inline Grid<double> read_npy(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(path.string() + ": cannot open");
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, "\x93NUMPY", 6) != 0 || magic[6] != 1) throw IoError(path.string() + ": not a version-1 .npy file");
  unsigned char lenb[2];
  f.read(reinterpret_cast<char*>(lenb), 2);
  std::string header(static_cast<std::size_t>(lenb[0] | (lenb[1] << 8)), '\0');
  f.read(header.data(), static_cast<std::streamsize>(header.size()));
  std::smatch m;
  static const std::regex shape_re(R"('shape':\s*\((\d+),\s*(\d+)\))");
  if (header.find("'<f8'") == std::string::npos || header.find("'fortran_order': False") == std::string::npos ||
      !std::regex_search(header, m, shape_re))
    throw IoError(path.string() + ": unsupported .npy header " + header);
  Grid<double> a(std::stoi(m[1]), std::stoi(m[2]));
  f.read(reinterpret_cast<char*>(a.data()), static_cast<std::streamsize>(a.size() * sizeof(double)));
  if (!f) throw IoError(path.string() + ": truncated data");
  return a;
}

}  // namespace ocfr::io
