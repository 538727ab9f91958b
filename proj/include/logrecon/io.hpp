#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "logrecon/geometry.hpp"
#include "logrecon/projector.hpp"

namespace logrecon {

// RVF: "RVF1", u32 dtype, u32 ndim, u32 dims (slowest first), row-major payload, all little-endian.
enum class RvfType : std::uint32_t { Float32 = 1, UInt8 = 2 };

struct RvfArray {
  RvfType dtype = RvfType::Float32;
  std::vector<std::uint32_t> dims;
  std::vector<float> f32;
  std::vector<std::uint8_t> u8;

  std::size_t count() const;
};

void write_rvf(const std::string& path, const RvfArray& array);
RvfArray read_rvf(const std::string& path);

void write_rvf(const std::string& path, std::vector<std::uint32_t> dims, std::span<const float> values);
void write_rvf(const std::string& path, std::vector<std::uint32_t> dims, std::span<const std::uint8_t> values);

/// Sectioned `key = value` text with `[section]` headers and `#` comments.
class Config {
 public:
  static Config parse(const std::string& text, const std::string& source = "<config>");
  static Config load(const std::string& path);

  bool has(const std::string& section, const std::string& key) const;
  const std::string& get(const std::string& section, const std::string& key) const;
  std::string get_or(const std::string& section, const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& section, const std::string& key) const;
  double get_double_or(const std::string& section, const std::string& key, double fallback) const;
  long long get_int(const std::string& section, const std::string& key) const;
  long long get_int_or(const std::string& section, const std::string& key, long long fallback) const;
  std::vector<double> get_doubles(const std::string& section, const std::string& key) const;

  void set(const std::string& section, const std::string& key, const std::string& value);
  // "section.key=value"
  void apply_override(const std::string& assignment);
  std::string to_text() const;

  const std::map<std::string, std::map<std::string, std::string>>& sections() const { return data_; }

 private:
  std::map<std::string, std::map<std::string, std::string>> data_;
};

// Shortest text that reads back to the same double.
std::string format_double(double v);

// Geometry sidecars: [grid] and [geometry] sections.
Config geometry_config(const FanBeamGeometry& geom);
FanBeamGeometry geometry_from_config(const Config& cfg);
std::string geometry_sidecar_path(const std::string& sino_path);

void write_sinogram(const std::string& path, const Sinogram& sino);
Sinogram read_sinogram(const std::string& path);
void write_image(const std::string& path, const ImageSlice& image);
ImageSlice read_image(const std::string& path, const ImageGrid& grid);

/// Writes to "<path>.tmp" and renames over `path`.
void write_file_atomic(const std::string& path, const std::string& bytes);
std::string read_file(const std::string& path);

using CsvRow = std::vector<std::string>;

struct CsvTable {
  CsvRow header;
  std::vector<CsvRow> rows;

  std::size_t column(const std::string& name) const;
};

std::string to_csv(const CsvTable& table);
CsvTable parse_csv(const std::string& text);
void write_csv(const std::string& path, const CsvTable& table);
CsvTable read_csv(const std::string& path);

/// 16-bit binary PGM, min-max scaled. Returns the (min, max) that map to 0 and 65535.
std::pair<float, float> write_pgm16(const std::string& path, std::span<const float> values, int width, int height);

// Hex FNV-1a of a file's bytes.
std::string file_hash(const std::string& path);

}  // namespace logrecon
