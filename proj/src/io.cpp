#include "logrecon/io.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "logrecon/autodiff.hpp"

namespace logrecon {

static_assert(std::endian::native == std::endian::little, "RVF IO assumes a little-endian host");

namespace {

void put_u32(std::string& out, std::uint32_t v) { out.append(reinterpret_cast<const char*>(&v), 4); }

std::uint32_t get_u32(const std::string& in, std::size_t& pos, const std::string& path) {
  if (pos + 4 > in.size()) throw std::runtime_error("'" + path + "' is truncated");
  std::uint32_t v;
  std::memcpy(&v, in.data() + pos, 4);
  pos += 4;
  return v;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::size_t RvfArray::count() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

void write_rvf(const std::string& path, const RvfArray& a) {
  std::string out = "RVF1";
  put_u32(out, static_cast<std::uint32_t>(a.dtype));
  put_u32(out, static_cast<std::uint32_t>(a.dims.size()));
  for (auto d : a.dims) put_u32(out, d);
  const std::size_t n = a.count();
  if (a.dtype == RvfType::Float32) {
    if (a.f32.size() != n) throw std::invalid_argument("write_rvf: payload size does not match dims");
    out.append(reinterpret_cast<const char*>(a.f32.data()), n * sizeof(float));
  } else {
    if (a.u8.size() != n) throw std::invalid_argument("write_rvf: payload size does not match dims");
    out.append(reinterpret_cast<const char*>(a.u8.data()), n);
  }
  write_file_atomic(path, out);
}

RvfArray read_rvf(const std::string& path) {
  const std::string in = read_file(path);
  if (in.size() < 12 || in.compare(0, 4, "RVF1") != 0) throw std::runtime_error("'" + path + "' is not an RVF file");
  std::size_t pos = 4;
  RvfArray a;
  const std::uint32_t dtype = get_u32(in, pos, path);
  if (dtype != 1 && dtype != 2) throw std::runtime_error("'" + path + "' has unknown dtype " + std::to_string(dtype));
  a.dtype = static_cast<RvfType>(dtype);
  const std::uint32_t ndim = get_u32(in, pos, path);
  if (ndim > 8) throw std::runtime_error("'" + path + "' has an implausible rank");
  for (std::uint32_t i = 0; i < ndim; ++i) a.dims.push_back(get_u32(in, pos, path));
  const std::size_t n = a.count();
  const std::size_t bytes = n * (a.dtype == RvfType::Float32 ? 4 : 1);
  if (in.size() - pos != bytes)
    throw std::runtime_error("'" + path + "' payload has " + std::to_string(in.size() - pos) + " bytes, expected " +
                             std::to_string(bytes));
  if (a.dtype == RvfType::Float32) {
    a.f32.resize(n);
    std::memcpy(a.f32.data(), in.data() + pos, bytes);
  } else {
    a.u8.assign(in.begin() + static_cast<std::ptrdiff_t>(pos), in.end());
  }
  return a;
}

void write_rvf(const std::string& path, std::vector<std::uint32_t> dims, std::span<const float> values) {
  RvfArray a;
  a.dtype = RvfType::Float32;
  a.dims = std::move(dims);
  a.f32.assign(values.begin(), values.end());
  write_rvf(path, a);
}

void write_rvf(const std::string& path, std::vector<std::uint32_t> dims, std::span<const std::uint8_t> values) {
  RvfArray a;
  a.dtype = RvfType::UInt8;
  a.dims = std::move(dims);
  a.u8.assign(values.begin(), values.end());
  write_rvf(path, a);
}

Config Config::parse(const std::string& text, const std::string& source) {
  Config cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw std::invalid_argument(source + ":" + std::to_string(lineno) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw std::invalid_argument(source + ":" + std::to_string(lineno) + ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument(source + ":" + std::to_string(lineno) + ": expected 'key = value'");
    if (section.empty())
      throw std::invalid_argument(source + ":" + std::to_string(lineno) + ": key outside of any [section]");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty()) throw std::invalid_argument(source + ":" + std::to_string(lineno) + ": empty key");
    cfg.data_[section][key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

Config Config::load(const std::string& path) { return parse(read_file(path), path); }

bool Config::has(const std::string& section, const std::string& key) const {
  auto s = data_.find(section);
  return s != data_.end() && s->second.count(key) != 0;
}

const std::string& Config::get(const std::string& section, const std::string& key) const {
  auto s = data_.find(section);
  if (s == data_.end() || s->second.count(key) == 0)
    throw std::invalid_argument("missing config key " + section + "." + key);
  return s->second.at(key);
}

std::string Config::get_or(const std::string& section, const std::string& key, const std::string& fallback) const {
  return has(section, key) ? get(section, key) : fallback;
}

double Config::get_double(const std::string& section, const std::string& key) const {
  const std::string& v = get(section, key);
  double out = 0.0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw std::invalid_argument("config key " + section + "." + key + " is not a number: '" + v + "'");
  return out;
}

double Config::get_double_or(const std::string& section, const std::string& key, double fallback) const {
  return has(section, key) ? get_double(section, key) : fallback;
}

long long Config::get_int(const std::string& section, const std::string& key) const {
  const std::string& v = get(section, key);
  long long out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size())
    throw std::invalid_argument("config key " + section + "." + key + " is not an integer: '" + v + "'");
  return out;
}

long long Config::get_int_or(const std::string& section, const std::string& key, long long fallback) const {
  return has(section, key) ? get_int(section, key) : fallback;
}

std::vector<double> Config::get_doubles(const std::string& section, const std::string& key) const {
  std::vector<double> out;
  std::stringstream ss(get(section, key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    double v = 0.0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc() || p != item.data() + item.size())
      throw std::invalid_argument("config key " + section + "." + key + " has a bad list entry '" + item + "'");
    out.push_back(v);
  }
  return out;
}

void Config::set(const std::string& section, const std::string& key, const std::string& value) {
  data_[section][key] = value;
}

void Config::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  const auto dot = assignment.find('.');
  if (eq == std::string::npos || dot == std::string::npos || dot > eq || dot == 0 || dot + 1 == eq)
    throw std::invalid_argument("override must look like section.key=value, got '" + assignment + "'");
  set(assignment.substr(0, dot), assignment.substr(dot + 1, eq - dot - 1), assignment.substr(eq + 1));
}

std::string Config::to_text() const {
  std::string out;
  for (const auto& [section, kv] : data_) {
    if (!out.empty()) out += "\n";
    out += "[" + section + "]\n";
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw std::runtime_error("format_double failed");
  return std::string(buf, p);
}

Config geometry_config(const FanBeamGeometry& g) {
  Config c;
  c.set("grid", "n_x", std::to_string(g.grid().n_x));
  c.set("grid", "n_y", std::to_string(g.grid().n_y));
  c.set("grid", "pixel_mm", format_double(g.grid().pixel_size));
  c.set("grid", "origin_x_mm", format_double(g.grid().origin_x));
  c.set("grid", "origin_y_mm", format_double(g.grid().origin_y));
  c.set("geometry", "source_radius_mm", format_double(g.source_radius()));
  c.set("geometry", "detector_radius_mm", format_double(g.detector_radius()));
  c.set("geometry", "n_det", std::to_string(g.n_detector_bins()));
  c.set("geometry", "det_width_mm", format_double(g.detector_width()));
  std::string angles;
  for (double a : g.source_angles_deg()) angles += (angles.empty() ? "" : ", ") + format_double(a);
  c.set("geometry", "angles_deg", angles);
  return c;
}

FanBeamGeometry geometry_from_config(const Config& c) {
  const ImageGrid grid(static_cast<int>(c.get_int("grid", "n_x")), static_cast<int>(c.get_int("grid", "n_y")),
                       c.get_double("grid", "pixel_mm"), c.get_double_or("grid", "origin_x_mm", 0.0),
                       c.get_double_or("grid", "origin_y_mm", 0.0));
  const std::vector<double> angles = c.get_doubles("geometry", "angles_deg");
  if (!c.has("geometry", "source_radius_mm")) return default_fanbeam(grid, angles);
  return build_fanbeam(grid, c.get_double("geometry", "source_radius_mm"), c.get_double("geometry", "detector_radius_mm"),
                       static_cast<int>(c.get_int("geometry", "n_det")), c.get_double("geometry", "det_width_mm"), angles);
}

std::string geometry_sidecar_path(const std::string& sino_path) {
  std::filesystem::path p(sino_path);
  p.replace_extension(".geom.cfg");
  return p.string();
}

void write_sinogram(const std::string& path, const Sinogram& s) {
  write_rvf(path,
            {static_cast<std::uint32_t>(s.geometry.n_sources()), static_cast<std::uint32_t>(s.geometry.n_detector_bins())},
            std::span<const float>(s.values));
  write_file_atomic(geometry_sidecar_path(path), geometry_config(s.geometry).to_text());
}

Sinogram read_sinogram(const std::string& path) {
  const RvfArray a = read_rvf(path);
  const std::string side = geometry_sidecar_path(path);
  if (!std::filesystem::exists(side)) throw std::runtime_error("missing geometry sidecar '" + side + "'");
  const FanBeamGeometry g = geometry_from_config(Config::load(side));
  if (a.dtype != RvfType::Float32 || a.dims.size() != 2 || a.dims[0] != static_cast<std::uint32_t>(g.n_sources()) ||
      a.dims[1] != static_cast<std::uint32_t>(g.n_detector_bins()))
    throw std::runtime_error("'" + path + "' does not match the shape in '" + side + "'");
  return Sinogram(g, a.f32);
}

void write_image(const std::string& path, const ImageSlice& image) {
  write_rvf(path, {static_cast<std::uint32_t>(image.grid.n_y), static_cast<std::uint32_t>(image.grid.n_x)},
            std::span<const float>(image.values));
}

ImageSlice read_image(const std::string& path, const ImageGrid& grid) {
  const RvfArray a = read_rvf(path);
  if (a.dtype != RvfType::Float32 || a.dims.size() != 2 || a.dims[0] != static_cast<std::uint32_t>(grid.n_y) ||
      a.dims[1] != static_cast<std::uint32_t>(grid.n_x))
    throw std::runtime_error("'" + path + "' is not a float32 " + std::to_string(grid.n_y) + "x" +
                             std::to_string(grid.n_x) + " image");
  return ImageSlice(grid, a.f32);
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
  const std::filesystem::path target(path);
  if (target.has_parent_path()) std::filesystem::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write '" + tmp + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write to '" + tmp + "' failed");
  }
  std::filesystem::rename(tmp, target);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t CsvTable::column(const std::string& name) const {
  auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) throw std::invalid_argument("CSV has no column '" + name + "'");
  return static_cast<std::size_t>(it - header.begin());
}

namespace {

std::string csv_field(const std::string& f) {
  if (f.find_first_of(",\"\r\n") == std::string::npos) return f;
  std::string out = "\"";
  for (char c : f) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string to_csv(const CsvTable& t) {
  std::string out;
  auto row = [&](const CsvRow& r) {
    for (std::size_t i = 0; i < r.size(); ++i) out += (i ? "," : "") + csv_field(r[i]);
    out += "\r\n";
  };
  row(t.header);
  for (const auto& r : t.rows) {
    if (r.size() != t.header.size()) throw std::invalid_argument("to_csv: row width differs from the header");
    row(r);
  }
  return out;
}

CsvTable parse_csv(const std::string& text) {
  std::vector<CsvRow> rows;
  CsvRow row;
  std::string field;
  bool quoted = false, any = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (any || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      any = false;
    } else {
      field += c;
      any = true;
    }
  }
  if (quoted) throw std::invalid_argument("parse_csv: unterminated quoted field");
  if (any || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::invalid_argument("parse_csv: no header row");
  CsvTable t;
  t.header = std::move(rows.front());
  t.rows.assign(std::make_move_iterator(rows.begin() + 1), std::make_move_iterator(rows.end()));
  return t;
}

void write_csv(const std::string& path, const CsvTable& table) { write_file_atomic(path, to_csv(table)); }

CsvTable read_csv(const std::string& path) { return parse_csv(read_file(path)); }

std::pair<float, float> write_pgm16(const std::string& path, std::span<const float> values, int width, int height) {
  if (width < 1 || height < 1 || values.size() != static_cast<std::size_t>(width) * height)
    throw std::invalid_argument("write_pgm16: size mismatch");
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const float lo = *lo_it, hi = *hi_it;
  std::string out = "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n65535\n";
  const double span = hi > lo ? static_cast<double>(hi) - lo : 1.0;
  for (float v : values) {
    const auto q = static_cast<std::uint16_t>(std::lround((static_cast<double>(v) - lo) / span * 65535.0));
    out += static_cast<char>(q >> 8);
    out += static_cast<char>(q & 0xff);
  }
  write_file_atomic(path, out);
  return {lo, hi};
}

std::string file_hash(const std::string& path) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(read_file(path))));
  return buf;
}

}  // namespace logrecon
