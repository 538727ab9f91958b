#include <algorithm>
#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "logrecon/autodiff.hpp"

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

namespace logrecon {

namespace {

constexpr char kMagic[4] = {'R', 'V', 'F', 'P'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::string& buf, T v) {
  char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  buf.append(raw, sizeof(T));
}

void put_string(std::string& buf, const std::string& s) {
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(s.size()));
  buf.append(s);
}

class Reader {
 public:
  Reader(std::string data, std::string path) : data_(std::move(data)), path_(std::move(path)) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  const char* raw(std::size_t n) {
    need(n);
    const char* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw std::runtime_error("checkpoint '" + path_ + "' is truncated");
  }
  std::string data_;
  std::string path_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::string& path, const ParameterSet& params, const CheckpointInfo& info) {
  std::string buf(kMagic, 4);
  put(buf, kVersion);
  put(buf, info.seed);
  put(buf, info.spec_hash);
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(info.tags.size()));
  for (const auto& [k, v] : info.tags) {
    put_string(buf, k);
    put_string(buf, v);
  }
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(params.size()));
  std::uint64_t offset = 0;
  for (const auto& [name, t] : params) {
    put_string(buf, name);
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(t.ndim()));
    for (int d : t.shape) put<std::uint32_t>(buf, static_cast<std::uint32_t>(d));
    put(buf, offset);
    offset += t.numel();
  }
  for (const auto& [name, t] : params) {
    const std::vector<float> f(t.data.begin(), t.data.end());
    buf.append(reinterpret_cast<const char*>(f.data()), f.size() * sizeof(float));
  }

  // Write-then-rename so a crashed run never leaves a half-written checkpoint.
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp + "' for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw std::runtime_error("failed writing '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

ParameterSet load_checkpoint(const std::string& path, CheckpointInfo* info) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(data), path);
  if (std::memcmp(r.raw(4), kMagic, 4) != 0) throw std::runtime_error("'" + path + "' is not a checkpoint file");
  if (r.get<std::uint32_t>() != kVersion) throw std::runtime_error("unsupported checkpoint version in '" + path + "'");
  CheckpointInfo meta;
  meta.seed = r.get<std::uint64_t>();
  meta.spec_hash = r.get<std::uint64_t>();
  const auto n_tags = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < n_tags; ++i) {
    std::string k = r.get_string();
    meta.tags[k] = r.get_string();
  }
  const auto n_params = r.get<std::uint32_t>();
  struct Entry {
    std::string name;
    std::vector<int> shape;
    std::uint64_t offset;
  };
  std::vector<Entry> manifest;
  for (std::uint32_t i = 0; i < n_params; ++i) {
    Entry e;
    e.name = r.get_string();
    const auto nd = r.get<std::uint32_t>();
    if (nd > 8) throw std::runtime_error("corrupt checkpoint manifest in '" + path + "'");
    for (std::uint32_t d = 0; d < nd; ++d) e.shape.push_back(static_cast<int>(r.get<std::uint32_t>()));
    e.offset = r.get<std::uint64_t>();
    manifest.push_back(std::move(e));
  }
  std::uint64_t total = 0;
  for (const auto& e : manifest) total = std::max<std::uint64_t>(total, e.offset + Tensor::count(e.shape));
  const char* payload = r.raw(total * sizeof(float));
  ParameterSet params;
  for (const auto& e : manifest) {
    Tensor t(e.shape);
    std::vector<float> f(t.numel());
    std::memcpy(f.data(), payload + e.offset * sizeof(float), f.size() * sizeof(float));
    std::copy(f.begin(), f.end(), t.data.begin());
    params.add(e.name, std::move(t));
  }
  if (info) *info = std::move(meta);
  return params;
}

}  // namespace logrecon
