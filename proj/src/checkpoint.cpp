#include "dbsn/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace dbsn {

namespace {

constexpr char kMagic[4] = {'D', 'B', 'S', 'N'};
constexpr std::uint8_t kVersion = 1;

void put_bytes(std::ostream& out, const void* p, std::size_t n) {
  out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void put_le(std::ostream& out, T v) {
  unsigned char buf[sizeof(T)];
  std::uint64_t bits;
  if constexpr (sizeof(T) == 8 && std::is_floating_point_v<T>) {
    std::memcpy(&bits, &v, 8);
  } else {
    bits = static_cast<std::uint64_t>(v);
  }
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<unsigned char>(bits >> (8 * i));
  put_bytes(out, buf, sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  unsigned char buf[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) {
    throw std::runtime_error("checkpoint: unexpected end of file");
  }
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  if constexpr (sizeof(T) == 8 && std::is_floating_point_v<T>) {
    T v;
    std::memcpy(&v, &bits, 8);
    return v;
  } else {
    return static_cast<T>(bits);
  }
}

}  // namespace

std::int64_t Checkpoint::step() const {
  auto it = state.find("meta");
  if (it == state.end() || it->second.empty()) {
    throw std::runtime_error("checkpoint: missing meta record");
  }
  return static_cast<std::int64_t>(it->second[0]);
}

void save_checkpoint(const std::string& path, const std::string& config_json,
                     const std::map<std::string, std::vector<double>>& state) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + path + " for writing");
  put_bytes(out, kMagic, 4);
  put_le<std::uint8_t>(out, kVersion);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(config_json.size()));
  put_bytes(out, config_json.data(), config_json.size());
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(state.size()));
  for (const auto& [name, values] : state) {
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    put_bytes(out, name.data(), name.size());
    put_le<std::uint64_t>(out, values.size());
    for (double v : values) put_le<double>(out, v);
  }
  if (!out) throw std::runtime_error("checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw std::runtime_error("checkpoint: bad magic in " + path);
  }
  const auto version = get_le<std::uint8_t>(in);
  if (version != kVersion) {
    throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const auto cfg_len = get_le<std::uint32_t>(in);
  ckpt.config_json.resize(cfg_len);
  if (cfg_len && !in.read(ckpt.config_json.data(), cfg_len)) {
    throw std::runtime_error("checkpoint: truncated config block");
  }
  const auto n_entries = get_le<std::uint32_t>(in);
  for (std::uint32_t e = 0; e < n_entries; ++e) {
    const auto name_len = get_le<std::uint16_t>(in);
    std::string name(name_len, '\0');
    if (name_len && !in.read(name.data(), name_len)) {
      throw std::runtime_error("checkpoint: truncated entry name");
    }
    const auto count = get_le<std::uint64_t>(in);
    std::vector<double> values(count);
    for (std::uint64_t i = 0; i < count; ++i) values[i] = get_le<double>(in);
    ckpt.state.emplace(std::move(name), std::move(values));
  }
  return ckpt;
}

void export_checkpoint_json(const std::string& checkpoint_path, const std::string& json_path) {
  Checkpoint ckpt = load_checkpoint(checkpoint_path);
  nlohmann::json root;
  root["config"] = nlohmann::json::parse(ckpt.config_json);
  nlohmann::json state;
  for (const auto& [name, values] : ckpt.state) state[name] = values;
  root["state"] = state;
  std::ofstream out(json_path);
  if (!out) throw std::runtime_error("checkpoint: cannot open " + json_path + " for writing");
  out << root.dump(2) << "\n";
}

}  // namespace dbsn
