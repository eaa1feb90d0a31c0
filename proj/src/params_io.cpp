#include "depthfill/params_io.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

using json = nlohmann::ordered_json;

namespace depthfill {

namespace {

constexpr char kMagic[4] = {'D', 'F', 'T', 'N'};

static_assert(sizeof(float) == 4, "container format assumes 32-bit floats");

void put_u64_le(std::ofstream& f, uint64_t v) {
  char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  f.write(buf, 8);
}

uint64_t get_u64_le(std::ifstream& f) {
  unsigned char buf[8];
  f.read(reinterpret_cast<char*>(buf), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
  return v;
}

bool host_is_little_endian() {
  const uint16_t probe = 1;
  return *reinterpret_cast<const uint8_t*>(&probe) == 1;
}

void write_f32_le(std::ofstream& f, const float* data, size_t count) {
  if (host_is_little_endian()) {
    f.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(count * 4));
  } else {
    for (size_t i = 0; i < count; ++i) {
      uint32_t bits;
      std::memcpy(&bits, &data[i], 4);
      char buf[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                     static_cast<char>((bits >> 16) & 0xff),
                     static_cast<char>((bits >> 24) & 0xff)};
      f.write(buf, 4);
    }
  }
}

void read_f32_le(std::ifstream& f, float* data, size_t count) {
  if (host_is_little_endian()) {
    f.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(count * 4));
  } else {
    for (size_t i = 0; i < count; ++i) {
      unsigned char buf[4];
      f.read(reinterpret_cast<char*>(buf), 4);
      const uint32_t bits = static_cast<uint32_t>(buf[0]) | (static_cast<uint32_t>(buf[1]) << 8) |
                            (static_cast<uint32_t>(buf[2]) << 16) |
                            (static_cast<uint32_t>(buf[3]) << 24);
      std::memcpy(&data[i], &bits, 4);
    }
  }
}

}  // namespace

void save_params(const ParamStore<float>& params, const std::string& path) {
  json header;
  header["format_version"] = 1;
  header["tensors"] = json::array();
  uint64_t offset = 0;
  for (const auto& [name, t] : params.entries()) {
    json jt;
    jt["name"] = name;
    jt["shape"] = t.shape();
    jt["offset"] = offset;
    header["tensors"].push_back(jt);
    offset += static_cast<uint64_t>(t.numel());
  }
  const std::string header_str = header.dump();

  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open for writing: " + path);
  f.write(kMagic, 4);
  put_u64_le(f, header_str.size());
  f.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& [name, t] : params.entries())
    write_f32_le(f, t.values().data(), static_cast<size_t>(t.numel()));
  if (!f) throw std::runtime_error("write failed: " + path);
}

ParamStore<float> load_params(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open: " + path);
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not a parameter container: " + path);
  const uint64_t header_len = get_u64_le(f);
  std::string header_str(header_len, '\0');
  f.read(header_str.data(), static_cast<std::streamsize>(header_len));
  if (!f) throw std::runtime_error("truncated header: " + path);

  json header;
  try {
    header = json::parse(header_str);
  } catch (const json::exception& e) {
    throw std::runtime_error("corrupt container header in " + path + ": " + e.what());
  }
  if (header.at("format_version").get<int>() != 1)
    throw std::runtime_error("unsupported container version in " + path);

  ParamStore<float> params;
  for (const auto& jt : header.at("tensors")) {
    const std::string name = jt.at("name").get<std::string>();
    const Shape shape = jt.at("shape").get<Shape>();
    const bool trainable =
        name.rfind("opt.", 0) != 0 && name.find(".running_") == std::string::npos;
    auto t = Tensor<float>::zeros(shape, trainable);
    read_f32_le(f, t.raw().data(), static_cast<size_t>(t.numel()));
    if (!f)
      throw std::runtime_error("truncated payload reading \"" + name + "\" from " + path);
    params.add(name, std::move(t));
  }
  return params;
}

}  // namespace depthfill
