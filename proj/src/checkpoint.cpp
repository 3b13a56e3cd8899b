#include "trisim/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include "trisim/config.hpp"

namespace trisim {

namespace {

constexpr char kMagic[4] = {'T', 'S', 'C', '1'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::ofstream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& is, const std::string& path, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4))
    throw FormatError(path + ": truncated " + what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint(const std::string& path, const RunConfig& cfg, Model<float>& model) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError(path + ": cannot open for writing");
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  const std::string cfg_json = config_to_json(cfg);
  put_u32(os, static_cast<std::uint32_t>(cfg_json.size()));
  os.write(cfg_json.data(), static_cast<std::streamsize>(cfg_json.size()));
  model.visit_params([&](const ParamRef<float>& p) {
    put_u32(os, static_cast<std::uint32_t>(p.name.size()));
    os.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_u32(os, static_cast<std::uint32_t>(p.dims.size()));
    for (int d : p.dims) put_u32(os, static_cast<std::uint32_t>(d));
    os.write(reinterpret_cast<const char*>(p.value->data()),
             static_cast<std::streamsize>(p.value->size() * sizeof(float)));
  });
  if (!os) throw FormatError(path + ": write failed");
}

CheckpointData read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError(path + ": cannot open");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError(path + ": bad magic (expected \"TSC1\")");
  CheckpointData data;
  data.version = get_u32(is, path, "version");
  if (data.version != kVersion)
    throw FormatError(path + ": unsupported version " + std::to_string(data.version));
  const std::uint32_t cfg_len = get_u32(is, path, "config length");
  data.config_json.resize(cfg_len);
  if (!is.read(data.config_json.data(), cfg_len))
    throw FormatError(path + ": truncated config blob");
  while (true) {
    unsigned char probe;
    if (!is.read(reinterpret_cast<char*>(&probe), 1)) break;
    is.putback(static_cast<char>(probe));
    CheckpointTensor t;
    const std::uint32_t name_len = get_u32(is, path, "parameter name length");
    t.name.resize(name_len);
    if (!is.read(t.name.data(), name_len))
      throw FormatError(path + ": truncated parameter name");
    const std::uint32_t rank = get_u32(is, path, "parameter rank");
    if (rank > 8) throw FormatError(path + ": implausible rank for " + t.name);
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      const std::uint32_t d = get_u32(is, path, "parameter dim");
      t.dims.push_back(static_cast<int>(d));
      count *= d;
    }
    if (count > (1ull << 28)) throw FormatError(path + ": implausible size for " + t.name);
    t.values.resize(count);
    if (!is.read(reinterpret_cast<char*>(t.values.data()),
                 static_cast<std::streamsize>(count * sizeof(float))))
      throw FormatError(path + ": truncated payload for " + t.name);
    data.tensors.push_back(std::move(t));
  }
  return data;
}

void apply_checkpoint(const CheckpointData& data, Model<float>& model) {
  std::map<std::string, const CheckpointTensor*> by_name;
  for (const auto& t : data.tensors) {
    if (!by_name.emplace(t.name, &t).second)
      throw FormatError("checkpoint: duplicate parameter " + t.name);
  }
  std::size_t used = 0;
  model.visit_params([&](const ParamRef<float>& p) {
    auto it = by_name.find(p.name);
    if (it == by_name.end())
      throw FormatError("checkpoint: missing parameter " + p.name);
    const CheckpointTensor& t = *it->second;
    if (t.dims != p.dims || t.values.size() != p.value->size())
      throw FormatError("checkpoint: dims mismatch for " + p.name);
    *p.value = t.values;
    ++used;
  });
  if (used != data.tensors.size())
    throw FormatError("checkpoint: file holds parameters the model does not declare");
}

Model<float> load_checkpoint_model(const std::string& path) {
  const CheckpointData data = read_checkpoint(path);
  RunConfig cfg;
  try {
    cfg = parse_config_json(data.config_json);
  } catch (const ConfigError& e) {
    throw FormatError(path + ": embedded config is invalid: " + e.what());
  }
  Model<float> model(cfg);
  apply_checkpoint(data, model);
  return model;
}

}  // namespace trisim
