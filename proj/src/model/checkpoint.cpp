#include "sdat/model/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace sdat::model {

namespace {

constexpr std::size_t kMagicLen = 5;

void write_u64_le(std::ostream& out, std::uint64_t v) {
  unsigned char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(bytes), 8);
}

std::uint64_t read_u64_le(const unsigned char* bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return v;
}

void encode_doubles(std::span<const double> values, std::string& out) {
  const std::size_t start = out.size();
  out.resize(start + values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) out[start + i * 8 + b] = static_cast<char>(bits >> (8 * b));
  }
}

}  // namespace

const CheckpointTensor* Checkpoint::find(std::string_view name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json manifest = nlohmann::json::array();
  std::string payload;
  for (const auto& t : ckpt.tensors) {
    if (shape_numel(t.shape) != t.values.size()) {
      throw CheckpointError("tensor '" + t.name + "' shape does not match its values");
    }
    manifest.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", payload.size()}});
    encode_doubles(t.values, payload);
  }
  nlohmann::json header = {{"config", ckpt.config}, {"manifest", manifest}, {"meta", ckpt.meta}};
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot open '" + path.string() + "' for writing");
  out.write(kCheckpointMagic, kMagicLen);
  write_u64_le(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!out) throw CheckpointError("write to '" + path.string() + "' failed");
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < kMagicLen + 8 || bytes.compare(0, kMagicLen, kCheckpointMagic) != 0) {
    throw CheckpointError("'" + path.string() + "' is not an SDAT1 checkpoint");
  }
  const auto* raw = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint64_t header_len = read_u64_le(raw + kMagicLen);
  const std::size_t payload_start = kMagicLen + 8 + header_len;
  if (payload_start > bytes.size()) throw CheckpointError("truncated checkpoint header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(kMagicLen + 8, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }
  Checkpoint ckpt;
  ckpt.config = header.value("config", nlohmann::json::object());
  ckpt.meta = header.value("meta", nlohmann::json::object());
  for (const auto& entry : header.at("manifest")) {
    CheckpointTensor t;
    t.name = entry.at("name").get<std::string>();
    t.shape = entry.at("shape").get<Shape>();
    const auto offset = entry.at("offset").get<std::size_t>();
    const std::size_t count = shape_numel(t.shape);
    if (payload_start + offset + count * 8 > bytes.size()) {
      throw CheckpointError("tensor '" + t.name + "' extends past end of file");
    }
    t.values.resize(count);
    const unsigned char* src = raw + payload_start + offset;
    for (std::size_t i = 0; i < count; ++i) t.values[i] = std::bit_cast<double>(read_u64_le(src + 8 * i));
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

Checkpoint snapshot(const Model& model) {
  Checkpoint ckpt;
  ckpt.config = to_json(model.config());
  for (const auto& p : model.parameters()) {
    auto v = p.tensor.values();
    ckpt.tensors.push_back({p.name, p.tensor.shape(), std::vector<double>(v.begin(), v.end())});
  }
  return ckpt;
}

Model restore_model(const Checkpoint& ckpt) {
  Model m = Model::build(model_config_from_json(ckpt.config));
  for (const auto& p : m.parameters()) {
    const auto* t = ckpt.find(p.name);
    if (t == nullptr) throw CheckpointError("checkpoint lacks parameter '" + p.name + "'");
    if (t->shape != p.tensor.shape()) {
      throw CheckpointError("parameter '" + p.name + "' has shape " + to_string(t->shape) +
                            ", model expects " + to_string(p.tensor.shape()));
    }
    Tensor dst = p.tensor;
    std::copy(t->values.begin(), t->values.end(), dst.mutable_values().begin());
  }
  return m;
}

}  // namespace sdat::model
