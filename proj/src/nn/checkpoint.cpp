#include "slotbench/nn/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "slotbench/errors.hpp"

namespace fs = std::filesystem;

namespace slotbench::nn {

namespace {

constexpr char kMagic[8] = {'S', 'L', 'O', 'T', 'C', 'K', 'P', 'T'};

std::string dtype_name(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32:
      return "float32";
    case torch::kFloat64:
      return "float64";
    case torch::kInt64:
      return "int64";
    case torch::kUInt8:
      return "uint8";
    default:
      throw FormatError(std::string("checkpoint: unsupported dtype ") + c10::toString(t));
  }
}

torch::ScalarType parse_dtype(const std::string& name) {
  if (name == "float32") return torch::kFloat32;
  if (name == "float64") return torch::kFloat64;
  if (name == "int64") return torch::kInt64;
  if (name == "uint8") return torch::kUInt8;
  throw FormatError("checkpoint: unknown dtype '" + name + "'");
}

void write_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

}  // namespace

const torch::Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return &t;
  }
  return nullptr;
}

void save_checkpoint(const fs::path& path, const Checkpoint& checkpoint) {
  nlohmann::json table = nlohmann::json::array();
  std::vector<torch::Tensor> payload;
  std::uint64_t offset = 0;
  for (const auto& [name, tensor] : checkpoint.tensors) {
    auto t = tensor.detach().to(torch::kCPU).contiguous();
    const std::uint64_t nbytes = t.numel() * t.element_size();
    table.push_back({{"name", name},
                     {"dtype", dtype_name(t.scalar_type())},
                     {"shape", t.sizes().vec()},
                     {"offset", offset},
                     {"nbytes", nbytes}});
    offset += nbytes;
    payload.push_back(t);
  }
  const nlohmann::json header{{"architecture", checkpoint.architecture}, {"meta", checkpoint.meta}, {"tensors", table}};
  const std::string text = header.dump();

  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw StorageError("cannot write checkpoint " + tmp.string());
    out.write(kMagic, sizeof(kMagic));
    write_u64(out, text.size());
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : payload) {
      out.write(static_cast<const char*>(t.data_ptr()), static_cast<std::streamsize>(t.numel() * t.element_size()));
    }
    if (!out) throw StorageError("failed writing checkpoint " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw StorageError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("checkpoint not found: " + path.string());
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) throw FormatError("not a slotbench checkpoint: " + path.string());
  const std::uint64_t header_len = read_u64(in);
  if (!in || header_len > (1ULL << 30)) throw FormatError("corrupt checkpoint header in " + path.string());
  std::string text(header_len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw FormatError("truncated checkpoint header in " + path.string());

  Checkpoint ckpt;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
    ckpt.architecture = header.at("architecture");
    ckpt.meta = header.at("meta");
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
  const auto payload_start = in.tellg();
  for (const auto& entry : header.at("tensors")) {
    const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
    auto t = torch::empty(shape, torch::TensorOptions().dtype(parse_dtype(entry.at("dtype").get<std::string>())));
    const auto nbytes = entry.at("nbytes").get<std::uint64_t>();
    if (nbytes != static_cast<std::uint64_t>(t.numel() * t.element_size())) {
      throw FormatError("checkpoint tensor size mismatch in " + path.string());
    }
    in.seekg(payload_start + static_cast<std::streamoff>(entry.at("offset").get<std::uint64_t>()));
    in.read(static_cast<char*>(t.data_ptr()), static_cast<std::streamsize>(nbytes));
    if (!in) throw FormatError("truncated checkpoint payload in " + path.string());
    ckpt.tensors.emplace_back(entry.at("name").get<std::string>(), t);
  }
  return ckpt;
}

void append_module_state(Checkpoint& checkpoint, const torch::nn::Module& module) {
  for (const auto& item : module.named_parameters()) checkpoint.tensors.emplace_back("model/" + item.key(), item.value());
  for (const auto& item : module.named_buffers()) checkpoint.tensors.emplace_back("model/" + item.key(), item.value());
}

void load_module_state(const Checkpoint& checkpoint, torch::nn::Module& module) {
  torch::NoGradGuard no_grad;
  auto assign = [&](const std::string& key, torch::Tensor& target) {
    const torch::Tensor* src = checkpoint.find("model/" + key);
    if (src == nullptr) throw FormatError("checkpoint lacks tensor '" + key + "'");
    if (src->sizes() != target.sizes()) {
      throw FormatError("checkpoint tensor '" + key + "' has shape " + c10::str(src->sizes()) + ", model expects " +
                        c10::str(target.sizes()));
    }
    target.copy_(*src);
  };
  for (auto& item : module.named_parameters()) assign(item.key(), item.value());
  for (auto& item : module.named_buffers()) assign(item.key(), item.value());
}

}  // namespace slotbench::nn
