#include "vdmask/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "vdmask/jsonconv.hpp"

namespace vdm {

using nlohmann::json;

static_assert(sizeof(float) == 4, "checkpoint payload assumes 32-bit floats");

namespace {

constexpr char kMagic[5] = {'V', 'D', 'M', 'K', '1'};

#if defined(__BYTE_ORDER__) && __BYTE_ORDER__ != __ORDER_LITTLE_ENDIAN__
#error "checkpoint io assumes a little-endian host"
#endif

}  // namespace

const Tensor& Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw ParseError("checkpoint: missing tensor '" + name + "'", 0);
}

void save_checkpoint(const std::string& path, const json& config,
                     const std::vector<std::pair<std::string, Tensor>>& tensors) {
  json manifest = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : tensors) {
    std::uint64_t nbytes = static_cast<std::uint64_t>(t.numel()) * sizeof(float);
    manifest.push_back({{"name", name},
                        {"shape", t.shape()},
                        {"offset", offset},
                        {"nbytes", nbytes}});
    offset += nbytes;
  }
  json header{{"format_version", 1}, {"config", config}, {"manifest", manifest}};
  std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw ContractError("save_checkpoint: cannot open " + path);
  out.write(kMagic, sizeof(kMagic));
  std::uint64_t hlen = hs.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, t] : tensors) {
    out.write(reinterpret_cast<const char*>(t.values().data()),
              static_cast<std::streamsize>(t.values().size() * sizeof(float)));
  }
  if (!out) throw ContractError("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open checkpoint " + path, 0);
  char magic[5];
  in.read(magic, sizeof(magic));
  if (in.gcount() != sizeof(magic) || std::memcmp(magic, kMagic, 5) != 0) {
    throw ParseError("bad checkpoint magic", 0);
  }
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (in.gcount() != sizeof(hlen)) throw ParseError("truncated header length", 5);
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (static_cast<std::uint64_t>(in.gcount()) != hlen) {
    throw ParseError("truncated checkpoint header", 13);
  }
  json header = json::parse(hs, nullptr, false);
  if (header.is_discarded()) throw ParseError("checkpoint header is not JSON", 13);
  if (header.at("format_version").get<int>() != 1) {
    throw ParseError("unsupported checkpoint format version", 13);
  }

  Checkpoint ckpt;
  ckpt.config = header.at("config");
  std::uint64_t expect_offset = 0;
  std::size_t payload_base = 13 + hlen;
  for (const auto& entry : header.at("manifest")) {
    std::string name = entry.at("name").get<std::string>();
    Shape shape = entry.at("shape").get<Shape>();
    std::uint64_t off = entry.at("offset").get<std::uint64_t>();
    std::uint64_t nbytes = entry.at("nbytes").get<std::uint64_t>();
    if (off != expect_offset) {
      throw ParseError("manifest ranges do not tile the payload at '" + name + "'",
                       payload_base + off);
    }
    std::uint64_t numel = static_cast<std::uint64_t>(shape_numel(shape));
    if (nbytes != numel * sizeof(float)) {
      throw ParseError("manifest nbytes disagrees with shape for '" + name + "'",
                       payload_base + off);
    }
    std::vector<float> data(numel);
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(nbytes));
    if (static_cast<std::uint64_t>(in.gcount()) != nbytes) {
      throw ParseError("truncated payload for '" + name + "'", payload_base + off);
    }
    ckpt.tensors.emplace_back(name, Tensor::from(std::move(shape), std::move(data)));
    expect_offset += nbytes;
  }
  if (in.peek() != EOF) {
    throw ParseError("trailing bytes after payload", payload_base + expect_offset);
  }
  return ckpt;
}

void save_vit_checkpoint(const std::string& path, ViTParamsT<float>& params,
                         const ViTConfig& cfg) {
  std::vector<std::pair<std::string, Tensor>> tensors;
  params.for_each_param([&](const std::string& name, Tensor& t) {
    tensors.emplace_back(name, t);
  });
  json config{{"kind", "vit"}, {"vit", cfg}};
  save_checkpoint(path, config, tensors);
}

std::pair<ViTParamsT<float>, ViTConfig> load_vit_checkpoint(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.config.value("kind", "") != "vit") {
    throw ParseError("not a vit checkpoint: " + path, 0);
  }
  ViTConfig cfg = ckpt.config.at("vit").get<ViTConfig>();
  cfg.validate();
  ViTParamsT<float> params = init_vit_params<float>(cfg, Rng(0));
  params.for_each_param([&](const std::string& name, Tensor& t) {
    const Tensor& src = ckpt.find(name);
    if (src.shape() != t.shape()) {
      throw ParseError("checkpoint tensor '" + name + "' has shape " +
                           shape_str(src.shape()) + ", expected " +
                           shape_str(t.shape()),
                       0);
    }
    t.values() = src.values();
    t.set_requires_grad(false);
  });
  return {std::move(params), cfg};
}

void save_gates_checkpoint(const std::string& path, GateStackT<float>& stack,
                           const ViTConfig& cfg) {
  std::vector<std::pair<std::string, Tensor>> tensors;
  stack.for_each_param([&](const std::string& name, Tensor& t) {
    tensors.emplace_back(name, t);
  });
  json config{{"kind", "gates"}, {"vit", cfg}, {"hc", stack.hc}};
  save_checkpoint(path, config, tensors);
}

std::pair<GateStackT<float>, ViTConfig> load_gates_checkpoint(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path);
  if (ckpt.config.value("kind", "") != "gates") {
    throw ParseError("not a gate-stack checkpoint: " + path, 0);
  }
  ViTConfig cfg = ckpt.config.at("vit").get<ViTConfig>();
  cfg.validate();
  HCParams hc = ckpt.config.at("hc").get<HCParams>();
  GateStackT<float> stack = init_gate_stack<float>(cfg, 1.0, 0.0, hc, Rng(0));
  stack.for_each_param([&](const std::string& name, Tensor& t) {
    const Tensor& src = ckpt.find(name);
    if (src.shape() != t.shape()) {
      throw ParseError("checkpoint tensor '" + name + "' has shape " +
                           shape_str(src.shape()) + ", expected " +
                           shape_str(t.shape()),
                       0);
    }
    t.values() = src.values();
    t.set_requires_grad(false);
  });
  return {std::move(stack), cfg};
}

}  // namespace vdm
