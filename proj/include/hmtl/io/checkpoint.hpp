#pragma once

// Named-tensor archive.
//
// Layout: "HMTLCKPT" | u32 version | u64 manifest length | JSON manifest |
// raw little-endian float32 payload. The manifest lists every tensor (name,
// shape, byte offset into the payload, kind = param|buffer), the backbone
// stage names, the output head names and free-form training metadata.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "hmtl/error.hpp"
#include "hmtl/nn/layers.hpp"
#include "hmtl/tensor.hpp"

namespace hmtl {

inline constexpr char kCheckpointMagic[8] = {'H', 'M', 'T', 'L', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  bool buffer = false;
  Tensor value;
};

struct Checkpoint {
  nlohmann::json metadata = nlohmann::json::object();
  std::vector<std::string> stages;
  std::vector<std::string> heads;
  std::vector<CheckpointEntry> tensors;

  const CheckpointEntry* find(const std::string& name) const {
    for (const auto& t : tensors)
      if (t.name == name) return &t;
    return nullptr;
  }
};

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  nlohmann::json manifest;
  manifest["metadata"] = ck.metadata;
  manifest["stages"] = ck.stages;
  manifest["heads"] = ck.heads;
  manifest["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& t : ck.tensors) {
    manifest["tensors"].push_back(
        {{"name", t.name}, {"shape", t.value.shape()}, {"offset", offset}, {"kind", t.buffer ? "buffer" : "param"}});
    offset += t.value.size() * sizeof(float);
  }
  const std::string text = manifest.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw LoadError(tmp, "cannot open for writing");
    out.write(kCheckpointMagic, 8);
    const std::uint32_t version = kCheckpointVersion;
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&version), sizeof version);
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& t : ck.tensors)
      out.write(reinterpret_cast<const char*>(t.value.data()), static_cast<std::streamsize>(t.value.size() * sizeof(float)));
    if (!out) throw LoadError(tmp, "write failed");
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path.string(), "checkpoint not found or unreadable");
  char magic[8];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&len), sizeof len);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw LoadError(path.string(), "not a checkpoint file");
  if (version != kCheckpointVersion)
    throw CheckpointIncompatible(path.string() + ": unsupported checkpoint version " + std::to_string(version));
  if (len > (1ULL << 32)) throw LoadError(path.string(), "corrupt manifest length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw LoadError(path.string(), "truncated manifest");
  Checkpoint ck;
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(text);
    ck.metadata = manifest.at("metadata");
    ck.stages = manifest.at("stages").get<std::vector<std::string>>();
    ck.heads = manifest.at("heads").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path.string(), std::string("corrupt manifest: ") + e.what());
  }
  const auto payload_start = in.tellg();
  try {
    for (const auto& t : manifest.at("tensors")) {
      CheckpointEntry e;
      e.name = t.at("name").get<std::string>();
      e.buffer = t.at("kind").get<std::string>() == "buffer";
      const auto shape = t.at("shape").get<Shape>();
      std::vector<float> data(shape_numel(shape));
      in.seekg(payload_start + static_cast<std::streamoff>(t.at("offset").get<std::uint64_t>()));
      in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(float)));
      if (!in) throw LoadError(path.string(), "truncated payload at tensor '" + e.name + "'");
      e.value = Tensor(shape, std::move(data));
      ck.tensors.push_back(std::move(e));
    }
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(path.string(), std::string("corrupt tensor table: ") + e.what());
  }
  return ck;
}

/// Copies the tensors of `refs` whose names start with `prefix` (all when
/// empty) into a checkpoint.
template <std::floating_point T>
Checkpoint snapshot(const nn::TensorRefs<T>& refs, const std::string& prefix = "") {
  Checkpoint ck;
  for (const auto& r : refs) {
    if (!prefix.empty() && r.name.rfind(prefix, 0) != 0) continue;
    ck.tensors.push_back({r.name, r.is_buffer(), r.value->template cast<float>()});
  }
  return ck;
}

/// Loads every tensor of `refs` with the given prefix from `ck`. Missing
/// tensors or shape mismatches raise CheckpointIncompatible; tensors outside
/// the prefix are left untouched.
template <std::floating_point T>
void restore(const Checkpoint& ck, const nn::TensorRefs<T>& refs, const std::string& prefix = "") {
  std::size_t matched = 0;
  for (const auto& r : refs) {
    if (!prefix.empty() && r.name.rfind(prefix, 0) != 0) continue;
    const auto* e = ck.find(r.name);
    if (!e) throw CheckpointIncompatible("checkpoint has no tensor '" + r.name + "'");
    if (e->value.shape() != r.value->shape())
      throw CheckpointIncompatible("tensor '" + r.name + "' has shape " + shape_str(e->value.shape()) +
                                   " in the checkpoint but " + shape_str(r.value->shape()) + " in the model");
    ++matched;
  }
  if (matched == 0) throw CheckpointIncompatible("no tensors with prefix '" + prefix + "' to restore");
  for (const auto& r : refs) {
    if (!prefix.empty() && r.name.rfind(prefix, 0) != 0) continue;
    *r.value = ck.find(r.name)->value.template cast<T>();
  }
}

/// Copies the backbone tensors of a checkpoint into a model or encoder;
/// heads, branches and projector keep their current values.
template <typename M>
void transfer_backbone_weights(const Checkpoint& ck, M& target) {
  const auto refs = target.tensors();
  std::size_t in_ck = 0;
  for (const auto& t : ck.tensors)
    if (t.name.rfind("backbone.", 0) == 0) ++in_ck;
  std::size_t in_model = 0;
  for (const auto& r : refs)
    if (r.name.rfind("backbone.", 0) == 0) ++in_model;
  if (in_ck != in_model)
    throw CheckpointIncompatible("backbone structure differs: checkpoint has " + std::to_string(in_ck) +
                                 " backbone tensors, model has " + std::to_string(in_model));
  restore(ck, refs, "backbone.");
}

}  // namespace hmtl
