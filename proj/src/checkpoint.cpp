#include "cclab/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <set>
#include <stdexcept>

#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian; big-endian hosts unsupported");

namespace cclab {

void save_checkpoint(const std::string& prefix, const ConstNamedTensorRefs& items) {
  std::set<std::string> seen;
  nlohmann::json manifest = nlohmann::json::array();
  std::ofstream blob(prefix + ".bin", std::ios::binary | std::ios::trunc);
  if (!blob) throw std::runtime_error("checkpoint: cannot open " + prefix + ".bin for writing");
  std::uint64_t offset = 0;
  for (const auto& [name, t] : items) {
    if (!seen.insert(name).second)
      throw std::invalid_argument("checkpoint: duplicate tensor name " + name);
    manifest.push_back({{"name", name},
                        {"shape", t->shape},
                        {"dtype", "f32"},
                        {"byte_offset", offset}});
    const std::streamsize bytes = static_cast<std::streamsize>(t->numel() * sizeof(float));
    blob.write(reinterpret_cast<const char*>(t->ptr()), bytes);
    offset += static_cast<std::uint64_t>(bytes);
  }
  blob.close();
  if (!blob) throw std::runtime_error("checkpoint: write to " + prefix + ".bin failed");
  std::ofstream mf(prefix + ".json", std::ios::trunc);
  if (!mf) throw std::runtime_error("checkpoint: cannot open " + prefix + ".json for writing");
  mf << manifest.dump(2) << "\n";
}

std::vector<std::pair<std::string, Tensor<float>>> read_checkpoint(const std::string& prefix) {
  std::ifstream mf(prefix + ".json");
  if (!mf) throw std::runtime_error("checkpoint: cannot open " + prefix + ".json");
  nlohmann::json manifest = nlohmann::json::parse(mf);
  std::ifstream blob(prefix + ".bin", std::ios::binary);
  if (!blob) throw std::runtime_error("checkpoint: cannot open " + prefix + ".bin");

  std::vector<std::pair<std::string, Tensor<float>>> out;
  for (const auto& e : manifest) {
    const std::string name = e.at("name").get<std::string>();
    const std::string dtype = e.at("dtype").get<std::string>();
    if (dtype != "f32")
      throw std::runtime_error("checkpoint: unsupported dtype " + dtype + " for " + name);
    Tensor<float> t(e.at("shape").get<std::vector<int>>());
    blob.seekg(static_cast<std::streamoff>(e.at("byte_offset").get<std::uint64_t>()));
    blob.read(reinterpret_cast<char*>(t.ptr()),
              static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!blob)
      throw std::runtime_error("checkpoint: blob truncated while reading " + name + " from " +
                               prefix + ".bin");
    out.emplace_back(name, std::move(t));
  }
  return out;
}

void load_checkpoint(const std::string& prefix, const NamedTensorRefs& items) {
  auto stored = read_checkpoint(prefix);
  for (const auto& [name, dst] : items) {
    bool found = false;
    for (auto& [sname, st] : stored) {
      if (sname != name) continue;
      if (!st.same_shape(*dst))
        throw std::runtime_error("checkpoint: shape mismatch for " + name + ": stored " +
                                 shape_str(st.shape) + " vs expected " + shape_str(dst->shape));
      *dst = std::move(st);
      found = true;
      break;
    }
    if (!found) throw std::runtime_error("checkpoint: tensor " + name + " missing from " + prefix);
  }
}

}  // namespace cclab
