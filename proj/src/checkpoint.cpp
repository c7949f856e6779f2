#include "fcdn/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

#include "fcdn/types.hpp"

namespace fcdn {

namespace {
constexpr const char* kMagic = "fcdn-ckpt/1";
}

const Checkpoint::Entry& Checkpoint::find(const std::string& name) const {
  for (const auto& e : entries) {
    if (e.name == name) return e;
  }
  throw DataFormatError("checkpoint is missing tensor '" + name + "'");
}

std::string checkpoint_prefix(const std::string& path) {
  namespace fs = std::filesystem;
  if (!path.empty() && fs::is_directory(path)) {
    return (fs::path(path) / "model").string();
  }
  if (path.size() > 5 && path.ends_with(".json")) return path.substr(0, path.size() - 5);
  if (path.size() > 4 && path.ends_with(".f32")) return path.substr(0, path.size() - 4);
  return path;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  const std::string prefix = checkpoint_prefix(path);
  nlohmann::ordered_json manifest;
  manifest["magic"] = kMagic;
  manifest["params"] = nlohmann::json::array();
  for (const auto& e : ckpt.entries) {
    size_t n = 1;
    for (size_t d : e.shape) n *= d;
    if (n != e.values.size()) {
      throw std::invalid_argument("checkpoint entry '" + e.name + "' shape/value mismatch");
    }
    manifest["params"].push_back({{"name", e.name}, {"shape", e.shape}});
  }
  manifest["config"] = ckpt.config;

  {
    std::ofstream out(prefix + ".json", std::ios::binary | std::ios::trunc);
    if (!out) throw DataFormatError("cannot write " + prefix + ".json");
    out << manifest.dump(2) << "\n";
  }
  {
    std::ofstream out(prefix + ".f32", std::ios::binary | std::ios::trunc);
    if (!out) throw DataFormatError("cannot write " + prefix + ".f32");
    for (const auto& e : ckpt.entries) {
      out.write(reinterpret_cast<const char*>(e.values.data()),
                static_cast<std::streamsize>(e.values.size() * sizeof(float)));
    }
    if (!out) throw DataFormatError("failed to write " + prefix + ".f32");
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  const std::string prefix = checkpoint_prefix(path);
  std::ifstream jin(prefix + ".json", std::ios::binary);
  if (!jin) throw DataFormatError("cannot open " + prefix + ".json");
  nlohmann::ordered_json manifest;
  try {
    manifest = nlohmann::ordered_json::parse(jin);
  } catch (const nlohmann::json::exception& e) {
    throw DataFormatError("bad checkpoint manifest: " + std::string(e.what()));
  }
  if (!manifest.contains("magic") || manifest["magic"].get<std::string>() != kMagic) {
    throw DataFormatError("magic mismatch in " + prefix + ".json");
  }

  Checkpoint ckpt;
  ckpt.config = manifest.value("config", nlohmann::ordered_json::object());
  size_t total = 0;
  for (const auto& p : manifest.at("params")) {
    Checkpoint::Entry e;
    e.name = p.at("name").get<std::string>();
    e.shape = p.at("shape").get<std::vector<size_t>>();
    size_t n = 1;
    for (size_t d : e.shape) n *= d;
    e.values.resize(n);
    total += n;
    ckpt.entries.push_back(std::move(e));
  }

  std::ifstream bin(prefix + ".f32", std::ios::binary);
  if (!bin) throw DataFormatError("cannot open " + prefix + ".f32");
  bin.seekg(0, std::ios::end);
  const size_t bytes = static_cast<size_t>(bin.tellg());
  bin.seekg(0, std::ios::beg);
  if (bytes != total * sizeof(float)) {
    throw DataFormatError("checkpoint blob length mismatch: expected " +
                          std::to_string(total * sizeof(float)) + " bytes, got " +
                          std::to_string(bytes));
  }
  for (auto& e : ckpt.entries) {
    bin.read(reinterpret_cast<char*>(e.values.data()),
             static_cast<std::streamsize>(e.values.size() * sizeof(float)));
  }
  if (!bin) throw DataFormatError("failed to read " + prefix + ".f32");
  return ckpt;
}

}  // namespace fcdn
