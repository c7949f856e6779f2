#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

namespace fcdn {

// Parameter container in the same two-part style as the dataset format:
// `<prefix>.json` manifest (tensor names/shapes, free-form config, seed)
// plus `<prefix>.f32` little-endian float32 blob, concatenated in manifest
// order. Round-trips bit-exactly.
struct Checkpoint {
  struct Entry {
    std::string name;
    std::vector<size_t> shape;
    std::vector<float> values;
  };
  std::vector<Entry> entries;
  nlohmann::ordered_json config;

  const Entry& find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

std::string checkpoint_prefix(const std::string& path);

}  // namespace fcdn
