#include "fcdn/dataset_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace fcdn {

namespace {

constexpr const char* kMagic = "fcdn-eeg/1";

static_assert(std::endian::native == std::endian::little,
              "blob I/O assumes a little-endian host");

std::vector<char> read_all(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataFormatError("cannot open " + path);
  in.seekg(0, std::ios::end);
  const auto size = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<char> buf(static_cast<size_t>(size));
  in.read(buf.data(), size);
  if (!in) throw DataFormatError("failed to read " + path);
  return buf;
}

}  // namespace

std::string dataset_prefix(const std::string& path) {
  namespace fs = std::filesystem;
  if (!path.empty() && fs::is_directory(path)) {
    return (fs::path(path) / "dataset").string();
  }
  if (path.size() > 5 && path.ends_with(".json")) return path.substr(0, path.size() - 5);
  if (path.size() > 4 && path.ends_with(".f32")) return path.substr(0, path.size() - 4);
  return path;
}

void save_epochset(const EpochSet& set, const std::string& path) {
  if (set.n_trials == 0) throw std::invalid_argument("empty set");
  set.validate();

  const std::string prefix = dataset_prefix(path);

  nlohmann::ordered_json manifest;
  manifest["magic"] = kMagic;
  manifest["fs_hz"] = set.fs_hz;
  manifest["channels"] = set.montage.channel_names;
  manifest["n_trials"] = set.n_trials;
  manifest["samples_per_trial"] = set.n_samples;
  manifest["classes"] = set.class_names;
  manifest["labels"] = set.labels;

  {
    std::ofstream out(prefix + ".json", std::ios::binary | std::ios::trunc);
    if (!out) throw DataFormatError("cannot write " + prefix + ".json");
    out << manifest.dump(2) << "\n";
    if (!out) throw DataFormatError("failed to write " + prefix + ".json");
  }
  {
    std::ofstream out(prefix + ".f32", std::ios::binary | std::ios::trunc);
    if (!out) throw DataFormatError("cannot write " + prefix + ".f32");
    out.write(reinterpret_cast<const char*>(set.samples.data()),
              static_cast<std::streamsize>(set.samples.size() * sizeof(float)));
    if (!out) throw DataFormatError("failed to write " + prefix + ".f32");
  }
}

EpochSet load_epochset(const std::string& path) {
  const std::string prefix = dataset_prefix(path);

  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_all(prefix + ".json"));
  } catch (const nlohmann::json::exception& e) {
    throw DataFormatError("bad manifest " + prefix + ".json: " + e.what());
  }

  try {
    if (manifest.at("magic").get<std::string>() != kMagic) {
      throw DataFormatError("magic mismatch in " + prefix + ".json");
    }
    EpochSet set;
    set.fs_hz = manifest.at("fs_hz").get<double>();
    set.montage.channel_names = manifest.at("channels").get<std::vector<std::string>>();
    set.n_channels = set.montage.size();
    set.n_trials = manifest.at("n_trials").get<size_t>();
    set.n_samples = manifest.at("samples_per_trial").get<size_t>();
    set.class_names = manifest.at("classes").get<std::vector<std::string>>();
    set.labels = manifest.at("labels").get<std::vector<int>>();

    const auto blob = read_all(prefix + ".f32");
    const size_t expected = set.n_trials * set.n_channels * set.n_samples;
    if (blob.size() != expected * sizeof(float)) {
      throw DataFormatError("blob length mismatch: expected " +
                            std::to_string(expected * sizeof(float)) + " bytes, got " +
                            std::to_string(blob.size()));
    }
    set.samples.resize(expected);
    std::memcpy(set.samples.data(), blob.data(), blob.size());

    try {
      set.validate();
    } catch (const std::exception& e) {
      throw DataFormatError(std::string("invalid dataset: ") + e.what());
    }
    return set;
  } catch (const nlohmann::json::exception& e) {
    throw DataFormatError("bad manifest " + prefix + ".json: " + e.what());
  }
}

}  // namespace fcdn
