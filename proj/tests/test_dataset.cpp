#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "fcdn/dataset_io.hpp"
#include "fcdn/rng.hpp"

using namespace fcdn;

namespace {

std::filesystem::path temp_dir() {
  auto dir = std::filesystem::temp_directory_path() / "fcdn_dataset_test";
  std::filesystem::create_directories(dir);
  return dir;
}

EpochSet tiny_set() {
  EpochSet s = EpochSet::empty(250.0, 2, 2, 4);
  s.class_names = {"class-1", "class-2"};
  s.montage.channel_names = {"Fz", "Oz"};
  s.labels = {0, 1};
  Rng rng(3);
  for (auto& v : s.samples) v = static_cast<float>(rng.normal());
  return s;
}

std::vector<char> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

TEST_CASE("save/load round-trips bit-exactly") {
  const auto prefix = (temp_dir() / "roundtrip").string();
  const EpochSet s = tiny_set();
  save_epochset(s, prefix);
  const EpochSet r = load_epochset(prefix);
  CHECK(r.fs_hz == s.fs_hz);
  CHECK(r.samples == s.samples);
  CHECK(r.labels == s.labels);
  CHECK(r.class_names == s.class_names);
  CHECK(r.montage.channel_names == s.montage.channel_names);

  // Container round-trip: saving the loaded set reproduces both files byte
  // for byte.
  const auto prefix2 = (temp_dir() / "roundtrip2").string();
  save_epochset(r, prefix2);
  CHECK(slurp(prefix + ".json") == slurp(prefix2 + ".json"));
  CHECK(slurp(prefix + ".f32") == slurp(prefix2 + ".f32"));
}

TEST_CASE("manifest carries the declared dimensions") {
  const auto prefix = (temp_dir() / "dims").string();
  EpochSet s = EpochSet::empty(250.0, 1, 64, 1000);
  for (size_t k = 0; k < 64; ++k) s.montage.channel_names.push_back("e" + std::to_string(k));
  s.class_names = {"a", "b"};
  s.labels = {1};
  save_epochset(s, prefix);

  std::ifstream in(prefix + ".json");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  CHECK(text.find("\"n_trials\": 1") != std::string::npos);
  CHECK(text.find("\"samples_per_trial\": 1000") != std::string::npos);
  CHECK(text.find("\"magic\": \"fcdn-eeg/1\"") != std::string::npos);

  const EpochSet r = load_epochset(prefix);
  CHECK(r.n_channels == 64);
  CHECK(r.n_samples == 1000);
}

TEST_CASE("empty set is rejected on save") {
  EpochSet s;
  CHECK_THROWS_WITH_AS(save_epochset(s, (temp_dir() / "none").string()), "empty set",
                       std::invalid_argument);
}

TEST_CASE("truncated blob is rejected") {
  const auto prefix = (temp_dir() / "trunc").string();
  save_epochset(tiny_set(), prefix);
  // Chop one float off the blob.
  const auto blob = slurp(prefix + ".f32");
  std::ofstream out(prefix + ".f32", std::ios::binary | std::ios::trunc);
  out.write(blob.data(), static_cast<std::streamsize>(blob.size() - sizeof(float)));
  out.close();
  CHECK_THROWS_AS(load_epochset(prefix), DataFormatError);
  try {
    load_epochset(prefix);
  } catch (const DataFormatError& e) {
    CHECK(std::string(e.what()).find("blob length mismatch") != std::string::npos);
  }
}

TEST_CASE("magic and label range are enforced") {
  const auto dir = temp_dir();
  const auto prefix = (dir / "bad").string();
  save_epochset(tiny_set(), prefix);

  SUBCASE("magic mismatch") {
    auto text = slurp(prefix + ".json");
    std::string str(text.begin(), text.end());
    const auto pos = str.find("fcdn-eeg/1");
    str.replace(pos, 10, "fcdn-eeg/9");
    std::ofstream(prefix + ".json", std::ios::trunc) << str;
    CHECK_THROWS_AS(load_epochset(prefix), DataFormatError);
  }
  SUBCASE("label out of range") {
    auto text = slurp(prefix + ".json");
    auto manifest = nlohmann::ordered_json::parse(std::string(text.begin(), text.end()));
    manifest["labels"][0] = 2;  // == C
    std::ofstream(prefix + ".json", std::ios::trunc) << manifest.dump(2) << "\n";
    CHECK_THROWS_AS(load_epochset(prefix), DataFormatError);
    try {
      load_epochset(prefix);
    } catch (const DataFormatError& e) {
      CHECK(std::string(e.what()).find("label out of range") != std::string::npos);
    }
  }
}

TEST_CASE("directory paths resolve to <dir>/dataset") {
  const auto dir = temp_dir() / "as_dir";
  std::filesystem::create_directories(dir);
  save_epochset(tiny_set(), dir.string());
  CHECK(std::filesystem::exists(dir / "dataset.json"));
  const EpochSet r = load_epochset(dir.string());
  CHECK(r.n_trials == 2);
}
