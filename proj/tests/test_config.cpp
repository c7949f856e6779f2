#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "fcdn/pipeline.hpp"

using namespace fcdn;

namespace {

std::string write_temp(const std::string& name, const std::string& text) {
  auto dir = std::filesystem::temp_directory_path() / "fcdn_config_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / name).string();
  std::ofstream(path, std::ios::trunc) << text;
  return path;
}

}  // namespace

TEST_CASE("defaults cover every key and are typed") {
  RunConfig cfg;
  CHECK(cfg.get_u64("seed") == 1);
  CHECK(cfg.get_int("train.epochs") == 200);
  CHECK(cfg.get_int("train.batch") == 16);
  CHECK(cfg.get_real("train.lr") == doctest::Approx(0.0001));
  CHECK(cfg.get_real("model.dropout") == doctest::Approx(0.5));
  CHECK(cfg.get_size_list("model.conv_channels") == std::vector<size_t>{40, 80, 160});
  CHECK_FALSE(cfg.get_bool("pseudo.strict"));
}

TEST_CASE("unknown keys are rejected everywhere") {
  RunConfig cfg;
  CHECK_THROWS_AS(cfg.set("nope", "1"), ConfigError);
  CHECK_THROWS_AS(cfg.get_str("nope"), ConfigError);
  const auto path = write_temp("unknown.cfg", "mystery.key = 5\n");
  RunConfig cfg2;
  CHECK_THROWS_AS(cfg2.load_file(path), ConfigError);
}

TEST_CASE("file parsing: comments, blanks, and whitespace") {
  const auto path = write_temp("ok.cfg",
                               "# a comment\n"
                               "\n"
                               "seed = 42   # trailing comment\n"
                               "  train.epochs=7\n");
  RunConfig cfg;
  cfg.load_file(path);
  CHECK(cfg.get_u64("seed") == 42);
  CHECK(cfg.get_int("train.epochs") == 7);

  const auto bad = write_temp("bad.cfg", "train.epochs 7\n");
  RunConfig cfg2;
  CHECK_THROWS_AS(cfg2.load_file(bad), ConfigError);
}

TEST_CASE("flags win over the file, file wins over defaults") {
  const auto path = write_temp("prec.cfg", "seed = 5\ntrain.batch = 4\n");
  RunConfig cfg;
  cfg.load_file(path);
  cfg.set("seed", "9");  // flag-style override
  CHECK(cfg.get_u64("seed") == 9);
  CHECK(cfg.get_int("train.batch") == 4);
  CHECK(cfg.get_int("train.epochs") == 200);  // untouched default
}

TEST_CASE("type errors carry the key name") {
  RunConfig cfg;
  cfg.set("train.epochs", "many");
  try {
    cfg.get_int("train.epochs");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("train.epochs") != std::string::npos);
  }
}

TEST_CASE("dump and hash are deterministic and order-independent") {
  RunConfig a, b;
  a.set("seed", "3");
  a.set("train.lr", "0.01");
  b.set("train.lr", "0.01");
  b.set("seed", "3");
  CHECK(a.dump() == b.dump());
  CHECK(a.hash() == b.hash());
  b.set("seed", "4");
  CHECK(a.hash() != b.hash());
}

TEST_CASE("band specs parse and validate") {
  RunConfig cfg;
  auto bands = bands_from_config(cfg);
  REQUIRE(bands.size() == 3);
  CHECK(bands[0].name == "delta");
  CHECK(bands[2].f_hi_hz == 13.0);

  cfg.set("bands.spec", "a:1-4,b:4-8");
  CHECK_THROWS_AS(bands_from_config(cfg), ConfigError);
  cfg.set("bands.spec", "a:1-4,b:4-8,c:badness");
  CHECK_THROWS_AS(bands_from_config(cfg), ConfigError);
}

TEST_CASE("synth couplings: auto plan and explicit entries") {
  RunConfig cfg;
  auto spec = synth_from_config(cfg);
  CHECK(spec.couplings.size() == 4);
  CHECK(spec.couplings[0].band.name == "theta");
  CHECK(spec.couplings[1].band.name == "alpha");

  cfg.set("synth.couplings", "0:0:1:alpha:0.5:1.0;1:2:3:theta:1.0:0.5");
  auto spec2 = synth_from_config(cfg);
  REQUIRE(spec2.couplings.size() == 2);
  CHECK(spec2.couplings[1].ch_b == 3);
  CHECK(spec2.couplings[1].amplitude == 0.5);

  cfg.set("synth.couplings", "0:0:1:gamma:0.5:1.0");
  CHECK_THROWS_AS(synth_from_config(cfg), ConfigError);
  cfg.set("synth.couplings", "0:0:1:alpha:0.5");
  CHECK_THROWS_AS(synth_from_config(cfg), ConfigError);
}

TEST_CASE("model config adapter validates shape parameters") {
  RunConfig cfg;
  auto m = model_from_config(cfg, 64, 1000, 4);
  CHECK(m.conv_channels[2] == 160);
  CHECK(m.resize == 224);

  cfg.set("model.pool_widths", "32");
  CHECK_THROWS_AS(model_from_config(cfg, 64, 1000, 4), ConfigError);
  cfg.set("model.pool_widths", "32,30");
  cfg.set("model.distill_sign", "sideways");
  CHECK_THROWS_AS(model_from_config(cfg, 64, 1000, 4), ConfigError);
  cfg.set("model.distill_sign", "paper-literal");
  CHECK(model_from_config(cfg, 64, 1000, 4).distill_sign_paper_literal);
  cfg.set("model.resize", "30");  // not divisible by patch 16
  CHECK_THROWS_AS(model_from_config(cfg, 64, 1000, 4), ConfigError);
}
