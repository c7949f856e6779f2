#include "fcdn/config.hpp"

#include <fstream>
#include <sstream>

namespace fcdn {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

const std::vector<RunConfig::KeySpec>& RunConfig::known_keys() {
  static const std::vector<KeySpec> keys = {
      {"seed", "1", "global RNG seed; every derived stream comes from it"},
      {"bands.spec", "delta:0.5-4,theta:4-8,alpha:8-13",
       "three band definitions, name:lo-hi comma separated"},

      {"synth.channels", "8", "synthetic generator: channel count"},
      {"synth.samples", "1250", "synthetic generator: samples per trial (5 s at 250 Hz)"},
      {"synth.fs_hz", "250", "synthetic generator: sampling rate"},
      {"synth.per_class", "200", "synthetic generator: trials per class"},
      {"synth.classes", "4", "synthetic generator: class count"},
      {"synth.noise", "1.0", "synthetic generator: pink-noise RMS per channel"},
      {"synth.coupling_amplitude", "1.0", "synthetic generator: coupling sine amplitude"},
      {"synth.couplings", "auto",
       "coupling plan, entries class:chA:chB:band:offset_rad:amplitude joined by ';', or "
       "'auto' for one pair per class cycling through the bands"},

      {"model.conv_channels", "40,80,160", "conv block feature maps"},
      {"model.kernel_widths", "20,20,40", "conv kernel widths (third layer is same-padded)"},
      {"model.pool_widths", "32,30", "average pooling widths (must collapse time to 1)"},
      {"model.dropout", "0.5", "dropout probability after each pooling layer"},
      {"model.resize", "224", "bicubic resize target (square)"},
      {"model.patch", "16", "transformer patch size"},
      {"model.embed_dim", "192", "transformer embedding dim"},
      {"model.depth", "4", "transformer encoder layers"},
      {"model.heads", "3", "attention heads"},
      {"model.alpha", "1.0", "classification loss weight"},
      {"model.beta", "0.0", "distillation term weight (requires teacher.checkpoint when > 0)"},
      {"model.distill_sign", "agree",
       "'agree' minimizes (1-sim)*q; 'paper-literal' uses sim*q as written"},

      {"train.epochs", "200", "training epochs"},
      {"train.batch", "16", "batch size"},
      {"train.lr", "0.0001", "Adam learning rate"},
      {"train.downsample", "1", "integer decimation factor applied before the pipeline"},
      {"teacher.checkpoint", "", "teacher checkpoint path used when model.beta > 0"},

      {"augment.factor", "5", "total copies per trial including the original"},
      {"augment.sigma_rel", "0.05", "noise std relative to per-channel trial std"},

      {"analyze.channel", "", "channel name for the analyze command (required)"},
      {"analyze.f_lo", "0.1", "PSD lower frequency bound"},
      {"analyze.f_hi", "60", "PSD upper frequency bound"},
      {"analyze.onset_s", "1.0", "imagery onset within the epoch for the time-frequency map"},
      {"analyze.baseline_ms", "-500,0", "baseline window relative to the onset, milliseconds"},
      {"analyze.ersp_f_lo", "0.5", "time-frequency map lower bound"},
      {"analyze.ersp_f_hi", "50", "time-frequency map upper bound"},
      {"analyze.n_times", "400", "time points in the time-frequency map"},
      {"analyze.ersp", "true", "false: write only the PSD (short epochs)"},

      {"pseudo.window_s", "2.0", "pseudo-online window length in seconds"},
      {"pseudo.overlap", "0.5", "pseudo-online window overlap fraction"},
      {"pseudo.threshold", "0.75", "per-trial success threshold on correct-window fraction"},
      {"pseudo.strict", "false", "true: success requires fraction > threshold (not >=)"},

      {"evaluate.folds", "5", "fold count for cv5 mode"},
  };
  return keys;
}

RunConfig::RunConfig() {
  for (const auto& spec : known_keys()) values_[spec.key] = spec.default_value;
}

bool RunConfig::is_known(const std::string& key) const {
  return values_.find(key) != values_.end();
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!is_known(key)) throw ConfigError("unknown config key: " + key);
  values_[key] = value;
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line = line.substr(0, hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key = value");
    }
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

std::string RunConfig::get_str(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key: " + key);
  return it->second;
}

long RunConfig::get_int(const std::string& key) const {
  const std::string v = get_str(key);
  try {
    size_t pos = 0;
    const long r = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + " expects an integer, got '" + v + "'");
  }
}

uint64_t RunConfig::get_u64(const std::string& key) const {
  const std::string v = get_str(key);
  try {
    size_t pos = 0;
    const unsigned long long r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + " expects an unsigned integer, got '" + v + "'");
  }
}

double RunConfig::get_real(const std::string& key) const {
  const std::string v = get_str(key);
  try {
    size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config key " + key + " expects a number, got '" + v + "'");
  }
}

bool RunConfig::get_bool(const std::string& key) const {
  const std::string v = get_str(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key " + key + " expects a boolean, got '" + v + "'");
}

std::vector<size_t> RunConfig::get_size_list(const std::string& key) const {
  std::vector<size_t> out;
  for (const auto& part : split(get_str(key), ',')) {
    const std::string t = trim(part);
    try {
      size_t pos = 0;
      const unsigned long long r = std::stoull(t, &pos);
      if (pos != t.size()) throw std::invalid_argument(t);
      out.push_back(static_cast<size_t>(r));
    } catch (const std::exception&) {
      throw ConfigError("config key " + key + " expects a comma list of integers");
    }
  }
  return out;
}

std::string RunConfig::dump() const {
  std::ostringstream out;
  for (const auto& [k, v] : values_) out << k << " = " << v << "\n";
  return out.str();
}

std::string RunConfig::hash() const {
  // FNV-1a over the canonical dump.
  uint64_t h = 1469598103934665603ULL;
  for (char c : dump()) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  std::ostringstream out;
  out << std::hex << h;
  return out.str();
}

}  // namespace fcdn
