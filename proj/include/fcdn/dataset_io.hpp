#pragma once

#include <string>

#include "fcdn/types.hpp"

namespace fcdn {

// On-disk dataset container: `<prefix>.json` manifest + `<prefix>.f32` blob
// of N*K*T little-endian float32 samples (trial-major, then channel, then
// time). The pair round-trips bit-exactly.
//
// `path` may be the bare prefix, either of the two file names, or an
// existing directory (in which case `<dir>/dataset` is used).

void save_epochset(const EpochSet& set, const std::string& path);
EpochSet load_epochset(const std::string& path);

// Resolved "<prefix>" for a user-supplied path (exposed for the CLI).
std::string dataset_prefix(const std::string& path);

}  // namespace fcdn
