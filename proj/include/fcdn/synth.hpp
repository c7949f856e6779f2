#pragma once

#include <cstdint>
#include <vector>

#include "fcdn/types.hpp"

namespace fcdn {

// One planted phase coupling: trials of `class_index` carry a shared
// band-center oscillation on channels (ch_a, ch_b) whose phases differ by
// a fixed offset, so the pair phase-locks in that band.
struct Coupling {
  size_t class_index{0};
  size_t ch_a{0};
  size_t ch_b{0};
  BandSpec band;
  double phase_offset_rad{0.0};
  double amplitude{1.0};
};

// Plan for the synthetic phase-coupled EEG generator. Output is a pure
// function of this struct (byte-identical per seed).
struct SynthSpec {
  size_t n_channels{8};
  size_t n_samples{250};
  double fs_hz{250.0};
  size_t n_per_class{10};
  size_t n_classes{4};
  std::vector<Coupling> couplings;
  double noise_amplitude{1.0};  // per-channel RMS of the 1/f background
  uint64_t seed{1};

  void validate() const;
};

// Trials come out grouped by class (class c occupies indices
// [c*n_per_class, (c+1)*n_per_class)). Background is pink noise made by
// spectral shaping (1/sqrt(f) magnitude, random phases, inverse transform),
// scaled to exactly noise_amplitude RMS per trace.
EpochSet synth_generate(const SynthSpec& spec);

}  // namespace fcdn
