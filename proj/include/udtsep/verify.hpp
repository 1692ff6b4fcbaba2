#pragma once

#include <string>
#include <vector>

namespace udtsep {

struct GradCheckEntry {
  std::string name;
  double error = 0;
  double threshold = 0;
  bool pass = false;
};

struct GradCheckOptions {
  bool run_double = true;  // layer primitives + composite loss at < 1e-6
  bool run_single = true;  // same suite at < 1e-3
  bool quick = false;      // tiny composite model, for fast tests
  bool inject_fault = false;  // negative control: adds one deliberately wrong rule
  std::size_t param_coords = 16;  // sampled coordinates per parameter tensor
  std::size_t input_coords = 128; // sampled coordinates of each input spectrogram
};

// Central-difference checks over every layer primitive plus the composite
// loss on a reduced model (64 channels, 64 bins, T=16). The 32-bit composite
// entries compare the float gradient path against the FD-verified double
// path, coordinate by coordinate.
std::vector<GradCheckEntry> run_grad_check_suite(const GradCheckOptions& opt);

bool all_passed(const std::vector<GradCheckEntry>& entries);

}  // namespace udtsep
