#pragma once

#include <cstdint>
#include <string>

#include "fastclip/common.hpp"
#include "fastclip/encoder.hpp"
#include "fastclip/optimizers.hpp"
#include "fastclip/state.hpp"

namespace fastclip::io {

// Full training state needed for a bitwise-reproducing resume: model
// parameters behind an architecture header, optimizer moments, the scalar
// temperature with its Adam state and decay latch, both estimator tables,
// and the RNG seed plus the epoch to continue from.
struct Checkpoint {
  std::uint64_t seed = 0;
  std::int64_t next_epoch = 0;
  std::int64_t global_step = 0;

  enc::TowerShape image_shape;
  enc::TowerShape text_shape;
  Vector params;

  Vector opt_m;
  Vector opt_v;
  std::int64_t opt_step = 0;

  double tau = 0.0;
  opt::ScalarAdam tau_adam;
  bool tau_lr_latched = false;

  Vector u1;
  Vector u2;

  bool has_individual_temp = false;
  state::IndividualTemp individual;
};

void write_checkpoint(const Checkpoint& ck, const std::string& path);
Checkpoint read_checkpoint(const std::string& path);

}  // namespace fastclip::io
