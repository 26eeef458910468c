#pragma once

#include <cstdint>

#include "fastclip/errors.hpp"

namespace fastclip::sched {

// Inner learning rate for the moving-average estimators. The cosine kind
// decays once per epoch: gamma(t) = 0.5*(1+cos(pi*epoch/E))*(1-min)+min with
// epoch = floor(t / iters_per_epoch), clamped to min once epoch >= E.
struct GammaSchedule {
  enum class Kind { constant, cosine };
  Kind kind = Kind::cosine;
  double constant = 0.6;     // used by Kind::constant, must be in (0,1]
  double gamma_min = 0.2;    // cosine floor, in (0,1]
  long long decay_epochs = 1;
  long long iters_per_epoch = 1;

  void validate() const;
  double at(long long t) const;
};

// Linear warmup from 0 to peak over warmup_iters, then cosine decay to
// min_lr at total_iters. Past total_iters the value stays at min_lr.
struct OuterLRSchedule {
  double peak_lr = 1e-3;
  double min_lr = 0.0;
  long long warmup_iters = 0;
  long long total_iters = 1;

  void validate() const;
  double at(long long t) const;
};

// Step schedule for the epsilon constant inside log(epsilon + u).
struct EpsilonSchedule {
  double initial = 1e-14;
  double late = 1e-14;
  long long switch_epoch = kNever;  // first epoch that uses `late`

  static constexpr long long kNever = -1;

  void validate() const;
  double at(long long epoch) const;
};

// One-way latch for the temperature learning rate: once tau has been observed
// below the threshold the modifier stays at `factor` for the rest of the run.
struct TauLrLatch {
  double threshold = 0.03;
  double factor = 1.0 / 3.0;
  bool latched = false;

  double modifier(double current_tau) {
    if (current_tau < threshold) latched = true;
    return latched ? factor : 1.0;
  }
};

}  // namespace fastclip::sched
