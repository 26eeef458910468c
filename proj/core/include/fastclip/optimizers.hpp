#pragma once

#include <span>

#include "fastclip/common.hpp"
#include "fastclip/errors.hpp"

namespace fastclip::opt {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

// First/second moment buffers for a flat parameter vector. `step` counts
// completed updates; bias correction uses (1 - beta^(step+1)) before the
// counter is bumped.
struct FlatAdamState {
  Vector m;
  Vector v;
  long long step = 0;

  explicit FlatAdamState(Eigen::Index n) : m(Vector::Zero(n)), v(Vector::Zero(n)) {}
};

// theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta).
void adamw_step(FlatAdamState& st, Vector& theta, const Vector& grad, double lr,
                const AdamConfig& cfg);

// LAMB: per-layer trust ratio |theta_l| / |r_l + wd*theta_l| applied to the
// AdamW direction. A zero-denominator layer falls back to ratio 1, and
// force_alpha_one pins every ratio to 1 (used for temperature parameters).
void lamb_step(FlatAdamState& st, Vector& theta, const Vector& grad, double lr,
               const AdamConfig& cfg, std::span<const Segment> layers,
               bool force_alpha_one = false);

struct ScalarAdam {
  double m = 0.0;
  double v = 0.0;
  long long step = 0;
};

double scalar_adamw_step(ScalarAdam& st, double theta, double grad, double lr,
                         const AdamConfig& cfg);

// Temperature update: AdamW with weight decay pinned to 0, then projection
// onto [tau0, inf).
double temperature_step(ScalarAdam& st, double tau, double grad, double lr,
                        const AdamConfig& cfg, double tau0);

}  // namespace fastclip::opt
