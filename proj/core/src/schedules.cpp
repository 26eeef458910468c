#include "fastclip/schedules.hpp"

#include <cmath>

namespace fastclip::sched {

namespace {
constexpr double kPi = 3.141592653589793238462643383279502884;
}

void GammaSchedule::validate() const {
  if (kind == Kind::constant) {
    if (!(constant > 0.0) || constant > 1.0) {
      throw ConfigError("gamma.value", "constant gamma must be in (0,1]");
    }
    return;
  }
  if (!(gamma_min > 0.0) || gamma_min > 1.0) {
    throw ConfigError("gamma.min", "gamma_min must be in (0,1]");
  }
  if (decay_epochs <= 0) throw ConfigError("gamma.decay_epochs", "must be positive");
  if (iters_per_epoch <= 0) throw ConfigError("gamma.iters_per_epoch", "must be positive");
}

double GammaSchedule::at(long long t) const {
  if (kind == Kind::constant) return constant;
  const long long epoch = t / iters_per_epoch;
  if (epoch >= decay_epochs) return gamma_min;
  const double frac = static_cast<double>(epoch) / static_cast<double>(decay_epochs);
  return 0.5 * (1.0 + std::cos(kPi * frac)) * (1.0 - gamma_min) + gamma_min;
}

void OuterLRSchedule::validate() const {
  if (peak_lr < 0.0) throw ConfigError("optimizer.lr", "must be non-negative");
  if (min_lr < 0.0) throw ConfigError("optimizer.min_lr", "must be non-negative");
  if (total_iters <= 0) throw ConfigError("optimizer.total_iters", "must be positive");
  if (warmup_iters < 0 || warmup_iters >= total_iters) {
    throw ConfigError("optimizer.warmup_iters", "must be in [0, total_iters)");
  }
}

double OuterLRSchedule::at(long long t) const {
  if (t <= 0 && warmup_iters > 0) return 0.0;
  if (t < warmup_iters) {
    return peak_lr * static_cast<double>(t) / static_cast<double>(warmup_iters);
  }
  if (t >= total_iters) return min_lr;
  if (t == warmup_iters) return peak_lr;
  const double span = static_cast<double>(total_iters - warmup_iters);
  const double frac = static_cast<double>(t - warmup_iters) / span;
  return min_lr + 0.5 * (peak_lr - min_lr) * (1.0 + std::cos(kPi * frac));
}

void EpsilonSchedule::validate() const {
  if (initial < 0.0) throw ConfigError("loss.epsilon", "must be non-negative");
  if (late < 0.0) throw ConfigError("loss.epsilon_late", "must be non-negative");
  if (switch_epoch < 0 && switch_epoch != kNever) {
    throw ConfigError("loss.epsilon_switch_epoch", "must be non-negative or unset");
  }
}

double EpsilonSchedule::at(long long epoch) const {
  if (switch_epoch == kNever) return initial;
  return epoch < switch_epoch ? initial : late;
}

}  // namespace fastclip::sched
