#pragma once

#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "fastclip/common.hpp"
#include "fastclip/errors.hpp"
#include "fastclip/optimizers.hpp"

namespace fastclip::state {

// Pair-index -> worker assignment for the current epoch. Writers touch only
// their own indices between collectives, so disjoint assignment is what makes
// the shared tables race-free.
class OwnerMap {
 public:
  explicit OwnerMap(int n) : owner_(n, -1) {}

  int size() const { return static_cast<int>(owner_.size()); }
  void clear() { std::fill(owner_.begin(), owner_.end(), -1); }
  void assign(int pair, int worker) { owner_.at(pair) = worker; }
  int owner_of(int pair) const { return owner_.at(pair); }

  // True iff every index is assigned to some worker in [0, world).
  bool is_partition(int world) const;

 private:
  std::vector<int> owner_;
};

// Moving-average estimators u1/u2 tracking the inner contrastive means, one
// slot per dataset pair, starting from u0 = 0. Only the owning worker may
// update an index; snapshots require values freshly updated at the current
// step so a gather can never ship stale estimates.
class UTable {
 public:
  explicit UTable(int n);

  int size() const { return static_cast<int>(u1_.size()); }
  OwnerMap& owners() { return owners_; }
  const OwnerMap& owners() const { return owners_; }

  // u <- (1-gamma)*u + gamma*g for both tracks.
  void update(int pair, double g1, double g2, double gamma, int worker, long long step);

  std::pair<double, double> at(int pair) const { return {u1_[pair], u2_[pair]}; }
  const Vector& u1() const { return u1_; }
  const Vector& u2() const { return u2_; }

  // Post-update values for the given indices, in the given order. Throws
  // StalenessError if any index was not updated at `step`.
  void snapshot(std::span<const int> indices, long long step, Vector& u1_out,
                Vector& u2_out) const;

  // Flat binary dump: n, u1[], u2[]. Freshness marks are reset on load.
  void write(std::ostream& os) const;
  static UTable read(std::istream& is);

  // Wholesale replacement (checkpoint resume); freshness marks reset.
  void load(const Vector& u1, const Vector& u2);

 private:
  Vector u1_;
  Vector u2_;
  std::vector<long long> last_step_;
  OwnerMap owners_;
};

enum class TempScheme {
  constant,             // fixed tau (SogCLR / FastCLIP-v1)
  global_learnable_v0,  // scalar tau, unscaled-loss gradient (also the MBCL baseline)
  global_learnable_v3,  // scalar tau, margin-regularized gradient
  individual_v2,        // per-pair (tau1, tau2)
};

struct TempConfig {
  TempScheme scheme = TempScheme::constant;
  double init = 0.03;
  double tau0 = 0.005;  // projection floor
  double rho = 0.0;     // margin, v2/v3 only
  double lr = 0.0;
  bool lr_decay_enabled = false;
  double lr_decay_threshold = 0.03;
  double lr_decay_factor = 1.0 / 3.0;

  void validate() const;
};

// Individualized temperatures with one sparse Adam slot per track and pair.
// Indices never sampled keep zero moments and the initial temperature.
class IndividualTemp {
 public:
  IndividualTemp() = default;
  IndividualTemp(int n, double init, double tau0);

  bool enabled() const { return tau1_.size() > 0; }
  int size() const { return static_cast<int>(tau1_.size()); }
  const Vector& tau1() const { return tau1_; }
  const Vector& tau2() const { return tau2_; }

  void snapshot(std::span<const int> indices, Vector& tau1_out, Vector& tau2_out) const;

  // Adam step (weight decay 0) on both tracks of one pair, then projection
  // onto [tau0, inf). Only the owner may call.
  void update(int pair, double grad_tau1, double grad_tau2, double lr,
              const opt::AdamConfig& cfg, int worker, const OwnerMap& owners);

  const std::vector<opt::ScalarAdam>& adam1() const { return adam1_; }
  const std::vector<opt::ScalarAdam>& adam2() const { return adam2_; }

  void write(std::ostream& os) const;
  static IndividualTemp read(std::istream& is);

 private:
  Vector tau1_;
  Vector tau2_;
  std::vector<opt::ScalarAdam> adam1_;
  std::vector<opt::ScalarAdam> adam2_;
  double tau0_ = 0.0;
};

}  // namespace fastclip::state
