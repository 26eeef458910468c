#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fastclip/checkpoint.hpp"
#include "fastclip/config.hpp"
#include "fastclip/dataset.hpp"
#include "fastclip/encoder.hpp"
#include "fastclip/fabric.hpp"
#include "fastclip/metrics.hpp"
#include "fastclip/optimizers.hpp"
#include "fastclip/schedules.hpp"
#include "fastclip/state.hpp"

namespace fastclip::train {

enum class Variant {
  openclip_mbcl,
  sogclr,
  isogclr,
  fastclip_v0,
  fastclip_v1,
  fastclip_v2,
  fastclip_v3,
};

enum class Reduction { fastclip, openclip_rs };
enum class OptimizerKind { adamw, lamb };

Variant variant_from_string(const std::string& s);
const char* variant_name(Variant v);

// Fully resolved run parameters (no "auto" left). Produced from a RunConfig
// plus the dataset header by resolve_algo_config, or assembled directly by
// tests.
struct AlgoConfig {
  Variant variant = Variant::fastclip_v3;
  Reduction reduction = Reduction::fastclip;
  int workers = 1;
  int batch_per_worker = 32;
  long long epochs = 10;
  std::uint64_t seed = 0;

  sched::GammaSchedule gamma;
  sched::OuterLRSchedule lr;
  sched::EpsilonSchedule epsilon;
  state::TempConfig temp;

  OptimizerKind optimizer = OptimizerKind::adamw;
  opt::AdamConfig adam;
  bool scale_by_tau = true;

  int probe_size = 256;
  long long checkpoint_every = 0;
  enc::TowerShape image_tower;
  enc::TowerShape text_tower;

  int global_batch() const { return workers * batch_per_worker; }
};

AlgoConfig resolve_algo_config(const io::RunConfig& cfg, int n_pairs, int d_img, int d_txt);

// Deterministic epoch shuffling and batch slicing. The global batch sequence
// depends only on (seed, epoch, iteration); worker k takes the k-th
// contiguous slice of each global batch, so batch composition is identical
// for every worker count that divides the global batch.
class BatchPlan {
 public:
  BatchPlan(int n_train, int global_batch, std::uint64_t seed);

  int iters_per_epoch() const { return n_train_ / batch_; }
  int global_batch_size() const { return batch_; }
  std::vector<int> epoch_permutation(long long epoch) const;
  std::vector<int> global_batch_indices(long long epoch, long long iter) const;
  std::vector<int> local_batch(long long epoch, long long iter, int worker, int world) const;

 private:
  int n_train_;
  int batch_;
  std::uint64_t seed_;
};

// Hook for equivalence harnesses: called by worker 0 after each optimizer
// step with the reduced gradient and the post-step replica state.
struct StepObserver {
  std::function<void(long long global_step, const Vector& reduced_grad, const Vector& params,
                     double tau)>
      on_step;
};

struct TrainResult {
  std::vector<io::EpochMetrics> metrics;
  io::Checkpoint final_state;
  dist::CommLedger ledger;
};

class Trainer {
 public:
  Trainer(const io::PairDataset& dataset, AlgoConfig cfg);

  const AlgoConfig& config() const { return cfg_; }
  int train_pairs() const { return n_train_; }
  int iters_per_epoch() const;

  // Runs the configured number of epochs (continuing from `resume` if given)
  // and returns metrics plus the final state. `checkpoint_sink`, when set,
  // receives periodic checkpoints per cfg.checkpoint_every.
  TrainResult run(const StepObserver* observer = nullptr,
                  const io::Checkpoint* resume = nullptr,
                  const std::function<void(const io::Checkpoint&)>& checkpoint_sink = nullptr);

 private:
  const io::PairDataset& data_;
  AlgoConfig cfg_;
  int n_train_ = 0;

  void validate() const;
};

}  // namespace fastclip::train
