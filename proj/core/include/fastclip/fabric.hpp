#pragma once

#include <condition_variable>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fastclip/errors.hpp"

namespace fastclip::dist {

enum class Primitive { all_gather, all_reduce, reduce_scatter };

const char* primitive_name(Primitive p);

// Ring-collective wire cost in scalar elements. These are the exact counts
// the ledger asserts on: every worker's payload reaches K-1 peers for a
// gather, a reduce moves each element twice around the ring, and a
// reduce-scatter ships K-1 shards per worker.
std::uint64_t all_gather_wire(int world, std::uint64_t payload);
std::uint64_t all_reduce_wire(int world, std::uint64_t payload);
std::uint64_t reduce_scatter_wire(int world, std::uint64_t shard);

struct LedgerRecord {
  std::string phase;
  Primitive primitive;
  int world;
  std::uint64_t elements;

  std::uint64_t bytes() const { return elements * 8; }  // doubles on the wire
};

// Exact per-collective accounting of scalar elements moved over the
// simulated wire. Not synchronized; the fabric serializes mutation at the
// rendezvous and readers must be quiescent.
class CommLedger {
 public:
  void add(std::string phase, Primitive primitive, int world, std::uint64_t elements);

  const std::vector<LedgerRecord>& records() const { return records_; }
  std::uint64_t total_elements() const;
  std::uint64_t total_bytes() const { return total_elements() * 8; }
  std::uint64_t phase_elements(std::string_view phase) const;
  std::uint64_t primitive_elements(Primitive p) const;
  void clear() { records_.clear(); }

  // One line per record: phase primitive world elements bytes.
  void write_text(std::ostream& os) const;

 private:
  std::vector<LedgerRecord> records_;
};

// Fixed-order combination helpers (ascending worker id); the rendezvous and
// the unit tests share these so collective results are independent of
// arrival order by construction.
std::vector<double> gather_concat(const std::vector<std::vector<double>>& payloads);
std::vector<double> reduce_mean(const std::vector<std::vector<double>>& payloads);
std::vector<std::vector<double>> reduce_scatter_mean_combine(
    const std::vector<std::vector<double>>& payloads);

// Simulated K-worker data-parallel fabric. Worker bodies run as threads (or
// inline for K=1) and meet at collectives; no worker proceeds past a
// collective until all have arrived, and all observe identical combined
// values. A failing worker poisons the fabric so peers unwind instead of
// blocking forever.
class Fabric {
 public:
  explicit Fabric(int world);

  int world_size() const { return world_; }

  // Safe while workers are quiescent (before run_workers or after it returns).
  CommLedger& ledger() { return ledger_; }
  const CommLedger& ledger() const { return ledger_; }
  // Safe to call from a worker between collectives.
  std::uint64_t ledger_total_elements() const;

  std::vector<double> all_gather(int worker, std::string_view phase,
                                 std::span<const double> payload);
  std::vector<double> all_reduce_mean(int worker, std::string_view phase,
                                      std::span<const double> payload);
  double all_reduce_mean_scalar(int worker, std::string_view phase, double value);
  // Payload is K shards of equal size; worker k receives the element-wise
  // mean of everyone's shard k.
  std::vector<double> reduce_scatter_mean(int worker, std::string_view phase,
                                          std::span<const double> payload);
  void barrier(int worker);

  // Runs body(k) for k in [0, world); rethrows the first worker failure.
  void run_workers(const std::function<void(int)>& body);

  void poison(std::exception_ptr error);

 private:
  struct Op {
    bool is_barrier = false;
    Primitive primitive = Primitive::all_gather;
    std::string phase;
    std::size_t payload_size = 0;
  };

  // Runs one rendezvous round; returns this worker's result.
  std::vector<double> rendezvous(int worker, const Op& op, std::span<const double> payload);
  void check_poison_locked() const;

  int world_;
  CommLedger ledger_;

  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::optional<Op> op_;
  std::vector<std::span<const double>> deposits_;
  std::vector<double> combined_;
  std::vector<std::vector<double>> shards_;
  int arrived_ = 0;
  int exited_ = 0;
  bool results_ready_ = false;
  bool poisoned_ = false;
  std::exception_ptr poison_;
};

}  // namespace fastclip::dist
