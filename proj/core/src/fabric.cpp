#include "fastclip/fabric.hpp"

#include <algorithm>
#include <ostream>
#include <thread>

namespace fastclip::dist {

const char* primitive_name(Primitive p) {
  switch (p) {
    case Primitive::all_gather: return "all_gather";
    case Primitive::all_reduce: return "all_reduce";
    case Primitive::reduce_scatter: return "reduce_scatter";
  }
  return "?";
}

std::uint64_t all_gather_wire(int world, std::uint64_t payload) {
  return static_cast<std::uint64_t>(world) * static_cast<std::uint64_t>(world - 1) * payload;
}

std::uint64_t all_reduce_wire(int world, std::uint64_t payload) {
  return 2ULL * static_cast<std::uint64_t>(world - 1) * payload;
}

std::uint64_t reduce_scatter_wire(int world, std::uint64_t shard) {
  return static_cast<std::uint64_t>(world) * static_cast<std::uint64_t>(world - 1) * shard;
}

void CommLedger::add(std::string phase, Primitive primitive, int world, std::uint64_t elements) {
  records_.push_back({std::move(phase), primitive, world, elements});
}

std::uint64_t CommLedger::total_elements() const {
  std::uint64_t acc = 0;
  for (const auto& r : records_) acc += r.elements;
  return acc;
}

std::uint64_t CommLedger::phase_elements(std::string_view phase) const {
  std::uint64_t acc = 0;
  for (const auto& r : records_) {
    if (r.phase == phase) acc += r.elements;
  }
  return acc;
}

std::uint64_t CommLedger::primitive_elements(Primitive p) const {
  std::uint64_t acc = 0;
  for (const auto& r : records_) {
    if (r.primitive == p) acc += r.elements;
  }
  return acc;
}

void CommLedger::write_text(std::ostream& os) const {
  os << "# phase primitive world elements bytes\n";
  for (const auto& r : records_) {
    os << r.phase << ' ' << primitive_name(r.primitive) << ' ' << r.world << ' ' << r.elements
       << ' ' << r.bytes() << '\n';
  }
}

std::vector<double> gather_concat(const std::vector<std::vector<double>>& payloads) {
  std::vector<double> out;
  std::size_t total = 0;
  for (const auto& p : payloads) total += p.size();
  out.reserve(total);
  for (const auto& p : payloads) out.insert(out.end(), p.begin(), p.end());
  return out;
}

std::vector<double> reduce_mean(const std::vector<std::vector<double>>& payloads) {
  const std::size_t n = payloads.front().size();
  std::vector<double> out(n, 0.0);
  for (const auto& p : payloads) {
    if (p.size() != n) throw CollectiveShapeError("all_reduce: payload sizes differ");
    for (std::size_t i = 0; i < n; ++i) out[i] += p[i];
  }
  const double inv = 1.0 / static_cast<double>(payloads.size());
  for (double& x : out) x *= inv;
  return out;
}

std::vector<std::vector<double>> reduce_scatter_mean_combine(
    const std::vector<std::vector<double>>& payloads) {
  const std::size_t world = payloads.size();
  const std::size_t n = payloads.front().size();
  if (n % world != 0) throw CollectiveShapeError("reduce_scatter: payload not divisible");
  const std::size_t shard = n / world;
  std::vector<std::vector<double>> out(world, std::vector<double>(shard, 0.0));
  for (const auto& p : payloads) {
    if (p.size() != n) throw CollectiveShapeError("reduce_scatter: payload sizes differ");
    for (std::size_t w = 0; w < world; ++w) {
      for (std::size_t i = 0; i < shard; ++i) out[w][i] += p[w * shard + i];
    }
  }
  const double inv = 1.0 / static_cast<double>(world);
  for (auto& s : out) {
    for (double& x : s) x *= inv;
  }
  return out;
}

Fabric::Fabric(int world) : world_(world), deposits_(static_cast<std::size_t>(world)) {
  if (world < 1) throw ConfigError("fabric.workers", "worker count must be >= 1");
}

std::uint64_t Fabric::ledger_total_elements() const {
  std::lock_guard lk(mu_);
  return ledger_.total_elements();
}

void Fabric::check_poison_locked() const {
  if (poisoned_) throw CollectiveAborted();
}

std::vector<double> Fabric::rendezvous(int worker, const Op& op, std::span<const double> payload) {
  if (worker < 0 || worker >= world_) throw ShapeError("fabric: bad worker id");
  std::unique_lock lk(mu_);
  check_poison_locked();

  // Don't enter a new round while stragglers are still copying the previous
  // round's results.
  cv_.wait(lk, [&] { return poisoned_ || !results_ready_; });
  check_poison_locked();

  if (arrived_ == 0) {
    op_ = op;
  } else if (op_->is_barrier != op.is_barrier || op_->primitive != op.primitive ||
             op_->phase != op.phase ||
             (!op.is_barrier && op_->payload_size != op.payload_size)) {
    poisoned_ = true;
    poison_ = std::make_exception_ptr(
        CollectiveShapeError("collective mismatch: workers disagree on op/phase/payload size"));
    cv_.notify_all();
    std::rethrow_exception(poison_);
  }
  deposits_[static_cast<std::size_t>(worker)] = payload;
  ++arrived_;

  if (arrived_ == world_) {
    // Last arriver combines in ascending worker order and books the wire cost.
    try {
      if (!op.is_barrier) {
        std::vector<std::vector<double>> all;
        all.reserve(static_cast<std::size_t>(world_));
        for (const auto& d : deposits_) all.emplace_back(d.begin(), d.end());
        switch (op.primitive) {
          case Primitive::all_gather:
            combined_ = gather_concat(all);
            ledger_.add(op.phase, op.primitive, world_,
                        all_gather_wire(world_, op.payload_size));
            break;
          case Primitive::all_reduce:
            combined_ = reduce_mean(all);
            ledger_.add(op.phase, op.primitive, world_,
                        all_reduce_wire(world_, op.payload_size));
            break;
          case Primitive::reduce_scatter:
            shards_ = reduce_scatter_mean_combine(all);
            ledger_.add(op.phase, op.primitive, world_,
                        reduce_scatter_wire(world_, op.payload_size / world_));
            break;
        }
      }
    } catch (...) {
      poisoned_ = true;
      poison_ = std::current_exception();
      cv_.notify_all();
      throw;
    }
    results_ready_ = true;
    exited_ = 0;
    cv_.notify_all();
  } else {
    cv_.wait(lk, [&] { return poisoned_ || results_ready_; });
    check_poison_locked();
  }

  std::vector<double> result;
  if (!op.is_barrier) {
    result = op.primitive == Primitive::reduce_scatter
                 ? shards_[static_cast<std::size_t>(worker)]
                 : combined_;
  }
  if (++exited_ == world_) {
    results_ready_ = false;
    arrived_ = 0;
    op_.reset();
    combined_.clear();
    shards_.clear();
    cv_.notify_all();
  }
  return result;
}

std::vector<double> Fabric::all_gather(int worker, std::string_view phase,
                                       std::span<const double> payload) {
  Op op{false, Primitive::all_gather, std::string(phase), payload.size()};
  return rendezvous(worker, op, payload);
}

std::vector<double> Fabric::all_reduce_mean(int worker, std::string_view phase,
                                            std::span<const double> payload) {
  Op op{false, Primitive::all_reduce, std::string(phase), payload.size()};
  return rendezvous(worker, op, payload);
}

double Fabric::all_reduce_mean_scalar(int worker, std::string_view phase, double value) {
  return all_reduce_mean(worker, phase, std::span<const double>(&value, 1))[0];
}

std::vector<double> Fabric::reduce_scatter_mean(int worker, std::string_view phase,
                                                std::span<const double> payload) {
  if (payload.size() % static_cast<std::size_t>(world_) != 0) {
    throw CollectiveShapeError("reduce_scatter: payload must be world_size shards");
  }
  Op op{false, Primitive::reduce_scatter, std::string(phase), payload.size()};
  return rendezvous(worker, op, payload);
}

void Fabric::barrier(int worker) {
  Op op{true, Primitive::all_gather, "barrier", 0};
  rendezvous(worker, op, {});
}

void Fabric::poison(std::exception_ptr error) {
  std::lock_guard lk(mu_);
  if (!poisoned_) {
    poisoned_ = true;
    poison_ = std::move(error);
  }
  cv_.notify_all();
}

void Fabric::run_workers(const std::function<void(int)>& body) {
  if (world_ == 1) {
    body(0);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(world_));
  for (int k = 0; k < world_; ++k) {
    threads.emplace_back([this, &body, k] {
      try {
        body(k);
      } catch (const CollectiveAborted&) {
        // Root cause already recorded by the poisoning worker.
      } catch (...) {
        poison(std::current_exception());
      }
    });
  }
  for (auto& t : threads) t.join();
  std::lock_guard lk(mu_);
  if (poisoned_ && poison_) std::rethrow_exception(poison_);
}

}  // namespace fastclip::dist
