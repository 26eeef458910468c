#include "fastclip/state.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

namespace fastclip::state {

namespace {

void write_raw(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void read_raw(std::istream& is, void* p, std::size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!is) throw IoError("state: truncated stream");
}

void write_vector(std::ostream& os, const Vector& v) {
  const std::int64_t n = v.size();
  write_raw(os, &n, sizeof(n));
  write_raw(os, v.data(), sizeof(double) * static_cast<std::size_t>(n));
}

Vector read_vector(std::istream& is) {
  std::int64_t n = 0;
  read_raw(is, &n, sizeof(n));
  if (n < 0) throw IoError("state: negative vector length");
  Vector v(n);
  read_raw(is, v.data(), sizeof(double) * static_cast<std::size_t>(n));
  return v;
}

}  // namespace

bool OwnerMap::is_partition(int world) const {
  return std::all_of(owner_.begin(), owner_.end(),
                     [world](int w) { return w >= 0 && w < world; });
}

UTable::UTable(int n)
    : u1_(Vector::Zero(n)), u2_(Vector::Zero(n)), last_step_(n, -1), owners_(n) {}

void UTable::update(int pair, double g1, double g2, double gamma, int worker, long long step) {
  if (pair < 0 || pair >= size()) throw ShapeError("UTable::update: index out of range");
  if (owners_.owner_of(pair) != worker) {
    throw OwnershipViolation("UTable::update: worker does not own this pair");
  }
  if (!(gamma > 0.0) || gamma > 1.0) throw std::domain_error("gamma must be in (0,1]");
  if (g1 < 0.0 || g2 < 0.0) throw std::domain_error("inner estimates must be non-negative");
  u1_[pair] = (1.0 - gamma) * u1_[pair] + gamma * g1;
  u2_[pair] = (1.0 - gamma) * u2_[pair] + gamma * g2;
  last_step_[pair] = step;
}

void UTable::snapshot(std::span<const int> indices, long long step, Vector& u1_out,
                      Vector& u2_out) const {
  u1_out.resize(static_cast<Eigen::Index>(indices.size()));
  u2_out.resize(static_cast<Eigen::Index>(indices.size()));
  Eigen::Index k = 0;
  for (int i : indices) {
    if (i < 0 || i >= size()) throw ShapeError("UTable::snapshot: index out of range");
    if (last_step_[i] != step) {
      throw StalenessError("UTable::snapshot: index not updated at this step");
    }
    u1_out[k] = u1_[i];
    u2_out[k] = u2_[i];
    ++k;
  }
}

void UTable::write(std::ostream& os) const {
  write_vector(os, u1_);
  write_vector(os, u2_);
}

void UTable::load(const Vector& u1, const Vector& u2) {
  if (u1.size() != u1_.size() || u2.size() != u2_.size()) {
    throw ShapeError("UTable::load: size mismatch");
  }
  u1_ = u1;
  u2_ = u2;
  std::fill(last_step_.begin(), last_step_.end(), -1);
}

UTable UTable::read(std::istream& is) {
  Vector u1 = read_vector(is);
  Vector u2 = read_vector(is);
  if (u1.size() != u2.size()) throw IoError("UTable: track lengths differ");
  UTable t(static_cast<int>(u1.size()));
  t.u1_ = std::move(u1);
  t.u2_ = std::move(u2);
  return t;
}

void TempConfig::validate() const {
  if (!(tau0 > 0.0)) throw ConfigError("temperature.tau0", "must be positive");
  if (init < tau0) throw ConfigError("temperature.init", "must be >= tau0");
  if (rho < 0.0) throw ConfigError("temperature.rho", "must be non-negative");
  if (lr < 0.0) throw ConfigError("temperature.lr", "must be non-negative");
  if (!(lr_decay_factor > 0.0)) throw ConfigError("temperature.lr_decay_factor", "must be positive");
}

IndividualTemp::IndividualTemp(int n, double init, double tau0)
    : tau1_(Vector::Constant(n, init)),
      tau2_(Vector::Constant(n, init)),
      adam1_(n),
      adam2_(n),
      tau0_(tau0) {}

void IndividualTemp::snapshot(std::span<const int> indices, Vector& tau1_out,
                              Vector& tau2_out) const {
  tau1_out.resize(static_cast<Eigen::Index>(indices.size()));
  tau2_out.resize(static_cast<Eigen::Index>(indices.size()));
  Eigen::Index k = 0;
  for (int i : indices) {
    tau1_out[k] = tau1_(i);
    tau2_out[k] = tau2_(i);
    ++k;
  }
}

void IndividualTemp::update(int pair, double grad_tau1, double grad_tau2, double lr,
                            const opt::AdamConfig& cfg, int worker, const OwnerMap& owners) {
  if (owners.owner_of(pair) != worker) {
    throw OwnershipViolation("IndividualTemp::update: worker does not own this pair");
  }
  tau1_[pair] = opt::temperature_step(adam1_[pair], tau1_[pair], grad_tau1, lr, cfg, tau0_);
  tau2_[pair] = opt::temperature_step(adam2_[pair], tau2_[pair], grad_tau2, lr, cfg, tau0_);
}

void IndividualTemp::write(std::ostream& os) const {
  write_vector(os, tau1_);
  write_vector(os, tau2_);
  write_raw(os, &tau0_, sizeof(tau0_));
  for (const auto* track : {&adam1_, &adam2_}) {
    for (const opt::ScalarAdam& a : *track) {
      write_raw(os, &a.m, sizeof(a.m));
      write_raw(os, &a.v, sizeof(a.v));
      write_raw(os, &a.step, sizeof(a.step));
    }
  }
}

IndividualTemp IndividualTemp::read(std::istream& is) {
  IndividualTemp t;
  t.tau1_ = read_vector(is);
  t.tau2_ = read_vector(is);
  if (t.tau1_.size() != t.tau2_.size()) throw IoError("IndividualTemp: track lengths differ");
  read_raw(is, &t.tau0_, sizeof(t.tau0_));
  t.adam1_.resize(static_cast<std::size_t>(t.tau1_.size()));
  t.adam2_.resize(static_cast<std::size_t>(t.tau1_.size()));
  for (auto* track : {&t.adam1_, &t.adam2_}) {
    for (opt::ScalarAdam& a : *track) {
      read_raw(is, &a.m, sizeof(a.m));
      read_raw(is, &a.v, sizeof(a.v));
      read_raw(is, &a.step, sizeof(a.step));
    }
  }
  return t;
}

}  // namespace fastclip::state
