#include "fastclip/checkpoint.hpp"

#include <fstream>

namespace fastclip::io {

namespace {

constexpr std::uint32_t kMagic = 0x46434b31;  // "FCK1"

void put(std::ostream& os, const void* p, std::size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

void take(std::istream& is, void* p, std::size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (!is) throw IoError("checkpoint: truncated file");
}

void put_vec(std::ostream& os, const Vector& v) {
  const std::int64_t n = v.size();
  put(os, &n, sizeof(n));
  put(os, v.data(), sizeof(double) * static_cast<std::size_t>(n));
}

Vector take_vec(std::istream& is) {
  std::int64_t n = 0;
  take(is, &n, sizeof(n));
  if (n < 0) throw IoError("checkpoint: negative vector length");
  Vector v(n);
  take(is, v.data(), sizeof(double) * static_cast<std::size_t>(n));
  return v;
}

void put_shape(std::ostream& os, const enc::TowerShape& s) {
  const std::int32_t kind = s.kind == enc::TowerKind::linear ? 0 : 1;
  const std::int32_t dims[3] = {s.d_in, s.d_hidden, s.d_out};
  put(os, &kind, sizeof(kind));
  put(os, dims, sizeof(dims));
}

enc::TowerShape take_shape(std::istream& is) {
  std::int32_t kind = 0;
  std::int32_t dims[3];
  take(is, &kind, sizeof(kind));
  take(is, dims, sizeof(dims));
  enc::TowerShape s;
  s.kind = kind == 0 ? enc::TowerKind::linear : enc::TowerKind::mlp;
  s.d_in = dims[0];
  s.d_hidden = dims[1];
  s.d_out = dims[2];
  return s;
}

}  // namespace

void write_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("checkpoint: cannot open '" + path + "' for writing");
  put(os, &kMagic, sizeof(kMagic));
  put(os, &ck.seed, sizeof(ck.seed));
  put(os, &ck.next_epoch, sizeof(ck.next_epoch));
  put(os, &ck.global_step, sizeof(ck.global_step));
  put_shape(os, ck.image_shape);
  put_shape(os, ck.text_shape);
  put_vec(os, ck.params);
  put_vec(os, ck.opt_m);
  put_vec(os, ck.opt_v);
  put(os, &ck.opt_step, sizeof(ck.opt_step));
  put(os, &ck.tau, sizeof(ck.tau));
  put(os, &ck.tau_adam.m, sizeof(ck.tau_adam.m));
  put(os, &ck.tau_adam.v, sizeof(ck.tau_adam.v));
  put(os, &ck.tau_adam.step, sizeof(ck.tau_adam.step));
  const std::uint8_t latched = ck.tau_lr_latched ? 1 : 0;
  put(os, &latched, sizeof(latched));
  put_vec(os, ck.u1);
  put_vec(os, ck.u2);
  const std::uint8_t has_ind = ck.has_individual_temp ? 1 : 0;
  put(os, &has_ind, sizeof(has_ind));
  if (ck.has_individual_temp) ck.individual.write(os);
  if (!os) throw IoError("checkpoint: write failed for '" + path + "'");
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("checkpoint: cannot open '" + path + "'");
  std::uint32_t magic = 0;
  take(is, &magic, sizeof(magic));
  if (magic != kMagic) throw IoError("checkpoint: bad magic in '" + path + "'");
  Checkpoint ck;
  take(is, &ck.seed, sizeof(ck.seed));
  take(is, &ck.next_epoch, sizeof(ck.next_epoch));
  take(is, &ck.global_step, sizeof(ck.global_step));
  ck.image_shape = take_shape(is);
  ck.text_shape = take_shape(is);
  ck.params = take_vec(is);
  ck.opt_m = take_vec(is);
  ck.opt_v = take_vec(is);
  take(is, &ck.opt_step, sizeof(ck.opt_step));
  take(is, &ck.tau, sizeof(ck.tau));
  take(is, &ck.tau_adam.m, sizeof(ck.tau_adam.m));
  take(is, &ck.tau_adam.v, sizeof(ck.tau_adam.v));
  take(is, &ck.tau_adam.step, sizeof(ck.tau_adam.step));
  std::uint8_t latched = 0;
  take(is, &latched, sizeof(latched));
  ck.tau_lr_latched = latched != 0;
  ck.u1 = take_vec(is);
  ck.u2 = take_vec(is);
  std::uint8_t has_ind = 0;
  take(is, &has_ind, sizeof(has_ind));
  ck.has_individual_temp = has_ind != 0;
  if (ck.has_individual_temp) ck.individual = state::IndividualTemp::read(is);
  return ck;
}

}  // namespace fastclip::io
