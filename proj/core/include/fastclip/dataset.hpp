#pragma once

#include <cstdint>
#include <string>

#include "fastclip/common.hpp"
#include "fastclip/errors.hpp"

namespace fastclip::io {

// Synthetic paired data: matched image/text inputs share a latent code,
//   x_i = A z_i + noise, t_i = B z_i + noise,
// with fixed random projections A, B. The ground-truth match of row i is
// row i of the other modality.
struct SyntheticSpec {
  int n = 1024;
  int latent_dim = 8;
  int d_img = 16;
  int d_txt = 16;
  double noise = 0.1;
  std::uint64_t seed = 7;
  int kmax = 8;  // n must stay divisible by the largest worker count

  void validate() const;
};

struct PairDataset {
  Matrix images;  // n x d_img
  Matrix texts;   // n x d_txt

  int n() const { return static_cast<int>(images.rows()); }
  int d_img() const { return static_cast<int>(images.cols()); }
  int d_txt() const { return static_cast<int>(texts.cols()); }
};

PairDataset make_dataset(const SyntheticSpec& spec);
// Explicit projection matrices (tests use identities to pin expectations).
PairDataset make_dataset(const SyntheticSpec& spec, const Matrix& proj_img,
                         const Matrix& proj_txt);

// Binary layout: u64 n, u64 d_img, u64 d_txt, then row-major doubles for the
// image block followed by the text block. Little-endian, no padding.
void write_dataset(const PairDataset& ds, const std::string& path);
PairDataset read_dataset(const std::string& path);

}  // namespace fastclip::io
