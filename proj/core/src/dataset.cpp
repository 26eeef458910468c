#include "fastclip/dataset.hpp"

#include <cmath>
#include <fstream>

#include "fastclip/rng.hpp"

namespace fastclip::io {

void SyntheticSpec::validate() const {
  if (n < 2) throw ConfigError("gen.n", "need at least 2 pairs");
  if (latent_dim <= 0) throw ConfigError("gen.latent_dim", "must be positive");
  if (d_img <= 0 || d_txt <= 0) throw ConfigError("gen.dims", "must be positive");
  if (noise < 0.0) throw ConfigError("gen.noise", "must be non-negative");
  if (kmax <= 0) throw ConfigError("gen.kmax", "must be positive");
  if (n % kmax != 0) throw ConfigError("gen.n", "must be divisible by kmax");
}

namespace {

Matrix random_projection(int rows, int cols, Rng& rng) {
  Matrix a(rows, cols);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cols));
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) a(r, c) = scale * rng.normal();
  }
  return a;
}

}  // namespace

PairDataset make_dataset(const SyntheticSpec& spec, const Matrix& proj_img,
                         const Matrix& proj_txt) {
  spec.validate();
  if (proj_img.rows() != spec.d_img || proj_img.cols() != spec.latent_dim ||
      proj_txt.rows() != spec.d_txt || proj_txt.cols() != spec.latent_dim) {
    throw ShapeError("make_dataset: projection shapes disagree with spec");
  }
  Rng rng(stream_seed(spec.seed, {0x64617461ULL}));
  PairDataset ds;
  ds.images.resize(spec.n, spec.d_img);
  ds.texts.resize(spec.n, spec.d_txt);
  Vector z(spec.latent_dim);
  for (int i = 0; i < spec.n; ++i) {
    for (int k = 0; k < spec.latent_dim; ++k) z[k] = rng.normal();
    ds.images.row(i) = (proj_img * z).transpose();
    ds.texts.row(i) = (proj_txt * z).transpose();
    for (int c = 0; c < spec.d_img; ++c) ds.images(i, c) += spec.noise * rng.normal();
    for (int c = 0; c < spec.d_txt; ++c) ds.texts(i, c) += spec.noise * rng.normal();
  }
  return ds;
}

PairDataset make_dataset(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(stream_seed(spec.seed, {0x70726f6aULL}));
  const Matrix a = random_projection(spec.d_img, spec.latent_dim, rng);
  const Matrix b = random_projection(spec.d_txt, spec.latent_dim, rng);
  return make_dataset(spec, a, b);
}

void write_dataset(const PairDataset& ds, const std::string& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("write_dataset: cannot open '" + path + "'");
  const std::uint64_t header[3] = {static_cast<std::uint64_t>(ds.n()),
                                   static_cast<std::uint64_t>(ds.d_img()),
                                   static_cast<std::uint64_t>(ds.d_txt())};
  os.write(reinterpret_cast<const char*>(header), sizeof(header));
  RowMatrix img = ds.images;
  RowMatrix txt = ds.texts;
  os.write(reinterpret_cast<const char*>(img.data()),
           static_cast<std::streamsize>(sizeof(double) * img.size()));
  os.write(reinterpret_cast<const char*>(txt.data()),
           static_cast<std::streamsize>(sizeof(double) * txt.size()));
  if (!os) throw IoError("write_dataset: write failed for '" + path + "'");
}

PairDataset read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("read_dataset: cannot open '" + path + "'");
  std::uint64_t header[3];
  is.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!is) throw IoError("read_dataset: truncated header in '" + path + "'");
  const auto n = static_cast<Eigen::Index>(header[0]);
  const auto d_img = static_cast<Eigen::Index>(header[1]);
  const auto d_txt = static_cast<Eigen::Index>(header[2]);
  if (n < 1 || d_img < 1 || d_txt < 1 || n > (1LL << 32)) {
    throw IoError("read_dataset: implausible header in '" + path + "'");
  }
  RowMatrix img(n, d_img);
  RowMatrix txt(n, d_txt);
  is.read(reinterpret_cast<char*>(img.data()),
          static_cast<std::streamsize>(sizeof(double) * img.size()));
  is.read(reinterpret_cast<char*>(txt.data()),
          static_cast<std::streamsize>(sizeof(double) * txt.size()));
  if (!is) throw IoError("read_dataset: truncated data in '" + path + "'");
  PairDataset ds;
  ds.images = img;
  ds.texts = txt;
  return ds;
}

}  // namespace fastclip::io
