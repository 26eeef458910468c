#include "fastclip/encoder.hpp"

#include <cmath>

#include "fastclip/rng.hpp"

namespace fastclip::enc {

namespace {

constexpr double kMinNorm = 1e-12;

using ConstW = Eigen::Map<const RowMatrix>;
using ConstB = Eigen::Map<const Vector>;
using MutW = Eigen::Map<RowMatrix>;
using MutB = Eigen::Map<Vector>;

}  // namespace

int TowerShape::param_count() const {
  if (kind == TowerKind::linear) return d_out * d_in + d_out;
  return d_hidden * d_in + d_hidden + d_out * d_hidden + d_out;
}

void TowerShape::validate() const {
  if (d_in <= 0 || d_out <= 0) throw ConfigError("model", "tower dims must be positive");
  if (kind == TowerKind::mlp && d_hidden <= 0) {
    throw ConfigError("model.hidden_dim", "mlp tower needs a positive hidden dim");
  }
}

TwoTowerModel::TwoTowerModel(TowerShape image, TowerShape text) : image_(image), text_(text) {
  image_.validate();
  text_.validate();
  theta_ = Vector::Zero(image_.param_count() + text_.param_count());
}

int TwoTowerModel::tower_offset(Modality m) const {
  return m == Modality::image ? 0 : image_.param_count();
}

const TowerShape& TwoTowerModel::shape_of(Modality m) const {
  return m == Modality::image ? image_ : text_;
}

void TwoTowerModel::set_params(const Vector& theta) {
  if (theta.size() != theta_.size()) throw ShapeError("set_params: size mismatch");
  theta_ = theta;
  ++version_;
}

void TwoTowerModel::init_params(std::uint64_t seed) {
  Rng rng(stream_seed(seed, {0x706172616dULL}));
  auto fill_layer = [&](double* w, int rows, int cols, double* b) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
    for (int i = 0; i < rows * cols; ++i) w[i] = rng.uniform(-bound, bound);
    for (int i = 0; i < rows; ++i) b[i] = rng.uniform(-bound, bound);
  };
  for (Modality m : {Modality::image, Modality::text}) {
    const TowerShape& ts = shape_of(m);
    double* base = theta_.data() + tower_offset(m);
    if (ts.kind == TowerKind::linear) {
      fill_layer(base, ts.d_out, ts.d_in, base + ts.d_out * ts.d_in);
    } else {
      double* w1 = base;
      double* b1 = w1 + ts.d_hidden * ts.d_in;
      double* w2 = b1 + ts.d_hidden;
      double* b2 = w2 + ts.d_out * ts.d_hidden;
      fill_layer(w1, ts.d_hidden, ts.d_in, b1);
      fill_layer(w2, ts.d_out, ts.d_hidden, b2);
    }
  }
  ++version_;
}

std::vector<Segment> TwoTowerModel::layer_segments() const {
  std::vector<Segment> segs;
  for (Modality m : {Modality::image, Modality::text}) {
    const TowerShape& ts = shape_of(m);
    std::int64_t off = tower_offset(m);
    auto push = [&](std::int64_t size) {
      segs.push_back({off, size});
      off += size;
    };
    if (ts.kind == TowerKind::linear) {
      push(static_cast<std::int64_t>(ts.d_out) * ts.d_in);
      push(ts.d_out);
    } else {
      push(static_cast<std::int64_t>(ts.d_hidden) * ts.d_in);
      push(ts.d_hidden);
      push(static_cast<std::int64_t>(ts.d_out) * ts.d_hidden);
      push(ts.d_out);
    }
  }
  return segs;
}

ForwardTape TwoTowerModel::forward(Modality m, const Matrix& x) const {
  const TowerShape& ts = shape_of(m);
  if (x.cols() != ts.d_in) throw ShapeError("forward: input dimension mismatch");
  const double* base = theta_.data() + tower_offset(m);

  ForwardTape tape;
  tape.modality = m;
  tape.x = x;
  tape.version = version_;

  Matrix z;
  if (ts.kind == TowerKind::linear) {
    ConstW w(base, ts.d_out, ts.d_in);
    ConstB b(base + ts.d_out * ts.d_in, ts.d_out);
    z = x * w.transpose();
    z.rowwise() += b.transpose();
  } else {
    ConstW w1(base, ts.d_hidden, ts.d_in);
    ConstB b1(base + ts.d_hidden * ts.d_in, ts.d_hidden);
    ConstW w2(base + ts.d_hidden * ts.d_in + ts.d_hidden, ts.d_out, ts.d_hidden);
    ConstB b2(base + ts.d_hidden * ts.d_in + ts.d_hidden + ts.d_out * ts.d_hidden, ts.d_out);
    Matrix a = x * w1.transpose();
    a.rowwise() += b1.transpose();
    tape.h = a.array().tanh().matrix();
    z = tape.h * w2.transpose();
    z.rowwise() += b2.transpose();
  }

  tape.znorm = z.rowwise().norm();
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    if (tape.znorm[r] < kMinNorm) {
      throw NumericError("forward: pre-normalization embedding is numerically zero");
    }
  }
  tape.e = z.array().colwise() / tape.znorm.array();
  return tape;
}

void TwoTowerModel::vjp(const ForwardTape& tape, const Matrix& cot, Vector& grad) const {
  if (tape.version != version_) {
    throw NumericError("vjp: tape was computed with different parameters");
  }
  if (cot.rows() != tape.e.rows() || cot.cols() != tape.e.cols()) {
    throw ShapeError("vjp: cotangent shape mismatch");
  }
  if (grad.size() != theta_.size()) throw ShapeError("vjp: gradient buffer size mismatch");

  const TowerShape& ts = shape_of(tape.modality);
  const std::int64_t off = tower_offset(tape.modality);

  // Through the normalization: cot_z = (cot - e (e . cot)) / |z| per row.
  Matrix cot_z(cot.rows(), cot.cols());
  for (Eigen::Index r = 0; r < cot.rows(); ++r) {
    const double radial = tape.e.row(r).dot(cot.row(r));
    cot_z.row(r) = (cot.row(r) - radial * tape.e.row(r)) / tape.znorm[r];
  }

  if (ts.kind == TowerKind::linear) {
    MutW gw(grad.data() + off, ts.d_out, ts.d_in);
    MutB gb(grad.data() + off + ts.d_out * ts.d_in, ts.d_out);
    gw += cot_z.transpose() * tape.x;
    gb += cot_z.colwise().sum().transpose();
    return;
  }

  const double* base = theta_.data() + off;
  ConstW w2(base + ts.d_hidden * ts.d_in + ts.d_hidden, ts.d_out, ts.d_hidden);
  MutW gw1(grad.data() + off, ts.d_hidden, ts.d_in);
  MutB gb1(grad.data() + off + ts.d_hidden * ts.d_in, ts.d_hidden);
  MutW gw2(grad.data() + off + ts.d_hidden * ts.d_in + ts.d_hidden, ts.d_out, ts.d_hidden);
  MutB gb2(grad.data() + off + ts.d_hidden * ts.d_in + ts.d_hidden + ts.d_out * ts.d_hidden,
           ts.d_out);

  gw2 += cot_z.transpose() * tape.h;
  gb2 += cot_z.colwise().sum().transpose();
  Matrix cot_h = cot_z * w2;
  Matrix cot_a = cot_h.array() * (1.0 - tape.h.array().square());
  gw1 += cot_a.transpose() * tape.x;
  gb1 += cot_a.colwise().sum().transpose();
}

}  // namespace fastclip::enc
