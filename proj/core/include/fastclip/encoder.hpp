#pragma once

#include <cstdint>
#include <vector>

#include "fastclip/common.hpp"
#include "fastclip/errors.hpp"

namespace fastclip::enc {

enum class TowerKind { linear, mlp };
enum class Modality { image, text };

struct TowerShape {
  TowerKind kind = TowerKind::linear;
  int d_in = 0;
  int d_hidden = 0;  // mlp only
  int d_out = 0;

  int param_count() const;
  void validate() const;
};

// Activations cached by forward() so vjp() can run without re-forwarding.
// `version` pins the parameter revision the tape was computed with; using a
// tape across a parameter update is an error.
struct ForwardTape {
  Modality modality = Modality::image;
  Matrix x;       // raw inputs, one row per sample
  Matrix h;       // tanh hidden activations (mlp only)
  Matrix e;       // normalized embeddings
  Vector znorm;   // pre-normalization row norms
  std::uint64_t version = 0;
};

// Two independent towers (image, text) mapping inputs onto the unit sphere.
// Parameters of both towers live in one flat vector with stable ordering:
// [image W1, b1, (W2, b2)] then [text ...], weight matrices row-major.
class TwoTowerModel {
 public:
  TwoTowerModel(TowerShape image, TowerShape text);

  const TowerShape& image_shape() const { return image_; }
  const TowerShape& text_shape() const { return text_; }
  int param_count() const { return static_cast<int>(theta_.size()); }
  std::uint64_t version() const { return version_; }

  // Per-layer uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init.
  void init_params(std::uint64_t seed);

  const Vector& params() const { return theta_; }
  // Mutable access invalidates outstanding tapes.
  Vector& mutable_params() {
    ++version_;
    return theta_;
  }
  void set_params(const Vector& theta);

  // One segment per weight matrix and one per bias vector, across both
  // towers, in flat order (the LAMB layer granularity).
  std::vector<Segment> layer_segments() const;

  ForwardTape forward(Modality m, const Matrix& x) const;

  // Accumulates d(sum_b <cot_b, e_b>)/d(theta) into grad. `cot` holds
  // cotangents on the normalized embeddings; the unit-normalization Jacobian
  // (I - e e^T)/|z| is applied here.
  void vjp(const ForwardTape& tape, const Matrix& cot, Vector& grad) const;

 private:
  TowerShape image_;
  TowerShape text_;
  Vector theta_;
  std::uint64_t version_ = 0;

  int tower_offset(Modality m) const;
  const TowerShape& shape_of(Modality m) const;
};

}  // namespace fastclip::enc
