#pragma once

#include <string>
#include <vector>

#include "fastclip/common.hpp"
#include "fastclip/encoder.hpp"
#include "fastclip/errors.hpp"

// Per-worker gradient estimators over a gathered global batch.
//
// All variants share one core: every anchor i carries a weight pair
// (w1_i, w2_i) multiplying its l1/l2 gradient terms and a temperature pair
// (t1_i, t2_i) the exponentials are evaluated at. The builders below resolve
// the variants onto that form:
//   global tau, scaled      w = tau/(eps + u),      t = tau
//   global tau, unscaled    w = 1/(eps + u),        t = tau
//   individual tau          w = tau_i/(eps + u_i),  t = tau_i
//   mini-batch baseline     w = 1/(1/(B-1) + g_i),  t = tau
//
// The estimator itself splits into an anchor part (cotangents on the local
// anchors' own embeddings) and a contrast part (cotangents on local items
// contrasted against every global anchor, carrying the |B|/|B_i-| batch
// correction). Averaging per-worker results over workers reproduces the
// uniform double average over the global batch.

namespace fastclip::engine {

struct PairWeights {
  Vector w1, w2;  // per-anchor gradient weights
  Vector t1, t2;  // per-anchor temperatures
};

PairWeights weights_global_tau(const Vector& u1, const Vector& u2, double tau, double eps,
                               bool scaled);
PairWeights weights_individual_tau(const Vector& u1, const Vector& u2, const Vector& tau1,
                                   const Vector& tau2, double eps);
// `g1`/`g2` are the current-batch inner means; the additive constant is
// 1/(B-1), the reciprocal of the contrast-set size.
PairWeights weights_mbcl(const Vector& g1, const Vector& g2, Eigen::Index global_batch,
                         double tau);

enum class Parts { anchor = 1, contrast = 2, both = 3 };

// Cotangents on the local slice's normalized embeddings; rows follow the
// local batch order.
struct Cotangents {
  Matrix d_e1;
  Matrix d_e2;
};

Cotangents embedding_cotangents(const Matrix& e1, const Matrix& e2, const PairWeights& w,
                                int local_begin, int local_count, Parts parts = Parts::both);

// Reduce-scatter route for the contrast part: each worker emits unnormalized
// partial cotangents for every global item using only its local anchors
// (whose weights it owns); after reduce_scatter_mean the receiving worker
// scales its shard by rs_shard_scale and owns exactly the contrast-part
// cotangents of its local items.
struct RsPartials {
  Matrix for_e2;  // rows = global batch, cotangent pieces on text embeddings
  Matrix for_e1;
};
RsPartials rs_partial_cotangents(const Matrix& e1, const Matrix& e2, const PairWeights& w,
                                 int local_begin, int local_count);
double rs_shard_scale(int world, int local_count, Eigen::Index global_batch);

// Inner contrastive means over the global batch minus self for the local
// anchors (the values fed into the u update). Temperature vectors are
// local-row indexed (size local_count).
void g_values(const Matrix& e1, const Matrix& e2, const Vector& t1_local,
              const Vector& t2_local, int local_begin, int local_count, Vector& g1_out,
              Vector& g2_out);

// Temperature gradient estimators (one value per worker unless noted).
double grad_tau_unscaled(const Matrix& e1, const Matrix& e2, const Vector& u1, const Vector& u2,
                         int local_begin, int local_count, double tau, double eps);
double grad_tau_margin(const Matrix& e1, const Matrix& e2, const Vector& u1, const Vector& u2,
                       int local_begin, int local_count, double tau, double eps, double rho);
struct TauPairGrad {
  int local_row;
  double g_tau1;
  double g_tau2;
};
std::vector<TauPairGrad> grad_tau_individual(const Matrix& e1, const Matrix& e2,
                                             const Vector& u1, const Vector& u2,
                                             const Vector& tau1, const Vector& tau2,
                                             int local_begin, int local_count, double eps,
                                             double rho, long long dataset_size);
double grad_tau_mbcl(const Matrix& e1, const Matrix& e2, const Vector& g1, const Vector& g2,
                     int local_begin, int local_count, double tau);

// Flat model-parameter gradient produced by one worker.
struct GradPacket {
  Vector values;
  std::string tag;
};

GradPacket assemble_packet(const enc::TwoTowerModel& model, const enc::ForwardTape& image_tape,
                           const enc::ForwardTape& text_tape, const Cotangents& cot,
                           std::string tag = "grad-w");

}  // namespace fastclip::engine
