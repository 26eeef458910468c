#pragma once

#include <cstdint>
#include <span>

#include "fastclip/common.hpp"
#include "fastclip/errors.hpp"

// Pairwise contrastive building blocks and exact full-dataset loss
// evaluators. Everything here is a pure function over value inputs and is
// used as reference ground truth by the gradient estimators, so all math is
// double precision.
//
// Conventions: embeddings are matrices with one unit-norm row per pair,
// s(i,j) = <e1_i, e2_j> is the cross-modal cosine similarity,
//   l1(i,j) = exp((s(i,j) - s(i,i)) / tau)
//   l2(i,j) = exp((s(j,i) - s(i,i)) / tau)
// and g1/g2 average l1/l2 over a contrast set that excludes the anchor.

namespace fastclip::losses {

// Arguments of exp are clamped to <= kExpClampMax; each clamp bumps a process
// wide counter so degenerate configurations are observable instead of fatal.
inline constexpr double kExpClampMax = 60.0;

double safe_exp(double x);
std::uint64_t exp_clamp_count();
void reset_exp_clamp_count();

// S(i,j) = dot(E1.row(i), E2.row(j)). Throws ShapeError on column mismatch.
Matrix pairwise_similarity(const Matrix& e1, const Matrix& e2);

double ell1(const Matrix& s, Eigen::Index i, Eigen::Index j, double tau);
double ell2(const Matrix& s, Eigen::Index i, Eigen::Index j, double tau);

// Partial derivative of l1/l2 in the temperature argument.
double dell1_dtau(const Matrix& s, Eigen::Index i, Eigen::Index j, double tau);
double dell2_dtau(const Matrix& s, Eigen::Index i, Eigen::Index j, double tau);

// Gradients of l1/l2 w.r.t. the normalized embeddings they touch. The
// normalization Jacobian is applied later by the encoder's vjp.
struct Ell1EmbedGrads {
  Vector d_e1_i;  // anchor image embedding
  Vector d_e2_i;  // anchor text embedding
  Vector d_e2_j;  // contrast text embedding
};
struct Ell2EmbedGrads {
  Vector d_e1_i;
  Vector d_e2_i;
  Vector d_e1_j;  // contrast image embedding
};
Ell1EmbedGrads ell1_grad_embeddings(const Matrix& s, const Matrix& e1, const Matrix& e2,
                                    Eigen::Index i, Eigen::Index j, double tau);
Ell2EmbedGrads ell2_grad_embeddings(const Matrix& s, const Matrix& e1, const Matrix& e2,
                                    Eigen::Index i, Eigen::Index j, double tau);

// Mean of l1 (resp. l2) over the contrast indices. The set must be non-empty
// and must not contain the anchor.
double g1_batch(const Matrix& s, Eigen::Index i, std::span<const int> batch, double tau);
double g2_batch(const Matrix& s, Eigen::Index i, std::span<const int> batch, double tau);

// Exact loss evaluators over all pairs; O(n^2), intended as oracles.
double eval_gcl(const Matrix& e1, const Matrix& e2, double tau, double epsilon);
double eval_rgcl(const Matrix& e1, const Matrix& e2, const Vector& tau1, const Vector& tau2,
                 double epsilon, double rho);
double eval_rgclg(const Matrix& e1, const Matrix& e2, double tau, double epsilon, double rho);
// Mini-batch contrastive loss over the given batch; the additive constant is
// 1/|contrast set| = 1/(B-1), not epsilon.
double eval_mbcl(const Matrix& e1, const Matrix& e2, double tau);

}  // namespace fastclip::losses
