#include "fastclip/losses.hpp"

#include <atomic>
#include <cmath>

namespace fastclip::losses {

namespace {

std::atomic<std::uint64_t> g_exp_clamps{0};

void require_tau(double tau) {
  if (!(tau > 0.0)) throw std::domain_error("temperature must be positive");
}

void require_pairs(Eigen::Index n) {
  if (n < 2) throw DegenerateBatchError("need at least 2 pairs");
}

}  // namespace

double safe_exp(double x) {
  if (x > kExpClampMax) {
    g_exp_clamps.fetch_add(1, std::memory_order_relaxed);
    x = kExpClampMax;
  }
  return std::exp(x);
}

std::uint64_t exp_clamp_count() { return g_exp_clamps.load(std::memory_order_relaxed); }
void reset_exp_clamp_count() { g_exp_clamps.store(0, std::memory_order_relaxed); }

Matrix pairwise_similarity(const Matrix& e1, const Matrix& e2) {
  if (e1.cols() != e2.cols()) {
    throw ShapeError("pairwise_similarity: embedding dimensions differ");
  }
  if (e1.rows() != e2.rows()) {
    throw ShapeError("pairwise_similarity: row counts differ");
  }
  return e1 * e2.transpose();
}

double ell1(const Matrix& s, Eigen::Index i, Eigen::Index j, double tau) {
  require_tau(tau);
  return safe_exp((s(i, j) - s(i, i)) / tau);
}

double ell2(const Matrix& s, Eigen::Index i, Eigen::Index j, double tau) {
  require_tau(tau);
  return safe_exp((s(j, i) - s(i, i)) / tau);
}

double dell1_dtau(const Matrix& s, Eigen::Index i, Eigen::Index j, double tau) {
  require_tau(tau);
  const double diff = s(i, j) - s(i, i);
  return -(diff / (tau * tau)) * safe_exp(diff / tau);
}

double dell2_dtau(const Matrix& s, Eigen::Index i, Eigen::Index j, double tau) {
  require_tau(tau);
  const double diff = s(j, i) - s(i, i);
  return -(diff / (tau * tau)) * safe_exp(diff / tau);
}

Ell1EmbedGrads ell1_grad_embeddings(const Matrix& s, const Matrix& e1, const Matrix& e2,
                                    Eigen::Index i, Eigen::Index j, double tau) {
  const double l = ell1(s, i, j, tau);
  Ell1EmbedGrads g;
  g.d_e1_i = (l / tau) * (e2.row(j) - e2.row(i)).transpose();
  g.d_e2_i = (-l / tau) * e1.row(i).transpose();
  g.d_e2_j = (l / tau) * e1.row(i).transpose();
  return g;
}

Ell2EmbedGrads ell2_grad_embeddings(const Matrix& s, const Matrix& e1, const Matrix& e2,
                                    Eigen::Index i, Eigen::Index j, double tau) {
  const double l = ell2(s, i, j, tau);
  Ell2EmbedGrads g;
  g.d_e2_i = (l / tau) * (e1.row(j) - e1.row(i)).transpose();
  g.d_e1_i = (-l / tau) * e2.row(i).transpose();
  g.d_e1_j = (l / tau) * e2.row(i).transpose();
  return g;
}

namespace {

double g_mean(const Matrix& s, Eigen::Index i, std::span<const int> batch, double tau,
              bool image_side) {
  require_tau(tau);
  if (batch.empty()) {
    throw DegenerateBatchError("contrast set is empty");
  }
  double acc = 0.0;
  for (int j : batch) {
    if (j == i) throw DegenerateBatchError("contrast set must exclude the anchor");
    acc += image_side ? safe_exp((s(i, j) - s(i, i)) / tau)
                      : safe_exp((s(j, i) - s(i, i)) / tau);
  }
  return acc / static_cast<double>(batch.size());
}

// Mean of l1/l2 over all j != i; shared by the exact evaluators.
std::pair<double, double> g_full(const Matrix& s, Eigen::Index i, double tau1, double tau2) {
  const Eigen::Index n = s.rows();
  double a1 = 0.0;
  double a2 = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    if (j == i) continue;
    a1 += safe_exp((s(i, j) - s(i, i)) / tau1);
    a2 += safe_exp((s(j, i) - s(i, i)) / tau2);
  }
  const double m = static_cast<double>(n - 1);
  return {a1 / m, a2 / m};
}

}  // namespace

double g1_batch(const Matrix& s, Eigen::Index i, std::span<const int> batch, double tau) {
  return g_mean(s, i, batch, tau, true);
}

double g2_batch(const Matrix& s, Eigen::Index i, std::span<const int> batch, double tau) {
  return g_mean(s, i, batch, tau, false);
}

double eval_gcl(const Matrix& e1, const Matrix& e2, double tau, double epsilon) {
  require_pairs(e1.rows());
  require_tau(tau);
  if (epsilon < 0.0) throw std::domain_error("epsilon must be non-negative");
  const Matrix s = pairwise_similarity(e1, e2);
  const Eigen::Index n = s.rows();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto [g1, g2] = g_full(s, i, tau, tau);
    acc += std::log(epsilon + g1) + std::log(epsilon + g2);
  }
  return tau * acc / static_cast<double>(n);
}

double eval_rgcl(const Matrix& e1, const Matrix& e2, const Vector& tau1, const Vector& tau2,
                 double epsilon, double rho) {
  require_pairs(e1.rows());
  if (tau1.size() != e1.rows() || tau2.size() != e1.rows()) {
    throw ShapeError("eval_rgcl: temperature vectors must have one entry per pair");
  }
  if (epsilon < 0.0) throw std::domain_error("epsilon must be non-negative");
  if (rho < 0.0) throw std::domain_error("rho must be non-negative");
  const Matrix s = pairwise_similarity(e1, e2);
  const Eigen::Index n = s.rows();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    require_tau(tau1[i]);
    require_tau(tau2[i]);
    const auto [g1, g2] = g_full(s, i, tau1[i], tau2[i]);
    acc += tau1[i] * (std::log(epsilon + g1) + rho);
    acc += tau2[i] * (std::log(epsilon + g2) + rho);
  }
  return acc / static_cast<double>(n);
}

double eval_rgclg(const Matrix& e1, const Matrix& e2, double tau, double epsilon, double rho) {
  if (rho < 0.0) throw std::domain_error("rho must be non-negative");
  // By definition the single-temperature robust loss is the scaled global
  // loss plus the 2*rho*tau margin term.
  return eval_gcl(e1, e2, tau, epsilon) + 2.0 * rho * tau;
}

double eval_mbcl(const Matrix& e1, const Matrix& e2, double tau) {
  require_pairs(e1.rows());
  require_tau(tau);
  const Matrix s = pairwise_similarity(e1, e2);
  const Eigen::Index n = s.rows();
  const double c = 1.0 / static_cast<double>(n - 1);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto [g1, g2] = g_full(s, i, tau, tau);
    acc += std::log(c + g1) + std::log(c + g2);
  }
  return acc / static_cast<double>(n);
}

}  // namespace fastclip::losses
