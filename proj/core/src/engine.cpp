#include "fastclip/engine.hpp"

#include <cmath>

#include "fastclip/losses.hpp"

namespace fastclip::engine {

namespace {

void require_batch(const Matrix& e1, const Matrix& e2, int lo, int cnt) {
  if (e1.rows() != e2.rows() || e1.cols() != e2.cols()) {
    throw ShapeError("engine: embedding matrices disagree");
  }
  if (e1.rows() < 2) throw DegenerateBatchError("engine: global batch must have >= 2 pairs");
  if (lo < 0 || cnt <= 0 || lo + cnt > e1.rows()) {
    throw ShapeError("engine: local slice out of range");
  }
}

void require_per_anchor(const PairWeights& w, Eigen::Index batch) {
  if (w.w1.size() != batch || w.w2.size() != batch || w.t1.size() != batch ||
      w.t2.size() != batch) {
    throw ShapeError("engine: per-anchor vectors must match the global batch");
  }
}

Vector inv_eps_plus(const Vector& u, double eps) {
  if (eps < 0.0) throw std::domain_error("epsilon must be non-negative");
  Vector w(u.size());
  for (Eigen::Index i = 0; i < u.size(); ++i) w[i] = 1.0 / (eps + u[i]);
  return w;
}

}  // namespace

PairWeights weights_global_tau(const Vector& u1, const Vector& u2, double tau, double eps,
                               bool scaled) {
  if (!(tau > 0.0)) throw std::domain_error("temperature must be positive");
  PairWeights w;
  w.t1 = Vector::Constant(u1.size(), tau);
  w.t2 = Vector::Constant(u2.size(), tau);
  w.w1 = inv_eps_plus(u1, eps);
  w.w2 = inv_eps_plus(u2, eps);
  if (scaled) {
    w.w1 *= tau;
    w.w2 *= tau;
  }
  return w;
}

PairWeights weights_individual_tau(const Vector& u1, const Vector& u2, const Vector& tau1,
                                   const Vector& tau2, double eps) {
  if (tau1.size() != u1.size() || tau2.size() != u2.size()) {
    throw ShapeError("weights_individual_tau: temperature vectors must match u");
  }
  PairWeights w;
  w.t1 = tau1;
  w.t2 = tau2;
  w.w1 = inv_eps_plus(u1, eps).cwiseProduct(tau1);
  w.w2 = inv_eps_plus(u2, eps).cwiseProduct(tau2);
  return w;
}

PairWeights weights_mbcl(const Vector& g1, const Vector& g2, Eigen::Index global_batch,
                         double tau) {
  if (global_batch < 2) throw DegenerateBatchError("weights_mbcl: batch must have >= 2 pairs");
  const double c = 1.0 / static_cast<double>(global_batch - 1);
  PairWeights w;
  w.t1 = Vector::Constant(g1.size(), tau);
  w.t2 = Vector::Constant(g2.size(), tau);
  w.w1 = inv_eps_plus(g1, c);
  w.w2 = inv_eps_plus(g2, c);
  return w;
}

Cotangents embedding_cotangents(const Matrix& e1, const Matrix& e2, const PairWeights& w,
                                int local_begin, int local_count, Parts parts) {
  require_batch(e1, e2, local_begin, local_count);
  require_per_anchor(w, e1.rows());
  const Eigen::Index batch = e1.rows();
  const Eigen::Index dim = e1.cols();
  const Matrix s = e1 * e2.transpose();
  const double scale =
      1.0 / (static_cast<double>(local_count) * static_cast<double>(batch - 1));

  Cotangents cot{Matrix::Zero(local_count, dim), Matrix::Zero(local_count, dim)};
  const bool do_anchor = parts == Parts::anchor || parts == Parts::both;
  const bool do_contrast = parts == Parts::contrast || parts == Parts::both;

  for (int r = 0; r < local_count; ++r) {
    const Eigen::Index i = local_begin + r;
    if (do_anchor) {
      // Gradients of l1(i,j), l2(i,j) w.r.t. the anchor's own embeddings,
      // averaged over the contrast set.
      const double sii = s(i, i);
      for (Eigen::Index j = 0; j < batch; ++j) {
        if (j == i) continue;
        const double l1 = losses::safe_exp((s(i, j) - sii) / w.t1[i]);
        const double l2 = losses::safe_exp((s(j, i) - sii) / w.t2[i]);
        const double a1 = scale * w.w1[i] * l1 / w.t1[i];
        const double a2 = scale * w.w2[i] * l2 / w.t2[i];
        cot.d_e1.row(r) += a1 * (e2.row(j) - e2.row(i)) - a2 * e2.row(i);
        cot.d_e2.row(r) += a2 * (e1.row(j) - e1.row(i)) - a1 * e1.row(i);
      }
    }
    if (do_contrast) {
      // This worker owns item i as the contrast element j of every other
      // anchor a; the |B|/|B_a-| correction is folded into `scale`.
      for (Eigen::Index a = 0; a < batch; ++a) {
        if (a == i) continue;
        const double saa = s(a, a);
        const double l1 = losses::safe_exp((s(a, i) - saa) / w.t1[a]);
        const double l2 = losses::safe_exp((s(i, a) - saa) / w.t2[a]);
        cot.d_e2.row(r) += (scale * w.w1[a] * l1 / w.t1[a]) * e1.row(a);
        cot.d_e1.row(r) += (scale * w.w2[a] * l2 / w.t2[a]) * e2.row(a);
      }
    }
  }
  return cot;
}

RsPartials rs_partial_cotangents(const Matrix& e1, const Matrix& e2, const PairWeights& w,
                                 int local_begin, int local_count) {
  require_batch(e1, e2, local_begin, local_count);
  require_per_anchor(w, e1.rows());
  const Eigen::Index batch = e1.rows();
  const Eigen::Index dim = e1.cols();
  const Matrix s = e1 * e2.transpose();

  RsPartials out{Matrix::Zero(batch, dim), Matrix::Zero(batch, dim)};
  for (int r = 0; r < local_count; ++r) {
    const Eigen::Index a = local_begin + r;
    const double saa = s(a, a);
    for (Eigen::Index j = 0; j < batch; ++j) {
      if (j == a) continue;
      const double l1 = losses::safe_exp((s(a, j) - saa) / w.t1[a]);
      const double l2 = losses::safe_exp((s(j, a) - saa) / w.t2[a]);
      out.for_e2.row(j) += (w.w1[a] * l1 / w.t1[a]) * e1.row(a);
      out.for_e1.row(j) += (w.w2[a] * l2 / w.t2[a]) * e2.row(a);
    }
  }
  return out;
}

double rs_shard_scale(int world, int local_count, Eigen::Index global_batch) {
  return static_cast<double>(world) /
         (static_cast<double>(local_count) * static_cast<double>(global_batch - 1));
}

void g_values(const Matrix& e1, const Matrix& e2, const Vector& t1_local,
              const Vector& t2_local, int local_begin, int local_count, Vector& g1_out,
              Vector& g2_out) {
  require_batch(e1, e2, local_begin, local_count);
  const Eigen::Index batch = e1.rows();
  if (t1_local.size() != local_count || t2_local.size() != local_count) {
    throw ShapeError("g_values: temperature vectors must have one entry per local row");
  }
  const Matrix s = e1 * e2.transpose();
  g1_out.resize(local_count);
  g2_out.resize(local_count);
  const double inv = 1.0 / static_cast<double>(batch - 1);
  for (int r = 0; r < local_count; ++r) {
    const Eigen::Index i = local_begin + r;
    const double sii = s(i, i);
    double a1 = 0.0;
    double a2 = 0.0;
    for (Eigen::Index j = 0; j < batch; ++j) {
      if (j == i) continue;
      a1 += losses::safe_exp((s(i, j) - sii) / t1_local[r]);
      a2 += losses::safe_exp((s(j, i) - sii) / t2_local[r]);
    }
    g1_out[r] = a1 * inv;
    g2_out[r] = a2 * inv;
  }
}

namespace {

// Mean over the contrast set of the temperature partials of l1/l2, per local
// anchor: dsum1[r] = mean_j d/dtau l1(i,j), dsum2 likewise.
void dtau_sums(const Matrix& e1, const Matrix& e2, const Vector& t1, const Vector& t2,
               int local_begin, int local_count, Vector& dsum1, Vector& dsum2) {
  const Eigen::Index batch = e1.rows();
  const Matrix s = e1 * e2.transpose();
  dsum1.resize(local_count);
  dsum2.resize(local_count);
  const double inv = 1.0 / static_cast<double>(batch - 1);
  for (int r = 0; r < local_count; ++r) {
    const Eigen::Index i = local_begin + r;
    const double sii = s(i, i);
    double a1 = 0.0;
    double a2 = 0.0;
    for (Eigen::Index j = 0; j < batch; ++j) {
      if (j == i) continue;
      const double d1 = s(i, j) - sii;
      const double d2 = s(j, i) - sii;
      a1 += -(d1 / (t1[i] * t1[i])) * losses::safe_exp(d1 / t1[i]);
      a2 += -(d2 / (t2[i] * t2[i])) * losses::safe_exp(d2 / t2[i]);
    }
    dsum1[r] = a1 * inv;
    dsum2[r] = a2 * inv;
  }
}

}  // namespace

double grad_tau_unscaled(const Matrix& e1, const Matrix& e2, const Vector& u1, const Vector& u2,
                         int local_begin, int local_count, double tau, double eps) {
  require_batch(e1, e2, local_begin, local_count);
  if (u1.size() != e1.rows() || u2.size() != e1.rows()) {
    throw ShapeError("grad_tau: estimator vectors must match the global batch");
  }
  if (!(tau > 0.0)) throw std::domain_error("temperature must be positive");
  const Vector t = Vector::Constant(e1.rows(), tau);
  Vector dsum1, dsum2;
  dtau_sums(e1, e2, t, t, local_begin, local_count, dsum1, dsum2);
  double acc = 0.0;
  for (int r = 0; r < local_count; ++r) {
    const Eigen::Index i = local_begin + r;
    acc += dsum1[r] / (eps + u1[i]) + dsum2[r] / (eps + u2[i]);
  }
  return acc / static_cast<double>(local_count);
}

double grad_tau_margin(const Matrix& e1, const Matrix& e2, const Vector& u1, const Vector& u2,
                       int local_begin, int local_count, double tau, double eps, double rho) {
  require_batch(e1, e2, local_begin, local_count);
  if (!(tau > 0.0)) throw std::domain_error("temperature must be positive");
  double logs = 0.0;
  for (int r = 0; r < local_count; ++r) {
    const Eigen::Index i = local_begin + r;
    logs += std::log(eps + u1[i]) + std::log(eps + u2[i]);
  }
  logs /= static_cast<double>(local_count);
  return logs + 2.0 * rho +
         tau * grad_tau_unscaled(e1, e2, u1, u2, local_begin, local_count, tau, eps);
}

std::vector<TauPairGrad> grad_tau_individual(const Matrix& e1, const Matrix& e2,
                                             const Vector& u1, const Vector& u2,
                                             const Vector& tau1, const Vector& tau2,
                                             int local_begin, int local_count, double eps,
                                             double rho, long long dataset_size) {
  require_batch(e1, e2, local_begin, local_count);
  if (dataset_size < 2) throw DegenerateBatchError("grad_tau_individual: dataset too small");
  Vector dsum1, dsum2;
  dtau_sums(e1, e2, tau1, tau2, local_begin, local_count, dsum1, dsum2);
  const double inv_n = 1.0 / static_cast<double>(dataset_size);
  std::vector<TauPairGrad> out(static_cast<std::size_t>(local_count));
  for (int r = 0; r < local_count; ++r) {
    const Eigen::Index i = local_begin + r;
    out[static_cast<std::size_t>(r)] = {
        r,
        inv_n * (std::log(eps + u1[i]) + rho + tau1[i] * dsum1[r] / (eps + u1[i])),
        inv_n * (std::log(eps + u2[i]) + rho + tau2[i] * dsum2[r] / (eps + u2[i]))};
  }
  return out;
}

double grad_tau_mbcl(const Matrix& e1, const Matrix& e2, const Vector& g1, const Vector& g2,
                     int local_begin, int local_count, double tau) {
  require_batch(e1, e2, local_begin, local_count);
  const double c = 1.0 / static_cast<double>(e1.rows() - 1);
  return grad_tau_unscaled(e1, e2, g1, g2, local_begin, local_count, tau, c);
}

GradPacket assemble_packet(const enc::TwoTowerModel& model, const enc::ForwardTape& image_tape,
                           const enc::ForwardTape& text_tape, const Cotangents& cot,
                           std::string tag) {
  GradPacket p{Vector::Zero(model.param_count()), std::move(tag)};
  model.vjp(image_tape, cot.d_e1, p.values);
  model.vjp(text_tape, cot.d_e2, p.values);
  if (!p.values.allFinite()) throw NumericError("assemble_packet: non-finite gradient");
  return p;
}

}  // namespace fastclip::engine
