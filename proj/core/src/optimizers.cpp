#include "fastclip/optimizers.hpp"

#include <cmath>

namespace fastclip::opt {

namespace {

void check_shapes(const FlatAdamState& st, const Vector& theta, const Vector& grad) {
  if (theta.size() != grad.size() || theta.size() != st.m.size()) {
    throw ShapeError("optimizer: parameter/gradient/state size mismatch");
  }
  if (!grad.allFinite()) throw NumericError("optimizer: non-finite gradient");
}

// Updates the moments and returns the bias-corrected Adam direction
// m_hat / (sqrt(v_hat) + eps). Shared by AdamW and LAMB so that LAMB with all
// trust ratios pinned to 1 reproduces AdamW exactly.
Vector adam_direction(FlatAdamState& st, const Vector& grad, const AdamConfig& cfg) {
  st.m = cfg.beta1 * st.m + (1.0 - cfg.beta1) * grad;
  st.v = cfg.beta2 * st.v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step + 1));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step + 1));
  Vector r(grad.size());
  for (Eigen::Index i = 0; i < grad.size(); ++i) {
    r[i] = (st.m[i] / c1) / (std::sqrt(st.v[i] / c2) + cfg.eps);
  }
  return r;
}

}  // namespace

void adamw_step(FlatAdamState& st, Vector& theta, const Vector& grad, double lr,
                const AdamConfig& cfg) {
  check_shapes(st, theta, grad);
  const Vector r = adam_direction(st, grad, cfg);
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    theta[i] -= lr * (r[i] + cfg.weight_decay * theta[i]);
  }
  ++st.step;
}

void lamb_step(FlatAdamState& st, Vector& theta, const Vector& grad, double lr,
               const AdamConfig& cfg, std::span<const Segment> layers, bool force_alpha_one) {
  check_shapes(st, theta, grad);
  if (layers.empty()) throw ShapeError("lamb_step: layer boundaries missing");
  const Vector r = adam_direction(st, grad, cfg);
  for (const Segment& seg : layers) {
    auto th = theta.segment(seg.offset, seg.size);
    Vector upd(seg.size);
    for (Eigen::Index i = 0; i < seg.size; ++i) {
      upd[i] = r[seg.offset + i] + cfg.weight_decay * th[i];
    }
    double alpha = 1.0;
    if (!force_alpha_one) {
      const double denom = upd.norm();
      alpha = denom == 0.0 ? 1.0 : th.norm() / denom;
    }
    const double scale = lr * alpha;
    for (Eigen::Index i = 0; i < seg.size; ++i) th[i] -= scale * upd[i];
  }
  ++st.step;
}

double scalar_adamw_step(ScalarAdam& st, double theta, double grad, double lr,
                         const AdamConfig& cfg) {
  if (!std::isfinite(grad)) throw NumericError("optimizer: non-finite gradient");
  st.m = cfg.beta1 * st.m + (1.0 - cfg.beta1) * grad;
  st.v = cfg.beta2 * st.v + (1.0 - cfg.beta2) * grad * grad;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step + 1));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step + 1));
  ++st.step;
  const double r = (st.m / c1) / (std::sqrt(st.v / c2) + cfg.eps);
  return theta - lr * (r + cfg.weight_decay * theta);
}

double temperature_step(ScalarAdam& st, double tau, double grad, double lr,
                        const AdamConfig& cfg, double tau0) {
  AdamConfig c = cfg;
  c.weight_decay = 0.0;
  const double next = scalar_adamw_step(st, tau, grad, lr, c);
  return next < tau0 ? tau0 : next;
}

}  // namespace fastclip::opt
