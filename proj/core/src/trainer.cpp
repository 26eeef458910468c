#include "fastclip/trainer.hpp"

#include <algorithm>
#include <numeric>
#include <span>

#include "fastclip/engine.hpp"
#include "fastclip/losses.hpp"
#include "fastclip/rng.hpp"

namespace fastclip::train {

Variant variant_from_string(const std::string& s) {
  if (s == "openclip_mbcl") return Variant::openclip_mbcl;
  if (s == "sogclr") return Variant::sogclr;
  if (s == "isogclr") return Variant::isogclr;
  if (s == "fastclip_v0") return Variant::fastclip_v0;
  if (s == "fastclip_v1") return Variant::fastclip_v1;
  if (s == "fastclip_v2") return Variant::fastclip_v2;
  if (s == "fastclip_v3") return Variant::fastclip_v3;
  throw ConfigError("algo.variant", "unknown variant '" + s + "'");
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::openclip_mbcl: return "openclip_mbcl";
    case Variant::sogclr: return "sogclr";
    case Variant::isogclr: return "isogclr";
    case Variant::fastclip_v0: return "fastclip_v0";
    case Variant::fastclip_v1: return "fastclip_v1";
    case Variant::fastclip_v2: return "fastclip_v2";
    case Variant::fastclip_v3: return "fastclip_v3";
  }
  return "?";
}

namespace {

bool uses_u(Variant v) { return v != Variant::openclip_mbcl; }

bool individual_temp(Variant v) {
  return v == Variant::isogclr || v == Variant::fastclip_v2;
}

state::TempScheme scheme_of(Variant v) {
  switch (v) {
    case Variant::sogclr:
    case Variant::fastclip_v1: return state::TempScheme::constant;
    case Variant::isogclr:
    case Variant::fastclip_v2: return state::TempScheme::individual_v2;
    case Variant::fastclip_v3: return state::TempScheme::global_learnable_v3;
    case Variant::openclip_mbcl:
    case Variant::fastclip_v0: return state::TempScheme::global_learnable_v0;
  }
  return state::TempScheme::constant;
}

}  // namespace

AlgoConfig resolve_algo_config(const io::RunConfig& cfg, int n_pairs, int d_img, int d_txt) {
  AlgoConfig a;
  a.variant = variant_from_string(cfg.get("algo.variant"));
  a.workers = static_cast<int>(cfg.get_int("fabric.workers"));
  a.batch_per_worker = static_cast<int>(cfg.get_int("algo.batch_per_worker"));
  a.epochs = cfg.get_int("algo.epochs");
  a.seed = static_cast<std::uint64_t>(cfg.get_int("algo.seed"));
  a.probe_size = static_cast<int>(cfg.get_int("data.probe_size"));
  a.checkpoint_every = cfg.get_int("run.checkpoint_every");

  if (a.workers < 1) throw ConfigError("fabric.workers", "must be >= 1");
  if (a.batch_per_worker < 1) throw ConfigError("algo.batch_per_worker", "must be >= 1");
  if (a.epochs < 0) throw ConfigError("algo.epochs", "must be >= 0");
  if (a.probe_size < 2) throw ConfigError("data.probe_size", "need at least 2 probe pairs");
  const int batch = a.global_batch();
  if (batch < 2) throw ConfigError("algo.batch_per_worker", "global batch must be >= 2");
  const int n_train = n_pairs - a.probe_size;
  if (n_train < batch) {
    throw ConfigError("data.probe_size", "training slice smaller than one global batch");
  }
  if (n_train % batch != 0) {
    throw ConfigError("algo.batch_per_worker",
                      "global batch must divide the training pair count (shard imbalance)");
  }

  const std::string red = cfg.get("fabric.reduction");
  if (red == "auto") {
    a.reduction =
        a.variant == Variant::openclip_mbcl ? Reduction::openclip_rs : Reduction::fastclip;
  } else if (red == "fastclip") {
    a.reduction = Reduction::fastclip;
  } else if (red == "openclip_rs") {
    a.reduction = Reduction::openclip_rs;
  } else {
    throw ConfigError("fabric.reduction", "expected auto|fastclip|openclip_rs");
  }

  // Inner LR schedule; the pre-compositional variants are constant-gamma by
  // definition and the mini-batch baseline has no estimator to schedule.
  const std::string gkind = cfg.get("gamma.kind");
  const bool gamma_must_be_constant =
      a.variant == Variant::sogclr || a.variant == Variant::isogclr ||
      a.variant == Variant::openclip_mbcl;
  if (gkind == "cosine" && gamma_must_be_constant) {
    throw ConfigError("gamma.kind", std::string("variant ") + variant_name(a.variant) +
                                        " uses a constant inner learning rate");
  }
  const long long iters = n_train / batch;
  a.gamma.iters_per_epoch = std::max<long long>(1, iters);
  if (gkind == "constant" || gamma_must_be_constant) {
    a.gamma.kind = sched::GammaSchedule::Kind::constant;
    a.gamma.constant =
        a.variant == Variant::openclip_mbcl ? 1.0 : cfg.get_double("gamma.value");
  } else if (gkind == "cosine" || gkind == "auto") {
    a.gamma.kind = sched::GammaSchedule::Kind::cosine;
    a.gamma.gamma_min = cfg.get_double("gamma.min");
    a.gamma.decay_epochs = cfg.is_auto("gamma.decay_epochs")
                               ? std::max<long long>(1, a.epochs / 2)
                               : cfg.get_int("gamma.decay_epochs");
  } else {
    throw ConfigError("gamma.kind", "expected auto|constant|cosine");
  }
  a.gamma.validate();

  a.lr.peak_lr = cfg.get_double("optimizer.lr");
  a.lr.min_lr = cfg.get_double("optimizer.min_lr");
  a.lr.total_iters = std::max<long long>(1, a.epochs * iters);
  a.lr.warmup_iters = cfg.is_auto("optimizer.warmup_iters") ? a.lr.total_iters / 10
                                                            : cfg.get_int("optimizer.warmup_iters");
  a.lr.validate();

  a.epsilon.initial = cfg.get_double("loss.epsilon");
  a.epsilon.late =
      cfg.is_auto("loss.epsilon_late") ? a.epsilon.initial : cfg.get_double("loss.epsilon_late");
  a.epsilon.switch_epoch = cfg.is_auto("loss.epsilon_switch_epoch")
                               ? sched::EpsilonSchedule::kNever
                               : cfg.get_int("loss.epsilon_switch_epoch");
  a.epsilon.validate();

  a.temp.scheme = scheme_of(a.variant);
  a.temp.init = cfg.is_auto("temperature.init")
                    ? (a.variant == Variant::fastclip_v3 ? 0.07 : 0.03)
                    : cfg.get_double("temperature.init");
  a.temp.tau0 = cfg.get_double("temperature.tau0");
  if (cfg.is_auto("temperature.lr")) {
    switch (a.temp.scheme) {
      case state::TempScheme::constant: a.temp.lr = 0.0; break;
      case state::TempScheme::individual_v2: a.temp.lr = 1e-2; break;
      default: a.temp.lr = 2e-4; break;
    }
  } else {
    a.temp.lr = cfg.get_double("temperature.lr");
  }
  if (cfg.is_auto("temperature.rho")) {
    if (individual_temp(a.variant)) {
      a.temp.rho = 9.0;
    } else if (a.variant == Variant::fastclip_v3) {
      a.temp.rho = 6.5;
    } else {
      a.temp.rho = 0.0;
    }
  } else {
    a.temp.rho = cfg.get_double("temperature.rho");
  }
  a.temp.lr_decay_enabled = cfg.is_auto("temperature.lr_decay")
                                ? a.variant == Variant::fastclip_v3
                                : cfg.get_bool("temperature.lr_decay");
  a.temp.lr_decay_threshold = cfg.get_double("temperature.lr_decay_threshold");
  a.temp.lr_decay_factor = cfg.get_double("temperature.lr_decay_factor");
  a.temp.validate();

  const std::string okind = cfg.get("optimizer.kind");
  if (okind == "adamw") {
    a.optimizer = OptimizerKind::adamw;
  } else if (okind == "lamb") {
    a.optimizer = OptimizerKind::lamb;
  } else {
    throw ConfigError("optimizer.kind", "expected adamw|lamb");
  }
  a.adam.beta1 = cfg.get_double("optimizer.beta1");
  a.adam.beta2 = cfg.get_double("optimizer.beta2");
  a.adam.eps = cfg.get_double("optimizer.eps");
  a.adam.weight_decay = cfg.get_double("optimizer.weight_decay");

  const std::string scaled = cfg.get("loss.scale_by_tau");
  if (scaled == "auto") {
    a.scale_by_tau =
        !(a.variant == Variant::fastclip_v0 || a.variant == Variant::openclip_mbcl);
  } else if (scaled == "on") {
    a.scale_by_tau = true;
  } else if (scaled == "off") {
    a.scale_by_tau = false;
  } else {
    throw ConfigError("loss.scale_by_tau", "expected auto|on|off");
  }

  const int embed = static_cast<int>(cfg.get_int("model.embed_dim"));
  const int hidden = static_cast<int>(cfg.get_int("model.hidden_dim"));
  if (embed < 1) throw ConfigError("model.embed_dim", "must be >= 1");
  if (hidden < 0) throw ConfigError("model.hidden_dim", "must be >= 0");
  const enc::TowerKind kind = hidden > 0 ? enc::TowerKind::mlp : enc::TowerKind::linear;
  a.image_tower = {kind, d_img, hidden, embed};
  a.text_tower = {kind, d_txt, hidden, embed};
  return a;
}

BatchPlan::BatchPlan(int n_train, int global_batch, std::uint64_t seed)
    : n_train_(n_train), batch_(global_batch), seed_(seed) {
  if (n_train < global_batch || global_batch < 1) {
    throw ConfigError("algo.batch_per_worker", "global batch larger than the training set");
  }
  if (n_train % global_batch != 0) {
    throw ConfigError("algo.batch_per_worker", "global batch must divide the training set");
  }
}

std::vector<int> BatchPlan::epoch_permutation(long long epoch) const {
  std::vector<int> perm(static_cast<std::size_t>(n_train_));
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(stream_seed(seed_, {0x65706f6368ULL, static_cast<std::uint64_t>(epoch)}));
  rng.shuffle(perm);
  return perm;
}

std::vector<int> BatchPlan::global_batch_indices(long long epoch, long long iter) const {
  if (iter < 0 || iter >= iters_per_epoch()) throw ShapeError("BatchPlan: iteration out of range");
  const std::vector<int> perm = epoch_permutation(epoch);
  const auto first = perm.begin() + static_cast<std::ptrdiff_t>(iter * batch_);
  return {first, first + batch_};
}

std::vector<int> BatchPlan::local_batch(long long epoch, long long iter, int worker,
                                        int world) const {
  if (world < 1 || worker < 0 || worker >= world) throw ShapeError("BatchPlan: bad worker");
  if (batch_ % world != 0) {
    throw ConfigError("fabric.workers", "worker count must divide the global batch");
  }
  const std::vector<int> global = global_batch_indices(epoch, iter);
  const int local = batch_ / world;
  const auto first = global.begin() + static_cast<std::ptrdiff_t>(worker * local);
  return {first, first + local};
}

namespace {

struct Replica {
  enc::TwoTowerModel model;
  opt::FlatAdamState wstate;
  double tau = 0.0;
  opt::ScalarAdam tau_adam;
  sched::TauLrLatch latch;

  Replica(const enc::TowerShape& img, const enc::TowerShape& txt)
      : model(img, txt), wstate(model.param_count()) {}
};

std::vector<double> flatten_rows(const Matrix& m) {
  std::vector<double> out(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      out[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
    }
  }
  return out;
}

Matrix unflatten_rows(const std::vector<double>& v, Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = v[static_cast<std::size_t>(r * cols + c)];
    }
  }
  return m;
}

double median_of(std::vector<double> xs) {
  std::sort(xs.begin(), xs.end());
  const std::size_t n = xs.size();
  return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

}  // namespace

Trainer::Trainer(const io::PairDataset& dataset, AlgoConfig cfg)
    : data_(dataset), cfg_(std::move(cfg)) {
  n_train_ = data_.n() - cfg_.probe_size;
  validate();
}

int Trainer::iters_per_epoch() const { return n_train_ / cfg_.global_batch(); }

void Trainer::validate() const {
  cfg_.image_tower.validate();
  cfg_.text_tower.validate();
  if (cfg_.image_tower.d_in != data_.d_img() || cfg_.text_tower.d_in != data_.d_txt()) {
    throw ConfigError("model", "tower input dims disagree with the dataset");
  }
  if (cfg_.probe_size < 2) throw ConfigError("data.probe_size", "need at least 2 probe pairs");
  const int batch = cfg_.global_batch();
  if (batch < 2) throw ConfigError("algo.batch_per_worker", "global batch must be >= 2");
  if (n_train_ < batch || n_train_ % batch != 0) {
    throw ConfigError("algo.batch_per_worker",
                      "global batch must evenly divide the training pairs (shard imbalance)");
  }
  if (cfg_.epochs < 0) throw ConfigError("algo.epochs", "must be >= 0");
  cfg_.gamma.validate();
  cfg_.lr.validate();
  cfg_.epsilon.validate();
  cfg_.temp.validate();
}

TrainResult Trainer::run(const StepObserver* observer, const io::Checkpoint* resume,
                         const std::function<void(const io::Checkpoint&)>& checkpoint_sink) {
  const int world = cfg_.workers;
  const int local = cfg_.batch_per_worker;
  const int batch = cfg_.global_batch();
  const long long iters = iters_per_epoch();
  const int dim = cfg_.image_tower.d_out;
  const bool track_u = uses_u(cfg_.variant);
  const bool indiv = individual_temp(cfg_.variant);

  BatchPlan plan(n_train_, batch, cfg_.seed);

  // Replicated per-worker state; kept bit-identical by construction.
  std::vector<Replica> reps;
  reps.reserve(static_cast<std::size_t>(world));
  for (int k = 0; k < world; ++k) {
    reps.emplace_back(cfg_.image_tower, cfg_.text_tower);
    reps.back().model.init_params(cfg_.seed);
    reps.back().tau = cfg_.temp.init;
    reps.back().latch.threshold = cfg_.temp.lr_decay_threshold;
    reps.back().latch.factor = cfg_.temp.lr_decay_factor;
  }

  // Shard-owned shared state.
  state::UTable utable(n_train_);
  state::IndividualTemp itemp;
  if (indiv) itemp = state::IndividualTemp(n_train_, cfg_.temp.init, cfg_.temp.tau0);

  long long start_epoch = 0;
  if (resume != nullptr) {
    if (resume->params.size() != reps[0].model.param_count()) {
      throw ConfigError("resume", "checkpoint parameter count disagrees with the model");
    }
    start_epoch = resume->next_epoch;
    for (Replica& r : reps) {
      r.model.set_params(resume->params);
      r.wstate.m = resume->opt_m;
      r.wstate.v = resume->opt_v;
      r.wstate.step = resume->opt_step;
      r.tau = resume->tau;
      r.tau_adam = resume->tau_adam;
      r.latch.latched = resume->tau_lr_latched;
    }
    utable.load(resume->u1, resume->u2);
    if (indiv) {
      if (!resume->has_individual_temp) {
        throw ConfigError("resume", "checkpoint lacks individual temperature state");
      }
      itemp = resume->individual;
    }
  }

  dist::Fabric fabric(world);
  TrainResult result;
  const std::vector<Segment> segments = reps[0].model.layer_segments();

  auto make_checkpoint = [&](long long next_epoch) {
    io::Checkpoint ck;
    ck.seed = cfg_.seed;
    ck.next_epoch = next_epoch;
    ck.global_step = next_epoch * iters;
    ck.image_shape = cfg_.image_tower;
    ck.text_shape = cfg_.text_tower;
    ck.params = reps[0].model.params();
    ck.opt_m = reps[0].wstate.m;
    ck.opt_v = reps[0].wstate.v;
    ck.opt_step = reps[0].wstate.step;
    ck.tau = reps[0].tau;
    ck.tau_adam = reps[0].tau_adam;
    ck.tau_lr_latched = reps[0].latch.latched;
    ck.u1 = utable.u1();
    ck.u2 = utable.u2();
    ck.has_individual_temp = indiv;
    if (indiv) ck.individual = itemp;
    return ck;
  };

  const Matrix probe_img = data_.images.bottomRows(cfg_.probe_size);
  const Matrix probe_txt = data_.texts.bottomRows(cfg_.probe_size);

  auto worker_body = [&](int k) {
    Replica& rep = reps[static_cast<std::size_t>(k)];
    for (long long epoch = start_epoch; epoch < cfg_.epochs; ++epoch) {
      const std::vector<int> perm = plan.epoch_permutation(epoch);
      // Claim ownership of every pair this worker will touch this epoch.
      for (long long it = 0; it < iters; ++it) {
        const std::size_t base = static_cast<std::size_t>(it * batch + k * local);
        for (int r = 0; r < local; ++r) utable.owners().assign(perm[base + r], k);
      }

      for (long long it = 0; it < iters; ++it) {
        const long long t = epoch * iters + it;
        const double gamma = cfg_.gamma.at(t);
        const double lr_t = cfg_.lr.at(t);
        const double eps_t = cfg_.epsilon.at(epoch);

        const std::size_t base = static_cast<std::size_t>(it * batch + k * local);
        std::vector<int> local_idx(perm.begin() + static_cast<std::ptrdiff_t>(base),
                                   perm.begin() + static_cast<std::ptrdiff_t>(base + local));

        Matrix x_img(local, data_.d_img());
        Matrix x_txt(local, data_.d_txt());
        for (int r = 0; r < local; ++r) {
          x_img.row(r) = data_.images.row(local_idx[static_cast<std::size_t>(r)]);
          x_txt.row(r) = data_.texts.row(local_idx[static_cast<std::size_t>(r)]);
        }

        const enc::ForwardTape img_tape = rep.model.forward(enc::Modality::image, x_img);
        const enc::ForwardTape txt_tape = rep.model.forward(enc::Modality::text, x_txt);

        const Matrix e1g = unflatten_rows(
            fabric.all_gather(k, "feature-gather", flatten_rows(img_tape.e)), batch, dim);
        const Matrix e2g = unflatten_rows(
            fabric.all_gather(k, "feature-gather", flatten_rows(txt_tape.e)), batch, dim);

        // Local inner means at the current temperatures (Proc. 1).
        Vector t1_loc(local), t2_loc(local);
        if (indiv) {
          itemp.snapshot(local_idx, t1_loc, t2_loc);
        } else {
          t1_loc.setConstant(rep.tau);
          t2_loc.setConstant(rep.tau);
        }
        Vector g1_loc, g2_loc;
        engine::g_values(e1g, e2g, t1_loc, t2_loc, k * local, local, g1_loc, g2_loc);

        Vector u1_loc(local), u2_loc(local);
        if (track_u) {
          for (int r = 0; r < local; ++r) {
            utable.update(local_idx[static_cast<std::size_t>(r)], g1_loc[r], g2_loc[r], gamma, k,
                          t);
          }
          utable.snapshot(local_idx, t, u1_loc, u2_loc);
        }

        // Resolve per-anchor weights; the gather strategy decides whether the
        // whole batch's weights are known locally.
        engine::PairWeights weights;
        Vector u1g, u2g, tau1g, tau2g;
        if (cfg_.variant == Variant::openclip_mbcl) {
          Vector tau_all = Vector::Constant(batch, rep.tau);
          Vector g1_all, g2_all;
          engine::g_values(e1g, e2g, tau_all, tau_all, 0, batch, g1_all, g2_all);
          weights = engine::weights_mbcl(g1_all, g2_all, batch, rep.tau);
          u1g = g1_all;  // the baseline's tau gradient reuses current-batch means
          u2g = g2_all;
        } else if (cfg_.reduction == Reduction::fastclip) {
          std::vector<double> payload(static_cast<std::size_t>(2 * local));
          for (int r = 0; r < local; ++r) {
            payload[static_cast<std::size_t>(r)] = u1_loc[r];
            payload[static_cast<std::size_t>(local + r)] = u2_loc[r];
          }
          const std::vector<double> gathered = fabric.all_gather(k, "u-gather", payload);
          u1g.resize(batch);
          u2g.resize(batch);
          for (int w = 0; w < world; ++w) {
            for (int r = 0; r < local; ++r) {
              u1g[w * local + r] = gathered[static_cast<std::size_t>(w * 2 * local + r)];
              u2g[w * local + r] = gathered[static_cast<std::size_t>(w * 2 * local + local + r)];
            }
          }
          if (indiv) {
            std::vector<double> tpay(static_cast<std::size_t>(2 * local));
            for (int r = 0; r < local; ++r) {
              tpay[static_cast<std::size_t>(r)] = t1_loc[r];
              tpay[static_cast<std::size_t>(local + r)] = t2_loc[r];
            }
            const std::vector<double> tg = fabric.all_gather(k, "tau-gather", tpay);
            tau1g.resize(batch);
            tau2g.resize(batch);
            for (int w = 0; w < world; ++w) {
              for (int r = 0; r < local; ++r) {
                tau1g[w * local + r] = tg[static_cast<std::size_t>(w * 2 * local + r)];
                tau2g[w * local + r] = tg[static_cast<std::size_t>(w * 2 * local + local + r)];
              }
            }
            weights = engine::weights_individual_tau(u1g, u2g, tau1g, tau2g, eps_t);
          } else {
            weights = engine::weights_global_tau(u1g, u2g, rep.tau, eps_t, cfg_.scale_by_tau);
          }
        } else {
          // Reduce-scatter strategy: only local estimator entries exist here.
          u1g = Vector::Zero(batch);
          u2g = Vector::Zero(batch);
          for (int r = 0; r < local; ++r) {
            u1g[k * local + r] = u1_loc[r];
            u2g[k * local + r] = u2_loc[r];
          }
          if (indiv) {
            tau1g = Vector::Ones(batch);
            tau2g = Vector::Ones(batch);
            for (int r = 0; r < local; ++r) {
              tau1g[k * local + r] = t1_loc[r];
              tau2g[k * local + r] = t2_loc[r];
            }
            weights = engine::weights_individual_tau(u1g, u2g, tau1g, tau2g, eps_t);
          } else {
            weights = engine::weights_global_tau(u1g, u2g, rep.tau, eps_t, cfg_.scale_by_tau);
          }
          // Zero the entries this worker has no weights for; they feed only
          // the reduce-scatter partials, which use local anchors alone.
          for (int i = 0; i < batch; ++i) {
            if (i < k * local || i >= (k + 1) * local) {
              weights.w1[i] = 0.0;
              weights.w2[i] = 0.0;
            }
          }
        }

        engine::Cotangents cot;
        if (cfg_.reduction == Reduction::fastclip) {
          cot = engine::embedding_cotangents(e1g, e2g, weights, k * local, local,
                                             engine::Parts::both);
        } else {
          cot = engine::embedding_cotangents(e1g, e2g, weights, k * local, local,
                                             engine::Parts::anchor);
          const engine::RsPartials parts =
              engine::rs_partial_cotangents(e1g, e2g, weights, k * local, local);
          const std::vector<double> shard2 =
              fabric.reduce_scatter_mean(k, "rs-grad", flatten_rows(parts.for_e2));
          const std::vector<double> shard1 =
              fabric.reduce_scatter_mean(k, "rs-grad", flatten_rows(parts.for_e1));
          const double scale = engine::rs_shard_scale(world, local, batch);
          cot.d_e2 += scale * unflatten_rows(shard2, local, dim);
          cot.d_e1 += scale * unflatten_rows(shard1, local, dim);
        }

        engine::GradPacket packet = engine::assemble_packet(rep.model, img_tape, txt_tape, cot);
        const std::vector<double> reduced_raw =
            fabric.all_reduce_mean(k, "grad-reduce",
                                   std::span<const double>(packet.values.data(),
                                                           static_cast<std::size_t>(
                                                               packet.values.size())));
        Vector reduced = Eigen::Map<const Vector>(reduced_raw.data(),
                                                  static_cast<Eigen::Index>(reduced_raw.size()));

        if (cfg_.optimizer == OptimizerKind::adamw) {
          opt::adamw_step(rep.wstate, rep.model.mutable_params(), reduced, lr_t, cfg_.adam);
        } else {
          opt::lamb_step(rep.wstate, rep.model.mutable_params(), reduced, lr_t, cfg_.adam,
                         segments);
        }

        // Temperature update (the scalar schemes reduce their gradient, the
        // individualized scheme steps owner-side with sparse Adam states).
        switch (cfg_.temp.scheme) {
          case state::TempScheme::constant: break;
          case state::TempScheme::global_learnable_v0:
          case state::TempScheme::global_learnable_v3: {
            double gtau_local = 0.0;
            if (cfg_.variant == Variant::openclip_mbcl) {
              gtau_local =
                  engine::grad_tau_mbcl(e1g, e2g, u1g, u2g, k * local, local, rep.tau);
            } else if (cfg_.temp.scheme == state::TempScheme::global_learnable_v0) {
              gtau_local = engine::grad_tau_unscaled(e1g, e2g, u1g, u2g, k * local, local,
                                                     rep.tau, eps_t);
            } else {
              gtau_local = engine::grad_tau_margin(e1g, e2g, u1g, u2g, k * local, local,
                                                   rep.tau, eps_t, cfg_.temp.rho);
            }
            const double gtau = fabric.all_reduce_mean_scalar(k, "tau-reduce", gtau_local);
            double tau_lr = cfg_.temp.lr;
            if (cfg_.temp.lr_decay_enabled) tau_lr *= rep.latch.modifier(rep.tau);
            rep.tau = opt::temperature_step(rep.tau_adam, rep.tau, gtau, tau_lr, cfg_.adam,
                                            cfg_.temp.tau0);
            break;
          }
          case state::TempScheme::individual_v2: {
            const auto grads = engine::grad_tau_individual(
                e1g, e2g, u1g, u2g, tau1g, tau2g, k * local, local, eps_t, cfg_.temp.rho,
                n_train_);
            for (const engine::TauPairGrad& g : grads) {
              itemp.update(local_idx[static_cast<std::size_t>(g.local_row)], g.g_tau1, g.g_tau2,
                           cfg_.temp.lr, cfg_.adam, k, utable.owners());
            }
            break;
          }
        }

        if (observer != nullptr && observer->on_step && k == 0) {
          observer->on_step(t, reduced, rep.model.params(), rep.tau);
        }
      }

      fabric.barrier(k);
      if (k == 0) {
        // Probe metrics on worker 0's replica (all replicas are identical).
        const enc::ForwardTape p1 = rep.model.forward(enc::Modality::image, probe_img);
        const enc::ForwardTape p2 = rep.model.forward(enc::Modality::text, probe_txt);
        const io::RetrievalResult rr = io::evaluate_retrieval(p1.e, p2.e);
        io::EpochMetrics row;
        row.epoch = epoch;
        double tau_ref = rep.tau;
        if (indiv) {
          std::vector<double> all;
          all.reserve(static_cast<std::size_t>(2 * n_train_));
          for (int i = 0; i < n_train_; ++i) {
            all.push_back(itemp.tau1()[i]);
            all.push_back(itemp.tau2()[i]);
          }
          row.tau_min = *std::min_element(all.begin(), all.end());
          row.tau_max = *std::max_element(all.begin(), all.end());
          row.tau_median = median_of(std::move(all));
          tau_ref = row.tau_median;
        } else {
          row.tau_min = row.tau_median = row.tau_max = rep.tau;
        }
        const double eps_now = cfg_.epsilon.at(epoch);
        row.probe_gcl = losses::eval_gcl(p1.e, p2.e, tau_ref, eps_now);
        row.probe_rgclg = row.probe_gcl + 2.0 * cfg_.temp.rho * tau_ref;
        row.r1_i2t = rr.r1_i2t;
        row.r1_t2i = rr.r1_t2i;
        row.gamma = cfg_.gamma.at(epoch * iters);
        row.lr = cfg_.lr.at((epoch + 1) * iters - 1);
        row.comm_elements = fabric.ledger_total_elements();
        result.metrics.push_back(row);
        if (checkpoint_sink && cfg_.checkpoint_every > 0 &&
            (epoch + 1) % cfg_.checkpoint_every == 0 && epoch + 1 < cfg_.epochs) {
          checkpoint_sink(make_checkpoint(epoch + 1));
        }
      }
    }
  };

  fabric.run_workers(worker_body);

  result.final_state = make_checkpoint(cfg_.epochs);
  result.ledger = fabric.ledger();
  return result;
}

}  // namespace fastclip::train
