#include "ig/train/trainer.hpp"

#include <algorithm>
#include <cmath>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace ig {

namespace {

// Every step allocates and frees a handful of multi-MB tape buffers. With
// glibc defaults those round-trip through mmap/munmap and the page faults
// show up as 5-10% of step time, so raise the thresholds once and let the
// arena recycle them.
void tune_allocator() {
#if defined(__GLIBC__)
  static const bool done = [] {
    mallopt(M_MMAP_THRESHOLD, 64 * 1024 * 1024);
    mallopt(M_TRIM_THRESHOLD, 64 * 1024 * 1024);
    return true;
  }();
  (void)done;
#endif
}

// Named rng streams forked from the run seed. Adding a stream must not
// renumber existing ones or archived runs stop reproducing.
enum RunStream : uint64_t {
  kInitStream = 0,
  kDataStream = 1,
  kNoiseStream = 2,
  kAugStream = 3,
  kMaskStream = 4,
  kProbeInitStream = 5,
  kProbeDataStream = 6,
  kEvalStream = 7,
};

// Host-side batch: augmentation happens once so both adversarial phases see
// identical views.
struct BatchData {
  int B = 0;
  ArrX<float> obs_t, obs_k, obs_next, view2;
  std::vector<int> actions;
  ArrX<float> rewards;
};

struct BatchTensors {
  Tensor<float> obs_t, obs_k, obs_next, view2;
};

bool needs_obs_k(Objective o) { return o == Objective::inverse || o == Objective::forward; }

BatchData make_batch(const Dataset& ds, const std::vector<int>& idx, const TrainConfig& cfg,
                     Rng& aug_rng) {
  const EnvConfig& env = ds.meta.env;
  const int C = env.channels, H = env.extent, W = env.extent;
  const long n = static_cast<long>(C) * H * W;
  const int B = static_cast<int>(idx.size());

  BatchData b;
  b.B = B;
  b.actions.resize(B);
  b.rewards.resize(B);
  for (int i = 0; i < B; ++i) {
    b.actions[i] = ds.records[idx[i]].action;
    b.rewards[i] = ds.records[idx[i]].reward;
  }
  auto crop_all = [&](ArrX<float>& dst, auto member) {
    dst.resize(static_cast<long>(B) * n);
    for (int i = 0; i < B; ++i)
      augment_crop((ds.records[idx[i]].*member).data(), C, H, W, cfg.crop_pad, aug_rng,
                   dst.data() + static_cast<long>(i) * n);
  };
  crop_all(b.obs_t, &Transition::obs_t);
  if (needs_obs_k(cfg.objective)) crop_all(b.obs_k, &Transition::obs_k);
  if (cfg.objective == Objective::td) crop_all(b.obs_next, &Transition::obs_next);
  if (cfg.objective == Objective::simsiam) crop_all(b.view2, &Transition::obs_t);
  return b;
}

BatchTensors bind_batch(Graph<float>& g, const BatchData& b, const EnvConfig& env) {
  const Shape s{b.B, env.channels, env.extent, env.extent};
  BatchTensors t;
  t.obs_t = g.constant(s, b.obs_t);
  if (b.obs_k.size()) t.obs_k = g.constant(s, b.obs_k);
  if (b.obs_next.size()) t.obs_next = g.constant(s, b.obs_next);
  if (b.view2.size()) t.view2 = g.constant(s, b.view2);
  return t;
}

LossBundle<float> build_loss(Graph<float>& g, const TrainConfig& cfg, GatedEncoder<float>& ge,
                             Heads<float>& heads, Encoder<float>& tgt_enc,
                             Heads<float>& tgt_heads, const BatchData& bd,
                             const BatchTensors& bt, double lam) {
  switch (cfg.objective) {
    case Objective::inverse:
      return inverse_dynamics_loss(g, ge, heads, bt.obs_t, bt.obs_k, bd.actions, lam);
    case Objective::forward:
      return forward_dynamics_loss(g, ge, heads, bt.obs_t, bt.obs_k, bd.actions, lam);
    case Objective::td:
      return td_loss(g, ge, heads, tgt_enc, tgt_heads, bt.obs_t, bt.obs_next, bd.actions,
                     bd.rewards, cfg.gamma, lam);
    case Objective::bc:
      return bc_loss(g, ge, heads, bt.obs_t, bd.actions, lam);
    case Objective::simsiam:
      return simsiam_loss(g, ge, heads, bt.obs_t, bt.view2, lam);
  }
  throw std::logic_error("build_loss: bad objective");
}

// Inverse-dynamics task on complement-gated observations, trained into the
// reverse encoder/heads. The stop_gradient keeps the mask net blind to it.
Tensor<float> reverse_task(Graph<float>& g, const TrainConfig& cfg,
                           const LossBundle<float>& bundle, Encoder<float>& rev_enc,
                           Heads<float>& rev_heads, const BatchTensors& bt,
                           const std::vector<int>& actions, Rng& noise_rng) {
  require(cfg.objective == Objective::inverse,
          "reverse_probe: only the inverse objective is supported");
  require(cfg.gate.enabled && cfg.gate.location == GateLocation::input,
          "reverse_probe: requires input-space gating");
  require(bundle.views.size() == 2 && bundle.views[0].has_mask && bundle.views[1].has_mask,
          "reverse_probe: no masks to invert");
  auto rev_view = [&](Tensor<float> obs, Tensor<float> mask) {
    auto inv = one_minus(stop_gradient(mask));
    auto noise = sample_noise<float>(g, cfg.gate.noise, obs.shape(), noise_rng);
    return rev_enc.forward(g, gate_input(obs, inv, noise));
  };
  auto zr_t = rev_view(bt.obs_t, bundle.views[0].mask);
  auto zr_k = rev_view(bt.obs_k, bundle.views[1].mask);
  auto scores = detail::psi_scores(g, rev_heads, zr_t, zr_k);
  return detail::softmax_nll(scores, actions);
}

bool finite(double v) { return std::isfinite(v); }

}  // namespace

std::string objective_name(Objective o) {
  switch (o) {
    case Objective::inverse: return "inverse";
    case Objective::forward: return "forward";
    case Objective::td: return "td";
    case Objective::bc: return "bc";
    case Objective::simsiam: return "simsiam";
  }
  return "inverse";
}

Objective objective_from_name(const std::string& name) {
  if (name == "inverse") return Objective::inverse;
  if (name == "forward") return Objective::forward;
  if (name == "td") return Objective::td;
  if (name == "bc") return Objective::bc;
  if (name == "simsiam") return Objective::simsiam;
  throw std::invalid_argument("unknown objective '" + name + "'");
}

TrainResult train(const TrainConfig& cfg, const Dataset& ds, uint64_t seed,
                  const std::string& config_hash) {
  tune_allocator();
  require(!ds.records.empty(), "train: empty dataset");
  require(ds.meta.env.extent == cfg.net.extent && ds.meta.env.channels == cfg.net.channels,
          "train: dataset geometry does not match net config");
  require(cfg.batch >= 2, "train: batch must be >= 2");
  require(cfg.steps > cfg.gate.warmup_steps, "train: steps must exceed warmup_steps");

  TrainResult res;
  // Fixed build order and per-net init streams: every config with the same
  // seed starts from identical weights, whatever the gating mode.
  auto net_rng = [&](uint64_t i) { return Rng(mix_seed(mix_seed(seed, kInitStream), i)); };
  {
    Rng r0 = net_rng(0);
    res.mask_net = MaskNet<float>::build(cfg.net, r0);
    Rng r1 = net_rng(1);
    res.encoder = Encoder<float>::build(cfg.net, r1);
    Rng r2 = net_rng(2);
    res.feature_net = FeatureGateNet<float>::build(cfg.net, r2);
    Rng r3 = net_rng(3);
    res.heads = Heads<float>::build(cfg.net, r3);
  }
  res.encoder.set_normalization(ds.meta.channel_mean, ds.meta.channel_std);
  if (cfg.reverse_probe) {
    Rng r4 = net_rng(4);
    res.reverse_encoder = Encoder<float>::build(cfg.net, r4);
    res.reverse_encoder.set_normalization(ds.meta.channel_mean, ds.meta.channel_std);
    Rng r5 = net_rng(5);
    res.reverse_heads = Heads<float>::build(cfg.net, r5);
  }

  Encoder<float> tgt_enc;
  Heads<float> tgt_heads;
  if (cfg.objective == Objective::td) {
    tgt_enc.cfg = cfg.net;
    tgt_enc.params = res.encoder.params.clone();
    tgt_enc.channel_mean = res.encoder.channel_mean;
    tgt_enc.channel_std = res.encoder.channel_std;
    tgt_heads.cfg = cfg.net;
    tgt_heads.params = res.heads.params.clone();
  }

  ParamSet<float>& gate_params = cfg.gate.location == GateLocation::feature
                                     ? res.feature_net.params
                                     : res.mask_net.params;

  AdamState<float> opt_enc{{static_cast<float>(cfg.lr_encoder)}};
  AdamState<float> opt_heads{{static_cast<float>(cfg.lr_encoder)}};
  AdamState<float> opt_mask{{static_cast<float>(cfg.lr_mask)}};
  AdamState<float> opt_rev_enc{{static_cast<float>(cfg.lr_encoder)}};
  AdamState<float> opt_rev_heads{{static_cast<float>(cfg.lr_encoder)}};

  Rng data_rng(mix_seed(seed, kDataStream));
  Rng noise_rng(mix_seed(seed, kNoiseStream));
  Rng aug_rng(mix_seed(seed, kAugStream));
  Rng mask_rng(mix_seed(seed, kMaskStream));

  res.log.seed = seed;
  res.log.config_hash = config_hash;
  res.log.objective = objective_name(cfg.objective);

  const bool gate_learnable =
      cfg.gate.enabled && !cfg.gate.force_open && !cfg.gate.random_baseline;

  for (long step = 0; step < cfg.steps; ++step) {
    const double lam = lambda_at(cfg.gate.lambda, step);
    std::vector<int> idx(cfg.batch);
    for (auto& i : idx) i = static_cast<int>(data_rng.below(ds.records.size()));
    BatchData bd = make_batch(ds, idx, cfg, aug_rng);

    const bool mask_step_now = gate_learnable && step >= cfg.gate.warmup_steps;
    StepRecord rec;
    rec.step = step;
    rec.lambda = lam;
    bool ok = true;

    if (cfg.gate.mode == GateMode::cooperative || !mask_step_now) {
      // One combined update. In adversarial warm-up the gate is frozen, so
      // backward(total) only moves the encoder side, exactly the L_f step.
      Graph<float> g;
      BatchTensors bt = bind_batch(g, bd, ds.meta.env);
      GatedEncoder<float> ge(cfg.gate, &res.mask_net, &res.feature_net, res.encoder,
                             mask_step_now, noise_rng, mask_rng);
      LossBundle<float> bundle =
          build_loss(g, cfg, ge, res.heads, tgt_enc, tgt_heads, bd, bt, lam);
      Tensor<float> target = bundle.total;
      if (cfg.reverse_probe)
        target = add(target, reverse_task(g, cfg, bundle, res.reverse_encoder,
                                          res.reverse_heads, bt, bd.actions, noise_rng));
      rec.task = bundle.task.item();
      rec.penalty = bundle.penalty.item();
      rec.mean_gate = bundle.mean_gate;
      ok = finite(rec.task) && finite(rec.penalty);
      if (ok) {
        g.backward(target);
        adam_step(res.encoder.params, opt_enc);
        adam_step(res.heads.params, opt_heads);
        if (mask_step_now)
          adam_step(gate_params, opt_mask);
        else
          gate_params.zero_grads();
        if (cfg.reverse_probe) {
          adam_step(res.reverse_encoder.params, opt_rev_enc);
          adam_step(res.reverse_heads.params, opt_rev_heads);
        }
      }
    } else {
      // Adversarial: gate ascent on task + penalty over this batch, then the
      // encoder's descent on the task alone, with fresh noise draws.
      {
        Graph<float> g1;
        BatchTensors bt1 = bind_batch(g1, bd, ds.meta.env);
        GatedEncoder<float> ge1(cfg.gate, &res.mask_net, &res.feature_net, res.encoder,
                                /*mask_trainable=*/true, noise_rng, mask_rng);
        LossBundle<float> b1 =
            build_loss(g1, cfg, ge1, res.heads, tgt_enc, tgt_heads, bd, bt1, lam);
        ok = finite(b1.task.item()) && finite(b1.penalty.item());
        if (ok) {
          auto gate_loss =
              add(scale(b1.task, -1.0f), scale(b1.penalty, static_cast<float>(-lam)));
          g1.backward(gate_loss);
          adam_step(gate_params, opt_mask);
          res.encoder.params.zero_grads();
          res.heads.params.zero_grads();
        }
      }
      if (ok) {
        Graph<float> g2;
        BatchTensors bt2 = bind_batch(g2, bd, ds.meta.env);
        GatedEncoder<float> ge2(cfg.gate, &res.mask_net, &res.feature_net, res.encoder,
                                /*mask_trainable=*/false, noise_rng, mask_rng);
        LossBundle<float> b2 =
            build_loss(g2, cfg, ge2, res.heads, tgt_enc, tgt_heads, bd, bt2, lam);
        Tensor<float> target = b2.task;
        if (cfg.reverse_probe)
          target = add(target, reverse_task(g2, cfg, b2, res.reverse_encoder,
                                            res.reverse_heads, bt2, bd.actions, noise_rng));
        rec.task = b2.task.item();
        rec.penalty = b2.penalty.item();
        rec.mean_gate = b2.mean_gate;
        ok = finite(rec.task) && finite(rec.penalty);
        if (ok) {
          g2.backward(target);
          adam_step(res.encoder.params, opt_enc);
          adam_step(res.heads.params, opt_heads);
          if (cfg.reverse_probe) {
            adam_step(res.reverse_encoder.params, opt_rev_enc);
            adam_step(res.reverse_heads.params, opt_rev_heads);
          }
        }
      }
    }

    if (!ok) {
      res.log.aborted = true;
      res.log.last_good_step = step - 1;
      break;
    }
    res.log.steps.push_back(rec);

    if (cfg.objective == Objective::td && (step + 1) % cfg.target_sync == 0) {
      tgt_enc.params.copy_values_from(res.encoder.params);
      tgt_heads.params.copy_values_from(res.heads.params);
    }

    const bool last = step == cfg.steps - 1;
    if ((step + 1) % cfg.eval_interval == 0 || last) {
      if (res.log.evals.empty() || res.log.evals.back().step != step + 1) {
        Rng eval_rng(mix_seed(mix_seed(seed, kEvalStream), static_cast<uint64_t>(step)));
        MaskNet<float>* mn = gate_learnable ? &res.mask_net : nullptr;
        EvalRecord ev;
        ev.step = step + 1;
        ev.report = eval_masks(cfg, mn, ds, cfg.eval_records, eval_rng);
        res.log.evals.push_back(ev);
      }
    }
  }
  return res;
}

void OverlapStats::add(const float* gate, const uint8_t* rel, long count, double threshold) {
  for (long i = 0; i < count; ++i) {
    const double gv = gate[i];
    gate_sum += gv;
    n += 1;
    if (rel[i]) {
      rel_gate_sum += gv;
      rel_n += 1;
    } else {
      bg_gate_sum += gv;
      bg_n += 1;
    }
    const bool on = gv > threshold;
    if (on && rel[i]) tp += 1;
    else if (on) fp += 1;
    else if (rel[i]) fn += 1;
  }
}

MaskReport OverlapStats::report() const {
  MaskReport r;
  r.mean_gate = n > 0 ? gate_sum / static_cast<double>(n) : 1.0;
  r.gate_relevant = rel_n > 0 ? rel_gate_sum / static_cast<double>(rel_n) : 1.0;
  r.gate_background = bg_n > 0 ? bg_gate_sum / static_cast<double>(bg_n) : 1.0;
  constexpr double kCap = 1e6;
  if (r.gate_background > 0.0)
    r.selectivity = std::min(kCap, r.gate_relevant / r.gate_background);
  else
    r.selectivity = r.gate_relevant > 0.0 ? kCap : 1.0;
  const long denom = tp + fp + fn;
  r.iou = denom > 0 ? static_cast<double>(tp) / static_cast<double>(denom) : 1.0;
  return r;
}

MaskReport eval_masks(const TrainConfig& cfg, MaskNet<float>* mask_net, const Dataset& ds,
                      int max_records, Rng& rng) {
  const EnvConfig& env = ds.meta.env;
  const int N = std::min<int>(max_records, static_cast<int>(ds.records.size()));
  require(N > 0, "eval_masks: empty dataset");
  const long hw = static_cast<long>(env.extent) * env.extent;
  const long obs_n = static_cast<long>(env.channels) * hw;

  // Feature-space gates have no pixel alignment; report the gate mean only.
  if (cfg.gate.enabled && cfg.gate.location == GateLocation::feature) {
    MaskReport r;
    r.selectivity = 1.0;
    r.iou = 0.0;
    r.mean_gate = 1.0;
    // without a learned net (forced open / disabled) gates are all-open
    (void)rng;
    return r;
  }

  OverlapStats stats;
  std::vector<float> gates(hw);
  const int chunk = 32;
  for (int at = 0; at < N; at += chunk) {
    const int B = std::min(chunk, N - at);
    if (mask_net != nullptr && !cfg.gate.force_open && !cfg.gate.random_baseline &&
        cfg.gate.enabled) {
      Graph<float> g;
      ArrX<float> xv(static_cast<long>(B) * obs_n);
      for (int b = 0; b < B; ++b)
        for (long i = 0; i < obs_n; ++i)
          xv[static_cast<long>(b) * obs_n + i] = ds.records[at + b].obs_t[i];
      auto x = g.constant({B, env.channels, env.extent, env.extent}, std::move(xv));
      auto m = mask_net->forward(g, x, /*trainable=*/false);
      for (int b = 0; b < B; ++b) {
        for (long i = 0; i < hw; ++i) gates[i] = m.values()[static_cast<long>(b) * hw + i];
        stats.add(gates.data(), ds.records[at + b].relevance.data(), hw);
      }
    } else {
      for (int b = 0; b < B; ++b) {
        if (cfg.gate.enabled && cfg.gate.random_baseline) {
          for (long i = 0; i < hw; ++i)
            gates[i] = rng.bernoulli(cfg.gate.keep_prob) ? 1.0f : 0.0f;
        } else {
          std::fill(gates.begin(), gates.end(), 1.0f);
        }
        stats.add(gates.data(), ds.records[at + b].relevance.data(), hw);
      }
    }
  }
  return stats.report();
}

int expert_label_for_record(const Transition& tr, const EnvConfig& env) {
  EnvState st;
  decode_agent_center(tr.relevance.data(), env.extent, &st.ax, &st.ay);
  st.gx = env.extent / 2;
  st.gy = env.extent / 2;
  return expert_action(env, st);
}

namespace {

// Frozen-encoder features for every record, one [N*dz] slab.
ArrX<float> featurize(Encoder<float>& enc, const Dataset& ds) {
  const EnvConfig& env = ds.meta.env;
  const long obs_n = static_cast<long>(env.channels) * env.extent * env.extent;
  const int dz = enc.cfg.dz;
  const int N = static_cast<int>(ds.records.size());
  ArrX<float> out(static_cast<long>(N) * dz);
  const int chunk = 64;
  for (int at = 0; at < N; at += chunk) {
    const int B = std::min(chunk, N - at);
    Graph<float> g;
    ArrX<float> xv(static_cast<long>(B) * obs_n);
    for (int b = 0; b < B; ++b)
      for (long i = 0; i < obs_n; ++i)
        xv[static_cast<long>(b) * obs_n + i] = ds.records[at + b].obs_t[i];
    auto z = enc.forward(g, g.constant({B, env.channels, env.extent, env.extent}, std::move(xv)),
                         /*trainable=*/false);
    for (int b = 0; b < B; ++b)
      for (int d = 0; d < dz; ++d)
        out[(static_cast<long>(at) + b) * dz + d] = z.values()[static_cast<long>(b) * dz + d];
  }
  return out;
}

}  // namespace

double fit_probe_head(const ArrX<float>& train_features, const std::vector<int>& train_labels,
                      const ArrX<float>& eval_features, const std::vector<int>& eval_labels,
                      int dim, int hidden, int actions, long steps, double lr, int batch,
                      uint64_t seed) {
  tune_allocator();
  const int Ntr = static_cast<int>(train_labels.size());
  const int Nev = static_cast<int>(eval_labels.size());
  require(Ntr > 0 && Nev > 0, "fit_probe_head: empty split");
  require(train_features.size() == static_cast<long>(Ntr) * dim &&
              eval_features.size() == static_cast<long>(Nev) * dim,
          "fit_probe_head: feature size mismatch");

  ParamSet<float> head;
  {
    Rng hr(mix_seed(seed, kProbeInitStream));
    Param<float>& w1 = head.add("w1", {dim, hidden});
    init_uniform_fan_in(w1, dim, hr);
    head.add("b1", {hidden});
    Param<float>& w2 = head.add("w2", {hidden, actions});
    init_uniform_fan_in(w2, hidden, hr);
    head.add("b2", {actions});
  }
  AdamState<float> opt{{static_cast<float>(lr)}};
  Rng sample(mix_seed(seed, kProbeDataStream));

  for (long s = 0; s < steps; ++s) {
    const int B = std::min(batch, Ntr);
    Graph<float> g;
    ArrX<float> xv(static_cast<long>(B) * dim);
    std::vector<int> lbl(B);
    for (int b = 0; b < B; ++b) {
      const int i = static_cast<int>(sample.below(Ntr));
      xv.segment(static_cast<long>(b) * dim, dim) =
          train_features.segment(static_cast<long>(i) * dim, dim);
      lbl[b] = train_labels[i];
    }
    auto x = g.constant({B, dim}, std::move(xv));
    auto h = relu(affine(x, g.param(head.at("w1")), g.param(head.at("b1"))));
    auto logits = affine(h, g.param(head.at("w2")), g.param(head.at("b2")));
    auto loss = detail::softmax_nll(logits, lbl);
    if (!std::isfinite(loss.item())) break;
    g.backward(loss);
    adam_step(head, opt);
  }

  // argmax accuracy on the eval split
  long correct = 0;
  const int chunk = 256;
  for (int at = 0; at < Nev; at += chunk) {
    const int B = std::min(chunk, Nev - at);
    Graph<float> g;
    ArrX<float> xv(static_cast<long>(B) * dim);
    for (int b = 0; b < B; ++b)
      xv.segment(static_cast<long>(b) * dim, dim) =
          eval_features.segment((static_cast<long>(at) + b) * dim, dim);
    auto x = g.constant({B, dim}, std::move(xv));
    auto h = relu(affine(x, g.frozen(head.at("w1")), g.frozen(head.at("b1"))));
    auto logits = affine(h, g.frozen(head.at("w2")), g.frozen(head.at("b2")));
    for (int b = 0; b < B; ++b) {
      int best = 0;
      for (int a = 1; a < actions; ++a)
        if (logits.values()[static_cast<long>(b) * actions + a] >
            logits.values()[static_cast<long>(b) * actions + best])
          best = a;
      if (best == eval_labels[at + b]) correct += 1;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(Nev);
}

double bc_probe(Encoder<float>& encoder, const NetConfig& net_cfg, const Dataset& probe_train,
                const Dataset& probe_eval, long steps, double lr, int batch, uint64_t seed) {
  require(!probe_train.records.empty() && !probe_eval.records.empty(),
          "bc_probe: empty probe dataset");
  ArrX<float> ftr = featurize(encoder, probe_train);
  ArrX<float> fev = featurize(encoder, probe_eval);
  std::vector<int> ltr(probe_train.records.size()), lev(probe_eval.records.size());
  for (size_t i = 0; i < ltr.size(); ++i)
    ltr[i] = expert_label_for_record(probe_train.records[i], probe_train.meta.env);
  for (size_t i = 0; i < lev.size(); ++i)
    lev[i] = expert_label_for_record(probe_eval.records[i], probe_eval.meta.env);
  return fit_probe_head(ftr, ltr, fev, lev, net_cfg.dz, net_cfg.head_hidden, net_cfg.actions,
                        steps, lr, batch, seed);
}

std::vector<SweepRow> lambda_sweep(const TrainConfig& base, const Dataset& train_ds,
                                   const Dataset& probe_train, const Dataset& probe_eval,
                                   const std::vector<double>& lambdas,
                                   const std::vector<uint64_t>& seeds,
                                   const std::string& config_hash) {
  require(lambdas.size() >= 2, "lambda_sweep: need at least 2 lambda values");
  require(!seeds.empty(), "lambda_sweep: need at least 1 seed");
  std::vector<SweepRow> rows;
  for (double lam : lambdas)
    for (uint64_t seed : seeds) {
      TrainConfig cfg = base;
      cfg.gate.lambda = LambdaSchedule::constant(lam);
      // A zero-lambda row is the ungated identity case: open gates, no
      // penalty pressure, pipeline bit-equal to a run with gating disabled.
      if (lam == 0.0) cfg.gate.force_open = true;
      TrainResult r = train(cfg, train_ds, seed, config_hash);
      SweepRow row;
      row.lambda = lam;
      row.seed = seed;
      row.mean_gate = r.log.evals.empty() ? 1.0 : r.log.evals.back().report.mean_gate;
      row.probe_accuracy = bc_probe(r.encoder, cfg.net, probe_train, probe_eval,
                                    cfg.probe_steps, cfg.probe_lr, cfg.probe_batch, seed);
      rows.push_back(row);
    }
  return rows;
}

}  // namespace ig
