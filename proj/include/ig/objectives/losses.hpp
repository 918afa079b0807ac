#pragma once

// Task objectives over gated encodings. Every loss returns a LossBundle with
// the task term, the summed gate penalty, and total = task + lambda*penalty.
// When gating is disabled the penalty is the all-open constant (1 per view),
// which carries no gradient but keeps logs comparable with forced-open runs.

#include <vector>

#include "ig/gating/gating.hpp"
#include "ig/nets/nets.hpp"

namespace ig {

// Negated InfoNCE bound: mean over rows of log-sum-exp(pos, negs) - pos.
// Lower is better; equal scores give log(1 + #negatives).
template <typename S>
Tensor<S> infonce(Tensor<S> pos, Tensor<S> negs) {
  Graph<S>& g = same_graph(pos, negs);
  (void)g;
  require(pos.shape().size() == 1, "infonce: pos must be [B], got " + shape_str(pos.shape()));
  require(negs.shape().size() == 2 && negs.shape()[0] == pos.shape()[0],
          "infonce: negs must be [B,N] matching pos, got " + shape_str(negs.shape()));
  require(pos.values().isFinite().all() && negs.values().isFinite().all(),
          "infonce: non-finite score");
  const int B = pos.shape()[0];
  auto scores = concat<S>({reshape(pos, {B, 1}), negs}, 1);
  return mean(sub(logsumexp_rows(scores), pos));
}

template <typename S>
struct ViewEncoding {
  Tensor<S> z;
  Tensor<S> mask;
  bool has_mask = false;
};

template <typename S>
struct LossBundle {
  Tensor<S> task;
  Tensor<S> penalty;  // sum of per-view mean |gate|
  Tensor<S> total;    // task + lambda * penalty
  std::vector<ViewEncoding<S>> views;
  double mean_gate = 1.0;
  double pos_score = 0.0;
  double neg_score = 0.0;
};

// Applies the configured gating while encoding observation views. Collects
// nothing itself; objectives keep the ViewEncodings they create and fold the
// masks into the penalty.
template <typename S>
class GatedEncoder {
 public:
  GatedEncoder(const GateConfig& gc, MaskNet<S>* mask_net, FeatureGateNet<S>* feature_net,
               Encoder<S>& encoder, bool mask_trainable, Rng& noise_rng, Rng& mask_rng)
      : gc_(gc),
        mask_net_(mask_net),
        feature_net_(feature_net),
        encoder_(encoder),
        mask_trainable_(mask_trainable),
        noise_rng_(noise_rng),
        mask_rng_(mask_rng) {}

  const GateConfig& config() const { return gc_; }
  Encoder<S>& encoder() { return encoder_; }

  Tensor<S> encode_raw(Graph<S>& g, Tensor<S> x, bool trainable = true) {
    return encoder_.forward(g, x, trainable);
  }

  ViewEncoding<S> encode_gated(Graph<S>& g, Tensor<S> x) {
    ViewEncoding<S> v;
    if (!gc_.enabled) {
      v.z = encoder_.forward(g, x);
      return v;
    }
    if (gc_.location == GateLocation::input) {
      const Shape s = x.shape();  // by value: appends below may reallocate nodes
      Tensor<S> mask = make_mask(g, x, {s[0], 1, s[2], s[3]});
      Tensor<S> noise = sample_noise<S>(g, gc_.noise, s, noise_rng_);
      v.z = encoder_.forward(g, gate_input(x, mask, noise));
      v.mask = mask;
      v.has_mask = true;
    } else {
      Tensor<S> z0 = encoder_.forward(g, x);
      Tensor<S> mask = make_feature_mask(g, x, z0.shape());
      Tensor<S> noise = sample_noise<S>(g, gc_.feature_noise, z0.shape(), noise_rng_);
      v.z = gate_feature(z0, mask, noise);
      v.mask = mask;
      v.has_mask = true;
    }
    return v;
  }

  // The gated observation alone (input-space only); used by mask rendering.
  Tensor<S> make_mask(Graph<S>& g, Tensor<S> x, Shape mask_shape) {
    if (gc_.force_open) return g.full(std::move(mask_shape), S(1));
    if (gc_.random_baseline)
      return random_mask<S>(g, std::move(mask_shape), gc_.keep_prob, mask_rng_);
    require(mask_net_ != nullptr, "gating: no mask net bound");
    Tensor<S> m = mask_net_->forward(g, x, mask_trainable_);
    if (gc_.shuffle_prob > 0.0) m = shuffle_masks(m, gc_.shuffle_prob, mask_rng_);
    return m;
  }

 private:
  Tensor<S> make_feature_mask(Graph<S>& g, Tensor<S> x, Shape mask_shape) {
    if (gc_.force_open) return g.full(std::move(mask_shape), S(1));
    if (gc_.random_baseline)
      return random_mask<S>(g, std::move(mask_shape), gc_.keep_prob, mask_rng_);
    require(feature_net_ != nullptr, "gating: no feature gate net bound");
    Tensor<S> m = feature_net_->forward(g, x, mask_trainable_);
    if (gc_.shuffle_prob > 0.0) m = shuffle_masks(m, gc_.shuffle_prob, mask_rng_);
    return m;
  }

  const GateConfig& gc_;
  MaskNet<S>* mask_net_;
  FeatureGateNet<S>* feature_net_;
  Encoder<S>& encoder_;
  bool mask_trainable_;
  Rng& noise_rng_;
  Rng& mask_rng_;
};

namespace detail {

template <typename S>
LossBundle<S> finish_bundle(Graph<S>& g, Tensor<S> task,
                            const std::vector<ViewEncoding<S>>& views, int nominal_views,
                            double lambda) {
  LossBundle<S> b;
  b.task = task;
  b.views = views;
  Tensor<S> pen;
  int with_mask = 0;
  double gate_sum = 0.0;
  for (const auto& v : views) {
    if (!v.has_mask) continue;
    Tensor<S> p = sparsity_penalty(v.mask);
    pen = with_mask == 0 ? p : add(pen, p);
    gate_sum += static_cast<double>(v.mask.values().mean());
    with_mask += 1;
  }
  if (with_mask == 0) {
    pen = g.scalar(static_cast<S>(nominal_views));  // all-open reference value
    b.mean_gate = 1.0;
  } else {
    b.mean_gate = gate_sum / with_mask;
  }
  b.penalty = pen;
  b.total = add(task, scale(pen, static_cast<S>(lambda)));
  return b;
}

// [B,A] matrix of psi energies, one column per candidate action.
template <typename S>
Tensor<S> psi_scores(Graph<S>& g, Heads<S>& heads, Tensor<S> z_t, Tensor<S> z_k) {
  const int B = z_t.shape()[0];
  const int A = heads.cfg.actions;
  std::vector<Tensor<S>> cols;
  cols.reserve(A);
  for (int a = 0; a < A; ++a) {
    auto oh = onehot<S>(g, std::vector<int>(B, a), A);
    cols.push_back(reshape(heads.psi_energy(g, z_t, z_k, oh), {B, 1}));
  }
  return concat<S>(cols, 1);
}

// mean over rows of (logsumexp(row) - row[label])
template <typename S>
Tensor<S> softmax_nll(Tensor<S> scores, const std::vector<int>& labels) {
  return mean(sub(logsumexp_rows(scores), gather_cols(scores, labels)));
}

// pos/neg score means read off the forward values
template <typename S>
void score_diagnostics(const Tensor<S>& scores, const std::vector<int>& labels,
                       LossBundle<S>& b) {
  const int B = scores.shape()[0], K = scores.shape()[1];
  double pos = 0.0, all = 0.0;
  for (int r = 0; r < B; ++r) {
    for (int c = 0; c < K; ++c) all += scores.values()[static_cast<long>(r) * K + c];
    pos += scores.values()[static_cast<long>(r) * K + labels[r]];
  }
  b.pos_score = pos / B;
  b.neg_score = K > 1 ? (all - pos) / (static_cast<double>(B) * (K - 1)) : 0.0;
}

}  // namespace detail

// Contrastive inverse dynamics: the energy head scores the taken action
// against the other candidates given the pair (z_t, z_{t+k}).
template <typename S>
LossBundle<S> inverse_dynamics_loss(Graph<S>& g, GatedEncoder<S>& ge, Heads<S>& heads,
                                    Tensor<S> obs_t, Tensor<S> obs_k,
                                    const std::vector<int>& actions, double lambda) {
  require(heads.cfg.actions >= 2, "inverse_dynamics_loss: need at least 2 actions to contrast");
  auto vt = ge.encode_gated(g, obs_t);
  auto vk = ge.encode_gated(g, obs_k);
  auto scores = detail::psi_scores(g, heads, vt.z, vk.z);
  Tensor<S> task = detail::softmax_nll(scores, actions);
  if (ge.config().mix_unmasked && ge.config().enabled && !ge.config().force_open) {
    auto scores_raw = detail::psi_scores(g, heads, ge.encode_raw(g, obs_t),
                                         ge.encode_raw(g, obs_k));
    task = add(task, detail::softmax_nll(scores_raw, actions));
  }
  LossBundle<S> b = detail::finish_bundle(g, task, {vt, vk}, 2, lambda);
  detail::score_diagnostics(scores, actions, b);
  return b;
}

// Latent forward model scored against in-batch negatives: predict z_{t+k}
// from (z_t, a_t) and pick the true successor out of the batch.
template <typename S>
LossBundle<S> forward_dynamics_loss(Graph<S>& g, GatedEncoder<S>& ge, Heads<S>& heads,
                                    Tensor<S> obs_t, Tensor<S> obs_k,
                                    const std::vector<int>& actions, double lambda) {
  const int B = obs_t.shape()[0];
  require(B >= 2, "forward_dynamics_loss: need at least 2 samples for in-batch negatives");
  std::vector<int> diag(B);
  for (int i = 0; i < B; ++i) diag[i] = i;

  auto vt = ge.encode_gated(g, obs_t);
  auto vk = ge.encode_gated(g, obs_k);
  auto oh = onehot<S>(g, actions, heads.cfg.actions);
  auto scores = matmul(heads.forward_model(g, vt.z, oh), transpose(vk.z));
  Tensor<S> task = detail::softmax_nll(scores, diag);
  if (ge.config().mix_unmasked && ge.config().enabled && !ge.config().force_open) {
    auto scores_raw = matmul(heads.forward_model(g, ge.encode_raw(g, obs_t), oh),
                             transpose(ge.encode_raw(g, obs_k)));
    task = add(task, detail::softmax_nll(scores_raw, diag));
  }
  LossBundle<S> b = detail::finish_bundle(g, task, {vt, vk}, 2, lambda);
  detail::score_diagnostics(scores, diag, b);
  return b;
}

// One-step TD with a frozen target network. The online Q sees the gated
// observation; the bootstrap target sees the raw successor, greedily picks
// a', and is isolated from the gradient by stop_gradient.
template <typename S>
LossBundle<S> td_loss(Graph<S>& g, GatedEncoder<S>& ge, Heads<S>& heads,
                      Encoder<S>& target_encoder, Heads<S>& target_heads, Tensor<S> obs_t,
                      Tensor<S> obs_next, const std::vector<int>& actions,
                      const ArrX<float>& rewards, double gamma, double lambda) {
  const int B = obs_t.shape()[0];
  require(static_cast<long>(B) == rewards.size(), "td_loss: rewards size != batch");
  require(gamma >= 0.0 && gamma < 1.0, "td_loss: gamma must be in [0,1)");

  auto target_q_taken = [&](Tensor<S> obs) {
    auto zn = target_encoder.forward(g, obs, /*trainable=*/false);
    auto qn = target_heads.q_values(g, zn, /*trainable=*/false);
    std::vector<int> greedy(B);
    const int A = target_heads.cfg.actions;
    for (int b = 0; b < B; ++b) {
      long best = 0;
      for (int a = 1; a < A; ++a)
        if (qn.values()[static_cast<long>(b) * A + a] > qn.values()[static_cast<long>(b) * A + best])
          best = a;
      greedy[b] = static_cast<int>(best);
    }
    return gather_cols(qn, greedy);
  };

  ArrX<S> rv(B);
  for (int b = 0; b < B; ++b) rv[b] = static_cast<S>(rewards[b]);
  auto r = g.constant({B}, std::move(rv));
  auto y = add(r, scale(stop_gradient(target_q_taken(obs_next)), static_cast<S>(gamma)));

  auto vt = ge.encode_gated(g, obs_t);
  auto qa = gather_cols(heads.q_values(g, vt.z), actions);
  auto resid = sub(qa, y);
  Tensor<S> task = mean(mul(resid, resid));
  if (ge.config().mix_unmasked && ge.config().enabled && !ge.config().force_open) {
    auto qa_raw = gather_cols(heads.q_values(g, ge.encode_raw(g, obs_t)), actions);
    auto resid_raw = sub(qa_raw, y);
    task = add(task, mean(mul(resid_raw, resid_raw)));
  }
  LossBundle<S> b = detail::finish_bundle(g, task, {vt}, 1, lambda);
  b.pos_score = static_cast<double>(qa.values().mean());
  return b;
}

// Behaviour cloning of the logged actions.
template <typename S>
LossBundle<S> bc_loss(Graph<S>& g, GatedEncoder<S>& ge, Heads<S>& heads, Tensor<S> obs_t,
                      const std::vector<int>& actions, double lambda) {
  auto vt = ge.encode_gated(g, obs_t);
  auto logits = heads.policy_logits(g, vt.z);
  Tensor<S> task = detail::softmax_nll(logits, actions);
  if (ge.config().mix_unmasked && ge.config().enabled && !ge.config().force_open) {
    auto logits_raw = heads.policy_logits(g, ge.encode_raw(g, obs_t));
    task = add(task, detail::softmax_nll(logits_raw, actions));
  }
  LossBundle<S> b = detail::finish_bundle(g, task, {vt}, 1, lambda);
  detail::score_diagnostics(logits, actions, b);
  return b;
}

namespace detail {

// Negative cosine similarity with a stopped target:
// D(p, z) = -mean_rows <p/|p|, sg(z)/|sg(z)|>
template <typename S>
Tensor<S> simsiam_half(Graph<S>& g, Heads<S>& heads, Tensor<S> za, Tensor<S> zb) {
  (void)g;
  auto p = l2_normalize_rows(heads.predictor(za.graph(), za));
  auto t = l2_normalize_rows(stop_gradient(zb));
  const int D = p.shape()[1];
  // mean over rows of the dot product == D * elementwise mean of p*t
  return scale(mean(mul(p, t)), static_cast<S>(-D));
}

}  // namespace detail

// Symmetric SimSiam on two augmented views, applied to the gated latents and,
// when gating is active, to the raw latents as well (the raw term is built in
// and ignores mix_unmasked); both views pay the gate penalty. Forced-open
// gates make the raw term redundant, so it is skipped to keep that
// configuration identical to the ungated pipeline.
template <typename S>
LossBundle<S> simsiam_loss(Graph<S>& g, GatedEncoder<S>& ge, Heads<S>& heads, Tensor<S> view1,
                           Tensor<S> view2, double lambda) {
  auto v1 = ge.encode_gated(g, view1);
  auto v2 = ge.encode_gated(g, view2);
  auto sym = [&](Tensor<S> a, Tensor<S> b) {
    return scale(add(detail::simsiam_half(g, heads, a, b), detail::simsiam_half(g, heads, b, a)),
                 static_cast<S>(0.5));
  };
  Tensor<S> task = sym(v1.z, v2.z);
  if (ge.config().enabled && !ge.config().force_open) {
    auto z1 = ge.encode_raw(g, view1);
    auto z2 = ge.encode_raw(g, view2);
    task = add(task, sym(z1, z2));
  }
  LossBundle<S> b = detail::finish_bundle(g, task, {v1, v2}, 2, lambda);
  b.pos_score = -static_cast<double>(task.values()[0]);
  return b;
}

}  // namespace ig
