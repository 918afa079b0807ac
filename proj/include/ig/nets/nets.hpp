#pragma once

// Network definitions. Weights are uniform in ±sqrt(1/fan_in), biases start
// at zero except the mask head's output bias, which starts positive so fresh
// gates are nearly open. Structs own their ParamSet and rebuild the graph
// bindings on every forward call; `trainable=false` binds values as frozen
// constants (target networks, probes).

#include <string>
#include <vector>

#include "ig/core/ops.hpp"
#include "ig/core/ops_nn.hpp"
#include "ig/core/rng.hpp"

namespace ig {

struct NetConfig {
  int extent = 32;
  int channels = 3;
  int dz = 64;         // latent width
  int actions = 5;
  int mask_c1 = 16;    // UNet down-path widths
  int mask_c2 = 32;
  int mask_fc = 128;   // bottleneck features
  int mask_u1 = 32;    // up-path widths
  int mask_u2 = 16;
  int enc_c1 = 16;
  int enc_c2 = 32;
  int enc_c3 = 32;
  int head_hidden = 128;
  int pred_hidden = 32;
  int gn_groups = 4;
  float mask_bias = 3.0f;  // initial pre-sigmoid offset of the mask head
};

namespace detail {

template <typename S>
Tensor<S> bind(Graph<S>& g, Param<S>& p, bool trainable) {
  return trainable ? g.param(p) : g.frozen(p);
}

template <typename S>
Param<S>& add_conv(ParamSet<S>& ps, const std::string& name, int out_c, int in_c, int k,
                   Rng& rng) {
  Param<S>& w = ps.add(name + ".k", {out_c, in_c, k, k});
  init_uniform_fan_in(w, static_cast<long>(in_c) * k * k, rng);
  ps.add(name + ".b", {out_c});
  return w;
}

template <typename S>
void add_norm(ParamSet<S>& ps, const std::string& name, int c) {
  ps.add(name + ".gamma", {c}).value.setOnes();
  ps.add(name + ".beta", {c});
}

template <typename S>
void add_fc(ParamSet<S>& ps, const std::string& name, int in_f, int out_f, Rng& rng) {
  Param<S>& w = ps.add(name + ".w", {in_f, out_f});
  init_uniform_fan_in(w, in_f, rng);
  ps.add(name + ".b", {out_f});
}

}  // namespace detail

// One-hot action rows, [B, A], as a constant leaf.
template <typename S>
Tensor<S> onehot(Graph<S>& g, const std::vector<int>& actions, int num_actions) {
  const int B = static_cast<int>(actions.size());
  ArrX<S> v = ArrX<S>::Zero(static_cast<long>(B) * num_actions);
  for (int b = 0; b < B; ++b) {
    require(actions[b] >= 0 && actions[b] < num_actions,
            "onehot: action " + std::to_string(actions[b]) + " out of range");
    v[static_cast<long>(b) * num_actions + actions[b]] = S(1);
  }
  return g.constant({B, num_actions}, std::move(v));
}

// UNet over the observation: two stride-2 conv blocks down, a two-layer fully
// connected bottleneck, two upsample+concat blocks back to full resolution,
// and a sigmoid head producing one gate per pixel in (0,1). Skip connections
// concatenate the matching down-path activation (the raw input at full
// resolution) along channels.
template <typename S>
struct MaskNet {
  NetConfig cfg;
  ParamSet<S> params;

  static MaskNet build(const NetConfig& cfg, Rng& rng) {
    require(cfg.extent % 4 == 0, "MaskNet: extent must be divisible by 4");
    require(cfg.mask_c1 % cfg.gn_groups == 0 && cfg.mask_c2 % cfg.gn_groups == 0 &&
                cfg.mask_u1 % cfg.gn_groups == 0 && cfg.mask_u2 % cfg.gn_groups == 0,
            "MaskNet: widths must be divisible by gn_groups");
    MaskNet net;
    net.cfg = cfg;
    ParamSet<S>& ps = net.params;
    const int q = cfg.extent / 4;
    detail::add_conv(ps, "d1", cfg.mask_c1, cfg.channels, 3, rng);
    detail::add_norm(ps, "d1.gn", cfg.mask_c1);
    detail::add_conv(ps, "d2", cfg.mask_c2, cfg.mask_c1, 3, rng);
    detail::add_norm(ps, "d2.gn", cfg.mask_c2);
    detail::add_fc(ps, "fc1", cfg.mask_c2 * q * q, cfg.mask_fc, rng);
    detail::add_fc(ps, "fc2", cfg.mask_fc, cfg.mask_c2 * q * q, rng);
    detail::add_conv(ps, "u1", cfg.mask_u1, cfg.mask_c2 + cfg.mask_c1, 3, rng);
    detail::add_norm(ps, "u1.gn", cfg.mask_u1);
    detail::add_conv(ps, "u2", cfg.mask_u2, cfg.mask_u1 + cfg.channels, 3, rng);
    detail::add_norm(ps, "u2.gn", cfg.mask_u2);
    detail::add_conv(ps, "out", 1, cfg.mask_u2, 3, rng);
    ps.at("out.b").value.setConstant(static_cast<S>(cfg.mask_bias));
    return net;
  }

  // x [B,C,H,W] -> gates [B,1,H,W]
  Tensor<S> forward(Graph<S>& g, Tensor<S> x, bool trainable = true) {
    using detail::bind;
    ParamSet<S>& ps = params;
    auto block = [&](Tensor<S> in, const std::string& name, int stride) {
      auto c = conv2d(in, bind(g, ps.at(name + ".k"), trainable),
                      bind(g, ps.at(name + ".b"), trainable), stride, 1);
      auto n = group_norm(c, bind(g, ps.at(name + ".gn.gamma"), trainable),
                          bind(g, ps.at(name + ".gn.beta"), trainable), cfg.gn_groups);
      return relu(n);
    };
    const int B = x.shape()[0], q = cfg.extent / 4;
    auto d1 = block(x, "d1", 2);
    auto d2 = block(d1, "d2", 2);
    auto flat = reshape(d2, {B, cfg.mask_c2 * q * q});
    auto h1 = relu(affine(flat, bind(g, ps.at("fc1.w"), trainable),
                          bind(g, ps.at("fc1.b"), trainable)));
    auto h2 = relu(affine(h1, bind(g, ps.at("fc2.w"), trainable),
                          bind(g, ps.at("fc2.b"), trainable)));
    auto bott = reshape(h2, {B, cfg.mask_c2, q, q});
    auto u1 = block(concat<S>({nearest_upsample(bott, 2), d1}, 1), "u1", 1);
    auto u2 = block(concat<S>({nearest_upsample(u1, 2), x}, 1), "u2", 1);
    auto logits = conv2d(u2, bind(g, ps.at("out.k"), trainable),
                         bind(g, ps.at("out.b"), trainable), 1, 1);
    return sigmoid(logits);
  }
};

// Three stride-2 convs, then a linear map into the latent with LayerNorm and
// a ReLU. Observations are standardized with dataset channel statistics
// before the first conv.
template <typename S>
struct Encoder {
  NetConfig cfg;
  ParamSet<S> params;
  std::vector<float> channel_mean;  // identity transform when empty
  std::vector<float> channel_std;

  static Encoder build(const NetConfig& cfg, Rng& rng) {
    require(cfg.extent % 8 == 0, "Encoder: extent must be divisible by 8");
    Encoder net;
    net.cfg = cfg;
    ParamSet<S>& ps = net.params;
    const int o = cfg.extent / 8;
    detail::add_conv(ps, "c1", cfg.enc_c1, cfg.channels, 3, rng);
    detail::add_conv(ps, "c2", cfg.enc_c2, cfg.enc_c1, 3, rng);
    detail::add_conv(ps, "c3", cfg.enc_c3, cfg.enc_c2, 3, rng);
    detail::add_fc(ps, "fc", cfg.enc_c3 * o * o, cfg.dz, rng);
    ps.add("ln.gamma", {cfg.dz}).value.setOnes();
    ps.add("ln.beta", {cfg.dz});
    return net;
  }

  void set_normalization(const std::vector<float>& mean, const std::vector<float>& std) {
    require(static_cast<int>(mean.size()) == cfg.channels &&
                static_cast<int>(std.size()) == cfg.channels,
            "Encoder: normalization stats must be per channel");
    channel_mean = mean;
    channel_std = std;
  }

  Tensor<S> standardize(Graph<S>& g, Tensor<S> x) const {
    if (channel_mean.empty()) return x;
    const int B = x.shape()[0], C = x.shape()[1];
    const long hw = static_cast<long>(x.shape()[2]) * x.shape()[3];
    ArrX<S> negm(x.size()), invs(x.size());
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c) {
        negm.segment((static_cast<long>(b) * C + c) * hw, hw)
            .setConstant(static_cast<S>(-channel_mean[c]));
        invs.segment((static_cast<long>(b) * C + c) * hw, hw)
            .setConstant(S(1) / static_cast<S>(channel_std[c]));
      }
    return mul(add(x, g.constant(x.shape(), std::move(negm))),
               g.constant(x.shape(), std::move(invs)));
  }

  // x [B,C,H,W] -> z [B,dz]
  Tensor<S> forward(Graph<S>& g, Tensor<S> x, bool trainable = true) {
    using detail::bind;
    ParamSet<S>& ps = params;
    auto x0 = standardize(g, x);
    auto conv_block = [&](Tensor<S> in, const std::string& name) {
      return relu(conv2d(in, bind(g, ps.at(name + ".k"), trainable),
                         bind(g, ps.at(name + ".b"), trainable), 2, 1));
    };
    auto e1 = conv_block(x0, "c1");
    auto e2 = conv_block(e1, "c2");
    auto e3 = conv_block(e2, "c3");
    const int B = x.shape()[0], o = cfg.extent / 8;
    auto flat = reshape(e3, {B, cfg.enc_c3 * o * o});
    auto z = affine(flat, bind(g, ps.at("fc.w"), trainable), bind(g, ps.at("fc.b"), trainable));
    auto n = layer_norm(z, bind(g, ps.at("ln.gamma"), trainable),
                        bind(g, ps.at("ln.beta"), trainable));
    return relu(n);
  }
};

// Feature-space gate: the encoder trunk shape, ending in a sigmoid over dz
// gate values with the same open-at-init bias as the input-space mask.
template <typename S>
struct FeatureGateNet {
  NetConfig cfg;
  ParamSet<S> params;

  static FeatureGateNet build(const NetConfig& cfg, Rng& rng) {
    require(cfg.extent % 8 == 0, "FeatureGateNet: extent must be divisible by 8");
    FeatureGateNet net;
    net.cfg = cfg;
    ParamSet<S>& ps = net.params;
    const int o = cfg.extent / 8;
    detail::add_conv(ps, "c1", cfg.enc_c1, cfg.channels, 3, rng);
    detail::add_conv(ps, "c2", cfg.enc_c2, cfg.enc_c1, 3, rng);
    detail::add_conv(ps, "c3", cfg.enc_c3, cfg.enc_c2, 3, rng);
    detail::add_fc(ps, "fc", cfg.enc_c3 * o * o, cfg.dz, rng);
    ps.at("fc.b").value.setConstant(static_cast<S>(cfg.mask_bias));
    return net;
  }

  // x [B,C,H,W] -> gates [B,dz]
  Tensor<S> forward(Graph<S>& g, Tensor<S> x, bool trainable = true) {
    using detail::bind;
    ParamSet<S>& ps = params;
    auto conv_block = [&](Tensor<S> in, const std::string& name) {
      return relu(conv2d(in, bind(g, ps.at(name + ".k"), trainable),
                         bind(g, ps.at(name + ".b"), trainable), 2, 1));
    };
    auto e1 = conv_block(x, "c1");
    auto e2 = conv_block(e1, "c2");
    auto e3 = conv_block(e2, "c3");
    const int B = x.shape()[0], o = cfg.extent / 8;
    auto flat = reshape(e3, {B, cfg.enc_c3 * o * o});
    auto z = affine(flat, bind(g, ps.at("fc.w"), trainable), bind(g, ps.at("fc.b"), trainable));
    return sigmoid(z);
  }
};

// Task heads over latents. All live in one ParamSet; objectives touch only
// the entries they use and the optimizer leaves untouched entries in place.
//   psi:  energy of (z_t, z_k, action), used as the contrastive score
//   pred: SimSiam predictor
//   q:    action values
//   g:    latent forward model, one affine over (z, onehot)
//   pi:   behaviour-cloning policy logits
template <typename S>
struct Heads {
  NetConfig cfg;
  ParamSet<S> params;

  static Heads build(const NetConfig& cfg, Rng& rng) {
    Heads h;
    h.cfg = cfg;
    ParamSet<S>& ps = h.params;
    detail::add_fc(ps, "psi.1", 2 * cfg.dz + cfg.actions, cfg.head_hidden, rng);
    detail::add_fc(ps, "psi.2", cfg.head_hidden, 1, rng);
    detail::add_fc(ps, "pred.1", cfg.dz, cfg.pred_hidden, rng);
    detail::add_fc(ps, "pred.2", cfg.pred_hidden, cfg.dz, rng);
    detail::add_fc(ps, "q.1", cfg.dz, cfg.head_hidden, rng);
    detail::add_fc(ps, "q.2", cfg.head_hidden, cfg.actions, rng);
    detail::add_fc(ps, "g", cfg.dz + cfg.actions, cfg.dz, rng);
    detail::add_fc(ps, "pi.1", cfg.dz, cfg.head_hidden, rng);
    detail::add_fc(ps, "pi.2", cfg.head_hidden, cfg.actions, rng);
    return h;
  }

  Tensor<S> mlp2(Graph<S>& g, Tensor<S> in, const std::string& name, bool trainable) {
    using detail::bind;
    auto h = relu(affine(in, bind(g, params.at(name + ".1.w"), trainable),
                         bind(g, params.at(name + ".1.b"), trainable)));
    return affine(h, bind(g, params.at(name + ".2.w"), trainable),
                  bind(g, params.at(name + ".2.b"), trainable));
  }

  // [B] energies for one candidate action applied to every row
  Tensor<S> psi_energy(Graph<S>& g, Tensor<S> z_t, Tensor<S> z_k, Tensor<S> a_onehot,
                       bool trainable = true) {
    auto in = concat<S>({z_t, z_k, a_onehot}, 1);
    const int B = in.shape()[0];
    return reshape(mlp2(g, in, "psi", trainable), {B});
  }

  Tensor<S> predictor(Graph<S>& g, Tensor<S> z, bool trainable = true) {
    return mlp2(g, z, "pred", trainable);
  }

  Tensor<S> q_values(Graph<S>& g, Tensor<S> z, bool trainable = true) {
    return mlp2(g, z, "q", trainable);
  }

  Tensor<S> forward_model(Graph<S>& g, Tensor<S> z, Tensor<S> a_onehot, bool trainable = true) {
    using detail::bind;
    auto in = concat<S>({z, a_onehot}, 1);
    return affine(in, bind(g, params.at("g.w"), trainable), bind(g, params.at("g.b"), trainable));
  }

  Tensor<S> policy_logits(Graph<S>& g, Tensor<S> z, bool trainable = true) {
    return mlp2(g, z, "pi", trainable);
  }
};

}  // namespace ig
