#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "ig/core/gradcheck.hpp"
#include "ig/core/serialize.hpp"
#include "ig/nets/nets.hpp"

using namespace ig;

namespace {

// Small variant for finite-difference checks: every width shrunk so the
// oracle's O(P * forward) cost stays in milliseconds.
NetConfig tiny_cfg() {
  NetConfig c;
  c.extent = 8;
  c.channels = 1;
  c.dz = 4;
  c.actions = 3;
  c.mask_c1 = 4;
  c.mask_c2 = 4;
  c.mask_fc = 8;
  c.mask_u1 = 4;
  c.mask_u2 = 4;
  c.enc_c1 = 4;
  c.enc_c2 = 4;
  c.enc_c3 = 4;
  c.head_hidden = 8;
  c.pred_hidden = 4;
  c.gn_groups = 2;
  return c;
}

template <typename S>
ArrX<S> random_obs(long n, uint64_t seed) {
  Rng rng(seed);
  ArrX<S> v(n);
  for (long i = 0; i < n; ++i) v[i] = static_cast<S>(rng.uniform());
  return v;
}

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("mask net: shape, range, bottleneck geometry") {
  NetConfig cfg;
  Rng rng(3);
  auto net = MaskNet<float>::build(cfg, rng);

  // 32 -> 16 -> 8 through the two stride-2 stages
  CHECK(net.params.at("fc1.w").shape == Shape{cfg.mask_c2 * 8 * 8, cfg.mask_fc});
  CHECK(net.params.at("out.b").value[0] == 3.0f);
  CHECK(net.params.at("d1.b").value.abs().maxCoeff() == 0.0f);
  CHECK(net.params.at("d1.gn.gamma").value.minCoeff() == 1.0f);

  const int B = 4;
  Graph<float> g;
  auto x = g.constant({B, cfg.channels, cfg.extent, cfg.extent},
                      random_obs<float>(static_cast<long>(B) * cfg.channels * cfg.extent *
                                            cfg.extent, 7));
  auto m = net.forward(g, x);
  CHECK(m.shape() == Shape{B, 1, cfg.extent, cfg.extent});
  for (long i = 0; i < m.values().size(); ++i) {
    CHECK(m.values()[i] > 0.0f);
    CHECK(m.values()[i] < 1.0f);
  }
  // fresh gates sit near the +3 bias: sigmoid(3) ~ 0.9526
  const float mean_gate = m.values().mean();
  CHECK(mean_gate >= 0.9f);
  CHECK(mean_gate <= 0.99f);
}

TEST_CASE("mask net: identical inputs give identical gates, bad geometry throws") {
  NetConfig cfg;
  Rng rng(5);
  auto net = MaskNet<float>::build(cfg, rng);
  const long n = static_cast<long>(cfg.channels) * cfg.extent * cfg.extent;
  ArrX<float> one = random_obs<float>(n, 11);
  ArrX<float> two(2 * n);
  two.segment(0, n) = one;
  two.segment(n, n) = one;

  Graph<float> g;
  auto m = net.forward(g, g.constant({2, cfg.channels, cfg.extent, cfg.extent}, std::move(two)));
  const long hw = static_cast<long>(cfg.extent) * cfg.extent;
  for (long i = 0; i < hw; ++i) CHECK(m.values()[i] == m.values()[hw + i]);

  NetConfig bad;
  bad.extent = 30;
  Rng r2(1);
  CHECK_THROWS(MaskNet<float>::build(bad, r2));

  Graph<float> g2;
  auto wrong = g2.constant({1, cfg.channels, 16, 16},
                           random_obs<float>(static_cast<long>(cfg.channels) * 256, 3));
  CHECK_THROWS(net.forward(g2, wrong));
}

TEST_CASE("builds are deterministic per seed") {
  NetConfig cfg;
  Rng a(42), b(42), c(43);
  auto n1 = MaskNet<float>::build(cfg, a);
  auto n2 = MaskNet<float>::build(cfg, b);
  auto n3 = MaskNet<float>::build(cfg, c);
  REQUIRE(n1.params.size() == n2.params.size());
  bool all_equal = true, any_diff_seed = false;
  for (size_t i = 0; i < n1.params.size(); ++i) {
    all_equal = all_equal && (n1.params[i].value == n2.params[i].value).all();
    any_diff_seed = any_diff_seed || (n1.params[i].value != n3.params[i].value).any();
  }
  CHECK(all_equal);
  CHECK(any_diff_seed);
}

TEST_CASE("encoder: shape, gradient flow, standardization") {
  NetConfig cfg;
  Rng rng(9);
  auto enc = Encoder<float>::build(cfg, rng);
  const int B = 3;
  const long n = static_cast<long>(B) * cfg.channels * cfg.extent * cfg.extent;

  Graph<float> g;
  auto x = g.constant({B, cfg.channels, cfg.extent, cfg.extent}, random_obs<float>(n, 13));
  auto z = enc.forward(g, x);
  CHECK(z.shape() == Shape{B, cfg.dz});

  g.backward(mean(z));
  CHECK(enc.params.at("c1.k").grad.abs().maxCoeff() > 0.0f);
  CHECK(enc.params.at("fc.w").grad.abs().maxCoeff() > 0.0f);
  enc.params.zero_grads();

  // standardize(x) == feeding pre-standardized input to an identical encoder
  Rng rng2(9);
  auto raw = Encoder<float>::build(cfg, rng2);
  std::vector<float> mean_v(cfg.channels, 0.4f), std_v(cfg.channels, 2.0f);
  enc.set_normalization(mean_v, std_v);
  Graph<float> g1, g2;
  ArrX<float> xv = random_obs<float>(n, 17);
  ArrX<float> xs = (xv - 0.4f) / 2.0f;
  auto z1 = enc.forward(g1, g1.constant({B, cfg.channels, cfg.extent, cfg.extent}, std::move(xv)));
  auto z2 = raw.forward(g2, g2.constant({B, cfg.channels, cfg.extent, cfg.extent}, std::move(xs)));
  for (long i = 0; i < z1.values().size(); ++i)
    CHECK(z1.values()[i] == doctest::Approx(z2.values()[i]).epsilon(1e-5));

  CHECK_THROWS(enc.set_normalization({0.1f}, {1.0f}));
}

TEST_CASE("heads: shapes, row independence, action sensitivity") {
  NetConfig cfg;
  Rng rng(21);
  auto heads = Heads<float>::build(cfg, rng);
  const int B = 3;

  Graph<float> g;
  auto zt = g.constant({B, cfg.dz}, random_obs<float>(static_cast<long>(B) * cfg.dz, 1));
  auto zk = g.constant({B, cfg.dz}, random_obs<float>(static_cast<long>(B) * cfg.dz, 2));
  auto a = onehot<float>(g, {1, 0, 4}, cfg.actions);
  auto e = heads.psi_energy(g, zt, zk, a);
  CHECK(e.shape() == Shape{B});
  CHECK(heads.q_values(g, zt).shape() == Shape{B, cfg.actions});
  CHECK(heads.predictor(g, zt).shape() == Shape{B, cfg.dz});
  CHECK(heads.forward_model(g, zt, a).shape() == Shape{B, cfg.dz});
  CHECK(heads.policy_logits(g, zt).shape() == Shape{B, cfg.actions});

  // permuting rows permutes energies
  const int perm[3] = {2, 0, 1};
  ArrX<float> ptv(B * cfg.dz), pkv(B * cfg.dz);
  std::vector<int> pact(B);
  for (int i = 0; i < B; ++i) {
    ptv.segment(static_cast<long>(i) * cfg.dz, cfg.dz) =
        zt.values().segment(static_cast<long>(perm[i]) * cfg.dz, cfg.dz);
    pkv.segment(static_cast<long>(i) * cfg.dz, cfg.dz) =
        zk.values().segment(static_cast<long>(perm[i]) * cfg.dz, cfg.dz);
    pact[i] = std::vector<int>{1, 0, 4}[perm[i]];
  }
  Graph<float> g2;
  auto pe = heads.psi_energy(g2, g2.constant({B, cfg.dz}, std::move(ptv)),
                             g2.constant({B, cfg.dz}, std::move(pkv)),
                             onehot<float>(g2, pact, cfg.actions));
  for (int i = 0; i < B; ++i) CHECK(pe.values()[i] == e.values()[perm[i]]);

  // same latents, different action -> different energy
  Graph<float> g3;
  auto zt3 = g3.constant({1, cfg.dz}, random_obs<float>(cfg.dz, 1));
  auto zk3 = g3.constant({1, cfg.dz}, random_obs<float>(cfg.dz, 2));
  auto e0 = heads.psi_energy(g3, zt3, zk3, onehot<float>(g3, {0}, cfg.actions));
  auto e1 = heads.psi_energy(g3, zt3, zk3, onehot<float>(g3, {1}, cfg.actions));
  CHECK(e0.values()[0] != e1.values()[0]);

  Graph<float> g4;
  CHECK_THROWS(onehot<float>(g4, {cfg.actions}, cfg.actions));
  CHECK_THROWS(onehot<float>(g4, {-1}, cfg.actions));
}

TEST_CASE("feature gate net opens near the bias at init") {
  NetConfig cfg;
  Rng rng(31);
  auto fg = FeatureGateNet<float>::build(cfg, rng);
  const int B = 4;
  Graph<float> g;
  auto x = g.constant({B, cfg.channels, cfg.extent, cfg.extent},
                      random_obs<float>(static_cast<long>(B) * cfg.channels * cfg.extent *
                                            cfg.extent, 41));
  auto gate = fg.forward(g, x);
  CHECK(gate.shape() == Shape{B, cfg.dz});
  const float mg = gate.values().mean();
  CHECK(mg >= 0.9f);
  CHECK(mg <= 0.99f);
}

TEST_CASE("IGPS round-trip reproduces forward bit-exactly") {
  NetConfig cfg;
  Rng rng(55);
  auto net = MaskNet<float>::build(cfg, rng);
  const std::string path = tmp_path("ig_mask.igps");
  save_params(net.params, path);
  ParamSet<float> loaded = load_params(path);

  Rng rng2(99);  // different seed: fresh weights, then overwritten by the file
  auto net2 = MaskNet<float>::build(cfg, rng2);
  net2.params.copy_values_from(loaded);

  const int B = 2;
  const long n = static_cast<long>(B) * cfg.channels * cfg.extent * cfg.extent;
  ArrX<float> xv = random_obs<float>(n, 5);
  Graph<float> g1, g2;
  auto m1 = net.forward(g1, g1.constant({B, cfg.channels, cfg.extent, cfg.extent}, ArrX<float>(xv)));
  auto m2 = net2.forward(g2, g2.constant({B, cfg.channels, cfg.extent, cfg.extent}, ArrX<float>(xv)));
  CHECK((m1.values() == m2.values()).all());

  // save -> load -> save is byte identical
  const std::string path2 = tmp_path("ig_mask2.igps");
  save_params(loaded, path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);

  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("IGPS rejects corrupted containers") {
  ParamSet<float> ps;
  ps.add("a", {2, 2}).value = ArrX<float>::Constant(4, 1.5f);
  ps.add("b", {3}).value = ArrX<float>::Constant(3, -0.5f);
  const std::string path = tmp_path("ig_bad.igps");
  save_params(ps, path);
  std::ifstream f(path, std::ios::binary);
  std::string good((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  f.close();
  auto rewrite = [&](const std::string& data) {
    std::ofstream o(path, std::ios::binary | std::ios::trunc);
    o.write(data.data(), static_cast<long>(data.size()));
  };

  SUBCASE("bad magic") {
    std::string bad = good;
    bad[0] = 'Q';
    rewrite(bad);
    CHECK_THROWS_AS(load_params(path), std::runtime_error);
  }
  SUBCASE("bad version") {
    std::string bad = good;
    bad[4] = 7;
    rewrite(bad);
    CHECK_THROWS_AS(load_params(path), std::runtime_error);
  }
  SUBCASE("truncated") {
    rewrite(good.substr(0, good.size() - 3));
    CHECK_THROWS_AS(load_params(path), std::runtime_error);
  }
  SUBCASE("trailing bytes") {
    rewrite(good + "xx");
    CHECK_THROWS_AS(load_params(path), std::runtime_error);
  }
  std::remove(path.c_str());
}

TEST_CASE("finite differences validate the full mask net") {
  NetConfig cfg = tiny_cfg();
  Rng rng(101);
  auto net = MaskNet<double>::build(cfg, rng);
  const int B = 2;
  const long n = static_cast<long>(B) * cfg.channels * cfg.extent * cfg.extent;
  ArrX<double> xv = random_obs<double>(n, 33);
  LossFn64 fn = [&](Graph<double>& g) {
    auto x = g.constant({B, cfg.channels, cfg.extent, cfg.extent}, ArrX<double>(xv));
    auto m = net.forward(g, x);
    return mean(mul(m, m));
  };
  // h = 1e-6: at the default 1e-5 the oracle steps across relu kinks inside
  // the net and reports its own truncation error, not the tape's.
  GradCheckReport rep = finite_diff_check(fn, net.params, 1e-6);
  CHECK(rep.max_rel_err < 1e-6);
  CHECK(rep.checked == net.params.total_values());
}

TEST_CASE("finite differences validate the encoder") {
  NetConfig cfg = tiny_cfg();
  Rng rng(103);
  auto enc = Encoder<double>::build(cfg, rng);
  const int B = 2;
  const long n = static_cast<long>(B) * cfg.channels * cfg.extent * cfg.extent;
  ArrX<double> xv = random_obs<double>(n, 35);
  LossFn64 fn = [&](Graph<double>& g) {
    auto x = g.constant({B, cfg.channels, cfg.extent, cfg.extent}, ArrX<double>(xv));
    auto z = enc.forward(g, x);
    return mean(mul(z, z));
  };
  GradCheckReport rep = finite_diff_check(fn, enc.params, 1e-6);
  CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("finite differences validate every head") {
  NetConfig cfg = tiny_cfg();
  Rng rng(107);
  auto heads = Heads<double>::build(cfg, rng);
  const int B = 3;
  ArrX<double> zt = random_obs<double>(static_cast<long>(B) * cfg.dz, 61);
  ArrX<double> zk = random_obs<double>(static_cast<long>(B) * cfg.dz, 62);
  const std::vector<int> acts = {0, 2, 1};

  LossFn64 fn = [&](Graph<double>& g) {
    auto t = g.constant({B, cfg.dz}, ArrX<double>(zt));
    auto k = g.constant({B, cfg.dz}, ArrX<double>(zk));
    auto a = onehot<double>(g, acts, cfg.actions);
    auto parts = add(mean(heads.psi_energy(g, t, k, a)),
                     add(mean(mul(heads.predictor(g, t), heads.predictor(g, t))),
                         add(mean(mul(heads.q_values(g, t), heads.q_values(g, t))),
                             add(mean(mul(heads.forward_model(g, t, a),
                                          heads.forward_model(g, t, a))),
                                 mean(logsumexp_rows(heads.policy_logits(g, t)))))));
    return parts;
  };
  GradCheckReport rep = finite_diff_check(fn, heads.params, 1e-6);
  CHECK(rep.max_rel_err < 1e-6);
  CHECK(rep.checked == heads.params.total_values());
}

TEST_CASE("finite differences validate the feature gate net") {
  NetConfig cfg = tiny_cfg();
  Rng rng(109);
  auto fg = FeatureGateNet<double>::build(cfg, rng);
  const int B = 2;
  const long n = static_cast<long>(B) * cfg.channels * cfg.extent * cfg.extent;
  ArrX<double> xv = random_obs<double>(n, 37);
  LossFn64 fn = [&](Graph<double>& g) {
    auto x = g.constant({B, cfg.channels, cfg.extent, cfg.extent}, ArrX<double>(xv));
    return abs_mean(fg.forward(g, x));
  };
  GradCheckReport rep = finite_diff_check(fn, fg.params, 1e-6);
  CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("frozen bindings forward identically to trainable ones") {
  NetConfig cfg = tiny_cfg();
  Rng rng(113);
  auto net = MaskNet<float>::build(cfg, rng);
  const long n = static_cast<long>(cfg.channels) * cfg.extent * cfg.extent;
  ArrX<float> xv = random_obs<float>(n, 3);
  Graph<float> g1, g2;
  auto m1 = net.forward(g1, g1.constant({1, cfg.channels, cfg.extent, cfg.extent},
                                        ArrX<float>(xv)), true);
  auto m2 = net.forward(g2, g2.constant({1, cfg.channels, cfg.extent, cfg.extent},
                                        ArrX<float>(xv)), false);
  CHECK((m1.values() == m2.values()).all());
  // and the frozen pass leaves no gradient on the weights
  ParamSet<float>& ps = net.params;
  Graph<float> g3;
  auto m3 = net.forward(g3, g3.constant({1, cfg.channels, cfg.extent, cfg.extent},
                                        ArrX<float>(xv)), false);
  g3.backward(mean(m3));
  for (size_t i = 0; i < ps.size(); ++i) CHECK(ps[i].grad.abs().maxCoeff() == 0.0f);
}
