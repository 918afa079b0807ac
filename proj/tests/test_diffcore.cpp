#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "ig/core/gradcheck.hpp"
#include "ig/core/ops.hpp"
#include "ig/core/ops_nn.hpp"

using namespace ig;

namespace {

ArrX<double> vals(std::initializer_list<double> v) {
  ArrX<double> a(static_cast<long>(v.size()));
  long i = 0;
  for (double x : v) a[i++] = x;
  return a;
}

// Single-op gradcheck helper: params are bound, `body` builds the loss.
template <typename Body>
double op_gradcheck(ParamSet<double>& ps, Body body) {
  LossFn64 fn = [&](Graph<double>& g) { return body(g); };
  return finite_diff_check(fn, ps).max_rel_err;
}

Param<double>& randomized(ParamSet<double>& ps, const std::string& name, Shape shape,
                          uint64_t seed, double scale = 0.7, double shift = 0.0) {
  Param<double>& p = ps.add(name, std::move(shape));
  Rng rng(seed);
  for (long i = 0; i < p.value.size(); ++i) p.value[i] = rng.gaussian() * scale + shift;
  return p;
}

}  // namespace

TEST_CASE("elementwise forward values") {
  Graph<double> g;
  auto a = g.constant({4}, vals({1.0, -2.0, 0.0, 3.0}));
  auto b = g.constant({4}, vals({0.5, 1.5, -1.0, 2.0}));

  CHECK(add(a, b).values()[1] == doctest::Approx(-0.5));
  CHECK(sub(a, b).values()[3] == doctest::Approx(1.0));
  CHECK(mul(a, b).values()[0] == doctest::Approx(0.5));
  CHECK(scale(a, 2.0).values()[3] == doctest::Approx(6.0));
  CHECK(add_scalar(a, 1.0).values()[2] == doctest::Approx(1.0));
  CHECK(one_minus(a).values()[0] == doctest::Approx(0.0));
  CHECK(relu(a).values()[1] == 0.0);
  CHECK(relu(a).values()[3] == doctest::Approx(3.0));
  CHECK(sigmoid(g.scalar(0.0)).item() == doctest::Approx(0.5));
  CHECK(sigmoid(g.scalar(3.0)).item() == doctest::Approx(0.9525741268224334).epsilon(1e-12));
  CHECK(mean(a).item() == doctest::Approx(0.5));
  CHECK(sum(a).item() == doctest::Approx(2.0));
  CHECK(abs_mean(a).item() == doctest::Approx(1.5));
}

TEST_CASE("stop_gradient is the identity forward") {
  Graph<double> g;
  auto a = g.constant({3}, vals({1.0, -2.5, 4.0}));
  auto s = stop_gradient(a);
  for (int i = 0; i < 3; ++i) CHECK(s.values()[i] == a.values()[i]);
}

TEST_CASE("logsumexp is exact on uniform rows and stable on huge scores") {
  Graph<double> g;
  auto x = g.constant({1, 5}, ArrX<double>::Zero(5));
  // ln 5, the uniform-score value
  CHECK(logsumexp_rows(x).values()[0] == doctest::Approx(1.6094379124341003).epsilon(1e-15));

  auto big = g.constant({1, 2}, vals({1000.0, 1000.0}));
  CHECK(logsumexp_rows(big).values()[0] == doctest::Approx(1000.0 + std::log(2.0)));

  auto skew = g.constant({1, 2}, vals({-1000.0, 1000.0}));
  CHECK(logsumexp_rows(skew).values()[0] == doctest::Approx(1000.0));
}

TEST_CASE("concat/gather/permute/broadcast forward") {
  Graph<double> g;
  auto a = g.constant({2, 2}, vals({1, 2, 3, 4}));
  auto b = g.constant({2, 1}, vals({9, 8}));
  auto c = concat<double>({a, b}, 1);
  CHECK(c.shape() == Shape{2, 3});
  CHECK(c.values()[2] == 9.0);
  CHECK(c.values()[5] == 8.0);

  auto r = concat<double>({a, a}, 0);
  CHECK(r.shape() == Shape{4, 2});
  CHECK(r.values()[6] == 3.0);

  auto got = gather_cols(a, {1, 0});
  CHECK(got.values()[0] == 2.0);
  CHECK(got.values()[1] == 3.0);

  auto p = permute_rows(a, {1, 0});
  CHECK(p.values()[0] == 3.0);
  CHECK(p.values()[3] == 2.0);

  auto m = g.constant({1, 1, 2, 2}, vals({1, 2, 3, 4}));
  auto bc = broadcast_channel(m, 3);
  CHECK(bc.shape() == Shape{1, 3, 2, 2});
  CHECK(bc.values()[0] == 1.0);
  CHECK(bc.values()[4] == 1.0);
  CHECK(bc.values()[11] == 4.0);
}

TEST_CASE("matmul/affine/transpose forward") {
  Graph<double> g;
  auto a = g.constant({2, 3}, vals({1, 2, 3, 4, 5, 6}));
  auto b = g.constant({3, 2}, vals({7, 8, 9, 10, 11, 12}));
  auto c = matmul(a, b);
  CHECK(c.values()[0] == doctest::Approx(58.0));   // 1*7+2*9+3*11
  CHECK(c.values()[3] == doctest::Approx(154.0));  // 4*8+5*10+6*12

  auto t = transpose(a);
  CHECK(t.shape() == Shape{3, 2});
  CHECK(t.values()[1] == 4.0);

  auto bias = g.constant({2}, vals({100, 200}));
  auto f = affine(a, b, bias);
  CHECK(f.values()[0] == doctest::Approx(158.0));
  CHECK(f.values()[1] == doctest::Approx(264.0));
}

TEST_CASE("conv2d forward against hand-computed values") {
  Graph<double> g;
  // 3x3 input 1..9, 2x2 kernel picking main diagonal
  auto x = g.constant({1, 1, 3, 3}, vals({1, 2, 3, 4, 5, 6, 7, 8, 9}));
  auto k = g.constant({1, 1, 2, 2}, vals({1, 0, 0, 1}));
  auto b0 = g.constant({1}, vals({0.0}));
  auto y = conv2d(x, k, b0, 1, 0);
  CHECK(y.shape() == Shape{1, 1, 2, 2});
  CHECK(y.values()[0] == doctest::Approx(6.0));
  CHECK(y.values()[1] == doctest::Approx(8.0));
  CHECK(y.values()[2] == doctest::Approx(12.0));
  CHECK(y.values()[3] == doctest::Approx(14.0));

  // stride 2, pad 1 downsamples 4x4 -> 2x2 with a 3x3 sum kernel
  auto x2 = g.constant({1, 1, 4, 4}, ArrX<double>::Ones(16));
  auto k2 = g.constant({1, 1, 3, 3}, ArrX<double>::Ones(9));
  auto b2 = g.constant({1}, vals({0.5}));
  auto y2 = conv2d(x2, k2, b2, 2, 1);
  CHECK(y2.shape() == Shape{1, 1, 2, 2});
  CHECK(y2.values()[0] == doctest::Approx(4.5));  // corner sees 2x2 ones + bias
  CHECK(y2.values()[3] == doctest::Approx(9.5));  // interior 3x3 ones + bias
}

TEST_CASE("conv2d batching matches per-sample evaluation") {
  Rng rng(77);
  ArrX<double> xv(2 * 3 * 5 * 5), kv(4 * 3 * 3 * 3), bv(4);
  for (long i = 0; i < xv.size(); ++i) xv[i] = rng.gaussian();
  for (long i = 0; i < kv.size(); ++i) kv[i] = rng.gaussian() * 0.3;
  for (long i = 0; i < bv.size(); ++i) bv[i] = rng.gaussian() * 0.1;

  Graph<double> g;
  auto full = conv2d(g.constant({2, 3, 5, 5}, xv), g.constant({4, 3, 3, 3}, kv),
                     g.constant({4}, bv), 2, 1);
  for (int b = 0; b < 2; ++b) {
    Graph<double> gs;
    ArrX<double> xb = xv.segment(static_cast<long>(b) * 75, 75);
    auto one = conv2d(gs.constant({1, 3, 5, 5}, xb), gs.constant({4, 3, 3, 3}, kv),
                      gs.constant({4}, bv), 2, 1);
    for (long i = 0; i < one.size(); ++i)
      CHECK(full.values()[b * one.size() + i] == doctest::Approx(one.values()[i]));
  }
}

TEST_CASE("nearest_upsample forward") {
  Graph<double> g;
  auto x = g.constant({1, 1, 2, 2}, vals({1, 2, 3, 4}));
  auto y = nearest_upsample(x, 2);
  CHECK(y.shape() == Shape{1, 1, 4, 4});
  CHECK(y.values()[0] == 1.0);
  CHECK(y.values()[1] == 1.0);
  CHECK(y.values()[3] == 2.0);
  CHECK(y.values()[15] == 4.0);
}

TEST_CASE("normalization layers standardize their regions") {
  Graph<double> g;
  Rng rng(11);
  ArrX<double> xv(2 * 8 * 3 * 3);
  for (long i = 0; i < xv.size(); ++i) xv[i] = rng.gaussian() * 2.0 + 1.0;
  auto x = g.constant({2, 8, 3, 3}, xv);
  auto gamma = g.constant({8}, ArrX<double>::Ones(8));
  auto beta = g.constant({8}, ArrX<double>::Zero(8));
  auto y = group_norm(x, gamma, beta, 2);
  // each (sample, group) region should come out zero-mean unit-variance
  const long len = 4 * 9;
  for (int r = 0; r < 4; ++r) {
    auto seg = y.values().segment(r * len, len);
    CHECK(seg.mean() == doctest::Approx(0.0).epsilon(1e-10));
    CHECK((seg - seg.mean()).square().mean() == doctest::Approx(1.0).epsilon(1e-3));
  }

  ArrX<double> lv(3 * 6);
  for (long i = 0; i < lv.size(); ++i) lv[i] = rng.gaussian() * 3.0 - 2.0;
  auto lx = g.constant({3, 6}, lv);
  auto ly = layer_norm(lx, g.constant({6}, ArrX<double>::Ones(6)),
                       g.constant({6}, ArrX<double>::Zero(6)));
  for (int b = 0; b < 3; ++b) {
    auto seg = ly.values().segment(static_cast<long>(b) * 6, 6);
    CHECK(seg.mean() == doctest::Approx(0.0).epsilon(1e-10));
  }
}

TEST_CASE("l2_normalize_rows produces unit rows away from the origin") {
  Graph<double> g;
  auto x = g.constant({2, 3}, vals({3, 4, 0, 1, 2, 2}));
  auto y = l2_normalize_rows(x);
  CHECK(y.values()[0] == doctest::Approx(0.6));
  CHECK(y.values()[1] == doctest::Approx(0.8));
  double n2 = 0;
  for (int i = 3; i < 6; ++i) n2 += y.values()[i] * y.values()[i];
  CHECK(n2 == doctest::Approx(1.0));
}

// --- error handling ------------------------------------------------------

TEST_CASE("shape mismatches and graph mixing throw") {
  Graph<double> g, g2;
  auto a = g.constant({2, 2}, ArrX<double>::Zero(4));
  auto b = g.constant({4}, ArrX<double>::Zero(4));
  CHECK_THROWS_AS(add(a, b), std::invalid_argument);
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("[2,2]"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("[4]"), std::invalid_argument);

  auto c = g2.constant({2, 2}, ArrX<double>::Zero(4));
  CHECK_THROWS_AS(add(a, c), std::invalid_argument);

  CHECK_THROWS_AS(matmul(a, b), std::invalid_argument);
  CHECK_THROWS_AS(reshape(a, {3, 2}), std::invalid_argument);
  CHECK_THROWS_AS(gather_cols(a, {0, 5}), std::invalid_argument);
  CHECK_THROWS_AS(group_norm(reshape(a, {1, 2, 2, 1}), b, b, 3), std::invalid_argument);

  // backward demands a scalar loss
  auto p = g.constant({2, 2}, ArrX<double>::Zero(4));
  CHECK_THROWS_AS(g.backward(p), std::invalid_argument);
}

// --- gradients, op by op -------------------------------------------------

TEST_CASE("gradcheck: arithmetic and activations") {
  ParamSet<double> ps;
  randomized(ps, "a", {3, 4}, 1);
  randomized(ps, "b", {3, 4}, 2);
  CHECK(op_gradcheck(ps, [&](Graph<double>& g) {
          auto a = g.param(ps.at("a")), b = g.param(ps.at("b"));
          return mean(mul(add(a, b), sub(a, scale(b, 0.5))));
        }) < 1e-6);

  ParamSet<double> ps2;
  // keep relu inputs away from the kink
  Param<double>& p = randomized(ps2, "x", {4, 4}, 3, 1.0, 0.0);
  for (long i = 0; i < p.value.size(); ++i)
    if (std::abs(p.value[i]) < 0.05) p.value[i] = 0.3;
  CHECK(op_gradcheck(ps2, [&](Graph<double>& g) {
          auto x = g.param(ps2.at("x"));
          return mean(mul(relu(x), sigmoid(x)));
        }) < 1e-6);

  CHECK(op_gradcheck(ps2, [&](Graph<double>& g) {
          return abs_mean(g.param(ps2.at("x")));
        }) < 1e-6);
}

TEST_CASE("gradcheck: reductions and shape ops") {
  ParamSet<double> ps;
  randomized(ps, "a", {2, 3}, 4);
  randomized(ps, "b", {2, 2}, 5);
  CHECK(op_gradcheck(ps, [&](Graph<double>& g) {
          auto a = g.param(ps.at("a")), b = g.param(ps.at("b"));
          auto c = concat<double>({a, b}, 1);  // [2,5]
          auto r = reshape(c, {5, 2});
          return mean(mul(r, r));
        }) < 1e-6);

  CHECK(op_gradcheck(ps, [&](Graph<double>& g) {
          auto a = g.param(ps.at("a"));
          return sum(gather_cols(a, {2, 0}));
        }) < 1e-6);

  CHECK(op_gradcheck(ps, [&](Graph<double>& g) {
          auto a = g.param(ps.at("a"));
          return mean(mul(permute_rows(a, {1, 0}), a));
        }) < 1e-6);
}

TEST_CASE("gradcheck: matmul family") {
  ParamSet<double> ps;
  randomized(ps, "a", {3, 4}, 6, 0.5);
  randomized(ps, "b", {4, 2}, 7, 0.5);
  randomized(ps, "bias", {2}, 8, 0.3);
  CHECK(op_gradcheck(ps, [&](Graph<double>& g) {
          return mean(matmul(g.param(ps.at("a")), g.param(ps.at("b"))));
        }) < 1e-6);
  CHECK(op_gradcheck(ps, [&](Graph<double>& g) {
          auto y = affine(g.param(ps.at("a")), g.param(ps.at("b")), g.param(ps.at("bias")));
          return mean(mul(y, y));
        }) < 1e-6);
  CHECK(op_gradcheck(ps, [&](Graph<double>& g) {
          auto t = transpose(g.param(ps.at("a")));
          return mean(matmul(t, g.param(ps.at("a"))));
        }) < 1e-6);
}

TEST_CASE("gradcheck: conv2d, upsample, broadcast") {
  ParamSet<double> ps;
  randomized(ps, "x", {2, 2, 5, 5}, 9, 0.6);
  randomized(ps, "k", {3, 2, 3, 3}, 10, 0.3);
  randomized(ps, "b", {3}, 11, 0.2);
  CHECK(op_gradcheck(ps, [&](Graph<double>& g) {
          auto y = conv2d(g.param(ps.at("x")), g.param(ps.at("k")), g.param(ps.at("b")), 1, 1);
          return mean(mul(y, y));
        }) < 1e-6);
  CHECK(op_gradcheck(ps, [&](Graph<double>& g) {
          auto y = conv2d(g.param(ps.at("x")), g.param(ps.at("k")), g.param(ps.at("b")), 2, 1);
          return mean(mul(y, y));
        }) < 1e-6);

  ParamSet<double> ps2;
  randomized(ps2, "u", {1, 2, 3, 3}, 12);
  CHECK(op_gradcheck(ps2, [&](Graph<double>& g) {
          auto y = nearest_upsample(g.param(ps2.at("u")), 2);
          return mean(mul(y, y));
        }) < 1e-6);

  ParamSet<double> ps3;
  randomized(ps3, "m", {2, 1, 3, 3}, 13);
  CHECK(op_gradcheck(ps3, [&](Graph<double>& g) {
          auto y = broadcast_channel(g.param(ps3.at("m")), 3);
          return mean(mul(y, y));
        }) < 1e-6);
}

TEST_CASE("gradcheck: normalizations and logsumexp") {
  ParamSet<double> ps;
  randomized(ps, "x", {2, 4, 3, 3}, 14, 1.0, 0.5);
  randomized(ps, "gamma", {4}, 15, 0.2, 1.0);
  randomized(ps, "beta", {4}, 16, 0.2);
  CHECK(op_gradcheck(ps, [&](Graph<double>& g) {
          auto y = group_norm(g.param(ps.at("x")), g.param(ps.at("gamma")),
                              g.param(ps.at("beta")), 2);
          return mean(mul(y, y));
        }) < 1e-6);

  ParamSet<double> ps2;
  randomized(ps2, "x", {3, 5}, 17, 1.2);
  randomized(ps2, "gamma", {5}, 18, 0.2, 1.0);
  randomized(ps2, "beta", {5}, 19, 0.2);
  CHECK(op_gradcheck(ps2, [&](Graph<double>& g) {
          auto y = layer_norm(g.param(ps2.at("x")), g.param(ps2.at("gamma")),
                              g.param(ps2.at("beta")));
          return mean(mul(y, y));
        }) < 1e-6);

  CHECK(op_gradcheck(ps2, [&](Graph<double>& g) {
          return mean(logsumexp_rows(g.param(ps2.at("x"))));
        }) < 1e-6);

  CHECK(op_gradcheck(ps2, [&](Graph<double>& g) {
          auto y = l2_normalize_rows(g.param(ps2.at("x")));
          return mean(mul(y, y));
        }) < 1e-6);
}

TEST_CASE("stop_gradient blocks exactly one path") {
  ParamSet<double> ps;
  randomized(ps, "x", {4}, 20);
  // loss = mean(x * sg(x)): gradient must be sg(x) = x, not 2x
  ps.zero_grads();
  Graph<double> g;
  auto x = g.param(ps.at("x"));
  auto loss = mean(mul(x, stop_gradient(x)));
  g.backward(loss);
  for (long i = 0; i < 4; ++i)
    CHECK(ps.at("x").grad[i] == doctest::Approx(ps.at("x").value[i] / 4.0).epsilon(1e-12));

  // fully blocked: no gradient at all
  ps.zero_grads();
  Graph<double> g2;
  auto x2 = g2.param(ps.at("x"));
  auto loss2 = mean(stop_gradient(mul(x2, x2)));
  g2.backward(loss2);
  for (long i = 0; i < 4; ++i) CHECK(ps.at("x").grad[i] == 0.0);
}

TEST_CASE("unreachable parameters keep zero gradients") {
  ParamSet<double> ps;
  randomized(ps, "used", {3}, 21);
  randomized(ps, "unused", {3}, 22);
  ps.zero_grads();
  Graph<double> g;
  auto u = g.param(ps.at("used"));
  g.param(ps.at("unused"));  // bound but not consumed by the loss
  g.backward(mean(mul(u, u)));
  for (long i = 0; i < 3; ++i) {
    CHECK(ps.at("used").grad[i] != 0.0);
    CHECK(ps.at("unused").grad[i] == 0.0);
  }
}

// --- adam ----------------------------------------------------------------

TEST_CASE("adam first step equals -alpha * g / (|g| + eps)") {
  ParamSet<double> ps;
  Param<double>& p = ps.add("w", {3});
  p.value = vals({1.0, -2.0, 0.5});
  p.grad = vals({0.5, -0.25, 1e-12});
  AdamState<double> st;  // defaults: alpha 1e-4, betas 0.9/0.999, eps 1e-8
  adam_step(ps, st);
  CHECK(st.t == 1);
  // bias correction folds the moment scaling away on step one
  CHECK(p.value[0] == doctest::Approx(1.0 - 1e-4 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
  CHECK(p.value[1] == doctest::Approx(-2.0 + 1e-4 * 0.25 / (0.25 + 1e-8)).epsilon(1e-12));
  // near-zero grad: update magnitude well below alpha
  CHECK(std::abs(p.value[2] - 0.5) < 1e-7);
  // grads cleared for the next accumulation
  CHECK(p.grad.abs().maxCoeff() == 0.0);
}

TEST_CASE("adam with zero gradients is the identity on fresh parameters") {
  ParamSet<double> ps;
  Param<double>& p = ps.add("w", {4});
  p.value = vals({1.0, -1.0, 2.0, 0.0});
  AdamState<double> st;
  const ArrX<double> before = p.value;
  for (int i = 0; i < 5; ++i) adam_step(ps, st);
  for (long i = 0; i < 4; ++i) CHECK(p.value[i] == before[i]);
}

// --- determinism ---------------------------------------------------------

TEST_CASE("forward and backward are bitwise deterministic") {
  for (uint64_t seed : {3u, 17u}) {
    CompositeCase c1 = make_composite_case(seed);
    CompositeCase c2 = make_composite_case(seed);
    Graph<double> g1, g2;
    Tensor<double> l1 = c1.loss(g1);
    Tensor<double> l2 = c2.loss(g2);
    CHECK(l1.item() == l2.item());  // exact, not approximate
    g1.backward(l1);
    g2.backward(l2);
    for (size_t i = 0; i < c1.params->size(); ++i)
      for (long j = 0; j < (*c1.params)[i].grad.size(); ++j)
        CHECK((*c1.params)[i].grad[j] == (*c2.params)[i].grad[j]);
  }
}

// --- randomized composite sweep ------------------------------------------

TEST_CASE("composite gradcheck sweep: 64-bit tape vs central differences") {
  double worst = 0.0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    CompositeCase c = make_composite_case(seed);
    GradCheckReport rep = finite_diff_check(c.loss, *c.params);
    INFO("seed ", seed, " ", c.describe, " worst ", rep.worst_param);
    CHECK(rep.max_rel_err < 1e-6);
    worst = std::max(worst, rep.max_rel_err);
  }
  MESSAGE("f64 sweep max rel err: ", worst);
}

TEST_CASE("composite gradcheck sweep: 32-bit tape vs 64-bit oracle") {
  double worst = 0.0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    CompositeCase c = make_composite_case(seed);
    ParamSet<double>& pd = *c.params;
    std::vector<ArrX<double>> fd = finite_diff_oracle(c.loss, pd);

    // analytic grads on the float tape, from float copies of the parameters
    ParamSet<float> pf = to_float(pd);
    {
      Graph<float> g;
      Tensor<float> loss = build_composite_float(g, c, pf);
      g.backward(loss);
    }
    for (size_t i = 0; i < pd.size(); ++i)
      for (long j = 0; j < pd[i].value.size(); ++j) {
        const double rel = grad_rel_err(fd[i][j], static_cast<double>(pf[i].grad[j]));
        INFO("seed ", seed, " ", c.describe, " param ", pd[i].name, "[", j, "]");
        CHECK(rel < 1e-4);
        worst = std::max(worst, rel);
      }
  }
  MESSAGE("f32-vs-f64 sweep max rel err: ", worst);
}
