#pragma once

// Central-difference gradient verification. The oracle always evaluates in
// 64-bit; float graphs are validated by rebuilding the same computation in
// double and comparing the float tape's gradients against the double oracle.

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "ig/core/ops.hpp"
#include "ig/core/ops_nn.hpp"

namespace ig {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_param;
  long worst_index = -1;
  long checked = 0;
};

// Builds a scalar loss from parameters already bound inside the closure.
using LossFn64 = std::function<Tensor<double>(Graph<double>&)>;

inline double eval_loss(const LossFn64& fn) {
  Graph<double> g;
  return fn(g).item();
}

// Central-difference estimates (f(x+h) - f(x-h)) / 2h for every entry of
// every parameter. Throws on NaN.
inline std::vector<ArrX<double>> finite_diff_oracle(const LossFn64& fn,
                                                    ParamSet<double>& params, double h = 1e-5) {
  std::vector<ArrX<double>> fd(params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    Param<double>& p = params[i];
    fd[i].resize(p.value.size());
    for (long j = 0; j < p.value.size(); ++j) {
      const double v0 = p.value[j];
      p.value[j] = v0 + h;
      const double fp = eval_loss(fn);
      p.value[j] = v0 - h;
      const double fm = eval_loss(fn);
      p.value[j] = v0;
      fd[i][j] = (fp - fm) / (2.0 * h);
      if (std::isnan(fd[i][j]))
        throw std::runtime_error("finite_diff_oracle: NaN estimate at '" + p.name + "'[" +
                                 std::to_string(j) + "]");
    }
  }
  return fd;
}

inline double grad_rel_err(double fd, double an) {
  return std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1.0});
}

// Compares backward() gradients against the central-difference oracle.
// Relative error uses a unit floor so near-zero gradients are compared
// absolutely. Throws if either estimate is NaN.
inline GradCheckReport finite_diff_check(const LossFn64& fn, ParamSet<double>& params,
                                         double h = 1e-5) {
  params.zero_grads();
  {
    Graph<double> g;
    Tensor<double> loss = fn(g);
    g.backward(loss);
  }
  std::vector<ArrX<double>> analytic(params.size());
  for (size_t i = 0; i < params.size(); ++i) analytic[i] = params[i].grad;
  std::vector<ArrX<double>> fd = finite_diff_oracle(fn, params, h);

  GradCheckReport rep;
  for (size_t i = 0; i < params.size(); ++i) {
    Param<double>& p = params[i];
    for (long j = 0; j < p.value.size(); ++j) {
      const double an = analytic[i][j];
      if (std::isnan(an))
        throw std::runtime_error("finite_diff_check: NaN gradient at '" + p.name + "'[" +
                                 std::to_string(j) + "]");
      const double rel = grad_rel_err(fd[i][j], an);
      rep.checked += 1;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_param = p.name;
        rep.worst_index = j;
      }
    }
  }
  params.zero_grads();
  return rep;
}

// ---------------------------------------------------------------------------
// Randomized composite graphs for sweep-style checking. A recipe chains
// [B,D]-preserving stages and ends in a scalar reduction. Stages that have
// kinks or sharp curvature (relu, abs, normalization) are only accepted when
// the sampled values keep a safe margin from the non-smooth region, so the
// finite-difference oracle stays trustworthy; ill-conditioned draws are
// rejected and resampled from a salted seed.

namespace detail {

enum StageKind {
  kStAffine = 0,
  kStRelu,
  kStSigmoid,
  kStLayerNorm,
  kStMulParam,
  kStAddParam,
  kStL2Norm,
  kStCount
};
enum FinishKind { kFinMean = 0, kFinSquareMean, kFinAbsMean, kFinLse, kFinNce, kFinCount };

struct CompositeRecipe {
  int B = 0, D = 0;
  std::vector<int> stages;
  int finisher = 0;
  std::vector<int> nce_idx;
};

inline ArrX<double> gaussian_values(long n, double scale, Rng& rng) {
  ArrX<double> v(n);
  for (long i = 0; i < n; ++i) v[i] = rng.gaussian() * scale;
  return v;
}

// Builds the recipe's graph over `ps`, creating parameters on first use
// (`create` true, double only) or binding existing ones. Probe ids collect
// tensors whose values must clear conditioning margins.
template <typename S>
Tensor<S> build_composite(Graph<S>& g, const CompositeRecipe& r, ParamSet<S>& ps, bool create,
                          Rng* init_rng, std::vector<std::pair<int, int>>* probes) {
  auto fetch = [&](const std::string& name, Shape shape, double scale) -> Tensor<S> {
    if (create) {
      Param<S>& p = ps.add(name, shape);
      p.value = gaussian_values(numel(shape), scale, *init_rng).template cast<S>();
      return g.param(p);
    }
    return g.param(ps.at(name));
  };
  Tensor<S> cur = fetch("x0", {r.B, r.D}, 0.8);
  for (size_t s = 0; s < r.stages.size(); ++s) {
    const std::string tag = std::to_string(s);
    switch (r.stages[s]) {
      case kStAffine: {
        Tensor<S> w = fetch("w" + tag, {r.D, r.D}, 0.6);
        Tensor<S> b = fetch("b" + tag, {r.D}, 0.3);
        cur = affine(cur, w, b);
        break;
      }
      case kStRelu:
        if (probes) probes->push_back({kStRelu, cur.id()});
        cur = relu(cur);
        break;
      case kStSigmoid:
        cur = sigmoid(cur);
        break;
      case kStLayerNorm: {
        if (probes) probes->push_back({kStLayerNorm, cur.id()});
        if (create) {
          // gamma centred on 1 so the layer starts near identity scale
          Param<S>& pg = ps.add("g" + tag, {r.D});
          pg.value =
              gaussian_values(r.D, 0.2, *init_rng).template cast<S>() + ArrX<S>::Ones(r.D);
        }
        Tensor<S> ga = g.param(ps.at("g" + tag));
        Tensor<S> be = fetch("be" + tag, {r.D}, 0.2);
        cur = layer_norm(cur, ga, be);
        break;
      }
      case kStMulParam: {
        Tensor<S> m = fetch("m" + tag, {r.B, r.D}, 0.7);
        cur = mul(cur, m);
        break;
      }
      case kStAddParam: {
        Tensor<S> a = fetch("a" + tag, {r.B, r.D}, 0.7);
        cur = add(cur, a);
        break;
      }
      case kStL2Norm:
        if (probes) probes->push_back({kStL2Norm, cur.id()});
        cur = l2_normalize_rows(cur);
        break;
      default:
        throw std::logic_error("build_composite: bad stage");
    }
  }
  switch (r.finisher) {
    case kFinMean:
      return mean(cur);
    case kFinSquareMean:
      return mean(mul(cur, cur));
    case kFinAbsMean:
      if (probes) probes->push_back({kStRelu, cur.id()});  // same margin rule as relu
      return abs_mean(cur);
    case kFinLse:
      return mean(logsumexp_rows(cur));
    case kFinNce:
      return mean(sub(logsumexp_rows(cur), gather_cols(cur, r.nce_idx)));
    default:
      throw std::logic_error("build_composite: bad finisher");
  }
}

inline bool composite_ok(const Graph<double>& g,
                         const std::vector<std::pair<int, int>>& probes, double loss_value) {
  if (!std::isfinite(loss_value) || std::abs(loss_value) > 1e6) return false;
  for (const auto& [kind, id] : probes) {
    const ArrX<double>& v = g.node(id).values;
    if (kind == kStRelu) {
      if (v.abs().minCoeff() < 1e-3) return false;
    } else if (kind == kStLayerNorm) {
      const Shape& s = g.node(id).shape;
      const int B = s[0], D = s[1];
      for (int b = 0; b < B; ++b) {
        auto row = v.segment(static_cast<long>(b) * D, D);
        const double m = row.mean();
        if ((row - m).square().mean() < 1e-2) return false;
      }
    } else if (kind == kStL2Norm) {
      const Shape& s = g.node(id).shape;
      const int B = s[0], D = s[1];
      for (int b = 0; b < B; ++b)
        if (v.segment(static_cast<long>(b) * D, D).matrix().norm() < 1e-2) return false;
    }
  }
  return true;
}

}  // namespace detail

struct CompositeCase {
  std::shared_ptr<ParamSet<double>> params;
  LossFn64 loss;
  detail::CompositeRecipe recipe;
  std::string describe;
};

inline CompositeCase make_composite_case(uint64_t seed) {
  using namespace detail;
  for (uint64_t salt = 0; salt < 64; ++salt) {
    Rng rng(mix_seed(seed, salt));
    CompositeRecipe r;
    r.B = rng.range(2, 4);
    r.D = rng.range(3, 6);
    const int n_stages = rng.range(3, 8);
    for (int i = 0; i < n_stages; ++i) r.stages.push_back(rng.range(0, kStCount - 1));
    r.finisher = rng.range(0, kFinCount - 1);
    for (int b = 0; b < r.B; ++b) r.nce_idx.push_back(rng.range(0, r.D - 1));

    auto params = std::make_shared<ParamSet<double>>();
    Rng init(mix_seed(seed, salt ^ 0x5eedull));
    Graph<double> probe_graph;
    std::vector<std::pair<int, int>> probes;
    Tensor<double> loss = build_composite(probe_graph, r, *params, true, &init, &probes);
    if (!composite_ok(probe_graph, probes, loss.item())) continue;

    CompositeCase c;
    c.params = params;
    c.recipe = r;
    c.describe = "B=" + std::to_string(r.B) + " D=" + std::to_string(r.D) + " stages=" +
                 std::to_string(r.stages.size()) + " fin=" + std::to_string(r.finisher);
    c.loss = [r, params](Graph<double>& g) {
      return build_composite(g, r, *params, false, nullptr, nullptr);
    };
    return c;
  }
  throw std::runtime_error("make_composite_case: no well-conditioned draw for seed " +
                           std::to_string(seed));
}

// Rebuilds a composite case's loss on a float graph over float copies of the
// parameters; used to check the float tape against the double oracle.
inline Tensor<float> build_composite_float(Graph<float>& g, const CompositeCase& c,
                                           ParamSet<float>& ps) {
  return detail::build_composite<float>(g, c.recipe, ps, false, nullptr, nullptr);
}

// Rebuilds a double ParamSet in float for twin-graph checking.
inline ParamSet<float> to_float(const ParamSet<double>& ps) {
  ParamSet<float> out;
  for (size_t i = 0; i < ps.size(); ++i) {
    Param<float>& q = out.add(ps[i].name, ps[i].shape);
    q.value = ps[i].value.cast<float>();
  }
  return out;
}

}  // namespace ig
