#pragma once

// Elementwise, reduction, and indexing primitives on Graph tensors. Each op
// validates shapes up front (std::invalid_argument with both shapes in the
// message), computes forward with Eigen array expressions, and registers a
// closure that routes the output gradient to whichever inputs are trainable.

#include <memory>
#include <vector>

#include "ig/core/graph.hpp"

namespace ig {

template <typename S>
Tensor<S> add(Tensor<S> a, Tensor<S> b) {
  Graph<S>& g = same_graph(a, b);
  require(a.shape() == b.shape(),
          "add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  bool ng = g.wants_grad(a.id()) || g.wants_grad(b.id());
  Tensor<S> out = g.append(a.shape(), a.values() + b.values(), ng);
  if (ng) {
    Graph<S>* gp = &g;
    int aid = a.id(), bid = b.id(), oid = out.id();
    g.set_backprop(oid, [gp, aid, bid, oid] {
      const ArrX<S>& go = gp->node(oid).grad;
      if (gp->wants_grad(aid)) gp->grad_buf(aid) += go;
      if (gp->wants_grad(bid)) gp->grad_buf(bid) += go;
    });
  }
  return out;
}

template <typename S>
Tensor<S> sub(Tensor<S> a, Tensor<S> b) {
  Graph<S>& g = same_graph(a, b);
  require(a.shape() == b.shape(),
          "sub: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  bool ng = g.wants_grad(a.id()) || g.wants_grad(b.id());
  Tensor<S> out = g.append(a.shape(), a.values() - b.values(), ng);
  if (ng) {
    Graph<S>* gp = &g;
    int aid = a.id(), bid = b.id(), oid = out.id();
    g.set_backprop(oid, [gp, aid, bid, oid] {
      const ArrX<S>& go = gp->node(oid).grad;
      if (gp->wants_grad(aid)) gp->grad_buf(aid) += go;
      if (gp->wants_grad(bid)) gp->grad_buf(bid) -= go;
    });
  }
  return out;
}

// Hadamard product.
template <typename S>
Tensor<S> mul(Tensor<S> a, Tensor<S> b) {
  Graph<S>& g = same_graph(a, b);
  require(a.shape() == b.shape(),
          "mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  bool ng = g.wants_grad(a.id()) || g.wants_grad(b.id());
  Tensor<S> out = g.append(a.shape(), a.values() * b.values(), ng);
  if (ng) {
    Graph<S>* gp = &g;
    int aid = a.id(), bid = b.id(), oid = out.id();
    g.set_backprop(oid, [gp, aid, bid, oid] {
      const ArrX<S>& go = gp->node(oid).grad;
      if (gp->wants_grad(aid)) gp->grad_buf(aid) += go * gp->node(bid).values;
      if (gp->wants_grad(bid)) gp->grad_buf(bid) += go * gp->node(aid).values;
    });
  }
  return out;
}

template <typename S>
Tensor<S> scale(Tensor<S> a, S c) {
  Graph<S>& g = a.graph();
  bool ng = g.wants_grad(a.id());
  Tensor<S> out = g.append(a.shape(), a.values() * c, ng);
  if (ng) {
    Graph<S>* gp = &g;
    int aid = a.id(), oid = out.id();
    g.set_backprop(oid, [gp, aid, oid, c] { gp->grad_buf(aid) += gp->node(oid).grad * c; });
  }
  return out;
}

template <typename S>
Tensor<S> add_scalar(Tensor<S> a, S c) {
  Graph<S>& g = a.graph();
  bool ng = g.wants_grad(a.id());
  Tensor<S> out = g.append(a.shape(), a.values() + c, ng);
  if (ng) {
    Graph<S>* gp = &g;
    int aid = a.id(), oid = out.id();
    g.set_backprop(oid, [gp, aid, oid] { gp->grad_buf(aid) += gp->node(oid).grad; });
  }
  return out;
}

// 1 - a, the complement of a gate.
template <typename S>
Tensor<S> one_minus(Tensor<S> a) {
  return add_scalar(scale(a, S(-1)), S(1));
}

template <typename S>
Tensor<S> relu(Tensor<S> a) {
  Graph<S>& g = a.graph();
  bool ng = g.wants_grad(a.id());
  Tensor<S> out = g.append(a.shape(), a.values().max(S(0)), ng);
  if (ng) {
    Graph<S>* gp = &g;
    int aid = a.id(), oid = out.id();
    g.set_backprop(oid, [gp, aid, oid] {
      const ArrX<S>& x = gp->node(aid).values;
      gp->grad_buf(aid) += gp->node(oid).grad * (x > S(0)).template cast<S>();
    });
  }
  return out;
}

template <typename S>
Tensor<S> sigmoid(Tensor<S> a) {
  Graph<S>& g = a.graph();
  bool ng = g.wants_grad(a.id());
  ArrX<S> y = (S(1) / (S(1) + (-a.values()).exp()));
  Tensor<S> out = g.append(a.shape(), std::move(y), ng);
  if (ng) {
    Graph<S>* gp = &g;
    int aid = a.id(), oid = out.id();
    g.set_backprop(oid, [gp, aid, oid] {
      const ArrX<S>& s = gp->node(oid).values;
      gp->grad_buf(aid) += gp->node(oid).grad * s * (S(1) - s);
    });
  }
  return out;
}

// Identity forward; the output is treated as a constant by backward. The
// barrier is one-directional: gradients still flow through other uses of
// the input.
template <typename S>
Tensor<S> stop_gradient(Tensor<S> a) {
  Graph<S>& g = a.graph();
  return g.append(a.shape(), a.values(), false);
}

// --- reductions ----------------------------------------------------------

template <typename S>
Tensor<S> sum(Tensor<S> a) {
  Graph<S>& g = a.graph();
  ArrX<S> v(1);
  v[0] = a.values().sum();
  bool ng = g.wants_grad(a.id());
  Tensor<S> out = g.append({1}, std::move(v), ng);
  if (ng) {
    Graph<S>* gp = &g;
    int aid = a.id(), oid = out.id();
    g.set_backprop(oid, [gp, aid, oid] { gp->grad_buf(aid) += gp->node(oid).grad[0]; });
  }
  return out;
}

template <typename S>
Tensor<S> mean(Tensor<S> a) {
  Graph<S>& g = a.graph();
  const long n = a.size();
  require(n > 0, "mean: empty tensor");
  ArrX<S> v(1);
  v[0] = a.values().sum() / static_cast<S>(n);
  bool ng = g.wants_grad(a.id());
  Tensor<S> out = g.append({1}, std::move(v), ng);
  if (ng) {
    Graph<S>* gp = &g;
    int aid = a.id(), oid = out.id();
    g.set_backprop(oid, [gp, aid, oid, n] {
      gp->grad_buf(aid) += gp->node(oid).grad[0] / static_cast<S>(n);
    });
  }
  return out;
}

// mean(|a|); the subgradient at 0 is 0.
template <typename S>
Tensor<S> abs_mean(Tensor<S> a) {
  Graph<S>& g = a.graph();
  const long n = a.size();
  require(n > 0, "abs_mean: empty tensor");
  ArrX<S> v(1);
  v[0] = a.values().abs().sum() / static_cast<S>(n);
  bool ng = g.wants_grad(a.id());
  Tensor<S> out = g.append({1}, std::move(v), ng);
  if (ng) {
    Graph<S>* gp = &g;
    int aid = a.id(), oid = out.id();
    g.set_backprop(oid, [gp, aid, oid, n] {
      const ArrX<S>& x = gp->node(aid).values;
      ArrX<S> sgn = (x > S(0)).template cast<S>() - (x < S(0)).template cast<S>();
      gp->grad_buf(aid) += gp->node(oid).grad[0] / static_cast<S>(n) * sgn;
    });
  }
  return out;
}

// --- shape & indexing ----------------------------------------------------

template <typename S>
Tensor<S> reshape(Tensor<S> a, Shape shape) {
  Graph<S>& g = a.graph();
  require(numel(shape) == a.size(), "reshape: cannot view " + shape_str(a.shape()) + " as " +
                                        shape_str(shape));
  bool ng = g.wants_grad(a.id());
  Tensor<S> out = g.append(std::move(shape), a.values(), ng);
  if (ng) {
    Graph<S>* gp = &g;
    int aid = a.id(), oid = out.id();
    g.set_backprop(oid, [gp, aid, oid] { gp->grad_buf(aid) += gp->node(oid).grad; });
  }
  return out;
}

// Concatenation along `axis`. All parts must agree on every other extent.
template <typename S>
Tensor<S> concat(const std::vector<Tensor<S>>& parts, int axis) {
  require(!parts.empty(), "concat: no inputs");
  Graph<S>& g = parts[0].graph();
  const Shape& s0 = parts[0].shape();
  require(axis >= 0 && axis < static_cast<int>(s0.size()), "concat: bad axis");
  int total_axis = 0;
  bool ng = false;
  for (const auto& p : parts) {
    same_graph(parts[0], p);
    const Shape& s = p.shape();
    require(s.size() == s0.size(), "concat: rank mismatch");
    for (size_t d = 0; d < s.size(); ++d)
      require(static_cast<int>(d) == axis || s[d] == s0[d],
              "concat: extent mismatch at dim " + std::to_string(d) + ": " + shape_str(s) +
                  " vs " + shape_str(s0));
    total_axis += s[axis];
    ng = ng || g.wants_grad(p.id());
  }
  Shape out_shape = s0;
  out_shape[axis] = total_axis;

  long outer = 1, inner = 1;
  for (int d = 0; d < axis; ++d) outer *= s0[d];
  for (size_t d = axis + 1; d < s0.size(); ++d) inner *= s0[d];

  ArrX<S> out_v(numel(out_shape));
  long axis_off = 0;
  for (const auto& p : parts) {
    const long e = p.shape()[axis];
    const ArrX<S>& pv = p.values();
    for (long o = 0; o < outer; ++o)
      out_v.segment((o * total_axis + axis_off) * inner, e * inner) =
          pv.segment(o * e * inner, e * inner);
    axis_off += e;
  }
  Tensor<S> out = g.append(std::move(out_shape), std::move(out_v), ng);
  if (ng) {
    Graph<S>* gp = &g;
    int oid = out.id();
    std::vector<int> ids;
    std::vector<long> extents;
    for (const auto& p : parts) {
      ids.push_back(p.id());
      extents.push_back(p.shape()[axis]);
    }
    long ta = total_axis;
    g.set_backprop(oid, [gp, oid, ids, extents, outer, inner, ta] {
      const ArrX<S>& go = gp->node(oid).grad;
      long off = 0;
      for (size_t i = 0; i < ids.size(); ++i) {
        const long e = extents[i];
        if (gp->wants_grad(ids[i])) {
          ArrX<S>& gi = gp->grad_buf(ids[i]);
          for (long o = 0; o < outer; ++o)
            gi.segment(o * e * inner, e * inner) += go.segment((o * ta + off) * inner, e * inner);
        }
        off += e;
      }
    });
  }
  return out;
}

// out[b] = x[b, idx[b]] for a [B,K] input.
template <typename S>
Tensor<S> gather_cols(Tensor<S> x, const std::vector<int>& idx) {
  Graph<S>& g = x.graph();
  require(x.shape().size() == 2, "gather_cols: expected [B,K], got " + shape_str(x.shape()));
  const int B = x.shape()[0], K = x.shape()[1];
  require(static_cast<int>(idx.size()) == B, "gather_cols: index count != rows");
  for (int b = 0; b < B; ++b)
    require(idx[b] >= 0 && idx[b] < K, "gather_cols: index out of range at row " + std::to_string(b));
  ArrX<S> v(B);
  for (int b = 0; b < B; ++b) v[b] = x.values()[static_cast<long>(b) * K + idx[b]];
  bool ng = g.wants_grad(x.id());
  Tensor<S> out = g.append({B}, std::move(v), ng);
  if (ng) {
    Graph<S>* gp = &g;
    int xid = x.id(), oid = out.id();
    std::vector<int> ix = idx;
    g.set_backprop(oid, [gp, xid, oid, ix, K] {
      const ArrX<S>& go = gp->node(oid).grad;
      ArrX<S>& gx = gp->grad_buf(xid);
      for (long b = 0; b < go.size(); ++b) gx[b * K + ix[b]] += go[b];
    });
  }
  return out;
}

// Reorders the outermost dimension: out[i] = x[perm[i]].
template <typename S>
Tensor<S> permute_rows(Tensor<S> x, const std::vector<int>& perm) {
  Graph<S>& g = x.graph();
  require(!x.shape().empty(), "permute_rows: scalar input");
  const int B = x.shape()[0];
  require(static_cast<int>(perm.size()) == B, "permute_rows: permutation size != rows");
  const long row = numel(x.shape()) / B;
  ArrX<S> v(numel(x.shape()));
  for (int i = 0; i < B; ++i) {
    require(perm[i] >= 0 && perm[i] < B, "permute_rows: index out of range");
    v.segment(static_cast<long>(i) * row, row) =
        x.values().segment(static_cast<long>(perm[i]) * row, row);
  }
  bool ng = g.wants_grad(x.id());
  Tensor<S> out = g.append(x.shape(), std::move(v), ng);
  if (ng) {
    Graph<S>* gp = &g;
    int xid = x.id(), oid = out.id();
    std::vector<int> pm = perm;
    g.set_backprop(oid, [gp, xid, oid, pm, row] {
      const ArrX<S>& go = gp->node(oid).grad;
      ArrX<S>& gx = gp->grad_buf(xid);
      for (size_t i = 0; i < pm.size(); ++i)
        gx.segment(static_cast<long>(pm[i]) * row, row) +=
            go.segment(static_cast<long>(i) * row, row);
    });
  }
  return out;
}

// [B,1,H,W] -> [B,C,H,W] by repeating the singleton channel.
template <typename S>
Tensor<S> broadcast_channel(Tensor<S> x, int channels) {
  Graph<S>& g = x.graph();
  require(x.shape().size() == 4 && x.shape()[1] == 1,
          "broadcast_channel: expected [B,1,H,W], got " + shape_str(x.shape()));
  const int B = x.shape()[0], H = x.shape()[2], W = x.shape()[3];
  const long hw = static_cast<long>(H) * W;
  ArrX<S> v(static_cast<long>(B) * channels * hw);
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < channels; ++c)
      v.segment((static_cast<long>(b) * channels + c) * hw, hw) =
          x.values().segment(static_cast<long>(b) * hw, hw);
  bool ng = g.wants_grad(x.id());
  Tensor<S> out = g.append({B, channels, H, W}, std::move(v), ng);
  if (ng) {
    Graph<S>* gp = &g;
    int xid = x.id(), oid = out.id();
    g.set_backprop(oid, [gp, xid, oid, B, channels, hw] {
      const ArrX<S>& go = gp->node(oid).grad;
      ArrX<S>& gx = gp->grad_buf(xid);
      for (int b = 0; b < B; ++b)
        for (int c = 0; c < channels; ++c)
          gx.segment(static_cast<long>(b) * hw, hw) +=
              go.segment((static_cast<long>(b) * channels + c) * hw, hw);
    });
  }
  return out;
}

}  // namespace ig
