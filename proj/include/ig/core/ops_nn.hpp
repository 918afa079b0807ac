#pragma once

// Linear-algebra and network-layer primitives. Convolution lowers to im2col
// plus one GEMM per call so a whole batch is a single matrix product; the
// column matrix is kept alive for the backward pass.

#include <algorithm>
#include <memory>
#include <vector>

#include "ig/core/ops.hpp"

namespace ig {

namespace detail {
template <typename S>
using MatRM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename S>
using MatCM = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;
template <typename S>
using MapRM = Eigen::Map<MatRM<S>>;
template <typename S>
using CMapRM = Eigen::Map<const MatRM<S>>;

// im2col geometry for one kernel tap (c, ky, kx): the valid output-x range
// and the matching input start. Shared by the forward gather and the
// backward scatter so the two stay mirror images.
struct TapRun {
  int ox0 = 0, ox1 = -1;  // inclusive valid range, empty when ox0 > ox1
  int ix0 = 0;            // input x for ox0
};

inline TapRun tap_run(int kx, int W, int OW, int stride, int pad) {
  TapRun t;
  const int lo = pad - kx;  // ox*stride >= lo
  t.ox0 = lo > 0 ? (lo + stride - 1) / stride : 0;
  const int hi = W - 1 + pad - kx;  // ox*stride <= hi
  t.ox1 = hi < 0 ? -1 : std::min(OW - 1, hi / stride);
  t.ix0 = t.ox0 * stride - pad + kx;
  return t;
}

// Lowers x [B,C,H,W] into the row-major K x N patch matrix: row k = kernel
// tap (c,ky,kx), column n = output position (b,oy,ox). Rebuilt on demand in
// the backward pass rather than kept on the tape — re-gathering is cheaper
// than holding many multi-MB buffers alive across the whole step.
template <typename S>
void im2col(const S* xv, int B, int C, int H, int W, int kh, int kw, int stride, int pad,
            int OH, int OW, MatRM<S>& cols) {
  const long N = static_cast<long>(B) * OH * OW;
  for (int c = 0; c < C; ++c)
    for (int ky = 0; ky < kh; ++ky)
      for (int kx = 0; kx < kw; ++kx) {
        const TapRun t = tap_run(kx, W, OW, stride, pad);
        S* krow = cols.data() + (static_cast<long>((c * kh + ky) * kw + kx)) * N;
        for (int b = 0; b < B; ++b)
          for (int oy = 0; oy < OH; ++oy) {
            S* dst = krow + (static_cast<long>(b) * OH + oy) * OW;
            const int iy = oy * stride - pad + ky;
            if (iy < 0 || iy >= H || t.ox0 > t.ox1) {
              std::fill(dst, dst + OW, S(0));
              continue;
            }
            std::fill(dst, dst + t.ox0, S(0));
            std::fill(dst + t.ox1 + 1, dst + OW, S(0));
            const S* src = xv + ((static_cast<long>(b) * C + c) * H + iy) * W + t.ix0;
            if (stride == 1) {
              std::copy(src, src + (t.ox1 - t.ox0 + 1), dst + t.ox0);
            } else {
              for (int ox = t.ox0; ox <= t.ox1; ++ox)
                dst[ox] = src[static_cast<long>(ox - t.ox0) * stride];
            }
          }
      }
}
}  // namespace detail

// [M,K] x [K,N] -> [M,N]
template <typename S>
Tensor<S> matmul(Tensor<S> a, Tensor<S> b) {
  Graph<S>& g = same_graph(a, b);
  require(a.shape().size() == 2 && b.shape().size() == 2,
          "matmul: expected matrices, got " + shape_str(a.shape()) + " and " +
              shape_str(b.shape()));
  const int M = a.shape()[0], K = a.shape()[1], N = b.shape()[1];
  require(b.shape()[0] == K, "matmul: inner extent mismatch " + shape_str(a.shape()) + " x " +
                                 shape_str(b.shape()));
  ArrX<S> v(static_cast<long>(M) * N);
  {
    detail::CMapRM<S> am(a.values().data(), M, K);
    detail::CMapRM<S> bm(b.values().data(), K, N);
    detail::MapRM<S> om(v.data(), M, N);
    om.noalias() = am * bm;
  }
  bool ng = g.wants_grad(a.id()) || g.wants_grad(b.id());
  Tensor<S> out = g.append({M, N}, std::move(v), ng);
  if (ng) {
    Graph<S>* gp = &g;
    int aid = a.id(), bid = b.id(), oid = out.id();
    g.set_backprop(oid, [gp, aid, bid, oid, M, K, N] {
      detail::CMapRM<S> go(gp->node(oid).grad.data(), M, N);
      detail::CMapRM<S> am(gp->node(aid).values.data(), M, K);
      detail::CMapRM<S> bm(gp->node(bid).values.data(), K, N);
      if (gp->wants_grad(aid)) {
        detail::MapRM<S> ga(gp->grad_buf(aid).data(), M, K);
        ga.noalias() += go * bm.transpose();
      }
      if (gp->wants_grad(bid)) {
        detail::MapRM<S> gb(gp->grad_buf(bid).data(), K, N);
        gb.noalias() += am.transpose() * go;
      }
    });
  }
  return out;
}

template <typename S>
Tensor<S> transpose(Tensor<S> a) {
  Graph<S>& g = a.graph();
  require(a.shape().size() == 2, "transpose: expected a matrix, got " + shape_str(a.shape()));
  const int M = a.shape()[0], N = a.shape()[1];
  ArrX<S> v(static_cast<long>(M) * N);
  {
    detail::CMapRM<S> am(a.values().data(), M, N);
    detail::MapRM<S> om(v.data(), N, M);
    om = am.transpose();
  }
  bool ng = g.wants_grad(a.id());
  Tensor<S> out = g.append({N, M}, std::move(v), ng);
  if (ng) {
    Graph<S>* gp = &g;
    int aid = a.id(), oid = out.id();
    g.set_backprop(oid, [gp, aid, oid, M, N] {
      detail::CMapRM<S> go(gp->node(oid).grad.data(), N, M);
      detail::MapRM<S> ga(gp->grad_buf(aid).data(), M, N);
      ga += go.transpose();
    });
  }
  return out;
}

// x [B,I] * w [I,O] + b [O] broadcast over rows.
template <typename S>
Tensor<S> affine(Tensor<S> x, Tensor<S> w, Tensor<S> b) {
  Graph<S>& g = same_graph(x, w);
  same_graph(x, b);
  require(x.shape().size() == 2 && w.shape().size() == 2 && b.shape().size() == 1,
          "affine: expected x[B,I], w[I,O], b[O]");
  const int B = x.shape()[0], I = x.shape()[1], O = w.shape()[1];
  require(w.shape()[0] == I, "affine: w rows " + shape_str(w.shape()) + " != input width " +
                                 std::to_string(I));
  require(b.shape()[0] == O, "affine: bias extent " + shape_str(b.shape()) + " != outputs " +
                                 std::to_string(O));
  ArrX<S> v(static_cast<long>(B) * O);
  {
    detail::CMapRM<S> xm(x.values().data(), B, I);
    detail::CMapRM<S> wm(w.values().data(), I, O);
    detail::MapRM<S> om(v.data(), B, O);
    om.noalias() = xm * wm;
    om.rowwise() += Eigen::Map<const Eigen::Matrix<S, 1, Eigen::Dynamic>>(b.values().data(), O);
  }
  bool ng = g.wants_grad(x.id()) || g.wants_grad(w.id()) || g.wants_grad(b.id());
  Tensor<S> out = g.append({B, O}, std::move(v), ng);
  if (ng) {
    Graph<S>* gp = &g;
    int xid = x.id(), wid = w.id(), bid = b.id(), oid = out.id();
    g.set_backprop(oid, [gp, xid, wid, bid, oid, B, I, O] {
      detail::CMapRM<S> go(gp->node(oid).grad.data(), B, O);
      detail::CMapRM<S> xm(gp->node(xid).values.data(), B, I);
      detail::CMapRM<S> wm(gp->node(wid).values.data(), I, O);
      if (gp->wants_grad(xid)) {
        detail::MapRM<S> gx(gp->grad_buf(xid).data(), B, I);
        gx.noalias() += go * wm.transpose();
      }
      if (gp->wants_grad(wid)) {
        detail::MapRM<S> gw(gp->grad_buf(wid).data(), I, O);
        gw.noalias() += xm.transpose() * go;
      }
      if (gp->wants_grad(bid)) {
        Eigen::Map<Eigen::Matrix<S, 1, Eigen::Dynamic>> gb(gp->grad_buf(bid).data(), O);
        gb += go.colwise().sum();
      }
    });
  }
  return out;
}

// Spatial convolution, x [B,C,H,W] with kernel k [F,C,kh,kw] and bias [F].
// Zero padding `pad` on all sides, square stride. Output [B,F,OH,OW] with
// OH = (H + 2*pad - kh)/stride + 1.
template <typename S>
Tensor<S> conv2d(Tensor<S> x, Tensor<S> k, Tensor<S> bias, int stride, int pad) {
  Graph<S>& g = same_graph(x, k);
  same_graph(x, bias);
  require(x.shape().size() == 4 && k.shape().size() == 4 && bias.shape().size() == 1,
          "conv2d: expected x[B,C,H,W], k[F,C,kh,kw], bias[F]");
  const int B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const int F = k.shape()[0], kh = k.shape()[2], kw = k.shape()[3];
  require(k.shape()[1] == C, "conv2d: kernel channels " + shape_str(k.shape()) +
                                 " != input channels " + std::to_string(C));
  require(bias.shape()[0] == F, "conv2d: bias extent != filter count");
  require(stride >= 1 && pad >= 0, "conv2d: bad stride/pad");
  const int OH = (H + 2 * pad - kh) / stride + 1;
  const int OW = (W + 2 * pad - kw) / stride + 1;
  require(OH >= 1 && OW >= 1, "conv2d: kernel larger than padded input");

  const long K = static_cast<long>(C) * kh * kw;
  const long N = static_cast<long>(B) * OH * OW;
  ArrX<S> v(static_cast<long>(B) * F * OH * OW);
  {
    detail::MatRM<S> cols(K, N);
    detail::im2col(x.values().data(), B, C, H, W, kh, kw, stride, pad, OH, OW, cols);
    detail::CMapRM<S> km(k.values().data(), F, K);
    detail::MatRM<S> om(F, N);
    om.noalias() = km * cols;
    const long ohw = static_cast<long>(OH) * OW;
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>> bv(bias.values().data(), F);
    for (int b = 0; b < B; ++b) {
      detail::MapRM<S> dst(v.data() + static_cast<long>(b) * F * ohw, F, ohw);
      dst = om.middleCols(static_cast<long>(b) * ohw, ohw);
      dst.colwise() += bv;
    }
  }
  bool ng = g.wants_grad(x.id()) || g.wants_grad(k.id()) || g.wants_grad(bias.id());
  Tensor<S> out = g.append({B, F, OH, OW}, std::move(v), ng);
  if (ng) {
    Graph<S>* gp = &g;
    int xid = x.id(), kid = k.id(), bid = bias.id(), oid = out.id();
    g.set_backprop(oid, [gp, xid, kid, bid, oid, B, C, H, W, F, kh, kw, OH, OW, stride, pad, K,
                         N] {
      const long ohw = static_cast<long>(OH) * OW;
      detail::MatRM<S> dout(F, N);
      {
        const ArrX<S>& go = gp->node(oid).grad;
        for (int b = 0; b < B; ++b)
          dout.middleCols(static_cast<long>(b) * ohw, ohw) =
              detail::CMapRM<S>(go.data() + static_cast<long>(b) * F * ohw, F, ohw);
      }
      if (gp->wants_grad(kid)) {
        // the patch matrix is re-gathered from the saved input values
        detail::MatRM<S> cols(K, N);
        detail::im2col(gp->node(xid).values.data(), B, C, H, W, kh, kw, stride, pad, OH, OW,
                       cols);
        detail::MapRM<S> gk(gp->grad_buf(kid).data(), F, K);
        gk.noalias() += dout * cols.transpose();
      }
      if (gp->wants_grad(bid)) {
        ArrX<S>& gb = gp->grad_buf(bid);
        for (int f = 0; f < F; ++f) gb[f] += dout.row(f).sum();
      }
      if (gp->wants_grad(xid)) {
        detail::CMapRM<S> km(gp->node(kid).values.data(), F, K);
        detail::MatRM<S> dcols(K, N);
        dcols.noalias() = km.transpose() * dout;
        ArrX<S>& gx = gp->grad_buf(xid);
        for (int c = 0; c < C; ++c)
          for (int ky = 0; ky < kh; ++ky)
            for (int kx = 0; kx < kw; ++kx) {
              const detail::TapRun t = detail::tap_run(kx, W, OW, stride, pad);
              if (t.ox0 > t.ox1) continue;
              const S* krow = dcols.data() + (static_cast<long>((c * kh + ky) * kw + kx)) * N;
              for (int b = 0; b < B; ++b)
                for (int oy = 0; oy < OH; ++oy) {
                  const int iy = oy * stride - pad + ky;
                  if (iy < 0 || iy >= H) continue;
                  const S* __restrict src =
                      krow + (static_cast<long>(b) * OH + oy) * OW + t.ox0;
                  S* __restrict grow =
                      gx.data() + ((static_cast<long>(b) * C + c) * H + iy) * W + t.ix0;
                  const long len = t.ox1 - t.ox0 + 1;
                  if (stride == 1) {
                    for (long i = 0; i < len; ++i) grow[i] += src[i];
                  } else {
                    for (long i = 0; i < len; ++i) grow[i * stride] += src[i];
                  }
                }
            }
      }
    });
  }
  return out;
}

// Nearest-neighbour upsampling by an integer factor.
template <typename S>
Tensor<S> nearest_upsample(Tensor<S> x, int factor) {
  Graph<S>& g = x.graph();
  require(x.shape().size() == 4, "nearest_upsample: expected [B,C,H,W]");
  require(factor >= 1, "nearest_upsample: factor must be >= 1");
  const int B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  const int OH = H * factor, OW = W * factor;
  ArrX<S> v(static_cast<long>(B) * C * OH * OW);
  const S* xv = x.values().data();
  for (int bc = 0; bc < B * C; ++bc)
    for (int i = 0; i < OH; ++i) {
      const S* src = xv + (static_cast<long>(bc) * H + i / factor) * W;
      S* dst = v.data() + (static_cast<long>(bc) * OH + i) * OW;
      for (int j = 0; j < OW; ++j) dst[j] = src[j / factor];
    }
  bool ng = g.wants_grad(x.id());
  Tensor<S> out = g.append({B, C, OH, OW}, std::move(v), ng);
  if (ng) {
    Graph<S>* gp = &g;
    int xid = x.id(), oid = out.id();
    g.set_backprop(oid, [gp, xid, oid, B, C, H, W, factor] {
      const int OH = H * factor, OW = W * factor;
      const ArrX<S>& go = gp->node(oid).grad;
      ArrX<S>& gx = gp->grad_buf(xid);
      for (int bc = 0; bc < B * C; ++bc)
        for (int i = 0; i < OH; ++i) {
          const S* __restrict src = go.data() + (static_cast<long>(bc) * OH + i) * OW;
          S* __restrict dst = gx.data() + (static_cast<long>(bc) * H + i / factor) * W;
          for (int j = 0; j < W; ++j) {
            S acc = S(0);
            for (int f = 0; f < factor; ++f) acc += src[j * factor + f];
            dst[j] += acc;
          }
        }
    });
  }
  return out;
}

namespace detail {
// Shared normalization backward over one contiguous region:
// dx = (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat)) * inv
template <typename S>
void norm_region_backward(const S* go, const S* x, S mu, S inv, const S* gamma_per_elem,
                          long len, S* gx) {
  S m1 = S(0), m2 = S(0);
  for (long i = 0; i < len; ++i) {
    const S xhat = (x[i] - mu) * inv;
    const S dxhat = go[i] * gamma_per_elem[i];
    m1 += dxhat;
    m2 += dxhat * xhat;
  }
  m1 /= static_cast<S>(len);
  m2 /= static_cast<S>(len);
  for (long i = 0; i < len; ++i) {
    const S xhat = (x[i] - mu) * inv;
    const S dxhat = go[i] * gamma_per_elem[i];
    gx[i] += (dxhat - m1 - xhat * m2) * inv;
  }
}
}  // namespace detail

// GroupNorm over [B,C,H,W]: statistics are per (sample, channel group), the
// learned gamma/beta are per channel. delta stabilizes 1/sqrt(var + delta).
template <typename S>
Tensor<S> group_norm(Tensor<S> x, Tensor<S> gamma, Tensor<S> beta, int groups,
                     S delta = static_cast<S>(1e-5)) {
  Graph<S>& g = same_graph(x, gamma);
  same_graph(x, beta);
  require(x.shape().size() == 4, "group_norm: expected [B,C,H,W]");
  const int B = x.shape()[0], C = x.shape()[1], H = x.shape()[2], W = x.shape()[3];
  require(groups >= 1 && C % groups == 0,
          "group_norm: channels " + std::to_string(C) + " not divisible by groups " +
              std::to_string(groups));
  require(gamma.shape() == Shape{C} && beta.shape() == Shape{C},
          "group_norm: gamma/beta must be [C]");
  const int cs = C / groups;                      // channels per group
  const long hw = static_cast<long>(H) * W;
  const long len = cs * hw;                       // elements per region
  auto mu = std::make_shared<std::vector<S>>(static_cast<size_t>(B) * groups);
  auto inv = std::make_shared<std::vector<S>>(static_cast<size_t>(B) * groups);

  ArrX<S> v(x.size());
  {
    const S* xv = x.values().data();
    const S* gv = gamma.values().data();
    const S* bv = beta.values().data();
    for (int b = 0; b < B; ++b)
      for (int gi = 0; gi < groups; ++gi) {
        const long off = (static_cast<long>(b) * C + static_cast<long>(gi) * cs) * hw;
        S m = S(0);
        for (long i = 0; i < len; ++i) m += xv[off + i];
        m /= static_cast<S>(len);
        S var = S(0);
        for (long i = 0; i < len; ++i) {
          const S d = xv[off + i] - m;
          var += d * d;
        }
        var /= static_cast<S>(len);
        const S iv = S(1) / std::sqrt(var + delta);
        (*mu)[static_cast<size_t>(b) * groups + gi] = m;
        (*inv)[static_cast<size_t>(b) * groups + gi] = iv;
        for (int c = 0; c < cs; ++c) {
          const int ch = gi * cs + c;
          for (long i = 0; i < hw; ++i) {
            const long at = off + c * hw + i;
            v[at] = gv[ch] * ((xv[at] - m) * iv) + bv[ch];
          }
        }
      }
  }
  bool ng = g.wants_grad(x.id()) || g.wants_grad(gamma.id()) || g.wants_grad(beta.id());
  Tensor<S> out = g.append(x.shape(), std::move(v), ng);
  if (ng) {
    Graph<S>* gp = &g;
    int xid = x.id(), gid = gamma.id(), bid = beta.id(), oid = out.id();
    g.set_backprop(oid, [gp, xid, gid, bid, oid, mu, inv, B, C, groups, cs, hw, len] {
      const ArrX<S>& go = gp->node(oid).grad;
      const S* xv = gp->node(xid).values.data();
      const S* gv = gp->node(gid).values.data();
      std::vector<S> gamma_elem(len);
      for (int b = 0; b < B; ++b)
        for (int gi = 0; gi < groups; ++gi) {
          const long off = (static_cast<long>(b) * C + static_cast<long>(gi) * cs) * hw;
          const S m = (*mu)[static_cast<size_t>(b) * groups + gi];
          const S iv = (*inv)[static_cast<size_t>(b) * groups + gi];
          if (gp->wants_grad(gid) || gp->wants_grad(bid)) {
            for (int c = 0; c < cs; ++c) {
              const int ch = gi * cs + c;
              S sg = S(0), sb = S(0);
              for (long i = 0; i < hw; ++i) {
                const long at = off + c * hw + i;
                sg += go[at] * ((xv[at] - m) * iv);
                sb += go[at];
              }
              if (gp->wants_grad(gid)) gp->grad_buf(gid)[ch] += sg;
              if (gp->wants_grad(bid)) gp->grad_buf(bid)[ch] += sb;
            }
          }
          if (gp->wants_grad(xid)) {
            for (int c = 0; c < cs; ++c)
              for (long i = 0; i < hw; ++i) gamma_elem[c * hw + i] = gv[gi * cs + c];
            detail::norm_region_backward<S>(go.data() + off, xv + off, m, iv, gamma_elem.data(),
                                            len, gp->grad_buf(xid).data() + off);
          }
        }
    });
  }
  return out;
}

// LayerNorm over the feature axis of [B,D] with learned per-feature scale/shift.
template <typename S>
Tensor<S> layer_norm(Tensor<S> x, Tensor<S> gamma, Tensor<S> beta,
                     S delta = static_cast<S>(1e-5)) {
  Graph<S>& g = same_graph(x, gamma);
  same_graph(x, beta);
  require(x.shape().size() == 2, "layer_norm: expected [B,D]");
  const int B = x.shape()[0], D = x.shape()[1];
  require(gamma.shape() == Shape{D} && beta.shape() == Shape{D},
          "layer_norm: gamma/beta must be [D]");
  auto mu = std::make_shared<std::vector<S>>(B);
  auto inv = std::make_shared<std::vector<S>>(B);
  ArrX<S> v(x.size());
  {
    const S* xv = x.values().data();
    const S* gv = gamma.values().data();
    const S* bv = beta.values().data();
    for (int b = 0; b < B; ++b) {
      const long off = static_cast<long>(b) * D;
      S m = S(0);
      for (int i = 0; i < D; ++i) m += xv[off + i];
      m /= static_cast<S>(D);
      S var = S(0);
      for (int i = 0; i < D; ++i) {
        const S d = xv[off + i] - m;
        var += d * d;
      }
      var /= static_cast<S>(D);
      const S iv = S(1) / std::sqrt(var + delta);
      (*mu)[b] = m;
      (*inv)[b] = iv;
      for (int i = 0; i < D; ++i) v[off + i] = gv[i] * ((xv[off + i] - m) * iv) + bv[i];
    }
  }
  bool ng = g.wants_grad(x.id()) || g.wants_grad(gamma.id()) || g.wants_grad(beta.id());
  Tensor<S> out = g.append(x.shape(), std::move(v), ng);
  if (ng) {
    Graph<S>* gp = &g;
    int xid = x.id(), gid = gamma.id(), bid = beta.id(), oid = out.id();
    g.set_backprop(oid, [gp, xid, gid, bid, oid, mu, inv, B, D] {
      const ArrX<S>& go = gp->node(oid).grad;
      const S* xv = gp->node(xid).values.data();
      const S* gv = gp->node(gid).values.data();
      for (int b = 0; b < B; ++b) {
        const long off = static_cast<long>(b) * D;
        const S m = (*mu)[b], iv = (*inv)[b];
        if (gp->wants_grad(gid) || gp->wants_grad(bid)) {
          for (int i = 0; i < D; ++i) {
            if (gp->wants_grad(gid))
              gp->grad_buf(gid)[i] += go[off + i] * ((xv[off + i] - m) * iv);
            if (gp->wants_grad(bid)) gp->grad_buf(bid)[i] += go[off + i];
          }
        }
        if (gp->wants_grad(xid))
          detail::norm_region_backward<S>(go.data() + off, xv + off, m, iv, gv, D,
                                          gp->grad_buf(xid).data() + off);
      }
    });
  }
  return out;
}

// Rows scaled to unit L2 norm; rows with norm <= delta are divided by delta
// instead, which keeps the map differentiable at the origin.
template <typename S>
Tensor<S> l2_normalize_rows(Tensor<S> x, S delta = static_cast<S>(1e-8)) {
  Graph<S>& g = x.graph();
  require(x.shape().size() == 2, "l2_normalize_rows: expected [B,D]");
  const int B = x.shape()[0], D = x.shape()[1];
  auto norms = std::make_shared<std::vector<S>>(B);
  ArrX<S> v(x.size());
  for (int b = 0; b < B; ++b) {
    const long off = static_cast<long>(b) * D;
    S ss = S(0);
    for (int i = 0; i < D; ++i) ss += x.values()[off + i] * x.values()[off + i];
    const S n = std::sqrt(ss);
    (*norms)[b] = n;
    const S s = n > delta ? n : delta;
    for (int i = 0; i < D; ++i) v[off + i] = x.values()[off + i] / s;
  }
  bool ng = g.wants_grad(x.id());
  Tensor<S> out = g.append(x.shape(), std::move(v), ng);
  if (ng) {
    Graph<S>* gp = &g;
    int xid = x.id(), oid = out.id();
    g.set_backprop(oid, [gp, xid, oid, norms, B, D, delta] {
      const ArrX<S>& go = gp->node(oid).grad;
      const ArrX<S>& y = gp->node(oid).values;
      ArrX<S>& gx = gp->grad_buf(xid);
      for (int b = 0; b < B; ++b) {
        const long off = static_cast<long>(b) * D;
        const S n = (*norms)[b];
        if (n > delta) {
          S dot = S(0);
          for (int i = 0; i < D; ++i) dot += go[off + i] * y[off + i];
          for (int i = 0; i < D; ++i) gx[off + i] += (go[off + i] - y[off + i] * dot) / n;
        } else {
          for (int i = 0; i < D; ++i) gx[off + i] += go[off + i] / delta;
        }
      }
    });
  }
  return out;
}

// Per-row log(sum(exp(x))) of a [B,K] matrix, computed against the row max so
// large scores cannot overflow. Output is [B].
template <typename S>
Tensor<S> logsumexp_rows(Tensor<S> x) {
  Graph<S>& g = x.graph();
  require(x.shape().size() == 2, "logsumexp_rows: expected [B,K]");
  const int B = x.shape()[0], K = x.shape()[1];
  ArrX<S> v(B);
  for (int b = 0; b < B; ++b) {
    const long off = static_cast<long>(b) * K;
    S m = x.values()[off];
    for (int i = 1; i < K; ++i) m = std::max(m, x.values()[off + i]);
    S s = S(0);
    for (int i = 0; i < K; ++i) s += std::exp(x.values()[off + i] - m);
    v[b] = m + std::log(s);
  }
  bool ng = g.wants_grad(x.id());
  Tensor<S> out = g.append({B}, std::move(v), ng);
  if (ng) {
    Graph<S>* gp = &g;
    int xid = x.id(), oid = out.id();
    g.set_backprop(oid, [gp, xid, oid, B, K] {
      const ArrX<S>& go = gp->node(oid).grad;
      const ArrX<S>& lse = gp->node(oid).values;
      const ArrX<S>& xv = gp->node(xid).values;
      ArrX<S>& gx = gp->grad_buf(xid);
      for (int b = 0; b < B; ++b) {
        const long off = static_cast<long>(b) * K;
        for (int i = 0; i < K; ++i) gx[off + i] += go[b] * std::exp(xv[off + i] - lse[b]);
      }
    });
  }
  return out;
}

}  // namespace ig
