#pragma once

// The gating mechanism: blend an observation (or latent) with noise under
// control of a per-pixel (or per-feature) gate in (0,1), and charge an L1
// penalty on the gate so open gates cost information. Endpoints are exact:
// a gate of 1 passes the signal through bitwise, a gate of 0 yields the
// noise draw bitwise.

#include <string>
#include <vector>

#include "ig/core/ops.hpp"
#include "ig/core/rng.hpp"

namespace ig {

struct NoiseSpec {
  float mean = 0.5f;
  float stddev = 0.25f;
};

// Per-forward noise draw as a constant leaf; never trainable.
template <typename S>
Tensor<S> sample_noise(Graph<S>& g, const NoiseSpec& spec, Shape shape, Rng& rng) {
  require(spec.stddev > 0.0f, "sample_noise: stddev must be positive");
  ArrX<S> v(numel(shape));
  for (long i = 0; i < v.size(); ++i)
    v[i] = static_cast<S>(rng.gaussian() * spec.stddev + spec.mean);
  return g.constant(std::move(shape), std::move(v));
}

// x [B,C,H,W] gated by mask [B,1,H,W] against noise [B,C,H,W]:
// out = m*x + (1-m)*eps, with the mask broadcast across channels.
template <typename S>
Tensor<S> gate_input(Tensor<S> x, Tensor<S> mask, Tensor<S> noise) {
  require(x.shape().size() == 4, "gate_input: x must be [B,C,H,W]");
  require(mask.shape().size() == 4 && mask.shape()[1] == 1,
          "gate_input: mask must be [B,1,H,W], got " + shape_str(mask.shape()));
  require(noise.shape() == x.shape(), "gate_input: noise shape " + shape_str(noise.shape()) +
                                          " != x shape " + shape_str(x.shape()));
  auto m = broadcast_channel(mask, x.shape()[1]);
  return add(mul(m, x), mul(one_minus(m), noise));
}

// z [B,D] gated by mask [B,D] against noise [B,D].
template <typename S>
Tensor<S> gate_feature(Tensor<S> z, Tensor<S> mask, Tensor<S> noise) {
  require(z.shape().size() == 2, "gate_feature: z must be [B,D]");
  require(mask.shape() == z.shape(), "gate_feature: mask shape " + shape_str(mask.shape()) +
                                         " != z shape " + shape_str(z.shape()));
  require(noise.shape() == z.shape(), "gate_feature: noise shape mismatch");
  return add(mul(mask, z), mul(one_minus(mask), noise));
}

// Mean absolute gate value over every element: ||m||_1 / numel.
template <typename S>
Tensor<S> sparsity_penalty(Tensor<S> mask) {
  return abs_mean(mask);
}

// With probability `prob` per sample, swap that row's mask with another
// sample's (a cyclic shift among the selected rows). Regularizes the mask
// net toward content-independent masks when they carry no information.
template <typename S>
Tensor<S> shuffle_masks(Tensor<S> masks, double prob, Rng& rng) {
  require(!masks.shape().empty(), "shuffle_masks: scalar input");
  const int B = masks.shape()[0];
  if (prob <= 0.0 || B < 2) return masks;
  std::vector<int> chosen;
  for (int b = 0; b < B; ++b)
    if (rng.bernoulli(prob)) chosen.push_back(b);
  if (chosen.size() < 2) return masks;
  std::vector<int> perm(B);
  for (int b = 0; b < B; ++b) perm[b] = b;
  for (size_t i = 0; i < chosen.size(); ++i)
    perm[chosen[i]] = chosen[(i + 1) % chosen.size()];
  return permute_rows(masks, perm);
}

// Content-independent Bernoulli(keep_prob) baseline mask, a constant leaf.
template <typename S>
Tensor<S> random_mask(Graph<S>& g, Shape shape, double keep_prob, Rng& rng) {
  require(keep_prob >= 0.0 && keep_prob <= 1.0, "random_mask: keep_prob outside [0,1]");
  ArrX<S> v(numel(shape));
  for (long i = 0; i < v.size(); ++i) v[i] = rng.bernoulli(keep_prob) ? S(1) : S(0);
  return g.constant(std::move(shape), std::move(v));
}

// --- schedule -------------------------------------------------------------

struct LambdaSchedule {
  enum class Kind { constant, linear_ramp };
  Kind kind = Kind::constant;
  double start = 0.1;
  double end = 0.1;        // ramp target; ignored for constant
  long ramp_steps = 0;     // steps to reach `end`; clamps afterwards

  static LambdaSchedule constant(double v) {
    LambdaSchedule s;
    s.kind = Kind::constant;
    s.start = s.end = v;
    return s;
  }
  static LambdaSchedule linear_ramp(double start, double end, long steps) {
    LambdaSchedule s;
    s.kind = Kind::linear_ramp;
    s.start = start;
    s.end = end;
    s.ramp_steps = steps;
    return s;
  }
};

inline double lambda_at(const LambdaSchedule& s, long step) {
  if (s.kind == LambdaSchedule::Kind::constant) return s.start;
  if (s.ramp_steps <= 0 || step >= s.ramp_steps) return s.end;
  if (step <= 0) return s.start;
  const double f = static_cast<double>(step) / static_cast<double>(s.ramp_steps);
  return s.start + (s.end - s.start) * f;
}

// --- configuration --------------------------------------------------------

enum class GateLocation { input, feature };
enum class GateMode { cooperative, adversarial };

struct GateConfig {
  bool enabled = true;           // false: plain ungated baseline
  GateLocation location = GateLocation::input;
  GateMode mode = GateMode::cooperative;
  LambdaSchedule lambda = LambdaSchedule::constant(0.1);
  long warmup_steps = 500;       // gate parameters frozen before this step
  bool mix_unmasked = true;      // add the task loss on ungated views too
  double shuffle_prob = 0.0;     // per-sample mask shuffling probability
  bool random_baseline = false;  // replace the learned mask with Bernoulli noise
  double keep_prob = 0.8;        // keep rate of the random baseline
  bool force_open = false;       // pin every gate to exactly 1
  NoiseSpec noise{0.5f, 0.25f};          // input-space noise
  NoiseSpec feature_noise{0.0f, 1.0f};   // latent-space noise
};

}  // namespace ig
