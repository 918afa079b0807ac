#pragma once

// Offline transition datasets collected from DistractorDot rollouts, plus the
// IGDS container. Layout, little-endian:
//   magic "IGDS" | u32 version | u32 metadata length | metadata JSON (UTF-8)
//   then `records` fixed-width records:
//     u32 action | u32 k | f32 reward | f32 obs_t[C*H*W] | f32 obs_next[C*H*W]
//     | f32 obs_k[C*H*W] | relevance bits (ceil(H*W/8) bytes, row-major,
//       LSB-first within each byte)
// Metadata carries the env config, counts, seed, policy, normalization stats,
// and the producing run's config hash, so a file is self-describing.

#include <cstdint>
#include <string>
#include <vector>

#include "ig/world/env.hpp"

namespace ig {

enum class PolicyKind { random, eps_expert };

std::string policy_name(PolicyKind p);
PolicyKind policy_from_name(const std::string& name);

struct GenConfig {
  int episodes = 64;
  int k_max = 8;          // temporal offset k is drawn uniformly from {1..k_max}
  PolicyKind policy = PolicyKind::random;
  float epsilon = 0.2f;   // exploration rate of the eps_expert policy
  bool eval_render = false;
};

struct Transition {
  int action = 0;
  int k = 1;
  float reward = 0.0f;
  std::vector<float> obs_t;      // C*H*W in [0,1]
  std::vector<float> obs_next;   // observation after `action`
  std::vector<float> obs_k;      // observation k steps after obs_t
  std::vector<uint8_t> relevance;  // H*W bytes, 0/1, for obs_t
};

struct DatasetMeta {
  EnvConfig env;
  GenConfig gen;
  uint64_t seed = 0;
  int records = 0;
  std::vector<float> channel_mean;  // per channel over all obs_t
  std::vector<float> channel_std;   // population std, floored at 1e-6
  std::string config_hash;
};

struct Dataset {
  DatasetMeta meta;
  std::vector<Transition> records;
};

// Rolls out `episodes` episodes of `env.episode_len` observations each and
// keeps every t with both t+1 and t+k in range, so the record count is
// episodes * (episode_len - k_max).
Dataset generate_dataset(const EnvConfig& env, const GenConfig& gen, uint64_t seed,
                         const std::string& config_hash = "");

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

// Random-shift augmentation: zero-pads by `pad` on every side and crops back
// to H x W at an offset drawn uniformly from [0, 2*pad]^2. obs is C*H*W.
void augment_crop(const float* obs, int C, int H, int W, int pad, Rng& rng, float* out);

}  // namespace ig
