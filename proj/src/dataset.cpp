#include "ig/world/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "json.hpp"

#include "ig/core/serialize.hpp"
#include "ig/core/shape.hpp"

namespace ig {

namespace {

using json = nlohmann::ordered_json;

constexpr uint32_t kIgdsVersion = 1;

// Named sub-streams of an episode seed.
enum EpisodeStream : uint64_t { kEnvStream = 0, kPolicyStream = 1, kOffsetStream = 2 };

int sample_action(PolicyKind policy, float epsilon, const EnvConfig& env, const EnvState& st,
                  Rng& rng) {
  if (policy == PolicyKind::random) return static_cast<int>(rng.below(kNumActions));
  if (rng.uniform() < epsilon) return static_cast<int>(rng.below(kNumActions));
  return expert_action(env, st);
}

json env_to_json(const EnvConfig& e) {
  return json{{"extent", e.extent},        {"channels", e.channels},
              {"step_px", e.step_px},      {"level", level_name(e.level)},
              {"amplitude", e.amplitude},  {"episode_len", e.episode_len}};
}

EnvConfig env_from_json(const json& j) {
  EnvConfig e;
  e.extent = j.at("extent").get<int>();
  e.channels = j.at("channels").get<int>();
  e.step_px = j.at("step_px").get<int>();
  e.level = level_from_name(j.at("level").get<std::string>());
  e.amplitude = j.at("amplitude").get<float>();
  e.episode_len = j.at("episode_len").get<int>();
  return e;
}

}  // namespace

std::string policy_name(PolicyKind p) {
  return p == PolicyKind::random ? "random" : "eps_expert";
}

PolicyKind policy_from_name(const std::string& name) {
  if (name == "random") return PolicyKind::random;
  if (name == "eps_expert") return PolicyKind::eps_expert;
  throw std::invalid_argument("unknown policy '" + name + "'");
}

Dataset generate_dataset(const EnvConfig& env, const GenConfig& gen, uint64_t seed,
                         const std::string& config_hash) {
  require(gen.k_max >= 1, "generate_dataset: k_max must be >= 1");
  require(env.episode_len > gen.k_max, "generate_dataset: episode_len must exceed k_max");
  require(gen.episodes >= 1, "generate_dataset: need at least one episode");

  const int T = env.episode_len;
  const long obs_n = static_cast<long>(env.channels) * env.extent * env.extent;
  const long rel_n = static_cast<long>(env.extent) * env.extent;

  Dataset ds;
  ds.meta.env = env;
  ds.meta.gen = gen;
  ds.meta.seed = seed;
  ds.meta.config_hash = config_hash;
  ds.records.reserve(static_cast<size_t>(gen.episodes) * (T - gen.k_max));

  std::vector<std::vector<float>> obs(T);
  std::vector<std::vector<uint8_t>> rel(T);
  std::vector<int> actions(T - 1);
  std::vector<float> rewards(T - 1);

  for (int e = 0; e < gen.episodes; ++e) {
    const uint64_t ep_seed = mix_seed(seed, static_cast<uint64_t>(e));
    EnvState st = env_reset(env, mix_seed(ep_seed, kEnvStream));
    Rng policy_rng(mix_seed(ep_seed, kPolicyStream));
    Rng offset_rng(mix_seed(ep_seed, kOffsetStream));

    for (int t = 0; t < T; ++t) {
      obs[t].resize(obs_n);
      rel[t].resize(rel_n);
      render(env, st, gen.eval_render, obs[t].data());
      render_relevance(env, st, rel[t].data());
      if (t < T - 1) {
        actions[t] = sample_action(gen.policy, gen.epsilon, env, st, policy_rng);
        rewards[t] = env_step(env, st, actions[t]);
      }
    }
    for (int t = 0; t <= T - 1 - gen.k_max; ++t) {
      Transition tr;
      tr.action = actions[t];
      tr.reward = rewards[t];
      tr.k = offset_rng.range(1, gen.k_max);
      tr.obs_t = obs[t];
      tr.obs_next = obs[t + 1];
      tr.obs_k = obs[t + tr.k];
      tr.relevance = rel[t];
      ds.records.push_back(std::move(tr));
    }
  }
  ds.meta.records = static_cast<int>(ds.records.size());

  // per-channel moments over all obs_t
  const long hw = static_cast<long>(env.extent) * env.extent;
  ds.meta.channel_mean.assign(env.channels, 0.0f);
  ds.meta.channel_std.assign(env.channels, 0.0f);
  for (int c = 0; c < env.channels; ++c) {
    double s = 0.0, s2 = 0.0;
    for (const auto& r : ds.records)
      for (long i = 0; i < hw; ++i) {
        const double v = r.obs_t[c * hw + i];
        s += v;
        s2 += v * v;
      }
    const double n = static_cast<double>(ds.records.size()) * hw;
    const double m = s / n;
    const double var = std::max(0.0, s2 / n - m * m);
    ds.meta.channel_mean[c] = static_cast<float>(m);
    ds.meta.channel_std[c] = std::max(static_cast<float>(std::sqrt(var)), 1e-6f);
  }
  return ds;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  const EnvConfig& env = ds.meta.env;
  json meta = {
      {"env", env_to_json(env)},
      {"episodes", ds.meta.gen.episodes},
      {"records", ds.meta.records},
      {"k_max", ds.meta.gen.k_max},
      {"policy", policy_name(ds.meta.gen.policy)},
      {"epsilon", ds.meta.gen.epsilon},
      {"eval_render", ds.meta.gen.eval_render},
      {"seed", ds.meta.seed},
      {"channel_mean", ds.meta.channel_mean},
      {"channel_std", ds.meta.channel_std},
      {"config_hash", ds.meta.config_hash},
  };
  const std::string meta_str = meta.dump();

  std::string buf;
  buf += "IGDS";
  detail::put_u32(buf, kIgdsVersion);
  detail::put_u32(buf, static_cast<uint32_t>(meta_str.size()));
  buf += meta_str;

  const long obs_n = static_cast<long>(env.channels) * env.extent * env.extent;
  const long rel_n = static_cast<long>(env.extent) * env.extent;
  const long rel_bytes = (rel_n + 7) / 8;
  for (const auto& r : ds.records) {
    detail::put_u32(buf, static_cast<uint32_t>(r.action));
    detail::put_u32(buf, static_cast<uint32_t>(r.k));
    detail::put_f32(buf, r.reward);
    require(static_cast<long>(r.obs_t.size()) == obs_n &&
                static_cast<long>(r.obs_next.size()) == obs_n &&
                static_cast<long>(r.obs_k.size()) == obs_n,
            "save_dataset: observation size drift");
    for (long i = 0; i < obs_n; ++i) detail::put_f32(buf, r.obs_t[i]);
    for (long i = 0; i < obs_n; ++i) detail::put_f32(buf, r.obs_next[i]);
    for (long i = 0; i < obs_n; ++i) detail::put_f32(buf, r.obs_k[i]);
    for (long b = 0; b < rel_bytes; ++b) {
      uint8_t byte = 0;
      for (int bit = 0; bit < 8; ++bit) {
        const long i = b * 8 + bit;
        if (i < rel_n && r.relevance[i]) byte |= static_cast<uint8_t>(1u << bit);
      }
      buf.push_back(static_cast<char>(byte));
    }
  }
  detail::write_file(path, buf, "save_dataset");
}

Dataset load_dataset(const std::string& path) {
  const std::string data = detail::read_file(path, "load_dataset");
  detail::ByteReader r(data, "load_dataset");
  if (r.bytes(4) != "IGDS")
    throw std::runtime_error("load_dataset: bad magic in '" + path + "' (not an IGDS file)");
  const uint32_t version = r.u32();
  if (version != kIgdsVersion)
    throw std::runtime_error("load_dataset: unsupported version " + std::to_string(version) +
                             " in '" + path + "'");
  const uint32_t meta_len = r.u32();
  json meta;
  try {
    meta = json::parse(r.bytes(meta_len));
  } catch (const json::exception& e) {
    throw std::runtime_error("load_dataset: corrupt metadata in '" + path + "': " + e.what());
  }

  Dataset ds;
  ds.meta.env = env_from_json(meta.at("env"));
  ds.meta.gen.episodes = meta.at("episodes").get<int>();
  ds.meta.gen.k_max = meta.at("k_max").get<int>();
  ds.meta.gen.policy = policy_from_name(meta.at("policy").get<std::string>());
  ds.meta.gen.epsilon = meta.at("epsilon").get<float>();
  ds.meta.gen.eval_render = meta.at("eval_render").get<bool>();
  ds.meta.seed = meta.at("seed").get<uint64_t>();
  ds.meta.records = meta.at("records").get<int>();
  ds.meta.channel_mean = meta.at("channel_mean").get<std::vector<float>>();
  ds.meta.channel_std = meta.at("channel_std").get<std::vector<float>>();
  ds.meta.config_hash = meta.value("config_hash", "");

  const EnvConfig& env = ds.meta.env;
  const long obs_n = static_cast<long>(env.channels) * env.extent * env.extent;
  const long rel_n = static_cast<long>(env.extent) * env.extent;
  const long rel_bytes = (rel_n + 7) / 8;
  const long rec_size = 4 + 4 + 4 + 3 * obs_n * 4 + rel_bytes;
  if (static_cast<long>(r.remaining()) != static_cast<long>(ds.meta.records) * rec_size)
    throw std::runtime_error("load_dataset: payload size mismatch in '" + path + "': header says " +
                             std::to_string(ds.meta.records) + " records of " +
                             std::to_string(rec_size) + " bytes, found " +
                             std::to_string(r.remaining()) + " bytes");

  ds.records.resize(ds.meta.records);
  for (auto& tr : ds.records) {
    tr.action = static_cast<int>(r.u32());
    tr.k = static_cast<int>(r.u32());
    tr.reward = r.f32();
    tr.obs_t.resize(obs_n);
    tr.obs_next.resize(obs_n);
    tr.obs_k.resize(obs_n);
    for (long i = 0; i < obs_n; ++i) tr.obs_t[i] = r.f32();
    for (long i = 0; i < obs_n; ++i) tr.obs_next[i] = r.f32();
    for (long i = 0; i < obs_n; ++i) tr.obs_k[i] = r.f32();
    tr.relevance.assign(rel_n, 0);
    for (long b = 0; b < rel_bytes; ++b) {
      const uint8_t byte = r.u8();
      for (int bit = 0; bit < 8; ++bit) {
        const long i = b * 8 + bit;
        if (i < rel_n) tr.relevance[i] = (byte >> bit) & 1u;
      }
    }
  }
  return ds;
}

void augment_crop(const float* obs, int C, int H, int W, int pad, Rng& rng, float* out) {
  if (pad == 0) {
    std::memcpy(out, obs, sizeof(float) * C * H * W);
    return;
  }
  const int ox = rng.range(0, 2 * pad);
  const int oy = rng.range(0, 2 * pad);
  for (int c = 0; c < C; ++c)
    for (int y = 0; y < H; ++y) {
      const int sy = y + oy - pad;
      float* dst = out + (static_cast<long>(c) * H + y) * W;
      if (sy < 0 || sy >= H) {
        std::memset(dst, 0, sizeof(float) * W);
        continue;
      }
      const float* src = obs + (static_cast<long>(c) * H + sy) * W;
      for (int x = 0; x < W; ++x) {
        const int sx = x + ox - pad;
        dst[x] = (sx < 0 || sx >= W) ? 0.0f : src[sx];
      }
    }
}

}  // namespace ig
