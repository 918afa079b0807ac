#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ig/world/dataset.hpp"
#include "ig/world/env.hpp"

using namespace ig;

namespace {

std::string read_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  REQUIRE(f.good());
  return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
}

void write_bytes(const std::string& path, const std::string& data) {
  std::ofstream f(path, std::ios::binary);
  f.write(data.data(), static_cast<long>(data.size()));
}

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

template <typename F>
std::string thrown_message(F f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

// Rng seed whose first two range(0, 2*pad) draws are both `want`, so the crop
// offset is predictable.
uint64_t seed_with_offsets(int pad, int want) {
  for (uint64_t s = 0; s < 100000; ++s) {
    Rng r(s);
    if (r.range(0, 2 * pad) == want && r.range(0, 2 * pad) == want) return s;
  }
  REQUIRE(false);
  return 0;
}

}  // namespace

TEST_CASE("dynamics: step size, clamping, bad action") {
  EnvConfig cfg;
  EnvState st = env_reset(cfg, 1);
  st.ax = 5;
  st.ay = 5;
  env_step(cfg, st, kRight);
  CHECK(st.ax == 7);
  CHECK(st.ay == 5);
  env_step(cfg, st, kUp);
  CHECK(st.ay == 3);
  env_step(cfg, st, kStay);
  CHECK(st.ax == 7);
  CHECK(st.ay == 3);

  // the centre may not leave [1, extent-2]: the 3x3 footprint stays inside
  st.ax = cfg.extent - 2;
  env_step(cfg, st, kRight);
  CHECK(st.ax == cfg.extent - 2);
  st.ay = 1;
  env_step(cfg, st, kUp);
  CHECK(st.ay == 1);

  CHECK_THROWS_AS(env_step(cfg, st, 7), std::invalid_argument);
  CHECK_THROWS_AS(env_step(cfg, st, -1), std::invalid_argument);
}

TEST_CASE("env_reset validates config") {
  EnvConfig cfg;
  cfg.extent = 4;
  CHECK_THROWS(env_reset(cfg, 1));
  cfg = EnvConfig{};
  cfg.amplitude = 1.5f;
  CHECK_THROWS(env_reset(cfg, 1));
  cfg.amplitude = -0.1f;
  CHECK_THROWS(env_reset(cfg, 1));
}

TEST_CASE("reward is -Chebyshev/extent, zero only at the goal") {
  EnvConfig cfg;
  EnvState st = env_reset(cfg, 3);
  st.ax = st.gx + 2;
  st.ay = st.gy - 1;
  CHECK(reward_of(cfg, st) == doctest::Approx(-0.0625));  // -2/32
  st.ax = st.gx;
  st.ay = st.gy;
  CHECK(reward_of(cfg, st) == 0.0f);
  for (uint64_t s = 0; s < 16; ++s) {
    EnvState r = env_reset(cfg, s);
    float rew = reward_of(cfg, r);
    CHECK(rew <= 0.0f);
    CHECK(rew >= -1.0f);
    CHECK((rew == 0.0f) == (r.ax == r.gx && r.ay == r.gy));
  }
}

TEST_CASE("render: overdraw, eval mode, value range") {
  EnvConfig cfg;
  cfg.level = DistractorLevel::medium;
  EnvState st = env_reset(cfg, 11);
  st.ax = 10;
  st.ay = 20;
  const long hw = static_cast<long>(cfg.extent) * cfg.extent;
  std::vector<float> obs(cfg.channels * hw);

  render(cfg, st, false, obs.data());
  // agent pixels overdraw the distractor with a fixed colour
  CHECK(obs[0 * hw + 20 * cfg.extent + 10] == 1.0f);
  CHECK(obs[1 * hw + 20 * cfg.extent + 10] == doctest::Approx(0.2f));
  CHECK(obs[2 * hw + 21 * cfg.extent + 11] == doctest::Approx(0.2f));
  for (float v : obs) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
  }

  // eval mode: only relevant pixels may be non-zero
  std::vector<uint8_t> rel(hw);
  render_relevance(cfg, st, rel.data());
  render(cfg, st, true, obs.data());
  for (int c = 0; c < cfg.channels; ++c)
    for (long i = 0; i < hw; ++i)
      if (!rel[i]) CHECK(obs[c * hw + i] == 0.0f);
}

TEST_CASE("relevance is the footprint dilated by one") {
  EnvConfig cfg;
  EnvState st = env_reset(cfg, 5);
  const long hw = static_cast<long>(cfg.extent) * cfg.extent;
  std::vector<uint8_t> rel(hw);

  st.ax = 10;
  st.ay = 20;
  render_relevance(cfg, st, rel.data());
  long count = 0;
  for (uint8_t v : rel) count += v;
  CHECK(count == 25);  // 3x3 dilated by 1 -> 5x5
  CHECK(rel[18 * cfg.extent + 8] == 1);   // corner of the 5x5
  CHECK(rel[18 * cfg.extent + 7] == 0);   // just outside

  // clipped at the border
  st.ax = 1;
  st.ay = 1;
  render_relevance(cfg, st, rel.data());
  count = 0;
  for (uint8_t v : rel) count += v;
  CHECK(count == 16);  // 4x4 after clipping
}

TEST_CASE("decode_agent_center inverts render_relevance everywhere") {
  EnvConfig cfg;
  EnvState st = env_reset(cfg, 5);
  const long hw = static_cast<long>(cfg.extent) * cfg.extent;
  std::vector<uint8_t> rel(hw);
  for (int y = 1; y <= cfg.extent - 2; ++y)
    for (int x = 1; x <= cfg.extent - 2; ++x) {
      st.ax = x;
      st.ay = y;
      render_relevance(cfg, st, rel.data());
      int dx = -1, dy = -1;
      decode_agent_center(rel.data(), cfg.extent, &dx, &dy);
      CHECK(dx == x);
      CHECK(dy == y);
    }
  std::vector<uint8_t> empty(hw, 0);
  int dx, dy;
  CHECK_THROWS(decode_agent_center(empty.data(), cfg.extent, &dx, &dy));
}

TEST_CASE("expert: greedy, horizontal first, stay at goal") {
  EnvConfig cfg;
  EnvState st = env_reset(cfg, 1);
  st.gx = 9;
  st.gy = 5;
  st.ax = 5;
  st.ay = 5;
  CHECK(expert_action(cfg, st) == kRight);
  st.gx = 7;
  st.gy = 9;  // both axes off: horizontal resolved first
  CHECK(expert_action(cfg, st) == kRight);
  st.gx = 2;
  CHECK(expert_action(cfg, st) == kLeft);
  st.gx = 5;
  CHECK(expert_action(cfg, st) == kDown);
  st.gy = 2;
  CHECK(expert_action(cfg, st) == kUp);
  st.gy = 5;
  CHECK(expert_action(cfg, st) == kStay);
}

TEST_CASE("distractor levels") {
  const long hw = 32L * 32;

  SUBCASE("none: background all zero") {
    EnvConfig cfg;
    cfg.level = DistractorLevel::none;
    EnvState st = env_reset(cfg, 2);
    std::vector<float> obs(cfg.channels * hw);
    std::vector<uint8_t> rel(hw);
    render(cfg, st, false, obs.data());
    render_relevance(cfg, st, rel.data());
    for (int c = 0; c < cfg.channels; ++c)
      for (long i = 0; i < hw; ++i)
        if (!rel[i]) CHECK(obs[c * hw + i] == 0.0f);
  }

  SUBCASE("easy: texture frozen across steps") {
    EnvConfig cfg;
    cfg.level = DistractorLevel::easy;
    EnvState st = env_reset(cfg, 2);
    std::vector<float> o0(cfg.channels * hw), o1(cfg.channels * hw);
    std::vector<uint8_t> r0(hw), r1(hw);
    render(cfg, st, false, o0.data());
    render_relevance(cfg, st, r0.data());
    env_step(cfg, st, kLeft);
    render(cfg, st, false, o1.data());
    render_relevance(cfg, st, r1.data());
    for (int c = 0; c < cfg.channels; ++c)
      for (long i = 0; i < hw; ++i)
        if (!r0[i] && !r1[i]) CHECK(o0[c * hw + i] == o1[c * hw + i]);
  }

  SUBCASE("medium: texture resampled every step") {
    EnvConfig cfg;
    cfg.level = DistractorLevel::medium;
    EnvState st = env_reset(cfg, 2);
    std::vector<float> o0(cfg.channels * hw), o1(cfg.channels * hw);
    render(cfg, st, false, o0.data());
    env_step(cfg, st, kStay);
    render(cfg, st, false, o1.data());
    long changed = 0;
    for (long i = 0; i < cfg.channels * hw; ++i) changed += (o0[i] != o1[i]);
    CHECK(changed > hw);  // nearly every background pixel moves
  }

  SUBCASE("hard: decoy dot present away from the agent") {
    EnvConfig cfg;
    cfg.level = DistractorLevel::hard;
    // find a seed where decoy and agent are far apart
    for (uint64_t s = 0;; ++s) {
      EnvState st = env_reset(cfg, s);
      if (std::abs(st.dx - st.ax) > 6 || std::abs(st.dy - st.ay) > 6) {
        std::vector<float> obs(cfg.channels * hw);
        render(cfg, st, false, obs.data());
        CHECK(obs[0 * hw + static_cast<long>(st.dy) * cfg.extent + st.dx] == 1.0f);
        // decoy vanishes in eval mode
        render(cfg, st, true, obs.data());
        CHECK(obs[0 * hw + static_cast<long>(st.dy) * cfg.extent + st.dx] == 0.0f);
        break;
      }
      REQUIRE(s < 1000);
    }
  }
}

TEST_CASE("background is action-independent (easy level)") {
  EnvConfig cfg;
  cfg.level = DistractorLevel::easy;
  const long hw = static_cast<long>(cfg.extent) * cfg.extent;
  EnvState a = env_reset(cfg, 17);
  EnvState b = env_reset(cfg, 17);
  std::vector<float> oa(cfg.channels * hw), ob(cfg.channels * hw);
  std::vector<uint8_t> ra(hw), rb(hw);
  const int plan_a[4] = {kRight, kRight, kUp, kStay};
  const int plan_b[4] = {kLeft, kDown, kDown, kLeft};
  for (int t = 0; t < 4; ++t) {
    env_step(cfg, a, plan_a[t]);
    env_step(cfg, b, plan_b[t]);
  }
  render(cfg, a, false, oa.data());
  render(cfg, b, false, ob.data());
  render_relevance(cfg, a, ra.data());
  render_relevance(cfg, b, rb.data());
  for (int c = 0; c < cfg.channels; ++c)
    for (long i = 0; i < hw; ++i)
      if (!ra[i] && !rb[i]) CHECK(oa[c * hw + i] == ob[c * hw + i]);
}

TEST_CASE("generate_dataset: record count, k range, internal consistency") {
  EnvConfig env;
  env.episode_len = 20;
  GenConfig gen;
  gen.episodes = 3;
  gen.k_max = 5;
  Dataset ds = generate_dataset(env, gen, 9);

  CHECK(ds.records.size() == 45);  // 3 * (20 - 5)
  CHECK(ds.meta.records == 45);

  bool saw_k1 = false;
  for (const auto& r : ds.records) {
    CHECK(r.k >= 1);
    CHECK(r.k <= 5);
    CHECK(r.action >= 0);
    CHECK(r.action < kNumActions);
    CHECK(r.reward <= 0.0f);
    CHECK(r.reward >= -1.0f);
    for (float v : r.obs_t) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
    if (r.k == 1) {
      saw_k1 = true;
      CHECK(r.obs_k == r.obs_next);
    }
  }
  CHECK(saw_k1);

  // relevance matches the agent drawn in obs_t: decoded centre pixel is bright
  const long hw = static_cast<long>(env.extent) * env.extent;
  for (const auto& r : ds.records) {
    int ax, ay;
    decode_agent_center(r.relevance.data(), env.extent, &ax, &ay);
    CHECK(r.obs_t[static_cast<long>(ay) * env.extent + ax] == 1.0f);
  }

  CHECK_THROWS(generate_dataset(env, GenConfig{.episodes = 1, .k_max = 20}, 1));
  CHECK_THROWS(generate_dataset(env, GenConfig{.episodes = 0}, 1));
  CHECK_THROWS(generate_dataset(env, GenConfig{.episodes = 1, .k_max = 0}, 1));
}

TEST_CASE("normalization statistics match a direct recomputation") {
  EnvConfig env;
  env.episode_len = 12;
  GenConfig gen;
  gen.episodes = 2;
  gen.k_max = 3;
  Dataset ds = generate_dataset(env, gen, 21);
  const long hw = static_cast<long>(env.extent) * env.extent;
  for (int c = 0; c < env.channels; ++c) {
    double s = 0.0, s2 = 0.0;
    for (const auto& r : ds.records)
      for (long i = 0; i < hw; ++i) {
        s += r.obs_t[c * hw + i];
        s2 += static_cast<double>(r.obs_t[c * hw + i]) * r.obs_t[c * hw + i];
      }
    const double n = static_cast<double>(ds.records.size()) * hw;
    const double mean = s / n;
    CHECK(ds.meta.channel_mean[c] == doctest::Approx(mean).epsilon(1e-6));
    CHECK(ds.meta.channel_std[c] ==
          doctest::Approx(std::sqrt(s2 / n - mean * mean)).epsilon(1e-5));
    CHECK(ds.meta.channel_std[c] >= 1e-6f);
  }
}

TEST_CASE("eval_render datasets carry noise-free observations") {
  EnvConfig env;
  env.episode_len = 10;
  env.level = DistractorLevel::medium;
  GenConfig gen;
  gen.episodes = 1;
  gen.k_max = 2;
  gen.eval_render = true;
  Dataset ds = generate_dataset(env, gen, 4);
  const long hw = static_cast<long>(env.extent) * env.extent;
  for (const auto& r : ds.records)
    for (int c = 0; c < env.channels; ++c)
      for (long i = 0; i < hw; ++i)
        if (!r.relevance[i]) CHECK(r.obs_t[c * hw + i] == 0.0f);
}

TEST_CASE("generation is deterministic and the file round-trips") {
  EnvConfig env;
  env.episode_len = 12;
  GenConfig gen;
  gen.episodes = 2;
  gen.k_max = 4;
  gen.policy = PolicyKind::eps_expert;
  gen.epsilon = 0.5f;

  Dataset d1 = generate_dataset(env, gen, 33, "deadbeef");
  Dataset d2 = generate_dataset(env, gen, 33, "deadbeef");
  const std::string p1 = tmp_path("ig_ds1.igds");
  const std::string p2 = tmp_path("ig_ds2.igds");
  save_dataset(d1, p1);
  save_dataset(d2, p2);
  CHECK(read_bytes(p1) == read_bytes(p2));

  // save -> load -> save is byte identical
  Dataset back = load_dataset(p1);
  const std::string p3 = tmp_path("ig_ds3.igds");
  save_dataset(back, p3);
  CHECK(read_bytes(p1) == read_bytes(p3));

  CHECK(back.meta.env.extent == env.extent);
  CHECK(back.meta.gen.policy == PolicyKind::eps_expert);
  CHECK(back.meta.seed == 33);
  CHECK(back.meta.config_hash == "deadbeef");
  CHECK(back.records.size() == d1.records.size());
  CHECK(back.records[5].obs_t == d1.records[5].obs_t);
  CHECK(back.records[5].relevance == d1.records[5].relevance);
  CHECK(back.meta.channel_mean == d1.meta.channel_mean);

  // different seed, different bytes
  Dataset d3 = generate_dataset(env, gen, 34, "deadbeef");
  const std::string p4 = tmp_path("ig_ds4.igds");
  save_dataset(d3, p4);
  CHECK(read_bytes(p1) != read_bytes(p4));

  std::remove(p1.c_str());
  std::remove(p2.c_str());
  std::remove(p3.c_str());
  std::remove(p4.c_str());
}

TEST_CASE("load_dataset rejects corrupted files with distinct errors") {
  EnvConfig env;
  env.episode_len = 8;
  GenConfig gen;
  gen.episodes = 1;
  gen.k_max = 2;
  Dataset ds = generate_dataset(env, gen, 1);
  const std::string path = tmp_path("ig_corrupt.igds");
  save_dataset(ds, path);
  const std::string good = read_bytes(path);

  SUBCASE("bad magic") {
    std::string bad = good;
    bad[0] = 'X';
    write_bytes(path, bad);
    CHECK(contains(thrown_message([&] { load_dataset(path); }), "bad magic"));
  }
  SUBCASE("version mismatch") {
    std::string bad = good;
    bad[4] = 9;
    write_bytes(path, bad);
    CHECK(contains(thrown_message([&] { load_dataset(path); }), "version"));
  }
  SUBCASE("corrupt metadata") {
    std::string bad = good;
    bad[12] = 'X';  // first byte of the JSON blob
    write_bytes(path, bad);
    CHECK(contains(thrown_message([&] { load_dataset(path); }), "metadata"));
  }
  SUBCASE("truncated payload") {
    write_bytes(path, good.substr(0, good.size() - 10));
    CHECK(contains(thrown_message([&] { load_dataset(path); }), "size mismatch"));
  }
  SUBCASE("missing file") {
    CHECK_THROWS(load_dataset(tmp_path("ig_nonexistent.igds")));
  }
  std::remove(path.c_str());
}

TEST_CASE("augment_crop: centre offset is the identity, corner offset shifts") {
  const int C = 2, H = 8, W = 8, pad = 4;
  std::vector<float> in(C * H * W);
  for (long i = 0; i < static_cast<long>(in.size()); ++i) in[i] = static_cast<float>(i) * 0.01f;
  std::vector<float> out(in.size());

  SUBCASE("pad 0 copies") {
    Rng rng(1);
    augment_crop(in.data(), C, H, W, 0, rng, out.data());
    CHECK(out == in);
  }
  SUBCASE("offset (pad,pad) is the identity") {
    Rng rng(seed_with_offsets(pad, pad));
    augment_crop(in.data(), C, H, W, pad, rng, out.data());
    CHECK(out == in);
  }
  SUBCASE("offset (0,0) shifts content by (+pad,+pad) with zero fill") {
    Rng rng(seed_with_offsets(pad, 0));
    augment_crop(in.data(), C, H, W, pad, rng, out.data());
    for (int c = 0; c < C; ++c)
      for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
          const float got = out[(static_cast<long>(c) * H + y) * W + x];
          if (y < pad || x < pad)
            CHECK(got == 0.0f);
          else
            CHECK(got == in[(static_cast<long>(c) * H + y - pad) * W + x - pad]);
        }
  }
  SUBCASE("same rng stream, same crop") {
    Rng r1(77), r2(77);
    std::vector<float> o2(in.size());
    augment_crop(in.data(), C, H, W, pad, r1, out.data());
    augment_crop(in.data(), C, H, W, pad, r2, o2.data());
    CHECK(out == o2);
  }
}

TEST_CASE("name round-trips and rejects") {
  for (auto lvl : {DistractorLevel::none, DistractorLevel::easy, DistractorLevel::medium,
                   DistractorLevel::hard})
    CHECK(level_from_name(level_name(lvl)) == lvl);
  CHECK_THROWS_AS(level_from_name("extreme"), std::invalid_argument);
  for (auto p : {PolicyKind::random, PolicyKind::eps_expert})
    CHECK(policy_from_name(policy_name(p)) == p);
  CHECK_THROWS_AS(policy_from_name("greedy"), std::invalid_argument);
}
