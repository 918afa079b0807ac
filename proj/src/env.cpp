#include "ig/world/env.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "ig/core/shape.hpp"

namespace ig {

namespace {

// Agent/decoy body colour per channel.
constexpr float kDotColor[3] = {1.0f, 0.2f, 0.2f};

int clamp_pos(int v, int extent) { return std::clamp(v, 1, extent - 2); }

void move(int action, int step, int extent, int* x, int* y) {
  switch (action) {
    case kUp: *y = clamp_pos(*y - step, extent); break;
    case kDown: *y = clamp_pos(*y + step, extent); break;
    case kLeft: *x = clamp_pos(*x - step, extent); break;
    case kRight: *x = clamp_pos(*x + step, extent); break;
    case kStay: break;
    default: throw std::invalid_argument("env_step: bad action " + std::to_string(action));
  }
}

void sample_texture(const EnvConfig& cfg, EnvState& st) {
  for (auto& v : st.texture) v = static_cast<float>(st.rng.uniform()) * cfg.amplitude;
}

void draw_dot(const EnvConfig& cfg, int cx, int cy, float* obs) {
  const int H = cfg.extent, W = cfg.extent;
  for (int c = 0; c < cfg.channels; ++c) {
    const float col = kDotColor[c % 3];
    for (int y = cy - 1; y <= cy + 1; ++y) {
      if (y < 0 || y >= H) continue;
      for (int x = cx - 1; x <= cx + 1; ++x) {
        if (x < 0 || x >= W) continue;
        obs[(static_cast<long>(c) * H + y) * W + x] = col;
      }
    }
  }
}

}  // namespace

std::string level_name(DistractorLevel level) {
  switch (level) {
    case DistractorLevel::none: return "none";
    case DistractorLevel::easy: return "easy";
    case DistractorLevel::medium: return "medium";
    case DistractorLevel::hard: return "hard";
  }
  return "medium";
}

DistractorLevel level_from_name(const std::string& name) {
  if (name == "none") return DistractorLevel::none;
  if (name == "easy") return DistractorLevel::easy;
  if (name == "medium") return DistractorLevel::medium;
  if (name == "hard") return DistractorLevel::hard;
  throw std::invalid_argument("unknown distractor level '" + name + "'");
}

EnvState env_reset(const EnvConfig& cfg, uint64_t seed) {
  require(cfg.extent >= 8, "env_reset: extent too small");
  require(cfg.channels >= 1, "env_reset: channels must be >= 1");
  require(cfg.amplitude >= 0.0f && cfg.amplitude <= 1.0f,
          "env_reset: amplitude must be in [0,1]");
  EnvState st;
  st.rng = Rng(seed);
  st.gx = cfg.extent / 2;
  st.gy = cfg.extent / 2;
  st.ax = st.rng.range(1, cfg.extent - 2);
  st.ay = st.rng.range(1, cfg.extent - 2);
  st.dx = st.rng.range(1, cfg.extent - 2);
  st.dy = st.rng.range(1, cfg.extent - 2);
  st.t = 0;
  st.texture.assign(static_cast<size_t>(cfg.channels) * cfg.extent * cfg.extent, 0.0f);
  if (cfg.level != DistractorLevel::none) sample_texture(cfg, st);
  return st;
}

float env_step(const EnvConfig& cfg, EnvState& state, int action) {
  move(action, cfg.step_px, cfg.extent, &state.ax, &state.ay);
  if (cfg.level == DistractorLevel::hard) {
    const int decoy_action = static_cast<int>(state.rng.below(kNumActions));
    move(decoy_action, cfg.step_px, cfg.extent, &state.dx, &state.dy);
  }
  if (cfg.level == DistractorLevel::medium || cfg.level == DistractorLevel::hard)
    sample_texture(cfg, state);
  state.t += 1;
  return reward_of(cfg, state);
}

float reward_of(const EnvConfig& cfg, const EnvState& state) {
  const int d = std::max(std::abs(state.ax - state.gx), std::abs(state.ay - state.gy));
  return -static_cast<float>(d) / static_cast<float>(cfg.extent);
}

void render(const EnvConfig& cfg, const EnvState& state, bool eval_mode, float* obs) {
  const long n = static_cast<long>(cfg.channels) * cfg.extent * cfg.extent;
  if (eval_mode || cfg.level == DistractorLevel::none) {
    std::memset(obs, 0, sizeof(float) * n);
  } else {
    std::memcpy(obs, state.texture.data(), sizeof(float) * n);
  }
  if (!eval_mode && cfg.level == DistractorLevel::hard) draw_dot(cfg, state.dx, state.dy, obs);
  draw_dot(cfg, state.ax, state.ay, obs);
}

void render_relevance(const EnvConfig& cfg, const EnvState& state, uint8_t* rel) {
  const int H = cfg.extent, W = cfg.extent;
  std::memset(rel, 0, static_cast<size_t>(H) * W);
  for (int y = state.ay - 2; y <= state.ay + 2; ++y) {
    if (y < 0 || y >= H) continue;
    for (int x = state.ax - 2; x <= state.ax + 2; ++x) {
      if (x < 0 || x >= W) continue;
      rel[static_cast<long>(y) * W + x] = 1;
    }
  }
}

int expert_action(const EnvConfig& cfg, const EnvState& state) {
  (void)cfg;
  if (state.ax == state.gx && state.ay == state.gy) return kStay;
  if (state.ax != state.gx) return state.gx > state.ax ? kRight : kLeft;
  return state.gy > state.ay ? kDown : kUp;
}

void decode_agent_center(const uint8_t* rel, int extent, int* ax, int* ay) {
  int xlo = extent, xhi = -1, ylo = extent, yhi = -1;
  for (int y = 0; y < extent; ++y)
    for (int x = 0; x < extent; ++x)
      if (rel[static_cast<long>(y) * extent + x]) {
        xlo = std::min(xlo, x);
        xhi = std::max(xhi, x);
        ylo = std::min(ylo, y);
        yhi = std::max(yhi, y);
      }
  require(xhi >= 0, "decode_agent_center: empty relevance map");
  *ax = xlo > 0 ? xlo + 2 : xhi - 2;
  *ay = ylo > 0 ? ylo + 2 : yhi - 2;
}

}  // namespace ig
