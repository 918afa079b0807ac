#pragma once

// DistractorDot: a dot-shaped agent walks on a square image toward a fixed
// goal while the background carries task-irrelevant clutter. Coordinates are
// (x, y) with x the column and y the row; the origin is the top-left pixel.

#include <cstdint>
#include <string>
#include <vector>

#include "ig/core/rng.hpp"

namespace ig {

enum class DistractorLevel { none, easy, medium, hard };

std::string level_name(DistractorLevel level);
DistractorLevel level_from_name(const std::string& name);

struct EnvConfig {
  int extent = 32;        // square image side
  int channels = 3;
  int step_px = 2;        // pixels moved per action
  DistractorLevel level = DistractorLevel::medium;
  float amplitude = 0.3f; // distractor texture scale
  int episode_len = 40;   // observations per episode
};

// Action encoding shared by the env, datasets, and every head with an action
// input. "up" decreases y.
enum Action : int { kUp = 0, kDown = 1, kLeft = 2, kRight = 3, kStay = 4 };
constexpr int kNumActions = 5;

struct EnvState {
  int ax = 0, ay = 0;   // agent centre
  int gx = 0, gy = 0;   // goal (fixed at the image centre)
  int dx = 0, dy = 0;   // decoy centre, hard level only
  std::vector<float> texture;  // current background, C*H*W
  int t = 0;
  Rng rng;

  EnvState() : rng(0) {}
};

EnvState env_reset(const EnvConfig& cfg, uint64_t seed);

// Moves the agent, advances the distractors, and returns the reward of the
// resulting state: -Chebyshev(agent, goal) / extent.
float env_step(const EnvConfig& cfg, EnvState& state, int action);

// Writes the C*H*W observation in [0,1]. eval_mode drops every distractor so
// only agent pixels are non-zero.
void render(const EnvConfig& cfg, const EnvState& state, bool eval_mode, float* obs);

// Ground-truth relevance: the 3x3 agent footprint dilated by one pixel,
// clipped to bounds. One byte per pixel, row-major, 0 or 1.
void render_relevance(const EnvConfig& cfg, const EnvState& state, uint8_t* rel);

// Greedy shortest-path policy, horizontal axis first, stay at the goal.
int expert_action(const EnvConfig& cfg, const EnvState& state);

float reward_of(const EnvConfig& cfg, const EnvState& state);

// Recovers the agent centre from a relevance map (valid for extent >= 6).
void decode_agent_center(const uint8_t* rel, int extent, int* ax, int* ay);

}  // namespace ig
