#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vmp/geometry.hpp"

namespace vmp {

// 5 Hz sampling: 25 steps cover 5 seconds.
inline constexpr double kDt = 0.2;
inline constexpr int kDefaultPastLen = 25;
inline constexpr int kDefaultFutureLen = 25;

struct AgentState {
  int t = 0;  // step index within the past horizon, latest = past_len - 1
  Vec2 position;
  Vec2 velocity;
  Vec2 acceleration;
  double yaw = 0.0;  // (-pi, pi]
};

struct AgentTrack {
  int agent_id = 0;
  bool is_target = false;
  std::vector<AgentState> states;  // sorted by t, strictly increasing
};

struct Lane {
  std::vector<Vec2> points;  // >= 2, consecutive points distinct
  double maxspeed = 0.0;     // m/s
  int priority = 0;
  bool available = true;  // traffic light state at the latest timestamp
};

struct Crosswalk {
  std::vector<Vec2> points;  // ring, >= 3 points, non-self-intersecting
};

struct Scene {
  std::string scene_id;
  int past_len = kDefaultPastLen;
  int future_len = kDefaultFutureLen;
  std::vector<AgentTrack> tracks;  // exactly one is_target
  std::vector<Lane> lanes;
  std::vector<Crosswalk> crosswalks;
  std::optional<std::vector<Vec2>> future;  // target ground truth, future_len rows
};

// Throws SchemaError naming the scene and field on any invariant violation.
void validate_scene(const Scene& scene);

const AgentTrack& target_track(const Scene& scene);

std::vector<Scene> load_scenes(const std::string& path);
void save_scenes(const std::vector<Scene>& scenes, const std::string& path);

struct ShiftConfig {
  std::uint64_t seed = 0;
  int n_scenes = 1;
  // 0 reproduces the in-distribution generator exactly; larger values scale
  // the speed, curvature, and observation-noise distributions.
  double shift_level = 0.0;
};

void validate_shift_config(const ShiftConfig& cfg);

std::vector<Scene> generate_synthetic(const ShiftConfig& cfg);

}  // namespace vmp
