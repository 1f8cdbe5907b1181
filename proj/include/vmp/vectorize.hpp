#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "vmp/geometry.hpp"
#include "vmp/scene.hpp"

namespace vmp {

enum class PolylineKind { kLane = 0, kCrosswalk = 1, kTargetAgent = 2, kOtherAgent = 3 };
inline constexpr std::size_t kNumPolylineKinds = 4;

// Per-node feature slots: [0] timestamp (s, past end = 0), [1,2] velocity,
// [3,4] acceleration, [5] yaw for agents; [6] maxspeed, [7] priority,
// [8] availability for lanes; crosswalks carry all zeros.
inline constexpr std::size_t kFeatureDim = 9;

struct VectorNode {
  Vec2 p_start;
  Vec2 p_end;
  std::array<double, kFeatureDim> f{};
};

struct PolylineSubgraph {
  PolylineKind kind = PolylineKind::kLane;
  std::vector<VectorNode> nodes;

  std::array<double, kNumPolylineKinds> kind_onehot() const {
    std::array<double, kNumPolylineKinds> oh{};
    oh[static_cast<std::size_t>(kind)] = 1.0;
    return oh;
  }
};

// Rigid transform from world to agent frame. 'origin'/'yaw' are the target's
// last observed world pose; to_agent maps world points into the frame where
// that pose is the origin headed along +x.
struct Frame {
  Vec2 origin;
  double yaw = 0.0;

  Vec2 to_agent(const Vec2& world) const { return rotate(world - origin, -yaw); }
  Vec2 to_world(const Vec2& agent) const { return rotate(agent, yaw) + origin; }
};

struct VectorizedScene {
  std::string scene_id;
  std::vector<PolylineSubgraph> subgraphs;
  std::size_t target_index = 0;
  Frame frame;
};

// Rotates/translates the whole scene so the target's last observed position
// is the origin and its last yaw is zero. Returns the frame that maps
// agent-frame points back to world coordinates.
std::pair<Scene, Frame> agent_frame_transform(const Scene& scene);

// Clips geometry to the closed box [-half_size, half_size]^2. Lane and
// crosswalk chains exiting and re-entering are split into separate pieces;
// track states outside the box are dropped. Clipped crosswalk pieces may be
// open chains.
Scene bbox_filter(const Scene& scene, double half_size = 60.0);

// Redistributes points at equal arclength spacing L/ceil(L/d) <= d, keeping
// the exact first and last input points.
std::vector<Vec2> resample_polyline(const std::vector<Vec2>& points, double d = 2.0);

std::array<double, kFeatureDim> pack_lane_features(double maxspeed, int priority, bool available);
std::array<double, kFeatureDim> pack_crosswalk_features();
std::array<double, kFeatureDim> pack_agent_features(double timestamp, const Vec2& velocity,
                                                    const Vec2& acceleration, double yaw);

// Line-graph inversion: node i spans points[i] -> points[i+1] and carries the
// feature row for its slot; per_node_features must hold points.size()-1 rows.
PolylineSubgraph invert_polyline(const std::vector<Vec2>& points, PolylineKind kind,
                                 const std::vector<std::array<double, kFeatureDim>>& per_node_features);

// Full pipeline: transform -> clip -> resample (lanes/crosswalks) ->
// invert -> pack. Agent tracks are used as-is (no resampling).
VectorizedScene vectorize_scene(const Scene& scene);

}  // namespace vmp
