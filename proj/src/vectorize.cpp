#include "vmp/vectorize.hpp"

#include <algorithm>
#include <cmath>

#include "vmp/error.hpp"

namespace vmp {

namespace {

constexpr double kCoincidentEps = 1e-9;

bool inside_box(const Vec2& p, double half) {
  return p.x >= -half && p.x <= half && p.y >= -half && p.y <= half;
}

// Liang-Barsky parametric clip of segment p->q against the closed box.
// Returns false when the segment misses the box entirely.
bool clip_segment(const Vec2& p, const Vec2& q, double half, double& t0, double& t1) {
  t0 = 0.0;
  t1 = 1.0;
  const double dx = q.x - p.x;
  const double dy = q.y - p.y;
  const double checks[4][2] = {{-dx, p.x + half}, {dx, half - p.x}, {-dy, p.y + half}, {dy, half - p.y}};
  for (const auto& [den, num] : checks) {
    if (std::abs(den) < 1e-15) {
      if (num < 0.0) return false;
      continue;
    }
    const double t = num / den;
    if (den < 0.0) {
      if (t > t1) return false;
      t0 = std::max(t0, t);
    } else {
      if (t < t0) return false;
      t1 = std::min(t1, t);
    }
  }
  return t0 <= t1;
}

Vec2 lerp(const Vec2& p, const Vec2& q, double t) { return {p.x + (q.x - p.x) * t, p.y + (q.y - p.y) * t}; }

void append_point(std::vector<Vec2>& piece, const Vec2& p) {
  if (!piece.empty() && distance(piece.back(), p) <= kCoincidentEps) return;
  piece.push_back(p);
}

std::vector<std::vector<Vec2>> clip_polyline(const std::vector<Vec2>& points, double half) {
  std::vector<std::vector<Vec2>> pieces;
  std::vector<Vec2> cur;
  auto close = [&] {
    if (cur.size() >= 2) pieces.push_back(std::move(cur));
    cur.clear();
  };
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    double t0 = 0.0;
    double t1 = 1.0;
    if (!clip_segment(points[i], points[i + 1], half, t0, t1)) {
      close();
      continue;
    }
    const Vec2 a = lerp(points[i], points[i + 1], t0);
    const Vec2 b = lerp(points[i], points[i + 1], t1);
    if (t0 > 0.0) close();
    append_point(cur, a);
    append_point(cur, b);
    if (t1 < 1.0) close();
  }
  close();
  return pieces;
}

Vec2 transform_point(const Frame& frame, const Vec2& world) { return frame.to_agent(world); }

std::array<double, kFeatureDim> check_features(std::array<double, kFeatureDim> f) {
  for (double v : f)
    if (!std::isfinite(v)) throw NumericError("pack_features: non-finite attribute");
  return f;
}

std::vector<Vec2> closed_ring(const std::vector<Vec2>& points) {
  std::vector<Vec2> ring = points;
  if (!ring.empty() && distance(ring.front(), ring.back()) > kCoincidentEps) ring.push_back(ring.front());
  return ring;
}

// Track states carry everything a node's feature row needs.
std::vector<std::array<double, kFeatureDim>> track_node_features(const AgentTrack& track, int past_len) {
  std::vector<std::array<double, kFeatureDim>> rows;
  for (std::size_t i = 1; i < track.states.size(); ++i) {
    const AgentState& end = track.states[i];
    const double timestamp = static_cast<double>(end.t - (past_len - 1)) * kDt;
    rows.push_back(pack_agent_features(timestamp, end.velocity, end.acceleration, end.yaw));
  }
  return rows;
}

}  // namespace

std::pair<Scene, Frame> agent_frame_transform(const Scene& scene) {
  const AgentTrack& target = target_track(scene);
  if (target.states.empty()) throw ValueError("agent_frame_transform: target has no observed states");
  const AgentState& last = target.states.back();
  Frame frame{last.position, last.yaw};

  Scene out = scene;
  for (auto& track : out.tracks) {
    for (auto& st : track.states) {
      st.position = frame.to_agent(st.position);
      st.velocity = rotate(st.velocity, -frame.yaw);
      st.acceleration = rotate(st.acceleration, -frame.yaw);
      st.yaw = wrap_angle(st.yaw - frame.yaw);
    }
  }
  for (auto& lane : out.lanes)
    for (auto& p : lane.points) p = frame.to_agent(p);
  for (auto& cw : out.crosswalks)
    for (auto& p : cw.points) p = frame.to_agent(p);
  if (out.future.has_value())
    for (auto& p : *out.future) p = frame.to_agent(p);
  return {std::move(out), frame};
}

Scene bbox_filter(const Scene& scene, double half_size) {
  Scene out = scene;
  out.lanes.clear();
  out.crosswalks.clear();
  out.tracks.clear();

  for (const auto& lane : scene.lanes) {
    for (auto& piece : clip_polyline(lane.points, half_size)) {
      Lane clipped = lane;
      clipped.points = std::move(piece);
      out.lanes.push_back(std::move(clipped));
    }
  }
  for (const auto& cw : scene.crosswalks) {
    for (auto& piece : clip_polyline(closed_ring(cw.points), half_size)) {
      Crosswalk clipped;
      clipped.points = std::move(piece);
      out.crosswalks.push_back(std::move(clipped));
    }
  }
  for (const auto& track : scene.tracks) {
    AgentTrack kept = track;
    kept.states.clear();
    for (const auto& st : track.states)
      if (inside_box(st.position, half_size)) kept.states.push_back(st);
    if (!kept.states.empty()) out.tracks.push_back(std::move(kept));
  }
  return out;
}

std::vector<Vec2> resample_polyline(const std::vector<Vec2>& points, double d) {
  if (points.size() < 2) throw ValueError("resample_polyline: need at least 2 points");
  if (!(d > 0.0)) throw ValueError("resample_polyline: spacing must be positive");
  std::vector<double> cumulative(points.size(), 0.0);
  for (std::size_t i = 1; i < points.size(); ++i)
    cumulative[i] = cumulative[i - 1] + distance(points[i - 1], points[i]);
  const double total = cumulative.back();
  if (total <= 1e-9) throw ValueError("resample_polyline: degenerate polyline");

  const std::size_t n = static_cast<std::size_t>(std::ceil(total / d));
  const double step = total / static_cast<double>(n);
  std::vector<Vec2> out;
  out.reserve(n + 1);
  out.push_back(points.front());
  std::size_t seg = 0;
  for (std::size_t i = 1; i < n; ++i) {
    const double s = step * static_cast<double>(i);
    while (seg + 2 < points.size() && cumulative[seg + 1] < s) ++seg;
    const double seg_len = cumulative[seg + 1] - cumulative[seg];
    const double t = seg_len > 0.0 ? (s - cumulative[seg]) / seg_len : 0.0;
    out.push_back(lerp(points[seg], points[seg + 1], t));
  }
  out.push_back(points.back());
  return out;
}

std::array<double, kFeatureDim> pack_lane_features(double maxspeed, int priority, bool available) {
  std::array<double, kFeatureDim> f{};
  f[6] = maxspeed;
  f[7] = static_cast<double>(priority);
  f[8] = available ? 1.0 : 0.0;
  return check_features(f);
}

std::array<double, kFeatureDim> pack_crosswalk_features() { return {}; }

std::array<double, kFeatureDim> pack_agent_features(double timestamp, const Vec2& velocity,
                                                    const Vec2& acceleration, double yaw) {
  std::array<double, kFeatureDim> f{};
  f[0] = timestamp;
  f[1] = velocity.x;
  f[2] = velocity.y;
  f[3] = acceleration.x;
  f[4] = acceleration.y;
  f[5] = yaw;
  return check_features(f);
}

PolylineSubgraph invert_polyline(const std::vector<Vec2>& points, PolylineKind kind,
                                 const std::vector<std::array<double, kFeatureDim>>& per_node_features) {
  if (points.size() < 2) throw ValueError("invert_polyline: need at least 2 points");
  if (per_node_features.size() != points.size() - 1)
    throw ValueError("invert_polyline: need one feature row per segment");
  PolylineSubgraph sg;
  sg.kind = kind;
  sg.nodes.reserve(points.size() - 1);
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    VectorNode node;
    node.p_start = points[i];
    node.p_end = points[i + 1];
    node.f = per_node_features[i];
    sg.nodes.push_back(node);
  }
  return sg;
}

VectorizedScene vectorize_scene(const Scene& scene) {
  auto [transformed, frame] = agent_frame_transform(scene);
  const Scene filtered = bbox_filter(transformed);

  VectorizedScene vs;
  vs.scene_id = scene.scene_id;
  vs.frame = frame;

  for (const auto& lane : filtered.lanes) {
    const auto pts = resample_polyline(lane.points);
    const std::vector<std::array<double, kFeatureDim>> rows(
        pts.size() - 1, pack_lane_features(lane.maxspeed, lane.priority, lane.available));
    vs.subgraphs.push_back(invert_polyline(pts, PolylineKind::kLane, rows));
  }
  for (const auto& cw : filtered.crosswalks) {
    const auto pts = resample_polyline(cw.points);
    const std::vector<std::array<double, kFeatureDim>> rows(pts.size() - 1, pack_crosswalk_features());
    vs.subgraphs.push_back(invert_polyline(pts, PolylineKind::kCrosswalk, rows));
  }

  bool target_seen = false;
  for (const auto& track : filtered.tracks) {
    if (track.states.size() < 2) {
      if (track.is_target)
        throw ValueError("vectorize_scene: target track has fewer than 2 in-box states in scene '" +
                         scene.scene_id + "'");
      continue;  // single-state track cannot form a vector node
    }
    std::vector<Vec2> pts;
    pts.reserve(track.states.size());
    for (const auto& st : track.states) pts.push_back(st.position);
    const auto kind = track.is_target ? PolylineKind::kTargetAgent : PolylineKind::kOtherAgent;
    if (track.is_target) {
      vs.target_index = vs.subgraphs.size();
      target_seen = true;
    }
    vs.subgraphs.push_back(invert_polyline(pts, kind, track_node_features(track, filtered.past_len)));
  }
  if (!target_seen)
    throw ValueError("vectorize_scene: no target subgraph in scene '" + scene.scene_id + "'");
  return vs;
}

}  // namespace vmp
