#include <algorithm>
#include <cmath>

#include "vmp/error.hpp"
#include "vmp/rng.hpp"
#include "vmp/scene.hpp"

namespace vmp {

namespace {

enum class Maneuver { kStationary, kStraight, kLeft, kRight };

// Constant-curvature path through p0 with heading psi0, parameterized by
// arc length. kappa = 0 degenerates to a straight line.
struct PathGeom {
  Vec2 p0;
  double psi0 = 0.0;
  double kappa = 0.0;

  double heading(double s) const { return psi0 + kappa * s; }

  Vec2 pos(double s) const {
    if (std::abs(kappa) < 1e-9) return p0 + Vec2{std::cos(psi0), std::sin(psi0)} * s;
    const double radius = 1.0 / kappa;
    const Vec2 center = p0 + normal(psi0) * radius;
    return center - normal(heading(s)) * radius;
  }

  static Vec2 normal(double psi) { return {-std::sin(psi), std::cos(psi)}; }
};

struct TargetMotion {
  PathGeom path;
  double speed = 0.0;
};

Maneuver draw_maneuver(std::mt19937_64& rng) {
  const double u = uniform01(rng);
  if (u < 0.15) return Maneuver::kStationary;
  if (u < 0.55) return Maneuver::kStraight;
  if (u < 0.775) return Maneuver::kLeft;
  return Maneuver::kRight;
}

double draw_speed(std::mt19937_64& rng, Maneuver m, double speed_scale) {
  if (m == Maneuver::kStationary) return 0.0;
  return std::clamp(normal(rng, 8.0, 2.5), 2.0, 15.0) * speed_scale;
}

double draw_curvature(std::mt19937_64& rng, Maneuver m, double curvature_scale, double speed) {
  if (m != Maneuver::kLeft && m != Maneuver::kRight) return 0.0;
  double kappa = uniform_real(rng, 0.025, 0.065) * curvature_scale;
  // Keep centripetal acceleration v^2 * kappa under 6 m/s^2.
  if (speed > 0.5) kappa = std::min(kappa, 6.0 / (speed * speed));
  return m == Maneuver::kLeft ? kappa : -kappa;
}

Vec2 clamped_noise(std::mt19937_64& rng, double sigma) {
  const double cap = std::min(3.0 * sigma, 0.1);
  return {std::clamp(normal(rng, 0.0, sigma), -cap, cap), std::clamp(normal(rng, 0.0, sigma), -cap, cap)};
}

AgentTrack make_track(std::mt19937_64& rng, int agent_id, bool is_target, const TargetMotion& motion,
                      int n_states, int past_len, double noise_sigma) {
  AgentTrack track;
  track.agent_id = agent_id;
  track.is_target = is_target;
  const int last_step = past_len - 1;
  for (int t = past_len - n_states; t < past_len; ++t) {
    const double tau = static_cast<double>(t - last_step) * kDt;
    const double s = motion.speed * tau;
    const double psi = motion.path.heading(s);
    AgentState st;
    st.t = t;
    st.position = motion.path.pos(s) + clamped_noise(rng, noise_sigma);
    st.velocity = Vec2{std::cos(psi), std::sin(psi)} * motion.speed;
    st.acceleration = PathGeom::normal(psi) * (motion.speed * motion.speed * motion.path.kappa);
    st.yaw = wrap_angle(psi);
    track.states.push_back(st);
  }
  return track;
}

std::vector<Vec2> lane_points(const PathGeom& path, double s_begin, double s_end, double spacing,
                              double lateral_offset) {
  std::vector<Vec2> pts;
  for (double s = s_begin; s <= s_end + 1e-9; s += spacing) {
    const Vec2 base = path.pos(s);
    pts.push_back(base + PathGeom::normal(path.heading(s)) * lateral_offset);
  }
  return pts;
}

Lane make_lane(std::mt19937_64& rng, std::vector<Vec2> pts, double speed_scale) {
  Lane lane;
  lane.points = std::move(pts);
  lane.maxspeed = std::clamp(normal(rng, 12.0, 3.0), 3.0, 25.0) * speed_scale;
  lane.priority = static_cast<int>(uniform_index(rng, 3));
  lane.available = bernoulli(rng, 0.85);
  return lane;
}

Scene generate_scene(std::uint64_t seed, int index, double shift) {
  std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(index)));
  const double speed_scale = 1.0 + shift;
  const double curvature_scale = 1.0 + shift;
  const double noise_sigma = 0.05 * (1.0 + 2.0 * shift);

  Scene scene;
  scene.scene_id = "g" + std::to_string(seed) + "_" + std::to_string(index);
  scene.past_len = kDefaultPastLen;
  scene.future_len = kDefaultFutureLen;

  const Maneuver maneuver = draw_maneuver(rng);
  TargetMotion target;
  target.path.p0 = {uniform_real(rng, -20.0, 20.0), uniform_real(rng, -20.0, 20.0)};
  target.path.psi0 = uniform_real(rng, -M_PI, M_PI);
  target.speed = draw_speed(rng, maneuver, speed_scale);
  target.path.kappa = draw_curvature(rng, maneuver, curvature_scale, target.speed);

  scene.tracks.push_back(make_track(rng, 0, true, target, scene.past_len, scene.past_len, noise_sigma));

  std::vector<Vec2> future;
  for (int t = 1; t <= scene.future_len; ++t)
    future.push_back(target.path.pos(target.speed * static_cast<double>(t) * kDt));
  scene.future = std::move(future);

  // Lane layout around the target's path; a few parallels, a crossing
  // street, and random filler lanes.
  const int n_lanes = 3 + static_cast<int>(uniform_index(rng, 6));
  const double spacing = 4.0;
  std::vector<std::vector<Vec2>> layouts;
  layouts.push_back(lane_points(target.path, -50.0, 60.0, spacing, 0.0));
  layouts.push_back(lane_points(target.path, -50.0, 60.0, spacing, 3.5));
  layouts.push_back(lane_points(target.path, -50.0, 60.0, spacing, -3.5));
  {
    PathGeom cross;
    cross.p0 = target.path.pos(15.0);
    cross.psi0 = wrap_angle(target.path.heading(15.0) + M_PI / 2.0);
    layouts.push_back(lane_points(cross, -35.0, 35.0, spacing, 0.0));
  }
  layouts.push_back(lane_points(target.path, -50.0, 60.0, spacing, 7.0));
  layouts.push_back(lane_points(target.path, -50.0, 60.0, spacing, -7.0));
  while (static_cast<int>(layouts.size()) < n_lanes) {
    PathGeom extra;
    extra.p0 = target.path.p0 + Vec2{uniform_real(rng, -45.0, 45.0), uniform_real(rng, -45.0, 45.0)};
    extra.psi0 = uniform_real(rng, -M_PI, M_PI);
    const double half = uniform_real(rng, 15.0, 35.0);
    layouts.push_back(lane_points(extra, -half, half, spacing, 0.0));
  }
  for (int i = 0; i < n_lanes; ++i) scene.lanes.push_back(make_lane(rng, std::move(layouts[i]), speed_scale));

  const int n_others = static_cast<int>(uniform_index(rng, 4));
  for (int a = 0; a < n_others; ++a) {
    const Maneuver om = draw_maneuver(rng);
    TargetMotion other;
    double dx = uniform_real(rng, -45.0, 45.0);
    double dy = uniform_real(rng, -45.0, 45.0);
    if (std::hypot(dx, dy) < 5.0) dx += dx >= 0.0 ? 8.0 : -8.0;
    other.path.p0 = target.path.p0 + Vec2{dx, dy};
    other.path.psi0 = uniform_real(rng, -M_PI, M_PI);
    other.speed = draw_speed(rng, om, speed_scale);
    other.path.kappa = draw_curvature(rng, om, curvature_scale, other.speed);
    const int n_states = bernoulli(rng, 0.7) ? scene.past_len : 8 + static_cast<int>(uniform_index(rng, 17));
    scene.tracks.push_back(make_track(rng, a + 1, false, other, n_states, scene.past_len, noise_sigma));
  }

  const int n_crosswalks = [&] {
    const double u = uniform01(rng);
    if (u < 0.30) return 0;
    if (u < 0.75) return 1;
    return 2;
  }();
  for (int c = 0; c < n_crosswalks; ++c) {
    const Vec2 center = target.path.pos(uniform_real(rng, 5.0, 25.0)) +
                        Vec2{uniform_real(rng, -5.0, 5.0), uniform_real(rng, -5.0, 5.0)};
    const double hw = uniform_real(rng, 1.5, 3.0);
    const double hh = uniform_real(rng, 1.0, 2.0);
    Crosswalk cw;
    cw.points = {{center.x - hw, center.y - hh},
                 {center.x + hw, center.y - hh},
                 {center.x + hw, center.y + hh},
                 {center.x - hw, center.y + hh}};
    scene.crosswalks.push_back(std::move(cw));
  }

  validate_scene(scene);
  return scene;
}

}  // namespace

std::vector<Scene> generate_synthetic(const ShiftConfig& cfg) {
  validate_shift_config(cfg);
  std::vector<Scene> scenes;
  scenes.reserve(cfg.n_scenes);
  for (int i = 0; i < cfg.n_scenes; ++i) scenes.push_back(generate_scene(cfg.seed, i, cfg.shift_level));
  return scenes;
}

}  // namespace vmp
