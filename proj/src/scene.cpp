#include "vmp/scene.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "vmp/error.hpp"

namespace vmp {

namespace {

using json = nlohmann::ordered_json;

[[noreturn]] void schema_fail(const std::string& scene_id, const std::string& path, const std::string& what) {
  std::ostringstream msg;
  msg << "scene";
  if (!scene_id.empty()) msg << " '" << scene_id << "'";
  msg << ": " << path << ": " << what;
  throw SchemaError(msg.str());
}

void check_finite(double v, const std::string& scene_id, const std::string& path) {
  if (!std::isfinite(v)) schema_fail(scene_id, path, "non-finite value");
}

// Proper intersection of segments ab and cd (shared endpoints excluded).
bool segments_cross(const Vec2& a, const Vec2& b, const Vec2& c, const Vec2& d) {
  auto orient = [](const Vec2& p, const Vec2& q, const Vec2& r) {
    const double v = (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x);
    if (v > 1e-12) return 1;
    if (v < -1e-12) return -1;
    return 0;
  };
  const int o1 = orient(a, b, c);
  const int o2 = orient(a, b, d);
  const int o3 = orient(c, d, a);
  const int o4 = orient(c, d, b);
  return o1 != o2 && o3 != o4 && o1 != 0 && o2 != 0 && o3 != 0 && o4 != 0;
}

}  // namespace

const AgentTrack& target_track(const Scene& scene) {
  const AgentTrack* found = nullptr;
  for (const auto& tr : scene.tracks) {
    if (tr.is_target) {
      if (found) throw SchemaError("scene '" + scene.scene_id + "': tracks: multiple targets");
      found = &tr;
    }
  }
  if (!found) throw SchemaError("scene '" + scene.scene_id + "': tracks: no target");
  return *found;
}

void validate_scene(const Scene& scene) {
  const std::string& id = scene.scene_id;
  if (scene.past_len < 1) schema_fail(id, "past_len", "must be >= 1");
  if (scene.future_len < 1) schema_fail(id, "future_len", "must be >= 1");

  int targets = 0;
  for (std::size_t i = 0; i < scene.tracks.size(); ++i) {
    const auto& tr = scene.tracks[i];
    const std::string base = "tracks[" + std::to_string(i) + "]";
    if (tr.is_target) ++targets;
    if (tr.states.empty()) schema_fail(id, base + ".states", "empty track");
    if (tr.states.size() > static_cast<std::size_t>(scene.past_len))
      schema_fail(id, base + ".states", "longer than past horizon");
    int prev_t = -1;
    for (std::size_t s = 0; s < tr.states.size(); ++s) {
      const auto& st = tr.states[s];
      const std::string sp = base + ".states[" + std::to_string(s) + "]";
      if (st.t <= prev_t) schema_fail(id, sp + ".t", "step indices must be strictly increasing");
      if (st.t < 0 || st.t >= scene.past_len) schema_fail(id, sp + ".t", "step index outside past horizon");
      prev_t = st.t;
      check_finite(st.position.x, id, sp + ".x");
      check_finite(st.position.y, id, sp + ".y");
      check_finite(st.velocity.x, id, sp + ".vx");
      check_finite(st.velocity.y, id, sp + ".vy");
      check_finite(st.acceleration.x, id, sp + ".ax");
      check_finite(st.acceleration.y, id, sp + ".ay");
      check_finite(st.yaw, id, sp + ".yaw");
      if (!(st.yaw > -M_PI && st.yaw <= M_PI)) schema_fail(id, sp + ".yaw", "outside (-pi, pi]");
    }
  }
  if (targets != 1)
    schema_fail(id, "tracks", targets == 0 ? "no track has is_target" : "multiple tracks have is_target");

  for (std::size_t i = 0; i < scene.lanes.size(); ++i) {
    const auto& lane = scene.lanes[i];
    const std::string base = "lanes[" + std::to_string(i) + "]";
    if (lane.points.size() < 2) schema_fail(id, base + ".points", "fewer than 2 points");
    for (std::size_t p = 0; p < lane.points.size(); ++p) {
      check_finite(lane.points[p].x, id, base + ".points[" + std::to_string(p) + "][0]");
      check_finite(lane.points[p].y, id, base + ".points[" + std::to_string(p) + "][1]");
      if (p > 0 && distance(lane.points[p - 1], lane.points[p]) <= 1e-9)
        schema_fail(id, base + ".points[" + std::to_string(p) + "]", "coincident with previous point");
    }
    check_finite(lane.maxspeed, id, base + ".maxspeed");
  }

  for (std::size_t i = 0; i < scene.crosswalks.size(); ++i) {
    const auto& cw = scene.crosswalks[i];
    const std::string base = "crosswalks[" + std::to_string(i) + "]";
    const std::size_t n = cw.points.size();
    if (n < 3) schema_fail(id, base + ".points", "fewer than 3 points");
    for (std::size_t p = 0; p < n; ++p) {
      check_finite(cw.points[p].x, id, base + ".points[" + std::to_string(p) + "][0]");
      check_finite(cw.points[p].y, id, base + ".points[" + std::to_string(p) + "][1]");
    }
    for (std::size_t a = 0; a < n; ++a) {
      for (std::size_t b = a + 1; b < n; ++b) {
        // Skip segments that share a ring vertex.
        if (b == a + 1 || (a == 0 && b == n - 1)) continue;
        if (segments_cross(cw.points[a], cw.points[(a + 1) % n], cw.points[b], cw.points[(b + 1) % n]))
          schema_fail(id, base + ".points", "self-intersecting ring");
      }
    }
  }

  if (scene.future.has_value()) {
    if (scene.future->size() != static_cast<std::size_t>(scene.future_len))
      schema_fail(id, "future", "expected exactly " + std::to_string(scene.future_len) + " rows");
    for (std::size_t p = 0; p < scene.future->size(); ++p) {
      check_finite((*scene.future)[p].x, id, "future[" + std::to_string(p) + "][0]");
      check_finite((*scene.future)[p].y, id, "future[" + std::to_string(p) + "][1]");
    }
  }
}

namespace {

double get_num(const json& obj, const char* key, const std::string& id, const std::string& path) {
  if (!obj.contains(key)) schema_fail(id, path + "." + key, "missing field");
  const auto& v = obj[key];
  if (!v.is_number()) schema_fail(id, path + "." + key, "expected a number");
  return v.get<double>();
}

int get_int(const json& obj, const char* key, const std::string& id, const std::string& path) {
  if (!obj.contains(key)) schema_fail(id, path + "." + key, "missing field");
  const auto& v = obj[key];
  if (!v.is_number_integer()) schema_fail(id, path + "." + key, "expected an integer");
  return v.get<int>();
}

bool get_bool(const json& obj, const char* key, const std::string& id, const std::string& path) {
  if (!obj.contains(key)) schema_fail(id, path + "." + key, "missing field");
  const auto& v = obj[key];
  if (!v.is_boolean()) schema_fail(id, path + "." + key, "expected a boolean");
  return v.get<bool>();
}

std::vector<Vec2> get_points(const json& arr, const std::string& id, const std::string& path) {
  if (!arr.is_array()) schema_fail(id, path, "expected an array of [x, y] pairs");
  std::vector<Vec2> out;
  out.reserve(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    const auto& p = arr[i];
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
      schema_fail(id, path + "[" + std::to_string(i) + "]", "expected [x, y]");
    out.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return out;
}

Scene scene_from_json(const json& js, std::size_t index) {
  Scene scene;
  const std::string path = "scenes[" + std::to_string(index) + "]";
  if (!js.is_object()) schema_fail("", path, "expected an object");
  if (!js.contains("scene_id") || !js["scene_id"].is_string())
    schema_fail("", path + ".scene_id", "missing or non-string");
  scene.scene_id = js["scene_id"].get<std::string>();
  const std::string& id = scene.scene_id;
  scene.past_len = get_int(js, "past_len", id, path);
  scene.future_len = get_int(js, "future_len", id, path);

  if (!js.contains("tracks") || !js["tracks"].is_array()) schema_fail(id, path + ".tracks", "missing array");
  for (std::size_t i = 0; i < js["tracks"].size(); ++i) {
    const auto& tj = js["tracks"][i];
    const std::string tp = path + ".tracks[" + std::to_string(i) + "]";
    AgentTrack tr;
    tr.agent_id = get_int(tj, "agent_id", id, tp);
    tr.is_target = get_bool(tj, "is_target", id, tp);
    if (!tj.contains("states") || !tj["states"].is_array()) schema_fail(id, tp + ".states", "missing array");
    for (std::size_t s = 0; s < tj["states"].size(); ++s) {
      const auto& sj = tj["states"][s];
      const std::string sp = tp + ".states[" + std::to_string(s) + "]";
      AgentState st;
      st.t = get_int(sj, "t", id, sp);
      st.position = {get_num(sj, "x", id, sp), get_num(sj, "y", id, sp)};
      st.velocity = {get_num(sj, "vx", id, sp), get_num(sj, "vy", id, sp)};
      st.acceleration = {get_num(sj, "ax", id, sp), get_num(sj, "ay", id, sp)};
      st.yaw = get_num(sj, "yaw", id, sp);
      tr.states.push_back(st);
    }
    scene.tracks.push_back(std::move(tr));
  }

  if (!js.contains("lanes") || !js["lanes"].is_array()) schema_fail(id, path + ".lanes", "missing array");
  for (std::size_t i = 0; i < js["lanes"].size(); ++i) {
    const auto& lj = js["lanes"][i];
    const std::string lp = path + ".lanes[" + std::to_string(i) + "]";
    Lane lane;
    if (!lj.contains("points")) schema_fail(id, lp + ".points", "missing field");
    lane.points = get_points(lj["points"], id, lp + ".points");
    lane.maxspeed = get_num(lj, "maxspeed", id, lp);
    lane.priority = get_int(lj, "priority", id, lp);
    lane.available = get_bool(lj, "available", id, lp);
    scene.lanes.push_back(std::move(lane));
  }

  if (!js.contains("crosswalks") || !js["crosswalks"].is_array())
    schema_fail(id, path + ".crosswalks", "missing array");
  for (std::size_t i = 0; i < js["crosswalks"].size(); ++i) {
    const auto& cj = js["crosswalks"][i];
    const std::string cp = path + ".crosswalks[" + std::to_string(i) + "]";
    Crosswalk cw;
    if (!cj.contains("points")) schema_fail(id, cp + ".points", "missing field");
    cw.points = get_points(cj["points"], id, cp + ".points");
    scene.crosswalks.push_back(std::move(cw));
  }

  if (js.contains("future")) scene.future = get_points(js["future"], id, path + ".future");
  validate_scene(scene);
  return scene;
}

json scene_to_json(const Scene& scene) {
  json js;
  js["scene_id"] = scene.scene_id;
  js["past_len"] = scene.past_len;
  js["future_len"] = scene.future_len;
  js["tracks"] = json::array();
  for (const auto& tr : scene.tracks) {
    json tj;
    tj["agent_id"] = tr.agent_id;
    tj["is_target"] = tr.is_target;
    tj["states"] = json::array();
    for (const auto& st : tr.states) {
      json sj;
      sj["t"] = st.t;
      sj["x"] = st.position.x;
      sj["y"] = st.position.y;
      sj["vx"] = st.velocity.x;
      sj["vy"] = st.velocity.y;
      sj["ax"] = st.acceleration.x;
      sj["ay"] = st.acceleration.y;
      sj["yaw"] = st.yaw;
      tj["states"].push_back(std::move(sj));
    }
    js["tracks"].push_back(std::move(tj));
  }
  js["lanes"] = json::array();
  for (const auto& lane : scene.lanes) {
    json lj;
    lj["points"] = json::array();
    for (const auto& p : lane.points) lj["points"].push_back(json::array({p.x, p.y}));
    lj["maxspeed"] = lane.maxspeed;
    lj["priority"] = lane.priority;
    lj["available"] = lane.available;
    js["lanes"].push_back(std::move(lj));
  }
  js["crosswalks"] = json::array();
  for (const auto& cw : scene.crosswalks) {
    json cj;
    cj["points"] = json::array();
    for (const auto& p : cw.points) cj["points"].push_back(json::array({p.x, p.y}));
    js["crosswalks"].push_back(std::move(cj));
  }
  if (scene.future.has_value()) {
    js["future"] = json::array();
    for (const auto& p : *scene.future) js["future"].push_back(json::array({p.x, p.y}));
  }
  return js;
}

}  // namespace

std::vector<Scene> load_scenes(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_scenes: cannot open " + path);
  json root;
  try {
    root = json::parse(in);
  } catch (const json::parse_error& e) {
    throw SchemaError(std::string("load_scenes: parse error in ") + path + ": " + e.what());
  }
  if (!root.is_object() || !root.contains("scenes") || !root["scenes"].is_array())
    throw SchemaError("load_scenes: " + path + ": top-level object with 'scenes' array required");
  std::vector<Scene> out;
  out.reserve(root["scenes"].size());
  for (std::size_t i = 0; i < root["scenes"].size(); ++i) out.push_back(scene_from_json(root["scenes"][i], i));
  return out;
}

void save_scenes(const std::vector<Scene>& scenes, const std::string& path) {
  json root;
  root["scenes"] = json::array();
  for (const auto& scene : scenes) {
    validate_scene(scene);
    root["scenes"].push_back(scene_to_json(scene));
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("save_scenes: cannot open for write: " + path);
  out << root.dump(1) << '\n';
  if (!out) throw IoError("save_scenes: write failed: " + path);
}

void validate_shift_config(const ShiftConfig& cfg) {
  if (cfg.n_scenes < 1) throw ValueError("shift config: n_scenes must be >= 1");
  if (!(cfg.shift_level >= 0.0 && cfg.shift_level <= 1.0))
    throw ValueError("shift config: shift_level must be in [0, 1]");
}

}  // namespace vmp
