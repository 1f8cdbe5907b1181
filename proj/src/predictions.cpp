#include "vmp/predictions.hpp"

#include <fstream>

#include <json.hpp>

#include "vmp/error.hpp"

namespace vmp {

namespace {

using json = nlohmann::ordered_json;

}  // namespace

void write_predictions(const std::vector<PredictionRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("write_predictions: cannot open for write: " + path);
  for (const auto& row : rows) {
    json js;
    js["scene_id"] = row.scene_id;
    js["modes"] = json::array();
    for (std::size_t m = 0; m < row.prediction.trajectories.size(); ++m) {
      json mode;
      mode["w"] = row.prediction.confidences[m];
      mode["traj"] = json::array();
      for (const auto& p : row.prediction.trajectories[m]) mode["traj"].push_back(json::array({p.x, p.y}));
      js["modes"].push_back(std::move(mode));
    }
    if (row.uncertainty.has_value()) js["uncertainty"] = *row.uncertainty;
    out << js.dump() << '\n';
  }
  if (!out) throw IoError("write_predictions: write failed: " + path);
}

std::vector<PredictionRow> read_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("read_predictions: cannot open: " + path);
  std::vector<PredictionRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json js;
    try {
      js = json::parse(line);
    } catch (const json::parse_error& e) {
      throw SchemaError("read_predictions: " + path + " line " + std::to_string(line_no) + ": " + e.what());
    }
    PredictionRow row;
    if (!js.contains("scene_id") || !js["scene_id"].is_string())
      throw SchemaError("read_predictions: line " + std::to_string(line_no) + ": missing scene_id");
    row.scene_id = js["scene_id"].get<std::string>();
    if (!js.contains("modes") || !js["modes"].is_array() || js["modes"].empty())
      throw SchemaError("read_predictions: scene '" + row.scene_id + "': missing modes");
    for (const auto& mode : js["modes"]) {
      if (!mode.contains("w") || !mode["w"].is_number() || !mode.contains("traj") || !mode["traj"].is_array())
        throw SchemaError("read_predictions: scene '" + row.scene_id + "': malformed mode");
      row.prediction.confidences.push_back(mode["w"].get<double>());
      std::vector<Vec2> traj;
      for (const auto& p : mode["traj"]) {
        if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number())
          throw SchemaError("read_predictions: scene '" + row.scene_id + "': malformed trajectory point");
        traj.push_back({p[0].get<double>(), p[1].get<double>()});
      }
      row.prediction.trajectories.push_back(std::move(traj));
    }
    if (js.contains("uncertainty")) {
      if (!js["uncertainty"].is_number())
        throw SchemaError("read_predictions: scene '" + row.scene_id + "': non-numeric uncertainty");
      row.uncertainty = js["uncertainty"].get<double>();
    }
    validate_prediction_set(row.prediction, static_cast<int>(row.prediction.trajectories.front().size()));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace vmp
