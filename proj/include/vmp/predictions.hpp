#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vmp/decoder.hpp"

namespace vmp {

// One JSON line per scene:
//   {"scene_id":...,"modes":[{"w":...,"traj":[[x,y],...]}],"uncertainty":...}
// Trajectories are world-frame; "uncertainty" is present only when a
// posterior-variance model produced one.
struct PredictionRow {
  std::string scene_id;
  PredictionSet prediction;
  std::optional<double> uncertainty;
};

void write_predictions(const std::vector<PredictionRow>& rows, const std::string& path);
std::vector<PredictionRow> read_predictions(const std::string& path);

}  // namespace vmp
