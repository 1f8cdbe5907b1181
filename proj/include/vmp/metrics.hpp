#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "vmp/decoder.hpp"
#include "vmp/predictions.hpp"
#include "vmp/scene.hpp"

namespace vmp {

struct EvalRecord {
  std::string scene_id;
  double cnll = 0.0;
  double min_ade = 0.0;
  double min_fde = 0.0;
  double w_ade = 0.0;
  double w_fde = 0.0;
  double uncertainty = 0.0;
};

struct RetentionCurve {
  std::vector<std::pair<double, double>> points;  // (retained fraction, mean metric)
  double auc = 0.0;
};

struct PerModeErrors {
  std::vector<double> ade;
  std::vector<double> fde;
};

// ADE_k = mean_t ||traj_t^k - y_t||, FDE_k = ||traj_T^k - y_T||.
PerModeErrors ade_fde(const PredictionSet& pred, const std::vector<Vec2>& ground_truth);

struct Aggregates {
  double min_value = 0.0;
  double weighted = 0.0;
};

Aggregates aggregate(const std::vector<double>& per_mode, const std::vector<double>& confidences);

// Identical to the decoder's training loss on the same inputs.
double cnll(const PredictionSet& pred, const std::vector<Vec2>& ground_truth);

// Retains low-uncertainty records first: point j is (j/N, mean metric of the
// j least-uncertain records); auc is the left-Riemann mean of those means.
// Ties in U break by scene_id.
RetentionCurve retention_curve(const std::vector<EvalRecord>& records,
                               const std::function<double(const EvalRecord&)>& metric);

// Area under the curve produced by retaining records in an explicit order.
double retention_auc_for_order(const std::vector<double>& metric_in_retained_order);

// Spearman rank correlation between uncertainty and CNLL (average ranks on
// ties); throws on a constant series.
double rank_correlation(const std::vector<EvalRecord>& records);

struct EvalSummary {
  std::string model_name = "model";
  double r_auc_cnll = 0.0;
  double mean_cnll = 0.0;
  double mean_min_ade = 0.0;
  double mean_min_fde = 0.0;
  double mean_w_ade = 0.0;
  double mean_w_fde = 0.0;
};

struct EvalOutput {
  std::vector<EvalRecord> records;  // sorted by scene_id
  EvalSummary summary;
  RetentionCurve curve;  // over cnll
};

// Joins predictions with ground-truth scenes (every prediction must match a
// scene exactly once) and computes all per-scene records plus the summary.
EvalOutput evaluate(const std::vector<PredictionRow>& predictions, const std::vector<Scene>& scenes,
                    const std::string& model_name = "model");

std::string summary_csv(const EvalSummary& summary);
std::string retention_csv(const RetentionCurve& curve);
std::string scatter_csv(const std::vector<EvalRecord>& records);
std::string retention_svg(const RetentionCurve& curve);

}  // namespace vmp
