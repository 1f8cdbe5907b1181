#include "vmp/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

#include "vmp/error.hpp"

namespace vmp {

namespace {

std::string fmt(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace

PerModeErrors ade_fde(const PredictionSet& pred, const std::vector<Vec2>& ground_truth) {
  if (ground_truth.empty()) throw ValueError("ade_fde: empty ground truth");
  PerModeErrors errors;
  for (const auto& traj : pred.trajectories) {
    if (traj.size() != ground_truth.size()) throw ValueError("ade_fde: horizon mismatch");
    double sum = 0.0;
    for (std::size_t t = 0; t < traj.size(); ++t) sum += distance(traj[t], ground_truth[t]);
    errors.ade.push_back(sum / static_cast<double>(traj.size()));
    errors.fde.push_back(distance(traj.back(), ground_truth.back()));
  }
  return errors;
}

Aggregates aggregate(const std::vector<double>& per_mode, const std::vector<double>& confidences) {
  if (per_mode.size() != confidences.size() || per_mode.empty())
    throw ValueError("aggregate: mode count mismatch");
  Aggregates out;
  out.min_value = per_mode[0];
  out.weighted = 0.0;
  for (std::size_t m = 0; m < per_mode.size(); ++m) {
    out.min_value = std::min(out.min_value, per_mode[m]);
    out.weighted += confidences[m] * per_mode[m];
  }
  return out;
}

double cnll(const PredictionSet& pred, const std::vector<Vec2>& ground_truth) {
  return mixture_nll(pred, ground_truth);
}

RetentionCurve retention_curve(const std::vector<EvalRecord>& records,
                               const std::function<double(const EvalRecord&)>& metric) {
  if (records.empty()) throw ValueError("retention_curve: no records");
  std::vector<const EvalRecord*> order;
  order.reserve(records.size());
  for (const auto& r : records) order.push_back(&r);
  std::sort(order.begin(), order.end(), [](const EvalRecord* a, const EvalRecord* b) {
    if (a->uncertainty != b->uncertainty) return a->uncertainty < b->uncertainty;
    return a->scene_id < b->scene_id;
  });
  std::vector<double> values;
  values.reserve(order.size());
  for (const auto* r : order) values.push_back(metric(*r));

  RetentionCurve curve;
  const double n = static_cast<double>(values.size());
  double running = 0.0;
  double auc = 0.0;
  for (std::size_t j = 0; j < values.size(); ++j) {
    running += values[j];
    const double mean = running / static_cast<double>(j + 1);
    curve.points.emplace_back(static_cast<double>(j + 1) / n, mean);
    auc += mean;
  }
  curve.auc = auc / n;
  return curve;
}

double retention_auc_for_order(const std::vector<double>& metric_in_retained_order) {
  if (metric_in_retained_order.empty()) throw ValueError("retention_auc_for_order: empty order");
  double running = 0.0;
  double auc = 0.0;
  for (std::size_t j = 0; j < metric_in_retained_order.size(); ++j) {
    running += metric_in_retained_order[j];
    auc += running / static_cast<double>(j + 1);
  }
  return auc / static_cast<double>(metric_in_retained_order.size());
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n, 0.0);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[idx[j + 1]] == values[idx[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double rank_correlation(const std::vector<EvalRecord>& records) {
  if (records.size() < 3) throw ValueError("rank_correlation: need at least 3 records");
  std::vector<double> u;
  std::vector<double> c;
  u.reserve(records.size());
  c.reserve(records.size());
  for (const auto& r : records) {
    u.push_back(r.uncertainty);
    c.push_back(r.cnll);
  }
  const std::vector<double> ru = average_ranks(u);
  const std::vector<double> rc = average_ranks(c);
  const double n = static_cast<double>(records.size());
  double mu = 0.0;
  double mc = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    mu += ru[i];
    mc += rc[i];
  }
  mu /= n;
  mc /= n;
  double cov = 0.0;
  double vu = 0.0;
  double vc = 0.0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    cov += (ru[i] - mu) * (rc[i] - mc);
    vu += (ru[i] - mu) * (ru[i] - mu);
    vc += (rc[i] - mc) * (rc[i] - mc);
  }
  if (vu <= 0.0 || vc <= 0.0) throw ValueError("rank_correlation: constant series");
  return cov / std::sqrt(vu * vc);
}

EvalOutput evaluate(const std::vector<PredictionRow>& predictions, const std::vector<Scene>& scenes,
                    const std::string& model_name) {
  if (predictions.empty()) throw ValueError("evaluate: no predictions");
  std::map<std::string, const Scene*> by_id;
  for (const auto& scene : scenes) {
    if (!by_id.emplace(scene.scene_id, &scene).second)
      throw ValueError("evaluate: duplicate scene_id '" + scene.scene_id + "' in scene set");
  }

  std::vector<EvalRecord> records;
  records.reserve(predictions.size());
  std::map<std::string, bool> seen;
  for (const auto& row : predictions) {
    if (seen.count(row.scene_id)) throw ValueError("evaluate: duplicate scene_id '" + row.scene_id + "'");
    seen[row.scene_id] = true;
    auto it = by_id.find(row.scene_id);
    if (it == by_id.end()) throw ValueError("evaluate: no scene with ground truth for '" + row.scene_id + "'");
    const Scene& scene = *it->second;
    if (!scene.future.has_value())
      throw ValueError("evaluate: scene '" + row.scene_id + "' has no ground truth");

    EvalRecord rec;
    rec.scene_id = row.scene_id;
    rec.cnll = cnll(row.prediction, *scene.future);
    const PerModeErrors errors = ade_fde(row.prediction, *scene.future);
    const Aggregates a = aggregate(errors.ade, row.prediction.confidences);
    const Aggregates f = aggregate(errors.fde, row.prediction.confidences);
    rec.min_ade = a.min_value;
    rec.w_ade = a.weighted;
    rec.min_fde = f.min_value;
    rec.w_fde = f.weighted;
    rec.uncertainty = row.uncertainty.value_or(0.0);
    records.push_back(std::move(rec));
  }
  std::sort(records.begin(), records.end(),
            [](const EvalRecord& a, const EvalRecord& b) { return a.scene_id < b.scene_id; });

  EvalOutput out;
  out.records = std::move(records);
  out.summary.model_name = model_name;
  const double n = static_cast<double>(out.records.size());
  for (const auto& r : out.records) {
    out.summary.mean_cnll += r.cnll / n;
    out.summary.mean_min_ade += r.min_ade / n;
    out.summary.mean_min_fde += r.min_fde / n;
    out.summary.mean_w_ade += r.w_ade / n;
    out.summary.mean_w_fde += r.w_fde / n;
  }
  out.curve = retention_curve(out.records, [](const EvalRecord& r) { return r.cnll; });
  out.summary.r_auc_cnll = out.curve.auc;
  return out;
}

std::string summary_csv(const EvalSummary& s) {
  std::ostringstream out;
  out << "model,r_auc_cnll,cnll,min_ade,min_fde,w_ade,w_fde\n";
  out << s.model_name << ',' << fmt(s.r_auc_cnll) << ',' << fmt(s.mean_cnll) << ',' << fmt(s.mean_min_ade)
      << ',' << fmt(s.mean_min_fde) << ',' << fmt(s.mean_w_ade) << ',' << fmt(s.mean_w_fde) << '\n';
  return out.str();
}

std::string retention_csv(const RetentionCurve& curve) {
  std::ostringstream out;
  out << "fraction,mean_cnll\n";
  for (const auto& [frac, mean] : curve.points) out << fmt(frac) << ',' << fmt(mean) << '\n';
  return out.str();
}

std::string scatter_csv(const std::vector<EvalRecord>& records) {
  std::ostringstream out;
  out << "scene_id,log_u,log_cnll\n";
  for (const auto& r : records) {
    const double lu = std::log(std::max(r.uncertainty, 1e-300));
    const double lc = std::log(std::max(r.cnll, 1e-300));
    out << r.scene_id << ',' << fmt(lu) << ',' << fmt(lc) << '\n';
  }
  return out.str();
}

std::string retention_svg(const RetentionCurve& curve) {
  const double width = 640.0;
  const double height = 400.0;
  const double ml = 70.0;
  const double mr = 20.0;
  const double mt = 20.0;
  const double mb = 50.0;
  double lo = curve.points.front().second;
  double hi = lo;
  for (const auto& [frac, mean] : curve.points) {
    lo = std::min(lo, mean);
    hi = std::max(hi, mean);
  }
  if (hi - lo < 1e-12) {
    hi += 1.0;
    lo -= 1.0;
  }
  auto sx = [&](double frac) { return ml + frac * (width - ml - mr); };
  auto sy = [&](double v) { return height - mb - (v - lo) / (hi - lo) * (height - mt - mb); };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(width) << "\" height=\"" << fmt(height)
      << "\" viewBox=\"0 0 " << fmt(width) << " " << fmt(height) << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<line x1=\"" << fmt(ml) << "\" y1=\"" << fmt(height - mb) << "\" x2=\"" << fmt(width - mr)
      << "\" y2=\"" << fmt(height - mb) << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << fmt(ml) << "\" y1=\"" << fmt(mt) << "\" x2=\"" << fmt(ml) << "\" y2=\""
      << fmt(height - mb) << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << fmt(width / 2.0) << "\" y=\"" << fmt(height - 12.0)
      << "\" text-anchor=\"middle\" font-size=\"14\">retained fraction</text>\n";
  svg << "<text x=\"16\" y=\"" << fmt(height / 2.0) << "\" text-anchor=\"middle\" font-size=\"14\" "
      << "transform=\"rotate(-90 16 " << fmt(height / 2.0) << ")\">mean CNLL</text>\n";
  svg << "<polyline fill=\"none\" stroke=\"#1f6fb2\" stroke-width=\"2\" points=\"";
  for (const auto& [frac, mean] : curve.points) svg << fmt(sx(frac)) << ',' << fmt(sy(mean)) << ' ';
  svg << "\"/>\n";
  svg << "<text x=\"" << fmt(width - mr - 4.0) << "\" y=\"" << fmt(mt + 14.0)
      << "\" text-anchor=\"end\" font-size=\"12\">R-AUC " << fmt(curve.auc) << "</text>\n";
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace vmp
