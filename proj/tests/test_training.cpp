#include <doctest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "vmp/error.hpp"
#include "vmp/model.hpp"
#include "vmp/predictions.hpp"
#include "vmp/training.hpp"

using vmp::Regime;
using vmp::Scene;
using vmp::TrainConfig;
using vmp::nn::Tensor;

namespace {

// Small dimensions keep the unit suite fast; contracts do not depend on them.
TrainConfig small_config(Regime regime) {
  TrainConfig cfg;
  cfg.regime = regime;
  cfg.encoder.mp_layers = 2;
  cfg.encoder.mp_hidden = 12;
  cfg.encoder.attn_heads = 2;
  cfg.encoder.attn_head_dim = 12;
  cfg.decoder.hidden = 24;
  cfg.decoder.ffn_dim = 48;
  cfg.decoder.blocks = 1;
  cfg.decoder.heads = 2;
  cfg.sngp.rff_dim = 32;
  cfg.pretrain_head_hidden = 24;
  return cfg;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Four tiny scenes with short pasts at different world poses; all four are
// congruent modulo the agent-frame transform, so memorization also pins the
// frame-normalization invariance.
std::vector<Scene> tiny_dataset() {
  std::vector<Scene> scenes;
  for (int i = 0; i < 4; ++i) {
    Scene scene;
    scene.scene_id = "tiny" + std::to_string(i);
    const double v = 1.2;
    const double kappa = 0.12;
    const double psi0 = 0.7 * i - 1.0;
    const vmp::Vec2 base{3.0 * i - 5.0, 2.0 - 1.5 * i};
    auto heading = [&](double s) { return psi0 + kappa * s; };
    auto pos = [&](double s) -> vmp::Vec2 {
      const double r = 1.0 / kappa;
      const vmp::Vec2 center = base + vmp::Vec2{-std::sin(psi0), std::cos(psi0)} * r;
      return center + vmp::Vec2{std::sin(heading(s)), -std::cos(heading(s))} * r;
    };
    vmp::AgentTrack target;
    target.agent_id = 0;
    target.is_target = true;
    for (int t = 19; t <= 24; ++t) {
      const double s = v * vmp::kDt * static_cast<double>(t - 24);
      vmp::AgentState st;
      st.t = t;
      st.position = pos(s);
      const double h = heading(s);
      st.velocity = vmp::Vec2{std::cos(h), std::sin(h)} * v;
      st.acceleration = vmp::Vec2{-std::sin(h), std::cos(h)} * (v * v * kappa);
      st.yaw = vmp::wrap_angle(h);
      target.states.push_back(st);
    }
    scene.tracks.push_back(target);
    scene.lanes.push_back({{pos(-2.0), pos(4.0) + vmp::Vec2{0.0, 0.1}}, 10.0, 1, true});
    std::vector<vmp::Vec2> future;
    for (int t = 1; t <= 25; ++t) future.push_back(pos(v * vmp::kDt * static_cast<double>(t)));
    scene.future = future;
    scenes.push_back(std::move(scene));
  }
  return scenes;
}

}  // namespace

TEST_CASE("train: multimodal losses decrease over three epochs on 30 scenes") {
  auto scenes = vmp::generate_synthetic({501, 30, 0.0});
  TrainConfig cfg = small_config(Regime::kMultimodal);
  cfg.epochs = 3;
  cfg.milestones = {};
  cfg.seed = 5;
  const auto report = vmp::train(scenes, cfg, "train_mm_small.ckpt");
  REQUIRE(report.epochs.size() == 3);
  for (const auto& e : report.epochs) CHECK(std::isfinite(e.mean_loss));
  CHECK(report.epochs[1].mean_loss < report.epochs[0].mean_loss);
  CHECK(report.epochs[2].mean_loss < report.epochs[1].mean_loss);
  std::remove("train_mm_small.ckpt");
}

TEST_CASE("train: identical configs give byte-identical checkpoints") {
  auto scenes = vmp::generate_synthetic({502, 6, 0.0});
  TrainConfig cfg = small_config(Regime::kMultimodal);
  cfg.epochs = 2;
  cfg.seed = 11;
  vmp::train(scenes, cfg, "train_det_a.ckpt");
  vmp::train(scenes, cfg, "train_det_b.ckpt");
  CHECK(slurp("train_det_a.ckpt") == slurp("train_det_b.ckpt"));
  CHECK(!slurp("train_det_a.ckpt").empty());
  std::remove("train_det_a.ckpt");
  std::remove("train_det_b.ckpt");
}

TEST_CASE("train: SNGP regime without a pretrained checkpoint is an error") {
  auto scenes = vmp::generate_synthetic({503, 2, 0.0});
  TrainConfig cfg = small_config(Regime::kSngpHead);
  cfg.epochs = 1;
  CHECK_THROWS_AS(vmp::train(scenes, cfg, "never_written.ckpt"), vmp::ValueError);
}

TEST_CASE("train: pretrain checkpoint carries no transformer-decoder parameters") {
  auto scenes = vmp::generate_synthetic({504, 6, 0.0});
  TrainConfig cfg = small_config(Regime::kPretrainEncoder);
  cfg.epochs = 1;
  cfg.seed = 3;
  vmp::train(scenes, cfg, "train_pre.ckpt");
  const auto entries = vmp::nn::load_checkpoint("train_pre.ckpt");
  bool has_encoder = false;
  bool has_head = false;
  for (const auto& [name, t] : entries) {
    CHECK(name.rfind("decoder.", 0) != 0);
    has_encoder = has_encoder || name.rfind("encoder.", 0) == 0;
    has_head = has_head || name.rfind("pretrain_head.", 0) == 0;
  }
  CHECK(has_encoder);
  CHECK(has_head);
  std::remove("train_pre.ckpt");
}

TEST_CASE("train: overfit sanity drives the mixture loss below 0.1 on four scenes") {
  const auto scenes = tiny_dataset();
  TrainConfig cfg = small_config(Regime::kMultimodal);
  cfg.encoder.mp_hidden = 32;
  cfg.encoder.attn_head_dim = 32;
  cfg.decoder.hidden = 64;
  cfg.decoder.ffn_dim = 128;
  cfg.decoder.blocks = 2;
  cfg.epochs = 200;
  cfg.batch_size = 1;
  cfg.milestones = {100, 160};
  cfg.lr = 0.003;
  cfg.seed = 1;
  const auto report = vmp::train(scenes, cfg, "train_overfit.ckpt");
  CHECK(report.epochs.back().mean_loss < 0.1);
  // The final model itself, not just the epoch average, is below threshold.
  const auto rows = vmp::predict_scenes(scenes, "train_overfit.ckpt", std::nullopt);
  double total = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i)
    total += vmp::mixture_nll(rows[i].prediction, *scenes[i].future);
  CHECK(total / static_cast<double>(rows.size()) < 0.1);
  std::remove("train_overfit.ckpt");
}

TEST_CASE("train: sngp precision equals the offline recursion over the final stream") {
  auto scenes = vmp::generate_synthetic({505, 10, 0.0});
  TrainConfig pre = small_config(Regime::kPretrainEncoder);
  pre.epochs = 1;
  pre.seed = 7;
  vmp::train(scenes, pre, "sngp_pre.ckpt");

  TrainConfig cfg = small_config(Regime::kSngpHead);
  cfg.epochs = 2;
  cfg.seed = 9;
  cfg.batch_size = 4;
  cfg.pretrained_path = "sngp_pre.ckpt";
  vmp::train(scenes, cfg, "sngp_head.ckpt");

  const auto entries = vmp::nn::load_checkpoint("sngp_head.ckpt");
  const auto enc_cfg = vmp::decode_encoder_meta(vmp::nn::checkpoint_entry(entries, "meta.encoder"));
  const auto sngp_cfg = vmp::decode_sngp_meta(vmp::nn::checkpoint_entry(entries, "meta.sngp"));
  vmp::nn::ParamStore enc_store;
  vmp::load_entries(enc_store, entries, "encoder.");
  const Tensor& w_bar = vmp::nn::checkpoint_entry(entries, "sngp.sn.w");
  const Tensor& b = vmp::nn::checkpoint_entry(entries, "sngp.sn.b");
  const Tensor& w_l = vmp::nn::checkpoint_entry(entries, "sngp.w_l");
  const Tensor& b_l = vmp::nn::checkpoint_entry(entries, "sngp.b_l");

  const int dl = sngp_cfg.rff_dim;
  Eigen::MatrixXd precision = sngp_cfg.ridge * Eigen::MatrixXd::Identity(dl, dl);
  std::vector<Eigen::VectorXd> phis;
  for (const auto& scene : scenes) {
    const auto vs = vmp::vectorize_scene(scene);
    vmp::nn::Tape tape;
    const auto emb = vmp::encode(tape, enc_store, enc_cfg, vs);
    const Tensor& rows = tape.value(emb.polylines);
    Eigen::VectorXd dprime(b.cols());
    for (std::size_t c = 0; c < b.cols(); ++c) {
      double acc = b.at(0, c);
      for (std::size_t r = 0; r < w_bar.rows(); ++r) acc += rows.at(emb.target_row, r) * w_bar.at(r, c);
      dprime(static_cast<Eigen::Index>(c)) = acc;
    }
    Eigen::VectorXd phi(dl);
    const double amp = std::sqrt(2.0 / static_cast<double>(dl));
    for (int i = 0; i < dl; ++i) {
      double z = b_l.at(0, static_cast<std::size_t>(i));
      for (std::size_t c = 0; c < w_l.cols(); ++c)
        z -= w_l.at(static_cast<std::size_t>(i), c) * dprime(static_cast<Eigen::Index>(c));
      phi(i) = amp * std::cos(z);
    }
    phis.push_back(phi);
  }
  for (std::size_t begin = 0; begin < phis.size(); begin += cfg.batch_size) {
    const std::size_t end = std::min(phis.size(), begin + static_cast<std::size_t>(cfg.batch_size));
    Eigen::MatrixXd outer = Eigen::MatrixXd::Zero(dl, dl);
    for (std::size_t i = begin; i < end; ++i) outer += phis[i] * phis[i].transpose();
    precision = sngp_cfg.discount * precision + (1.0 - sngp_cfg.discount) * outer;
    precision = 0.5 * (precision + precision.transpose()).eval();
  }
  const Tensor& stored = vmp::nn::checkpoint_entry(entries, "sngp.precision");
  for (int r = 0; r < dl; ++r)
    for (int c = 0; c < dl; ++c)
      CHECK(std::abs(stored.at(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) - precision(r, c)) <
            1e-10);
  std::remove("sngp_pre.ckpt");
  std::remove("sngp_head.ckpt");
}

TEST_CASE("epoch_order: deterministic permutation") {
  const auto a = vmp::epoch_order(100, 42, 3);
  const auto b = vmp::epoch_order(100, 42, 3);
  CHECK(a == b);
  const auto c = vmp::epoch_order(100, 42, 4);
  CHECK(a != c);
  auto sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) CHECK(sorted[i] == i);
}

TEST_CASE("train log: one json line per epoch") {
  vmp::TrainReport report;
  report.epochs.push_back({0, 2.5, 0.001, 1.0});
  report.epochs.push_back({1, 1.25, 0.001, 1.0});
  const std::string log = vmp::train_log_jsonl(report);
  CHECK(log.find("{\"epoch\":0,\"mean_loss\":2.5,\"lr\":0.001,") != std::string::npos);
  CHECK(std::count(log.begin(), log.end(), '\n') == 2);
}

TEST_CASE("predict: rows per scene, simplex confidences, optional uncertainty, determinism") {
  auto scenes = vmp::generate_synthetic({506, 10, 0.0});
  TrainConfig mm = small_config(Regime::kMultimodal);
  mm.epochs = 1;
  mm.seed = 2;
  vmp::train(scenes, mm, "pred_mm.ckpt");
  TrainConfig pre = small_config(Regime::kPretrainEncoder);
  pre.epochs = 1;
  pre.seed = 2;
  vmp::train(scenes, pre, "pred_pre.ckpt");
  TrainConfig sn = small_config(Regime::kSngpHead);
  sn.epochs = 1;
  sn.seed = 2;
  sn.pretrained_path = "pred_pre.ckpt";
  vmp::train(scenes, sn, "pred_sngp.ckpt");

  const auto rows = vmp::predict_scenes(scenes, "pred_mm.ckpt", std::nullopt);
  REQUIRE(rows.size() == 10);
  for (const auto& row : rows) {
    CHECK(!row.uncertainty.has_value());
    double sum = 0.0;
    for (double w : row.prediction.confidences) sum += w;
    CHECK(std::abs(sum - 1.0) < 1e-9);
  }
  const auto rows_u = vmp::predict_scenes(scenes, "pred_mm.ckpt", std::string("pred_sngp.ckpt"));
  for (const auto& row : rows_u) {
    REQUIRE(row.uncertainty.has_value());
    CHECK(*row.uncertainty >= 0.0);
  }
  vmp::write_predictions(rows_u, "pred_a.jsonl");
  vmp::write_predictions(vmp::predict_scenes(scenes, "pred_mm.ckpt", std::string("pred_sngp.ckpt")),
                         "pred_b.jsonl");
  CHECK(slurp("pred_a.jsonl") == slurp("pred_b.jsonl"));
  const auto reread = vmp::read_predictions("pred_a.jsonl");
  REQUIRE(reread.size() == rows_u.size());
  for (std::size_t i = 0; i < reread.size(); ++i) {
    CHECK(reread[i].scene_id == rows_u[i].scene_id);
    CHECK(*reread[i].uncertainty == *rows_u[i].uncertainty);
  }
  for (const char* f : {"pred_mm.ckpt", "pred_pre.ckpt", "pred_sngp.ckpt", "pred_a.jsonl", "pred_b.jsonl"})
    std::remove(f);
}

TEST_CASE("train: presets carry the published schedules") {
  const auto mm = vmp::multimodal_preset();
  CHECK(mm.epochs == 20);
  CHECK(mm.milestones == std::vector<int>{6, 12});
  CHECK(mm.gamma == 0.3);
  CHECK(mm.lr == 0.001);
  CHECK(mm.batch_size == 32);
  const auto pre = vmp::pretrain_encoder_preset();
  CHECK(pre.epochs == 19);
  CHECK(pre.milestones == std::vector<int>{5, 10, 15});
  const auto sn = vmp::sngp_head_preset();
  CHECK(sn.epochs == 5);
  CHECK(sn.milestones.empty());
  CHECK(sn.sngp.rff_dim == 256);
  CHECK(sn.sngp.discount == 0.9999);
  CHECK(sn.sngp.ridge == 0.1);
  CHECK(sn.sngp.inv_lengthscale == 0.05);
}
