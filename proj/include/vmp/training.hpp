#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vmp/model.hpp"
#include "vmp/nn/params.hpp"
#include "vmp/predictions.hpp"
#include "vmp/scene.hpp"

namespace vmp {

enum class Regime { kMultimodal, kPretrainEncoder, kSngpHead };

struct TrainConfig {
  Regime regime = Regime::kMultimodal;
  int epochs = 20;
  int batch_size = 32;
  double lr = 0.001;
  std::vector<int> milestones = {6, 12};
  double gamma = 0.3;
  std::uint64_t seed = 0;
  double data_fraction = 1.0;
  std::string pretrained_path;  // encoder checkpoint, SNGP regime only

  EncoderConfig encoder;
  DecoderConfig decoder;
  SngpConfig sngp;
  int pretrain_head_hidden = 128;
};

// Presets mirroring the published schedules.
TrainConfig multimodal_preset();       // 20 epochs, milestones [6, 12], gamma 0.3
TrainConfig pretrain_encoder_preset(); // 19 epochs, milestones [5, 10, 15], gamma 0.3
TrainConfig sngp_head_preset();        // 5 epochs, constant lr

void validate_train_config(const TrainConfig& cfg);

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::string checkpoint_path;
};

// Runs the configured regime over the scenes (all must carry ground truth)
// and writes a checkpoint to out_path. Deterministic given the seed.
TrainReport train(const std::vector<Scene>& scenes, const TrainConfig& cfg, const std::string& out_path);

std::string train_log_jsonl(const TrainReport& report);

// Deterministic epoch ordering used by the trainer; exposed so offline
// recomputations can replay the exact stream.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch);

// Runs the multimodal model over scenes (world-frame output); when an SNGP
// checkpoint is given, attaches the posterior-variance uncertainty per scene.
std::vector<PredictionRow> predict_scenes(const std::vector<Scene>& scenes, const std::string& model_ckpt,
                                          const std::optional<std::string>& sngp_ckpt);

}  // namespace vmp
