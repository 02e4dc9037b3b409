#pragma once

#include "asgrasp/losses.hpp"
#include "asgrasp/record.hpp"
#include "asgrasp/stereonet.hpp"

#include <filesystem>
#include <functional>
#include <vector>

namespace asgrasp {

struct TrainConfig {
  int steps = 2000;
  int batch_size = 4;
  double lr = 1e-3;
  double lr_decay_per_epoch = 0.05;  // multiplicative: lr *= (1 - decay) each epoch
  double weight_decay = 1e-4;
  double grad_clip = 1.0;
  double gamma = 0.9;
  double mask_weight = 2.0;
  int phase1_steps = 0;        // steps trained on the first layer only
  int iterations = 0;          // unroll length; 0 = network config default
  std::uint64_t shuffle_seed = 17;
  int checkpoint_interval = 0;  // 0 = only final checkpoint

  void validate() const;
};

// One preprocessed training sample: normalized images plus full-resolution
// disparity targets and per-pixel loss weights.
struct TrainSample {
  ImageRGB rgb01;
  ImageF ir_left01, ir_right01;
  nn::Array gt_d1, gt_d2;   // fractional hypothesis-grid indices
  nn::Array weights;        // normalized; 0 outside the valid mask
};

TrainSample make_train_sample(const SceneRecord& record, const HypothesisGrid& grid,
                              double mask_weight);

struct TrainResult {
  std::vector<double> loss_history;  // mean batch loss per step
  double final_lr = 0;
  int steps = 0;
};

// step, total loss, and the final-iteration weighted L1 of each layer.
using TrainCallback = std::function<void(int step, double loss, double l1_d1, double l1_d2)>;

// AdamW training loop with per-sample backward passes accumulated over the
// batch. Throws DomainError on a non-finite loss, naming the offending step.
TrainResult train_network(StereoNet& net, const std::vector<SceneRecord>& records,
                          const TrainConfig& cfg,
                          const std::filesystem::path& checkpoint_dir = {},
                          const TrainCallback& callback = {});

std::vector<SceneRecord> load_dataset(const std::filesystem::path& root);

}  // namespace asgrasp
