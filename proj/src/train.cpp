#include "asgrasp/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace asgrasp {

void TrainConfig::validate() const {
  if (steps < 1) throw ArgumentError("train: steps must be >= 1");
  if (batch_size < 1) throw ArgumentError("train: batch_size must be >= 1");
  if (lr <= 0) throw ArgumentError("train: lr must be positive");
  if (lr_decay_per_epoch < 0 || lr_decay_per_epoch >= 1)
    throw ArgumentError("train: lr decay must be in [0,1)");
  if (phase1_steps < 0) throw ArgumentError("train: negative phase1_steps");
}

TrainSample make_train_sample(const SceneRecord& record, const HypothesisGrid& grid,
                              double mask_weight) {
  TrainSample s;
  s.rgb01 = to_float01_rgb(record.rgb.r, record.rgb.g, record.rgb.b);
  s.ir_left01 = to_float01(record.ir_left);
  s.ir_right01 = to_float01(record.ir_right);

  const int h = record.gt.rows(), w = record.gt.cols();
  s.gt_d1.resize(h * w);
  s.gt_d2.resize(h * w);
  ImageU8 highlight(h, w);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      s.gt_d1(v * w + u) =
          static_cast<float>(depth_to_disparity(record.gt.first(v, u), grid).value);
      s.gt_d2(v * w + u) =
          static_cast<float>(depth_to_disparity(record.gt.second(v, u), grid).value);
      const auto m = static_cast<Material>(record.material_mask(v, u));
      highlight(v, u) = (m == Material::Specular || m == Material::Transparent) ? 1 : 0;
    }
  }
  s.weights = geometry_loss_weights(record.gt.valid_mask, highlight, mask_weight);
  return s;
}

std::vector<SceneRecord> load_dataset(const std::filesystem::path& root) {
  std::vector<SceneRecord> records;
  for (const auto& dir : list_records(root)) records.push_back(read_record(dir));
  if (records.empty()) throw DataError("load_dataset: no records under " + root.string());
  return records;
}

TrainResult train_network(StereoNet& net, const std::vector<SceneRecord>& records,
                          const TrainConfig& cfg, const std::filesystem::path& checkpoint_dir,
                          const TrainCallback& callback) {
  cfg.validate();
  if (records.empty()) throw ArgumentError("train: empty dataset");

  const HypothesisGrid grid = net.hypothesis_grid();
  const int iterations = cfg.iterations > 0 ? cfg.iterations : net.config().iterations;

  std::vector<TrainSample> samples;
  samples.reserve(records.size());
  for (const auto& r : records) samples.push_back(make_train_sample(r, grid, cfg.mask_weight));
  const CameraRig& rig = records.front().rig;

  nn::AdamWConfig opt_cfg;
  opt_cfg.lr = cfg.lr;
  opt_cfg.weight_decay = cfg.weight_decay;
  opt_cfg.grad_clip = cfg.grad_clip;
  nn::AdamW optimizer(opt_cfg);

  GeometryLossConfig loss_cfg;
  loss_cfg.gamma = cfg.gamma;
  loss_cfg.mask_weight = cfg.mask_weight;
  loss_cfg.iterations = iterations;

  std::vector<int> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();  // trigger a shuffle at step 0
  int epoch = -1;
  double lr_scale = 1.0;

  TrainResult result;
  for (int step = 0; step < cfg.steps; ++step) {
    loss_cfg.second_layer_weight = step < cfg.phase1_steps ? 0.0 : 1.0;
    net.params().zero_grads();
    double batch_loss = 0, batch_l1_d1 = 0, batch_l1_d2 = 0;
    for (int b = 0; b < cfg.batch_size; ++b) {
      if (cursor >= order.size()) {
        ++epoch;
        if (epoch > 0) lr_scale *= 1.0 - cfg.lr_decay_per_epoch;
        std::mt19937_64 rng(cfg.shuffle_seed + static_cast<std::uint64_t>(epoch));
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const TrainSample& s = samples[order[cursor++]];

      nn::Tape tape;
      StereoNet::ForwardPass pass =
          net.forward(tape, s.rgb01, s.ir_left01, s.ir_right01, rig, grid, iterations);
      nn::Tensor loss =
          geometry_loss(tape, pass.history, s.gt_d1, s.gt_d2, s.weights, loss_cfg);
      const double value = loss.value()(0);
      if (!std::isfinite(value)) {
        std::ostringstream msg;
        msg << "train: non-finite loss at step " << step << ", sample " << b << " (scene seed "
            << records[order[cursor - 1]].spec.seed << ")";
        throw DomainError(msg.str());
      }
      batch_loss += value;
      const auto& [last_d1, last_d2] = pass.history.back();
      batch_l1_d1 += (s.weights * (last_d1.value() - s.gt_d1).abs()).sum();
      batch_l1_d2 += (s.weights * (last_d2.value() - s.gt_d2).abs()).sum();
      // Scale by 1/batch so accumulated gradients average over the batch.
      nn::Tensor scaled = tape.add_scalars({loss}, {1.0f / cfg.batch_size});
      tape.backward(scaled);
    }
    batch_loss /= cfg.batch_size;
    optimizer.step(net.params(), lr_scale);
    result.loss_history.push_back(batch_loss);
    if (callback)
      callback(step, batch_loss, batch_l1_d1 / cfg.batch_size, batch_l1_d2 / cfg.batch_size);

    if (!checkpoint_dir.empty() && cfg.checkpoint_interval > 0 &&
        (step + 1) % cfg.checkpoint_interval == 0) {
      save_checkpoint((checkpoint_dir / ("ckpt_" + std::to_string(step + 1) + ".bin")).string(),
                      net.params(), net.config_hash(), step + 1);
    }
  }

  if (!checkpoint_dir.empty()) {
    save_checkpoint((checkpoint_dir / "ckpt_final.bin").string(), net.params(),
                    net.config_hash(), cfg.steps);
  }
  result.final_lr = cfg.lr * lr_scale;
  result.steps = cfg.steps;
  return result;
}

}  // namespace asgrasp
