#pragma once

#include "asgrasp/tape.hpp"
#include "asgrasp/types.hpp"

#include <utility>
#include <vector>

namespace asgrasp {

struct GeometryLossConfig {
  double gamma = 0.9;        // per-iteration discount, later iterations weighted higher
  double mask_weight = 2.0;  // extra weight on transparent/specular pixels
  int iterations = 12;
  double second_layer_weight = 1.0;  // 0 during first-layer-only pretraining

  void validate() const;
};

// Per-pixel weights for the geometry loss: 0 on invalid pixels, mask_weight
// on highlighted (transparent/specular) pixels, 1 elsewhere. Normalized so
// the weighted sum is a weighted mean over valid pixels.
nn::Array geometry_loss_weights(const ImageU8& valid, const ImageU8& highlight,
                                double mask_weight);

// L_geo = sum_i gamma^{N-i} (|d1* - d1_i|_w + |d2* - d2_i|_w), weighted-mean L1.
double geometry_loss(const std::vector<std::pair<ImageF, ImageF>>& history, const ImageF& gt_d1,
                     const ImageF& gt_d2, const ImageU8& valid, const ImageU8& highlight,
                     const GeometryLossConfig& cfg);

// Same objective on tape tensors, for training.
nn::Tensor geometry_loss(nn::Tape& tape,
                         const std::vector<std::pair<nn::Tensor, nn::Tensor>>& history,
                         const nn::Array& gt_d1, const nn::Array& gt_d2, const nn::Array& weights,
                         const GeometryLossConfig& cfg);

struct GraspLossComponents {
  double l_objectness = 0;
  double l_point = 0;   // point-wise graspable landscape
  double l_view = 0;    // view-wise graspable landscape
  double l_score = 0;
  double l_width = 0;
  double alpha = 1.0;
  double lambda = 1.0;
  double beta = 1.0;
};

// L = L_o + alpha (L_p + lambda L_v) + beta (L_s + L_w)
double grasp_loss(const GraspLossComponents& c);

}  // namespace asgrasp
