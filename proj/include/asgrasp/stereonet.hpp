#pragma once

#include "asgrasp/camgeom.hpp"
#include "asgrasp/modules.hpp"
#include "asgrasp/tape.hpp"

#include <nlohmann/json_fwd.hpp>

namespace asgrasp {

struct StereoNetConfig {
  int feature_channels = 64;   // IR feature channels at 1/4 resolution
  int context_channels = 64;   // context channels per scale
  int hidden_channels = 64;    // GRU state channels
  int hypothesis_count = 32;   // depth hypotheses
  int lookup_radius = 4;
  int pyramid_levels = 3;
  int iterations = 12;
  double d_min = 0.3;          // hypothesis depth range, meters
  double d_max = 1.6;
  std::uint64_t init_seed = 1;

  nlohmann::json to_json() const;
  static StereoNetConfig from_json(const nlohmann::json& j);
  std::uint64_t hash() const;
  void validate() const;
};

struct ReconstructionOutput {
  std::vector<std::pair<ImageF, ImageF>> history;  // full-res (d1, d2) per iteration
  TwoLayerDepth depth;                             // final fields converted to meters
  double clamp_fraction = 0;                       // pixels clamped at conversion
};

// Builds the bilinear sampling tables for warping quarter-resolution IR
// features into the reference view at every depth hypothesis.
std::shared_ptr<const nn::WarpTable> make_warp_table(const CameraRig& rig,
                                                     const HypothesisGrid& grid, int scale = 4);

// The trinocular reconstruction network: shared IR feature encoder, RGB
// context encoder, plane-sweep correlation pyramid, and a conv-GRU that
// iteratively refines two disparity fields.
class StereoNet {
 public:
  explicit StereoNet(const StereoNetConfig& config);

  const StereoNetConfig& config() const { return config_; }
  std::uint64_t config_hash() const { return config_.hash(); }
  nn::ParamStore& params() { return store_; }
  const nn::ParamStore& params() const { return store_; }

  HypothesisGrid hypothesis_grid() const {
    return make_hypotheses(config_.d_min, config_.d_max, config_.hypothesis_count);
  }

  nn::Tensor extract_features(nn::Tape& tape, const ImageF& ir01) const;

  struct ContextPyramid {
    nn::Tensor q4, q8, q16;
  };
  ContextPyramid extract_context(nn::Tape& tape, const ImageRGB& rgb01) const;

  std::vector<nn::Tensor> build_cost_volume(nn::Tape& tape, nn::Tensor f_left, nn::Tensor f_right,
                                            std::shared_ptr<const nn::WarpTable> warps) const;

  struct GruOutput {
    nn::Tensor hidden;
    nn::Tensor delta_d1, delta_d2;
  };
  GruOutput gru_update(nn::Tape& tape, nn::Tensor hidden, nn::Tensor context_input,
                       nn::Tensor cost_d1, nn::Tensor cost_d2, nn::Tensor d1, nn::Tensor d2) const;

  nn::Tensor upsample_disparity(nn::Tape& tape, nn::Tensor d, nn::Tensor hidden) const;

  struct ForwardPass {
    std::vector<std::pair<nn::Tensor, nn::Tensor>> history;  // full-res tensors per iteration
    std::vector<std::pair<nn::Tensor, nn::Tensor>> quarter_history;
  };
  ForwardPass forward(nn::Tape& tape, const ImageRGB& rgb01, const ImageF& ir_left01,
                      const ImageF& ir_right01, const CameraRig& rig, const HypothesisGrid& grid,
                      int iterations) const;

  ReconstructionOutput reconstruct(const ImageRGB& rgb01, const ImageF& ir_left01,
                                   const ImageF& ir_right01, const CameraRig& rig,
                                   const HypothesisGrid& grid, int iterations) const;

 private:
  StereoNetConfig config_;
  nn::ParamStore store_;
  nn::Conv2d fe1_, fe2_, fe3_;
  nn::Conv2d ce1_, ce2_, ce3_, ce8_, ce16_;
  nn::Conv2d hidden_init_, context_input_;
  nn::Conv2d motion_;
  nn::Conv2d gru_z_, gru_r_, gru_q_;
  nn::Conv2d head1a_, head1b_, head2a_, head2b_;
  nn::Conv2d up_a_, up_b_;
};

// Converts normalized 8-bit images to float [0,1].
ImageF to_float01(const ImageU8& img);
ImageRGB to_float01_rgb(const ImageU8& r, const ImageU8& g, const ImageU8& b);

}  // namespace asgrasp
