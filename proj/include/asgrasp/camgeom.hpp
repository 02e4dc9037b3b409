#pragma once

#include "asgrasp/types.hpp"

#include <nlohmann/json_fwd.hpp>

#include <optional>
#include <utility>

namespace asgrasp {

struct CameraIntrinsics {
  double fx = 0, fy = 0;
  double cx = 0, cy = 0;
  int width = 0, height = 0;

  void validate() const;

  // Intrinsics of the same camera at 1/s resolution. Follows the usual
  // convention of scaling the principal point together with the focals.
  CameraIntrinsics downscaled(int s) const;
};

struct RelativePose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  void validate() const;
  RelativePose inverse() const;
  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  RelativePose compose(const RelativePose& inner) const;
};

struct IrCamera {
  CameraIntrinsics intrinsics;
  RelativePose pose;  // reference(RGB) -> IR
};

struct Projector {
  RelativePose pose;  // reference(RGB) -> projector
  std::uint64_t pattern_seed = 0;
};

struct CameraRig {
  CameraIntrinsics rgb;
  IrCamera ir_left, ir_right;
  Projector projector;

  void validate() const;
};

enum class IrSide { Left, Right };

// Depth hypotheses placed uniformly in inverse depth.
struct HypothesisGrid {
  double d_min = 0, d_max = 0;
  int count = 0;
  std::vector<double> values;  // meters, ascending

  void validate() const;
};

struct TwoLayerDepth {
  ImageF first;   // meters
  ImageF second;  // meters
  ImageU8 valid_mask;

  int rows() const { return static_cast<int>(first.rows()); }
  int cols() const { return static_cast<int>(first.cols()); }
};

Vec2 project(const Vec3& point, const CameraIntrinsics& K);
Vec3 backproject(const Vec2& pixel, double depth, const CameraIntrinsics& K);

struct WarpResult {
  Vec2 pixel;
  bool valid = true;  // false when the warped point falls behind the IR camera
};

WarpResult warp_pixel(const Vec2& p_ref, double depth, const CameraRig& rig, IrSide side);

// Same warp against explicit camera parameters; used when intrinsics are
// rescaled for feature-resolution volumes.
WarpResult warp_pixel(const Vec2& p_ref, double depth, const CameraIntrinsics& K_ref,
                      const CameraIntrinsics& K_ir, const RelativePose& ref_to_ir);

HypothesisGrid make_hypotheses(double d_min, double d_max, int count);

struct DisparityConversion {
  double value = 0;
  bool clamped = false;
};

DisparityConversion disparity_to_depth(double disparity, const HypothesisGrid& grid);
DisparityConversion depth_to_disparity(double depth, const HypothesisGrid& grid);

struct TwoLayerClouds {
  PointCloud visible;
  PointCloud invisible;
};

// Backprojects both layers into the reference camera frame. A second-layer
// point is emitted only where it is at least `layer_eps` behind the first.
TwoLayerClouds two_layer_to_pointcloud(const TwoLayerDepth& depths, const CameraIntrinsics& K,
                                       double layer_eps = 1e-3);

nlohmann::json rig_to_json(const CameraRig& rig);
CameraRig rig_from_json(const nlohmann::json& j);
CameraRig load_rig_json(const std::string& path);
void save_rig_json(const CameraRig& rig, const std::string& path);

// A default desk-scale rig modeled after a compact active stereo module:
// RGB reference camera with two IR cameras on a horizontal baseline and the
// projector between them.
CameraRig make_default_rig(int width = 128, int height = 96);

}  // namespace asgrasp
