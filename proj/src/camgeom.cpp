#include "asgrasp/camgeom.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>

namespace asgrasp {

void CameraIntrinsics::validate() const {
  if (fx <= 0 || fy <= 0) throw ArgumentError("intrinsics: focal lengths must be positive");
  if (width <= 0 || height <= 0) throw ArgumentError("intrinsics: image size must be positive");
  if (cx < 0 || cx >= width || cy < 0 || cy >= height)
    throw ArgumentError("intrinsics: principal point outside the image");
}

CameraIntrinsics CameraIntrinsics::downscaled(int s) const {
  CameraIntrinsics out = *this;
  out.fx = fx / s;
  out.fy = fy / s;
  out.cx = cx / s;
  out.cy = cy / s;
  out.width = width / s;
  out.height = height / s;
  return out;
}

void RelativePose::validate() const {
  const double ortho = (rotation.transpose() * rotation - Mat3::Identity()).cwiseAbs().maxCoeff();
  if (ortho > 1e-9) throw ArgumentError("pose: rotation is not orthonormal");
  if (std::abs(rotation.determinant() - 1.0) > 1e-9)
    throw ArgumentError("pose: rotation determinant is not +1");
}

RelativePose RelativePose::inverse() const {
  RelativePose out;
  out.rotation = rotation.transpose();
  out.translation = -(rotation.transpose() * translation);
  return out;
}

RelativePose RelativePose::compose(const RelativePose& inner) const {
  RelativePose out;
  out.rotation = rotation * inner.rotation;
  out.translation = rotation * inner.translation + translation;
  return out;
}

void CameraRig::validate() const {
  rgb.validate();
  ir_left.intrinsics.validate();
  ir_right.intrinsics.validate();
  ir_left.pose.validate();
  ir_right.pose.validate();
  projector.pose.validate();
  if ((ir_left.pose.translation - ir_right.pose.translation).norm() < 1e-12)
    throw ArgumentError("rig: IR cameras have zero baseline");
}

void HypothesisGrid::validate() const {
  if (!(d_min > 0 && d_min < d_max)) throw ArgumentError("hypothesis grid: need 0 < d_min < d_max");
  if (count < 2) throw ArgumentError("hypothesis grid: need at least two hypotheses");
  if (static_cast<int>(values.size()) != count)
    throw ArgumentError("hypothesis grid: value count mismatch");
}

Vec2 project(const Vec3& point, const CameraIntrinsics& K) {
  if (point.z() <= 0) throw DomainError("project: point has nonpositive depth");
  return {K.fx * point.x() / point.z() + K.cx, K.fy * point.y() / point.z() + K.cy};
}

Vec3 backproject(const Vec2& pixel, double depth, const CameraIntrinsics& K) {
  if (depth <= 0) throw DomainError("backproject: nonpositive depth");
  return {(pixel.x() - K.cx) / K.fx * depth, (pixel.y() - K.cy) / K.fy * depth, depth};
}

WarpResult warp_pixel(const Vec2& p_ref, double depth, const CameraIntrinsics& K_ref,
                      const CameraIntrinsics& K_ir, const RelativePose& ref_to_ir) {
  const Vec3 in_ir = ref_to_ir.apply(backproject(p_ref, depth, K_ref));
  if (in_ir.z() <= 0) return {Vec2::Zero(), false};
  return {project(in_ir, K_ir), true};
}

WarpResult warp_pixel(const Vec2& p_ref, double depth, const CameraRig& rig, IrSide side) {
  const IrCamera& cam = side == IrSide::Left ? rig.ir_left : rig.ir_right;
  return warp_pixel(p_ref, depth, rig.rgb, cam.intrinsics, cam.pose);
}

HypothesisGrid make_hypotheses(double d_min, double d_max, int count) {
  if (!(d_min > 0 && d_min < d_max)) throw ArgumentError("make_hypotheses: need 0 < d_min < d_max");
  if (count < 2) throw ArgumentError("make_hypotheses: need count >= 2");
  HypothesisGrid grid;
  grid.d_min = d_min;
  grid.d_max = d_max;
  grid.count = count;
  grid.values.resize(count);
  const double inv_max = 1.0 / d_min;  // largest inverse depth
  const double inv_min = 1.0 / d_max;
  for (int i = 0; i < count; ++i) {
    const double inv = inv_max + (inv_min - inv_max) * i / (count - 1);
    grid.values[i] = 1.0 / inv;
  }
  grid.values.front() = d_min;
  grid.values.back() = d_max;
  return grid;
}

DisparityConversion disparity_to_depth(double disparity, const HypothesisGrid& grid) {
  grid.validate();
  DisparityConversion out;
  if (disparity < 0) {
    disparity = 0;
    out.clamped = true;
  } else if (disparity > grid.count - 1) {
    disparity = grid.count - 1;
    out.clamped = true;
  }
  const double inv_max = 1.0 / grid.d_min;
  const double inv_min = 1.0 / grid.d_max;
  const double inv = inv_max + (inv_min - inv_max) * disparity / (grid.count - 1);
  out.value = 1.0 / inv;
  return out;
}

DisparityConversion depth_to_disparity(double depth, const HypothesisGrid& grid) {
  grid.validate();
  if (depth <= 0) throw DomainError("depth_to_disparity: nonpositive depth");
  DisparityConversion out;
  const double inv_max = 1.0 / grid.d_min;
  const double inv_min = 1.0 / grid.d_max;
  double disp = (1.0 / depth - inv_max) / (inv_min - inv_max) * (grid.count - 1);
  if (disp < 0) {
    disp = 0;
    out.clamped = true;
  } else if (disp > grid.count - 1) {
    disp = grid.count - 1;
    out.clamped = true;
  }
  out.value = disp;
  return out;
}

TwoLayerClouds two_layer_to_pointcloud(const TwoLayerDepth& depths, const CameraIntrinsics& K,
                                       double layer_eps) {
  TwoLayerClouds clouds;
  for (int v = 0; v < depths.rows(); ++v) {
    for (int u = 0; u < depths.cols(); ++u) {
      if (!depths.valid_mask(v, u)) continue;
      const Vec2 pixel(u, v);
      const double d1 = depths.first(v, u);
      if (d1 <= 0) continue;
      clouds.visible.push_back(backproject(pixel, d1, K));
      const double d2 = depths.second(v, u);
      if (d2 - d1 > layer_eps) clouds.invisible.push_back(backproject(pixel, d2, K));
    }
  }
  return clouds;
}

namespace {

using nlohmann::json;

json intrinsics_to_json(const CameraIntrinsics& K) {
  return {{"fx", K.fx},       {"fy", K.fy},          {"cx", K.cx},
          {"cy", K.cy},       {"width", K.width},    {"height", K.height}};
}

CameraIntrinsics intrinsics_from_json(const json& j) {
  CameraIntrinsics K;
  K.fx = j.at("fx");
  K.fy = j.at("fy");
  K.cx = j.at("cx");
  K.cy = j.at("cy");
  K.width = j.at("width");
  K.height = j.at("height");
  return K;
}

json pose_to_json(const RelativePose& pose) {
  std::vector<double> r(9);
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) r[i * 3 + k] = pose.rotation(i, k);
  return {{"rotation", r},
          {"translation", std::vector<double>{pose.translation.x(), pose.translation.y(),
                                              pose.translation.z()}}};
}

RelativePose pose_from_json(const json& j) {
  RelativePose pose;
  const auto r = j.at("rotation").get<std::vector<double>>();
  const auto t = j.at("translation").get<std::vector<double>>();
  if (r.size() != 9 || t.size() != 3) throw DataError("pose: wrong element count");
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) pose.rotation(i, k) = r[i * 3 + k];
  pose.translation = Vec3(t[0], t[1], t[2]);
  return pose;
}

}  // namespace

nlohmann::json rig_to_json(const CameraRig& rig) {
  json j;
  j["rgb"] = intrinsics_to_json(rig.rgb);
  j["ir_left"] = intrinsics_to_json(rig.ir_left.intrinsics);
  j["ir_left"].update(pose_to_json(rig.ir_left.pose));
  j["ir_right"] = intrinsics_to_json(rig.ir_right.intrinsics);
  j["ir_right"].update(pose_to_json(rig.ir_right.pose));
  j["projector"] = pose_to_json(rig.projector.pose);
  j["projector"]["pattern_seed"] = rig.projector.pattern_seed;
  return j;
}

void save_rig_json(const CameraRig& rig, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write rig file: " + path);
  out << rig_to_json(rig).dump(2) << "\n";
}

CameraRig rig_from_json(const nlohmann::json& j) {
  CameraRig rig;
  rig.rgb = intrinsics_from_json(j.at("rgb"));
  rig.ir_left.intrinsics = intrinsics_from_json(j.at("ir_left"));
  rig.ir_left.pose = pose_from_json(j.at("ir_left"));
  rig.ir_right.intrinsics = intrinsics_from_json(j.at("ir_right"));
  rig.ir_right.pose = pose_from_json(j.at("ir_right"));
  rig.projector.pose = pose_from_json(j.at("projector"));
  rig.projector.pattern_seed = j.at("projector").value("pattern_seed", 0ull);
  rig.validate();
  return rig;
}

CameraRig load_rig_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read rig file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("corrupt rig file " + path + ": " + e.what());
  }
  return rig_from_json(j);
}

CameraRig make_default_rig(int width, int height) {
  CameraRig rig;
  const double f = 0.9 * width;
  rig.rgb = {f, f, width / 2.0, height / 2.0, width, height};
  rig.ir_left.intrinsics = rig.rgb;
  rig.ir_right.intrinsics = rig.rgb;
  // IR cameras sit 25 mm left and 70 mm right of the RGB camera (a 95 mm
  // stereo baseline); the projector sits between the IR pair.
  rig.ir_left.pose.translation = Vec3(0.025, 0, 0);
  rig.ir_right.pose.translation = Vec3(-0.070, 0, 0);
  rig.projector.pose.translation = Vec3(-0.0225, 0, 0);
  rig.projector.pattern_seed = 7;
  return rig;
}

}  // namespace asgrasp
