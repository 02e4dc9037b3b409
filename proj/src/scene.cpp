#include "asgrasp/scene.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <random>

namespace asgrasp {

void MaterialMix::validate() const {
  if (diffuse < 0 || specular < 0 || transparent < 0)
    throw ArgumentError("material mix: negative weight");
  if (diffuse + specular + transparent <= 0) throw ArgumentError("material mix: all zero");
}

namespace {

Mat3 yaw_rotation(double angle) {
  return Eigen::AngleAxisd(angle, Vec3::UnitZ()).toRotationMatrix();
}

// world -> camera pose looking from `eye` toward `target`, world +z up.
RelativePose look_at(const Vec3& eye, const Vec3& target) {
  const Vec3 forward = (target - eye).normalized();
  Vec3 right = forward.cross(Vec3::UnitZ());
  if (right.norm() < 1e-6) right = Vec3::UnitX();
  right.normalize();
  const Vec3 down = forward.cross(right).normalized();
  RelativePose pose;
  pose.rotation.row(0) = right.transpose();
  pose.rotation.row(1) = down.transpose();
  pose.rotation.row(2) = forward.transpose();
  pose.translation = -(pose.rotation * eye);
  return pose;
}

}  // namespace

SceneSpec build_scene(std::uint64_t seed, int object_count, const MaterialMix& mix,
                      const GeneratorParams& params) {
  if (object_count < 0 || object_count > 16)
    throw ArgumentError("build_scene: object_count must be in [0,16]");
  mix.validate();

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SceneSpec spec;
  spec.seed = seed;
  spec.plane_height = 0;

  const double mix_total = mix.diffuse + mix.specular + mix.transparent;
  int rejections = 0;
  while (static_cast<int>(spec.objects.size()) < object_count) {
    SceneObject obj;
    const double shape_draw = unit(rng);
    obj.shape = shape_draw < 1.0 / 3   ? ShapeKind::Sphere
                : shape_draw < 2.0 / 3 ? ShapeKind::Box
                                       : ShapeKind::Cylinder;
    switch (obj.shape) {
      case ShapeKind::Sphere: {
        const double r = 0.02 + 0.018 * unit(rng);
        obj.scale = Vec3::Constant(r);
        break;
      }
      case ShapeKind::Box:
        obj.scale = Vec3(0.015 + 0.022 * unit(rng), 0.015 + 0.022 * unit(rng),
                         0.02 + 0.03 * unit(rng));
        break;
      case ShapeKind::Cylinder: {
        const double r = 0.015 + 0.018 * unit(rng);
        obj.scale = Vec3(r, r, 0.02 + 0.03 * unit(rng));
        break;
      }
    }

    const double mat_draw = unit(rng) * mix_total;
    if (mat_draw < mix.diffuse)
      obj.material = Material::Diffuse;
    else if (mat_draw < mix.diffuse + mix.specular)
      obj.material = Material::Specular;
    else
      obj.material = Material::Transparent;

    switch (obj.material) {
      case Material::Diffuse:
        obj.albedo = Vec3(0.25 + 0.7 * unit(rng), 0.25 + 0.7 * unit(rng), 0.25 + 0.7 * unit(rng));
        obj.albedo_ir = 0.6 + 0.35 * unit(rng);
        break;
      case Material::Specular:
        obj.albedo = Vec3::Constant(0.55 + 0.35 * unit(rng));
        obj.albedo_ir = 0.7 + 0.25 * unit(rng);
        break;
      default:
        obj.albedo = Vec3(0.55, 0.7, 0.8) * (0.8 + 0.2 * unit(rng));
        obj.albedo_ir = 0.8;
        break;
    }

    // Resting pose: random yaw, bottom touching the plane.
    const double radius = params.workspace_radius * std::sqrt(unit(rng));
    const double angle = 2 * M_PI * unit(rng);
    const double rest_z = obj.shape == ShapeKind::Sphere ? obj.scale.x() : obj.scale.z();
    obj.pose.rotation = yaw_rotation(2 * M_PI * unit(rng));
    obj.pose.translation =
        Vec3(radius * std::cos(angle), radius * std::sin(angle), spec.plane_height + rest_z);

    bool collides = false;
    for (const auto& other : spec.objects) {
      const double min_dist = bounding_radius(obj) + bounding_radius(other);
      if ((obj.pose.translation - other.pose.translation).norm() < min_dist) {
        collides = true;
        break;
      }
    }
    if (collides) {
      if (++rejections > params.max_rejections)
        throw DataError("build_scene: placement failed after " +
                        std::to_string(params.max_rejections) + " rejections (seed " +
                        std::to_string(seed) + ")");
      continue;
    }
    spec.objects.push_back(obj);
  }

  const double dist = params.camera_distance_min +
                      (params.camera_distance_max - params.camera_distance_min) * unit(rng);
  const double elev = params.camera_elevation_min +
                      (params.camera_elevation_max - params.camera_elevation_min) * unit(rng);
  const double azim = 2 * M_PI * unit(rng);
  const Vec3 center(0, 0, spec.plane_height);
  const Vec3 eye = center + dist * Vec3(std::cos(elev) * std::cos(azim),
                                        std::cos(elev) * std::sin(azim), std::sin(elev));
  const Vec3 target = center + 0.02 * Vec3(unit(rng) - 0.5, unit(rng) - 0.5, 0);
  spec.camera_pose = look_at(eye, target);
  return spec;
}

bool operator==(const SceneSpec& a, const SceneSpec& b) {
  auto pose_eq = [](const RelativePose& x, const RelativePose& y) {
    return x.rotation == y.rotation && x.translation == y.translation;
  };
  if (a.seed != b.seed || a.plane_height != b.plane_height ||
      !pose_eq(a.camera_pose, b.camera_pose) || a.objects.size() != b.objects.size())
    return false;
  for (size_t i = 0; i < a.objects.size(); ++i) {
    const auto& x = a.objects[i];
    const auto& y = b.objects[i];
    if (x.shape != y.shape || x.material != y.material || !pose_eq(x.pose, y.pose) ||
        x.scale != y.scale || x.albedo != y.albedo || x.albedo_ir != y.albedo_ir)
      return false;
  }
  return true;
}

namespace {

using nlohmann::json;

json pose_json(const RelativePose& pose) {
  std::vector<double> r(9);
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) r[i * 3 + k] = pose.rotation(i, k);
  return {{"rotation", r},
          {"translation",
           std::vector<double>{pose.translation.x(), pose.translation.y(), pose.translation.z()}}};
}

RelativePose pose_unjson(const json& j) {
  RelativePose pose;
  const auto r = j.at("rotation").get<std::vector<double>>();
  const auto t = j.at("translation").get<std::vector<double>>();
  if (r.size() != 9 || t.size() != 3) throw DataError("scene pose: wrong element count");
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) pose.rotation(i, k) = r[i * 3 + k];
  pose.translation = Vec3(t[0], t[1], t[2]);
  return pose;
}

const char* shape_name(ShapeKind s) {
  switch (s) {
    case ShapeKind::Sphere: return "sphere";
    case ShapeKind::Box: return "box";
    case ShapeKind::Cylinder: return "cylinder";
  }
  return "?";
}

const char* material_name(Material m) {
  switch (m) {
    case Material::Background: return "background";
    case Material::Diffuse: return "diffuse";
    case Material::Specular: return "specular";
    case Material::Transparent: return "transparent";
  }
  return "?";
}

ShapeKind shape_from_name(const std::string& s) {
  if (s == "sphere") return ShapeKind::Sphere;
  if (s == "box") return ShapeKind::Box;
  if (s == "cylinder") return ShapeKind::Cylinder;
  throw DataError("unknown shape: " + s);
}

Material material_from_name(const std::string& s) {
  if (s == "background") return Material::Background;
  if (s == "diffuse") return Material::Diffuse;
  if (s == "specular") return Material::Specular;
  if (s == "transparent") return Material::Transparent;
  throw DataError("unknown material: " + s);
}

}  // namespace

nlohmann::json scene_to_json(const SceneSpec& spec) {
  json objects = json::array();
  for (const auto& obj : spec.objects) {
    objects.push_back({{"shape", shape_name(obj.shape)},
                       {"material", material_name(obj.material)},
                       {"pose", pose_json(obj.pose)},
                       {"scale", std::vector<double>{obj.scale.x(), obj.scale.y(), obj.scale.z()}},
                       {"albedo", std::vector<double>{obj.albedo.x(), obj.albedo.y(), obj.albedo.z()}},
                       {"albedo_ir", obj.albedo_ir}});
  }
  return {{"seed", spec.seed},
          {"plane_height", spec.plane_height},
          {"camera_pose", pose_json(spec.camera_pose)},
          {"objects", objects}};
}

SceneSpec scene_from_json(const nlohmann::json& j) {
  SceneSpec spec;
  spec.seed = j.at("seed");
  spec.plane_height = j.at("plane_height");
  spec.camera_pose = pose_unjson(j.at("camera_pose"));
  for (const auto& jo : j.at("objects")) {
    SceneObject obj;
    obj.shape = shape_from_name(jo.at("shape"));
    obj.material = material_from_name(jo.at("material"));
    obj.pose = pose_unjson(jo.at("pose"));
    const auto s = jo.at("scale").get<std::vector<double>>();
    const auto a = jo.at("albedo").get<std::vector<double>>();
    obj.scale = Vec3(s.at(0), s.at(1), s.at(2));
    obj.albedo = Vec3(a.at(0), a.at(1), a.at(2));
    obj.albedo_ir = jo.at("albedo_ir");
    spec.objects.push_back(obj);
  }
  return spec;
}

}  // namespace asgrasp
