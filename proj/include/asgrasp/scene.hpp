#pragma once

#include "asgrasp/camgeom.hpp"
#include "asgrasp/primitives.hpp"

#include <nlohmann/json_fwd.hpp>

#include <cstdint>
#include <vector>

namespace asgrasp {

struct MaterialMix {
  double diffuse = 1.0 / 3;
  double specular = 1.0 / 3;
  double transparent = 1.0 / 3;

  void validate() const;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  std::vector<SceneObject> objects;
  double plane_height = 0;      // support plane z, world frame
  RelativePose camera_pose;     // world -> RGB camera
};

bool operator==(const SceneSpec& a, const SceneSpec& b);

struct GeneratorParams {
  double workspace_radius = 0.16;      // object centers within this disc
  double camera_distance_min = 0.4;    // meters from scene center
  double camera_distance_max = 1.0;
  double camera_elevation_min = 0.6;   // radians above horizon
  double camera_elevation_max = 1.2;
  int max_rejections = 1000;
};

SceneSpec build_scene(std::uint64_t seed, int object_count, const MaterialMix& mix,
                      const GeneratorParams& params = {});

nlohmann::json scene_to_json(const SceneSpec& spec);
SceneSpec scene_from_json(const nlohmann::json& j);

}  // namespace asgrasp
