#pragma once

#include "asgrasp/camgeom.hpp"
#include "asgrasp/types.hpp"

#include <optional>
#include <vector>

namespace asgrasp {

enum class ShapeKind { Sphere, Box, Cylinder };
enum class Material { Background = 0, Diffuse = 1, Specular = 2, Transparent = 3 };

// A convex primitive in the scene. `pose` maps object coordinates to world
// coordinates. Dimensions (meters, in object coordinates):
//   sphere:   radius = scale.x
//   box:      half extents = scale
//   cylinder: radius = scale.x, half height = scale.z, axis = object z
struct SceneObject {
  ShapeKind shape = ShapeKind::Sphere;
  RelativePose pose;
  Vec3 scale = Vec3::Constant(0.03);
  Material material = Material::Diffuse;
  Vec3 albedo = Vec3::Constant(0.7);  // RGB in [0,1]
  double albedo_ir = 0.7;
};

struct Ray {
  Vec3 origin;
  Vec3 dir;  // unit length
};

struct SurfaceHit {
  double t = 0;          // ray parameter (meters)
  Vec3 point;            // world coordinates
  Vec3 normal;           // outward unit normal, world coordinates
  int object_id = -1;    // -1 = support plane
};

// All ray/surface intersections with one object, sorted by t, t > eps only.
// Convex primitives yield at most two.
std::vector<SurfaceHit> intersect_object(const Ray& ray, const SceneObject& obj, int object_id,
                                         double eps = 1e-9);

std::optional<SurfaceHit> intersect_plane(const Ray& ray, double plane_z, double eps = 1e-9);

bool point_inside_object(const Vec3& p_world, const SceneObject& obj);

// Conservative bound used for placement rejection sampling.
double bounding_radius(const SceneObject& obj);

// Line/object intersection without the t > 0 restriction (both signs), sorted
// ascending. Used by the grasp scorer to find closing-line contacts.
std::vector<SurfaceHit> intersect_object_line(const Vec3& origin, const Vec3& dir,
                                              const SceneObject& obj, int object_id);

}  // namespace asgrasp
