#include "asgrasp/primitives.hpp"

#include <algorithm>
#include <cmath>

namespace asgrasp {

namespace {

// Intersections of a line o + t*d with the primitive, in object coordinates.
// Returns 0, 1 or 2 parameters sorted ascending, with outward object-frame
// normals at the hit points.
struct LocalHit {
  double t;
  Vec3 normal;
};

void hit_sphere(const Vec3& o, const Vec3& d, double radius, std::vector<LocalHit>& out) {
  const double b = o.dot(d);
  const double c = o.squaredNorm() - radius * radius;
  const double disc = b * b - c;
  if (disc < 0) return;
  const double s = std::sqrt(disc);
  for (double t : {-b - s, -b + s}) {
    const Vec3 p = o + t * d;
    out.push_back({t, p.normalized()});
  }
}

void hit_box(const Vec3& o, const Vec3& d, const Vec3& half, std::vector<LocalHit>& out) {
  double t_near = -1e30, t_far = 1e30;
  int near_axis = -1, far_axis = -1;
  for (int a = 0; a < 3; ++a) {
    if (std::abs(d[a]) < 1e-15) {
      if (std::abs(o[a]) > half[a]) return;
      continue;
    }
    double t0 = (-half[a] - o[a]) / d[a];
    double t1 = (half[a] - o[a]) / d[a];
    if (t0 > t1) std::swap(t0, t1);
    if (t0 > t_near) {
      t_near = t0;
      near_axis = a;
    }
    if (t1 < t_far) {
      t_far = t1;
      far_axis = a;
    }
  }
  if (t_near > t_far || far_axis < 0) return;
  auto face_normal = [&](int axis, double t) {
    Vec3 n = Vec3::Zero();
    const Vec3 p = o + t * d;
    n[axis] = p[axis] > 0 ? 1.0 : -1.0;
    return n;
  };
  if (near_axis >= 0) out.push_back({t_near, face_normal(near_axis, t_near)});
  out.push_back({t_far, face_normal(far_axis, t_far)});
}

void hit_cylinder(const Vec3& o, const Vec3& d, double radius, double half_h,
                  std::vector<LocalHit>& out) {
  std::vector<LocalHit> candidates;
  // Lateral surface.
  const double a = d.x() * d.x() + d.y() * d.y();
  if (a > 1e-15) {
    const double b = o.x() * d.x() + o.y() * d.y();
    const double c = o.x() * o.x() + o.y() * o.y() - radius * radius;
    const double disc = b * b - a * c;
    if (disc >= 0) {
      const double s = std::sqrt(disc);
      for (double t : {(-b - s) / a, (-b + s) / a}) {
        const Vec3 p = o + t * d;
        if (std::abs(p.z()) <= half_h)
          candidates.push_back({t, Vec3(p.x(), p.y(), 0).normalized()});
      }
    }
  }
  // Caps.
  if (std::abs(d.z()) > 1e-15) {
    for (double z : {-half_h, half_h}) {
      const double t = (z - o.z()) / d.z();
      const Vec3 p = o + t * d;
      if (p.x() * p.x() + p.y() * p.y() <= radius * radius)
        candidates.push_back({t, Vec3(0, 0, z > 0 ? 1.0 : -1.0)});
    }
  }
  std::sort(candidates.begin(), candidates.end(),
            [](const LocalHit& a_, const LocalHit& b_) { return a_.t < b_.t; });
  // A convex body has at most entry + exit.
  if (!candidates.empty()) out.push_back(candidates.front());
  if (candidates.size() > 1) out.push_back(candidates.back());
}

std::vector<LocalHit> hit_local(const Vec3& o, const Vec3& d, const SceneObject& obj) {
  std::vector<LocalHit> hits;
  switch (obj.shape) {
    case ShapeKind::Sphere:
      hit_sphere(o, d, obj.scale.x(), hits);
      break;
    case ShapeKind::Box:
      hit_box(o, d, obj.scale, hits);
      break;
    case ShapeKind::Cylinder:
      hit_cylinder(o, d, obj.scale.x(), obj.scale.z(), hits);
      break;
  }
  return hits;
}

}  // namespace

std::vector<SurfaceHit> intersect_object_line(const Vec3& origin, const Vec3& dir,
                                              const SceneObject& obj, int object_id) {
  const RelativePose world_to_obj = obj.pose.inverse();
  const Vec3 o = world_to_obj.apply(origin);
  const Vec3 d = world_to_obj.rotation * dir;
  std::vector<SurfaceHit> out;
  for (const auto& h : hit_local(o, d, obj)) {
    SurfaceHit hit;
    hit.t = h.t;
    hit.point = origin + h.t * dir;
    hit.normal = obj.pose.rotation * h.normal;
    hit.object_id = object_id;
    out.push_back(hit);
  }
  return out;
}

std::vector<SurfaceHit> intersect_object(const Ray& ray, const SceneObject& obj, int object_id,
                                         double eps) {
  auto hits = intersect_object_line(ray.origin, ray.dir, obj, object_id);
  std::erase_if(hits, [eps](const SurfaceHit& h) { return h.t <= eps; });
  return hits;
}

std::optional<SurfaceHit> intersect_plane(const Ray& ray, double plane_z, double eps) {
  if (std::abs(ray.dir.z()) < 1e-15) return std::nullopt;
  const double t = (plane_z - ray.origin.z()) / ray.dir.z();
  if (t <= eps) return std::nullopt;
  SurfaceHit hit;
  hit.t = t;
  hit.point = ray.origin + t * ray.dir;
  hit.normal = Vec3(0, 0, 1);
  hit.object_id = -1;
  return hit;
}

bool point_inside_object(const Vec3& p_world, const SceneObject& obj) {
  const Vec3 p = obj.pose.inverse().apply(p_world);
  switch (obj.shape) {
    case ShapeKind::Sphere:
      return p.norm() <= obj.scale.x();
    case ShapeKind::Box:
      return (p.cwiseAbs().array() <= obj.scale.array()).all();
    case ShapeKind::Cylinder:
      return p.head<2>().norm() <= obj.scale.x() && std::abs(p.z()) <= obj.scale.z();
  }
  return false;
}

double bounding_radius(const SceneObject& obj) {
  switch (obj.shape) {
    case ShapeKind::Sphere:
      return obj.scale.x();
    case ShapeKind::Box:
      return obj.scale.norm();
    case ShapeKind::Cylinder:
      return std::hypot(obj.scale.x(), obj.scale.z());
  }
  return 0;
}

}  // namespace asgrasp
