#include "asgrasp/render.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace asgrasp {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

double hash_unit(std::uint64_t a, std::uint64_t b, std::uint64_t c) {
  const std::uint64_t h = splitmix64(splitmix64(splitmix64(a) ^ b) ^ c);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

struct SceneHits {
  // first surface along the ray (object or plane), if any
  std::optional<SurfaceHit> first;
  // all object-surface hits sorted by t
  std::vector<SurfaceHit> object_hits;
};

SceneHits trace(const Ray& ray, const SceneSpec& spec) {
  SceneHits out;
  for (int i = 0; i < static_cast<int>(spec.objects.size()); ++i) {
    for (auto& hit : intersect_object(ray, spec.objects[i], i))
      out.object_hits.push_back(hit);
  }
  std::sort(out.object_hits.begin(), out.object_hits.end(),
            [](const SurfaceHit& a, const SurfaceHit& b) { return a.t < b.t; });
  auto plane = intersect_plane(ray, spec.plane_height);
  if (!out.object_hits.empty() &&
      (!plane || out.object_hits.front().t < plane->t))
    out.first = out.object_hits.front();
  else if (plane)
    out.first = *plane;
  return out;
}

Ray camera_ray(const RelativePose& world_to_cam, const CameraIntrinsics& K, double u, double v) {
  const RelativePose cam_to_world = world_to_cam.inverse();
  Ray ray;
  ray.origin = cam_to_world.translation;
  const Vec3 dir_cam((u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0);
  ray.dir = (cam_to_world.rotation * dir_cam).normalized();
  return ray;
}

}  // namespace

double SpecklePattern::intensity(double u, double v) const {
  const double half_tan = std::tan(fov / 2);
  if (std::abs(u) > half_tan || std::abs(v) > half_tan) return 0.0;
  // One jittered dot per grid cell; cell size set from the dot density.
  const double cell = 1.0 / std::sqrt(dot_density);
  const double sigma = 0.32 * cell;
  const auto ix = static_cast<std::int64_t>(std::floor(u / cell));
  const auto iy = static_cast<std::int64_t>(std::floor(v / cell));
  double value = 0;
  for (std::int64_t dy = -1; dy <= 1; ++dy) {
    for (std::int64_t dx = -1; dx <= 1; ++dx) {
      const std::uint64_t cx = static_cast<std::uint64_t>(ix + dx);
      const std::uint64_t cy = static_cast<std::uint64_t>(iy + dy);
      const double jx = hash_unit(seed, cx * 0x100000001b3ull ^ cy, 1);
      const double jy = hash_unit(seed, cx * 0x100000001b3ull ^ cy, 2);
      const double dot_u = (ix + dx + jx) * cell;
      const double dot_v = (iy + dy + jy) * cell;
      const double r2 = (u - dot_u) * (u - dot_u) + (v - dot_v) * (v - dot_v);
      value += std::exp(-r2 / (2 * sigma * sigma));
    }
  }
  return std::min(1.0, value);
}

RaycastResult raycast_two_layer(const SceneSpec& spec, const CameraRig& rig) {
  const int h = rig.rgb.height, w = rig.rgb.width;
  RaycastResult out;
  out.depth.first = ImageF::Zero(h, w);
  out.depth.second = ImageF::Zero(h, w);
  out.depth.valid_mask = ImageU8::Zero(h, w);
  out.material_mask = ImageU8::Zero(h, w);

  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const Ray ray = camera_ray(spec.camera_pose, rig.rgb, u, v);
      const SceneHits hits = trace(ray, spec);
      if (!hits.first) continue;
      auto depth_of = [&](const SurfaceHit& hit) {
        return static_cast<float>(spec.camera_pose.apply(hit.point).z());
      };
      out.depth.valid_mask(v, u) = 1;
      out.depth.first(v, u) = depth_of(*hits.first);
      if (hits.first->object_id >= 0) {
        out.material_mask(v, u) =
            static_cast<std::uint8_t>(spec.objects[hits.first->object_id].material);
        out.depth.second(v, u) = hits.object_hits.size() >= 2 ? depth_of(hits.object_hits[1])
                                                              : out.depth.first(v, u);
      } else {
        out.material_mask(v, u) = static_cast<std::uint8_t>(Material::Background);
        out.depth.second(v, u) = out.depth.first(v, u);
      }
    }
  }
  return out;
}

namespace {

// Speckle brightness landing on a world point, as seen from the projector.
double pattern_at(const Vec3& p_world, const SceneSpec& spec, const CameraRig& rig,
                  const SpecklePattern& pattern) {
  const RelativePose world_to_proj = rig.projector.pose.compose(spec.camera_pose);
  const Vec3 p = world_to_proj.apply(p_world);
  if (p.z() <= 1e-6) return 0;
  return pattern.intensity(p.x() / p.z(), p.y() / p.z());
}

double shade_ir(const Ray& ray, const SceneSpec& spec, const CameraRig& rig,
                const SpecklePattern& pattern, const RenderParams& params, int view_id) {
  const SceneHits hits = trace(ray, spec);
  if (!hits.first) return params.ambient * 0.5;

  auto diffuse_shade = [&](const SurfaceHit& hit, double albedo) {
    return albedo * (params.ambient + (1 - params.ambient) * pattern_at(hit.point, spec, rig, pattern));
  };

  const SurfaceHit& hit = *hits.first;
  if (hit.object_id < 0) return diffuse_shade(hit, 0.8);  // support plane

  const SceneObject& obj = spec.objects[hit.object_id];
  switch (obj.material) {
    case Material::Diffuse:
      return diffuse_shade(hit, obj.albedo_ir);
    case Material::Specular: {
      // Per-view dropout decorrelates the left/right speckle on shiny
      // surfaces, which is what defeats conventional matching on them.
      const auto qx = static_cast<std::int64_t>(std::floor(hit.point.x() / 0.002));
      const auto qy = static_cast<std::int64_t>(std::floor(hit.point.y() / 0.002));
      const auto qz = static_cast<std::int64_t>(std::floor(hit.point.z() / 0.002));
      const std::uint64_t key = static_cast<std::uint64_t>(qx) * 0x9e3779b1ull ^
                                static_cast<std::uint64_t>(qy) * 0x85ebca77ull ^
                                static_cast<std::uint64_t>(qz);
      const bool dropped =
          hash_unit(pattern.seed ^ 0x5ec5ull, key, static_cast<std::uint64_t>(view_id)) <
          params.spec_dropout;
      const double speckle =
          dropped ? 0.0 : params.rho_spec * pattern_at(hit.point, spec, rig, pattern);
      return obj.albedo_ir * (params.ambient + (1 - params.ambient) * speckle);
    }
    case Material::Transparent: {
      // (1-tau) reflected at the front surface, tau transmitted straight
      // through and returned from whatever lies behind.
      double behind = params.ambient * 0.5;
      bool found_behind = false;
      for (const auto& next : hits.object_hits) {
        if (next.t > hit.t + 1e-9) {
          const SceneObject& bobj = spec.objects[next.object_id];
          behind = bobj.albedo_ir *
                   (params.ambient + (1 - params.ambient) * pattern_at(next.point, spec, rig, pattern));
          found_behind = true;
          break;
        }
      }
      if (!found_behind) {
        // Nothing behind along the object list; fall through to the plane.
        Ray cont{hit.point + 1e-7 * ray.dir, ray.dir};
        if (auto plane = intersect_plane(cont, spec.plane_height))
          behind = 0.8 * (params.ambient + (1 - params.ambient) * pattern_at(plane->point, spec, rig, pattern));
      }
      const double front =
          params.ambient + (1 - params.ambient) * pattern_at(hit.point, spec, rig, pattern);
      return (1 - params.tau) * front + params.tau * behind;
    }
    default:
      return params.ambient;
  }
}

ImageU8 render_ir_view(const SceneSpec& spec, const CameraRig& rig, const IrCamera& cam,
                       const SpecklePattern& pattern, const RenderParams& params, int view_id) {
  const int h = cam.intrinsics.height, w = cam.intrinsics.width;
  ImageU8 img(h, w);
  const RelativePose world_to_ir = cam.pose.compose(spec.camera_pose);
  std::mt19937_64 rng(splitmix64(spec.seed ^ pattern.seed) + view_id);
  std::normal_distribution<double> noise(0.0, params.sigma_ir);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const Ray ray = camera_ray(world_to_ir, cam.intrinsics, u, v);
      double value = shade_ir(ray, spec, rig, pattern, params, view_id);
      if (params.sigma_ir > 0) value += noise(rng);
      img(v, u) = static_cast<std::uint8_t>(std::clamp(value, 0.0, 1.0) * 255.0 + 0.5);
    }
  }
  return img;
}

}  // namespace

IrPair render_ir_pair(const SceneSpec& spec, const CameraRig& rig, const SpecklePattern& pattern,
                      const RenderParams& params) {
  IrPair pair;
  pair.left = render_ir_view(spec, rig, rig.ir_left, pattern, params, 0);
  pair.right = render_ir_view(spec, rig, rig.ir_right, pattern, params, 1);
  return pair;
}

RgbImageU8 render_rgb(const SceneSpec& spec, const CameraRig& rig) {
  const int h = rig.rgb.height, w = rig.rgb.width;
  RgbImageU8 img;
  img.r.resize(h, w);
  img.g.resize(h, w);
  img.b.resize(h, w);
  const Vec3 light_dir = Vec3(0.3, -0.4, 1.0).normalized();

  auto surface_color = [&](const SurfaceHit& hit) -> Vec3 {
    if (hit.object_id < 0) {
      const int checker = (static_cast<int>(std::floor(hit.point.x() / 0.05)) +
                           static_cast<int>(std::floor(hit.point.y() / 0.05))) & 1;
      return Vec3::Constant(checker ? 0.62 : 0.55);
    }
    const SceneObject& obj = spec.objects[hit.object_id];
    const double lambert = std::max(0.0, hit.normal.dot(light_dir));
    return obj.albedo * (0.35 + 0.65 * lambert);
  };

  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const Ray ray = camera_ray(spec.camera_pose, rig.rgb, u, v);
      const SceneHits hits = trace(ray, spec);
      Vec3 color(0.1, 0.1, 0.12);
      if (hits.first) {
        color = surface_color(*hits.first);
        if (hits.first->object_id >= 0 &&
            spec.objects[hits.first->object_id].material == Material::Transparent) {
          // Alpha compositing keeps the silhouette visible while showing
          // what lies behind the surface.
          Vec3 behind(0.1, 0.1, 0.12);
          bool found = false;
          for (const auto& next : hits.object_hits) {
            if (next.t > hits.first->t + 1e-9 && next.object_id != hits.first->object_id) {
              behind = surface_color(next);
              found = true;
              break;
            }
          }
          if (!found) {
            Ray cont{hits.first->point + 1e-7 * ray.dir, ray.dir};
            if (auto plane = intersect_plane(cont, spec.plane_height)) behind = surface_color(*plane);
          }
          color = 0.45 * color + 0.55 * behind;
        }
      }
      img.r(v, u) = static_cast<std::uint8_t>(std::clamp(color.x(), 0.0, 1.0) * 255.0 + 0.5);
      img.g(v, u) = static_cast<std::uint8_t>(std::clamp(color.y(), 0.0, 1.0) * 255.0 + 0.5);
      img.b(v, u) = static_cast<std::uint8_t>(std::clamp(color.z(), 0.0, 1.0) * 255.0 + 0.5);
    }
  }
  return img;
}

ImageF corrupt_raw_depth(const TwoLayerDepth& gt, const ImageU8& material_mask, std::uint64_t seed,
                         const CorruptionParams& params) {
  const int h = gt.rows(), w = gt.cols();
  if (material_mask.rows() != h || material_mask.cols() != w)
    throw ArgumentError("corrupt_raw_depth: mask size mismatch");
  ImageF raw = ImageF::Zero(h, w);
  std::mt19937_64 rng(splitmix64(seed ^ 0xdeadbeefull));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, params.sigma_d);
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      if (!gt.valid_mask(v, u)) continue;
      const auto mat = static_cast<Material>(material_mask(v, u));
      const double d1 = gt.first(v, u);
      double value = d1 + (params.sigma_d > 0 ? noise(rng) : 0.0);
      switch (mat) {
        case Material::Transparent: {
          const double draw = unit(rng);
          if (draw < params.p_miss)
            value = 0;
          else if (draw < params.p_miss + params.p_through)
            value = gt.second(v, u) + (params.sigma_d > 0 ? noise(rng) : 0.0);
          break;
        }
        case Material::Specular:
          if (unit(rng) < params.p_spec) value = 0;
          break;
        default:
          break;
      }
      raw(v, u) = static_cast<float>(std::max(0.0, value));
    }
  }
  return raw;
}

}  // namespace asgrasp
