#pragma once

#include "asgrasp/camgeom.hpp"
#include "asgrasp/scene.hpp"

namespace asgrasp {

// Deterministic pseudo-random projector dot pattern. Dots live on the
// projector's normalized image plane; intensity in [0,1].
struct SpecklePattern {
  std::uint64_t seed = 7;
  double dot_density = 8000;   // dots per steradian around the optical axis
  double fov = 1.4;            // full field of view, radians

  // Pattern brightness along projector-frame direction (x/z, y/z).
  double intensity(double u, double v) const;
};

struct RenderParams {
  double tau = 0.7;            // fraction of projector light transmitted by transparent surfaces
  double rho_spec = 0.3;       // speckle attenuation on specular surfaces
  double sigma_ir = 2.0 / 255; // additive IR sensor noise (image units)
  double spec_dropout = 0.5;   // view-dependent speckle dropout probability on specular surfaces
  double ambient = 0.15;
};

struct RaycastResult {
  TwoLayerDepth depth;
  ImageU8 material_mask;  // Material labels, 0..3
};

// Ground-truth two-layer depth from the RGB camera: first ray hit (object or
// plane) and second object-surface hit along the same ray.
RaycastResult raycast_two_layer(const SceneSpec& spec, const CameraRig& rig);

struct IrPair {
  ImageU8 left, right;
};

IrPair render_ir_pair(const SceneSpec& spec, const CameraRig& rig, const SpecklePattern& pattern,
                      const RenderParams& params = {});

struct RgbImageU8 {
  ImageU8 r, g, b;
};

RgbImageU8 render_rgb(const SceneSpec& spec, const CameraRig& rig);

struct CorruptionParams {
  double sigma_d = 0.002;   // depth noise on diffuse pixels, meters
  double p_miss = 0.5;      // transparent pixel dropped to zero
  double p_through = 0.3;   // transparent pixel replaced by through-surface depth
  double p_spec = 0.3;      // specular pixel dropped to zero
};

// Simulated sensor raw depth: what a conventional matcher would deliver.
ImageF corrupt_raw_depth(const TwoLayerDepth& gt, const ImageU8& material_mask, std::uint64_t seed,
                         const CorruptionParams& params = {});

}  // namespace asgrasp
