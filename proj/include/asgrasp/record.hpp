#pragma once

#include "asgrasp/camgeom.hpp"
#include "asgrasp/render.hpp"
#include "asgrasp/scene.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace asgrasp {

inline constexpr int kRecordFormatVersion = 1;

// One rendered view of one scene, as stored on disk.
struct SceneRecord {
  RgbImageU8 rgb;
  ImageU8 ir_left, ir_right;
  TwoLayerDepth gt;
  ImageU8 material_mask;
  ImageF raw_depth;
  SceneSpec spec;
  CameraRig rig;
};

bool operator==(const SceneRecord& a, const SceneRecord& b);

// Renders every channel of a record for one scene/view.
SceneRecord make_record(const SceneSpec& spec, const CameraRig& rig, const SpecklePattern& pattern,
                        const RenderParams& render_params = {},
                        const CorruptionParams& corruption = {});

// Layout: <dir>/rgb.png, ir_l.png, ir_r.png, depth1.f32, depth2.f32,
// raw.f32, mask.png, meta.json. Depth files are row-major little-endian f32.
void write_record(const SceneRecord& record, const std::filesystem::path& dir);
SceneRecord read_record(const std::filesystem::path& dir);

// All record directories under a dataset root, sorted by path.
std::vector<std::filesystem::path> list_records(const std::filesystem::path& root);

void write_f32(const std::filesystem::path& path, const ImageF& img);
ImageF read_f32(const std::filesystem::path& path, int rows, int cols);

}  // namespace asgrasp
