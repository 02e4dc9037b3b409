#include "asgrasp/record.hpp"

#include "asgrasp/png_io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>

namespace asgrasp {

namespace fs = std::filesystem;
using nlohmann::json;

bool operator==(const SceneRecord& a, const SceneRecord& b) {
  return a.rgb.r == b.rgb.r && a.rgb.g == b.rgb.g && a.rgb.b == b.rgb.b &&
         a.ir_left == b.ir_left && a.ir_right == b.ir_right && a.gt.first == b.gt.first &&
         a.gt.second == b.gt.second && a.gt.valid_mask == b.gt.valid_mask &&
         a.material_mask == b.material_mask && a.raw_depth == b.raw_depth && a.spec == b.spec;
}

SceneRecord make_record(const SceneSpec& spec, const CameraRig& rig, const SpecklePattern& pattern,
                        const RenderParams& render_params, const CorruptionParams& corruption) {
  SceneRecord record;
  record.spec = spec;
  record.rig = rig;
  record.rgb = render_rgb(spec, rig);
  const IrPair ir = render_ir_pair(spec, rig, pattern, render_params);
  record.ir_left = ir.left;
  record.ir_right = ir.right;
  RaycastResult cast = raycast_two_layer(spec, rig);
  record.gt = std::move(cast.depth);
  record.material_mask = std::move(cast.material_mask);
  record.raw_depth = corrupt_raw_depth(record.gt, record.material_mask, spec.seed, corruption);
  return record;
}

void write_f32(const fs::path& path, const ImageF& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(img.data()),
            static_cast<std::streamsize>(sizeof(float) * img.size()));
}

ImageF read_f32(const fs::path& path, int rows, int cols) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  ImageF img(rows, cols);
  in.read(reinterpret_cast<char*>(img.data()),
          static_cast<std::streamsize>(sizeof(float) * img.size()));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(float) * img.size()))
    throw DataError("truncated depth file: " + path.string());
  return img;
}

void write_record(const SceneRecord& record, const fs::path& dir) {
  fs::create_directories(dir);
  write_png_rgb((dir / "rgb.png").string(), record.rgb.r, record.rgb.g, record.rgb.b);
  write_png_gray((dir / "ir_l.png").string(), record.ir_left);
  write_png_gray((dir / "ir_r.png").string(), record.ir_right);
  write_f32(dir / "depth1.f32", record.gt.first);
  write_f32(dir / "depth2.f32", record.gt.second);
  write_f32(dir / "raw.f32", record.raw_depth);
  ImageU8 mask = record.material_mask;
  write_png_gray((dir / "mask.png").string(), mask);

  json meta;
  meta["format_version"] = kRecordFormatVersion;
  meta["width"] = record.rig.rgb.width;
  meta["height"] = record.rig.rgb.height;
  meta["scene"] = scene_to_json(record.spec);
  meta["rig"] = rig_to_json(record.rig);
  std::ofstream out(dir / "meta.json");
  if (!out) throw DataError("cannot write meta.json in " + dir.string());
  out << meta.dump(2) << "\n";
}

SceneRecord read_record(const fs::path& dir) {
  std::ifstream in(dir / "meta.json");
  if (!in) throw DataError("missing meta.json in " + dir.string());
  json meta;
  try {
    in >> meta;
  } catch (const json::exception& e) {
    throw DataError("corrupt meta.json in " + dir.string() + ": " + e.what());
  }
  if (!meta.contains("format_version") || meta["format_version"].get<int>() != kRecordFormatVersion)
    throw DataError("record format version mismatch in " + dir.string());

  SceneRecord record;
  record.spec = scene_from_json(meta.at("scene"));
  record.rig = rig_from_json(meta.at("rig"));
  const int h = meta.at("height"), w = meta.at("width");
  read_png_rgb((dir / "rgb.png").string(), record.rgb.r, record.rgb.g, record.rgb.b);
  record.ir_left = read_png_gray((dir / "ir_l.png").string());
  record.ir_right = read_png_gray((dir / "ir_r.png").string());
  record.gt.first = read_f32(dir / "depth1.f32", h, w);
  record.gt.second = read_f32(dir / "depth2.f32", h, w);
  record.raw_depth = read_f32(dir / "raw.f32", h, w);
  record.material_mask = read_png_gray((dir / "mask.png").string());
  record.gt.valid_mask = ImageU8::Zero(h, w);
  for (int v = 0; v < h; ++v)
    for (int u = 0; u < w; ++u)
      record.gt.valid_mask(v, u) = record.gt.first(v, u) > 0 ? 1 : 0;
  return record;
}

std::vector<fs::path> list_records(const fs::path& root) {
  std::vector<fs::path> out;
  if (!fs::exists(root)) return out;
  for (const auto& scene : fs::directory_iterator(root)) {
    if (!scene.is_directory()) continue;
    for (const auto& view : fs::directory_iterator(scene.path())) {
      if (view.is_directory() && fs::exists(view.path() / "meta.json")) out.push_back(view.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace asgrasp
