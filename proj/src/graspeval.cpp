#include "asgrasp/graspeval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <numeric>
#include <random>
#include <unordered_map>

#include <Eigen/Eigenvalues>

namespace asgrasp {

ImageF resize_bilinear(const ImageF& img, int out_h, int out_w) {
  const int h = static_cast<int>(img.rows()), w = static_cast<int>(img.cols());
  if (out_h <= 0 || out_w <= 0) throw ArgumentError("resize: nonpositive output size");
  ImageF out(out_h, out_w);
  const double sy = static_cast<double>(h) / out_h;
  const double sx = static_cast<double>(w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    const double fy = std::min(std::max((y + 0.5) * sy - 0.5, 0.0), h - 1.0);
    const int y0 = std::min(static_cast<int>(fy), h - 2 >= 0 ? h - 2 : 0);
    const double wy = fy - y0;
    for (int x = 0; x < out_w; ++x) {
      const double fx = std::min(std::max((x + 0.5) * sx - 0.5, 0.0), w - 1.0);
      const int x0 = std::min(static_cast<int>(fx), w - 2 >= 0 ? w - 2 : 0);
      const double wx = fx - x0;
      const double v = (1 - wy) * ((1 - wx) * img(y0, x0) + wx * img(y0, std::min(x0 + 1, w - 1))) +
                       wy * ((1 - wx) * img(std::min(y0 + 1, h - 1), x0) +
                             wx * img(std::min(y0 + 1, h - 1), std::min(x0 + 1, w - 1)));
      out(y, x) = static_cast<float>(v);
    }
  }
  return out;
}

ImageU8 resize_nearest(const ImageU8& img, int out_h, int out_w) {
  const int h = static_cast<int>(img.rows()), w = static_cast<int>(img.cols());
  ImageU8 out(out_h, out_w);
  for (int y = 0; y < out_h; ++y)
    for (int x = 0; x < out_w; ++x)
      out(y, x) = img(std::min(h - 1, y * h / out_h), std::min(w - 1, x * w / out_w));
  return out;
}

DepthMetrics depth_metrics(const ImageF& pred, const ImageF& gt, const ImageU8& mask,
                           int eval_height, int eval_width) {
  if (pred.rows() != gt.rows() || pred.cols() != gt.cols() || mask.rows() != gt.rows() ||
      mask.cols() != gt.cols())
    throw ArgumentError("depth_metrics: size mismatch");

  const ImageF* p = &pred;
  const ImageF* g = &gt;
  const ImageU8* m = &mask;
  ImageF pr, gr;
  ImageU8 mr;
  if (eval_height > 0 && eval_width > 0) {
    pr = resize_bilinear(pred, eval_height, eval_width);
    gr = resize_bilinear(gt, eval_height, eval_width);
    mr = resize_nearest(mask, eval_height, eval_width);
    p = &pr;
    g = &gr;
    m = &mr;
  }

  double se = 0, ae = 0, re = 0;
  long n = 0;
  for (int y = 0; y < p->rows(); ++y) {
    for (int x = 0; x < p->cols(); ++x) {
      if (!(*m)(y, x)) continue;
      const double gv = (*g)(y, x);
      if (gv <= 0) throw ArgumentError("depth_metrics: nonpositive ground truth on mask");
      const double e = (*p)(y, x) - gv;
      se += e * e;
      ae += std::abs(e);
      re += std::abs(e) / gv;
      ++n;
    }
  }
  if (n == 0) throw ArgumentError("depth_metrics: empty mask");
  return {std::sqrt(se / n), re / n, ae / n};
}

GraspInput assemble_grasp_input(const TwoLayerDepth& depths, const CameraIntrinsics& K,
                                std::uint64_t seed, const GraspInputParams& params) {
  TwoLayerClouds clouds = two_layer_to_pointcloud(depths, K, params.layer_eps);
  auto crop = [&](PointCloud& cloud) {
    std::erase_if(cloud, [&](const Vec3& p) {
      return p.z() < params.crop_min || p.z() > params.crop_max;
    });
  };
  crop(clouds.visible);
  crop(clouds.invisible);
  if (clouds.visible.empty())
    throw DataError("assemble_grasp_input: no visible points inside the crop range");

  std::mt19937_64 rng(seed);
  auto downsample = [&rng](PointCloud& cloud, int cap) {
    if (static_cast<int>(cloud.size()) <= cap) return;
    // Seeded partial Fisher-Yates: the first `cap` entries become the sample.
    for (int i = 0; i < cap; ++i) {
      std::uniform_int_distribution<size_t> pick(i, cloud.size() - 1);
      std::swap(cloud[i], cloud[pick(rng)]);
    }
    cloud.resize(cap);
  };
  downsample(clouds.visible, params.visible_cap);
  downsample(clouds.invisible, params.invisible_cap);
  return {std::move(clouds.visible), std::move(clouds.invisible)};
}

namespace {

// RANSAC dominant-plane detection: the tabletop dominates a tabletop scene's
// cloud, and its points both camouflage free-space pinches (they provide
// "enclosure" between fingers hovering over the table) and waste pair
// samples. Returns true, with the plane in (plane_n, plane_d), only when a
// plane explains at least min_support of the cloud.
bool find_dominant_plane(const std::vector<Vec3>& points, double tol, double min_support,
                         std::uint64_t seed, Vec3& plane_n, double& plane_d) {
  const int n = static_cast<int>(points.size());
  if (n < 30) return false;
  std::mt19937_64 rng(seed ^ 0xc2b2ae3d27d4eb4full);
  std::uniform_int_distribution<int> pick(0, n - 1);
  int best_inliers = 0;
  for (int it = 0; it < 200; ++it) {
    const Vec3& a = points[pick(rng)];
    const Vec3& b = points[pick(rng)];
    const Vec3& c = points[pick(rng)];
    Vec3 nrm = (b - a).cross(c - a);
    if (nrm.norm() < 1e-9) continue;
    nrm.normalize();
    const double d = nrm.dot(a);
    int inliers = 0;
    for (const Vec3& p : points)
      if (std::abs(nrm.dot(p) - d) < tol) ++inliers;
    if (inliers > best_inliers) {
      best_inliers = inliers;
      plane_n = nrm;
      plane_d = d;
    }
  }
  return best_inliers >= min_support * n;
}

// Statistical outlier removal: drop points whose mean distance to their k
// nearest neighbors is far above the cloud-wide average. Depth maps produce
// "flying" points at occlusion boundaries that sit in free space between
// surfaces; they attract antipodal pairings with meaningless normals.
// Returns the kept indices in their original order.
std::vector<int> filter_outliers(const std::vector<Vec3>& points, int k, double stddev_mult) {
  const int n = static_cast<int>(points.size());
  std::vector<int> kept(n);
  std::iota(kept.begin(), kept.end(), 0);
  if (n <= k + 1) return kept;
  std::vector<double> mean_dist(n);
  std::vector<std::pair<double, int>> dist(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) dist[j] = {(points[j] - points[i]).squaredNorm(), j};
    std::nth_element(dist.begin(), dist.begin() + k, dist.end());
    double acc = 0;
    for (int j = 1; j <= k; ++j) acc += std::sqrt(dist[j].first);
    mean_dist[i] = acc / k;
  }
  double mu = 0;
  for (double d : mean_dist) mu += d;
  mu /= n;
  double var = 0;
  for (double d : mean_dist) var += (d - mu) * (d - mu);
  const double cutoff = mu + stddev_mult * std::sqrt(var / n);
  kept.clear();
  for (int i = 0; i < n; ++i)
    if (mean_dist[i] <= cutoff) kept.push_back(i);
  return kept;
}

// PCA normals from the k nearest neighbors, oriented by provenance: visible
// points face the camera, invisible (back-surface) points face away.
std::vector<Vec3> estimate_normals(const std::vector<Vec3>& points, int visible_count, int k) {
  const int n = static_cast<int>(points.size());
  std::vector<Vec3> normals(n, Vec3::UnitZ());
  if (n < 3) return normals;
  k = std::min(k, n - 1);
  std::vector<std::pair<double, int>> dist(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) dist[j] = {(points[j] - points[i]).squaredNorm(), j};
    std::nth_element(dist.begin(), dist.begin() + k, dist.end());
    Vec3 mean = Vec3::Zero();
    for (int j = 0; j <= k; ++j) mean += points[dist[j].second];
    mean /= (k + 1);
    Mat3 cov = Mat3::Zero();
    for (int j = 0; j <= k; ++j) {
      const Vec3 d = points[dist[j].second] - mean;
      cov += d * d.transpose();
    }
    Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    Vec3 normal = eig.eigenvectors().col(0);
    const double toward_camera = -normal.dot(points[i]);
    if (i < visible_count ? toward_camera < 0 : toward_camera > 0) normal = -normal;
    normals[i] = normal;
  }
  return normals;
}

struct GraspFrame {
  Vec3 x, y, z;
};

// x = closing axis; z = approach, perpendicular to x and as close to the
// camera viewing direction as possible.
GraspFrame make_grasp_frame(const Vec3& axis, const Vec3& center) {
  GraspFrame f;
  f.x = axis.normalized();
  Vec3 view = center.norm() > 1e-9 ? center.normalized() : Vec3::UnitZ();
  Vec3 z = view - view.dot(f.x) * f.x;
  if (z.norm() < 1e-6) {
    z = Vec3::UnitY() - Vec3::UnitY().dot(f.x) * f.x;
    if (z.norm() < 1e-6) z = Vec3::UnitZ() - Vec3::UnitZ().dot(f.x) * f.x;
  }
  f.z = z.normalized();
  f.y = f.z.cross(f.x).normalized();
  return f;
}

Mat3 frame_to_rotation(const GraspFrame& f) {
  Mat3 r;
  r.col(0) = f.x;
  r.col(1) = f.y;
  r.col(2) = f.z;
  return r;
}

bool point_in_gripper_body(const Vec3& q, double width, const GripperParams& g) {
  const double half_fh = g.finger_height / 2;
  // fingers
  if (std::abs(q.y()) <= half_fh && q.z() >= -g.finger_reach && q.z() <= 0.004) {
    const double ax = std::abs(q.x());
    if (ax >= width / 2 && ax <= width / 2 + g.finger_thickness) return true;
  }
  // palm
  if (std::abs(q.x()) <= width / 2 + g.finger_thickness && std::abs(q.y()) <= half_fh &&
      q.z() >= -g.finger_reach - g.palm_depth && q.z() <= -g.finger_reach)
    return true;
  return false;
}

}  // namespace

std::vector<GraspPose> propose_antipodal_grasps(const GraspInput& input,
                                                const ProposerParams& params, std::uint64_t seed) {
  if (input.visible.empty()) throw ArgumentError("propose: empty visible cloud");

  // Collision pruning tests the gripper against everything the camera saw,
  // including the tabletop points that are stripped before pairing below.
  const std::vector<Vec3>& obstacle_pts = input.visible;

  // Per-layer cleanup, so the visible pipeline behaves identically whether or
  // not a hidden layer is present: strip the dominant plane (the tabletop),
  // then drop sparse outliers ("flying" occlusion-boundary points).
  std::vector<Vec3> vis = input.visible;
  std::vector<Vec3> invis = input.invisible;
  {
    Vec3 plane_n = Vec3::UnitZ();
    double plane_d = 0;
    if (find_dominant_plane(vis, 0.008, 0.25, seed, plane_n, plane_d)) {
      auto off_plane = [&](const Vec3& p) {
        return std::abs(plane_n.dot(p) - plane_d) >= 0.008;
      };
      std::vector<Vec3> keep;
      for (const Vec3& p : vis)
        if (off_plane(p)) keep.push_back(p);
      if (keep.size() >= 16) vis = std::move(keep);
      keep.clear();
      for (const Vec3& p : invis)
        if (off_plane(p)) keep.push_back(p);
      invis = std::move(keep);
    }
    auto drop_outliers = [](std::vector<Vec3>& cloud) {
      const std::vector<int> kept = filter_outliers(cloud, 8, 1.0);
      if (kept.size() < 3 || kept.size() == cloud.size()) return;
      std::vector<Vec3> filtered;
      filtered.reserve(kept.size());
      for (int i : kept) filtered.push_back(cloud[i]);
      cloud = std::move(filtered);
    };
    drop_outliers(vis);
    drop_outliers(invis);

    // A real back surface sits at most one body length behind some observed
    // front. Hidden-layer points with no observed point anywhere near them
    // are artifacts of the completion and make phantom contacts; drop them.
    if (!invis.empty() && !vis.empty()) {
      std::vector<Vec3> keep;
      for (const Vec3& p : invis) {
        double best = std::numeric_limits<double>::max();
        for (const Vec3& v : vis) best = std::min(best, (v - p).squaredNorm());
        if (best <= 0.04 * 0.04) keep.push_back(p);
      }
      invis = std::move(keep);
    }
  }

  std::vector<Vec3> points = vis;
  points.insert(points.end(), invis.begin(), invis.end());
  const int visible_count = static_cast<int>(vis.size());
  const int n = static_cast<int>(points.size());
  std::vector<GraspPose> proposals;
  if (n < 2 || visible_count < 1) return proposals;

  // The two layers are different physical surfaces, often only a couple of
  // centimetres apart, so normals are estimated per layer; mixing them tilts
  // front-surface normals toward the back surface.
  std::vector<Vec3> normals = estimate_normals(vis, visible_count, params.normal_neighbors);
  {
    const std::vector<Vec3> back = estimate_normals(invis, 0, params.normal_neighbors);
    normals.insert(normals.end(), back.begin(), back.end());
  }

  const double cos_cone = 1.0 / std::sqrt(1.0 + params.friction * params.friction);

  // Spatial hash so the partner point is drawn from the graspable
  // neighborhood instead of the whole cloud.
  const double cell = params.gripper.max_width;
  auto cell_key = [&](const Vec3& p) {
    auto q = [&](double v) { return static_cast<long long>(std::floor(v / cell)); };
    return (q(p.x()) * 73856093LL) ^ (q(p.y()) * 19349663LL) ^ (q(p.z()) * 83492791LL);
  };
  std::unordered_map<long long, std::vector<int>> grid;
  for (int i = 0; i < n; ++i) grid[cell_key(points[i])].push_back(i);
  std::vector<int> nearby;
  auto gather_nearby = [&](int i, bool observed_only) {
    nearby.clear();
    const Vec3& p = points[i];
    for (int dx = -1; dx <= 1; ++dx)
      for (int dy = -1; dy <= 1; ++dy)
        for (int dz = -1; dz <= 1; ++dz) {
          const Vec3 shifted = p + cell * Vec3(dx, dy, dz);
          auto it = grid.find(cell_key(shifted));
          if (it == grid.end()) continue;
          for (int j : it->second) {
            if (observed_only && j >= visible_count) continue;
            if (j != i && (points[j] - p).norm() + params.clearance <= params.gripper.max_width)
              nearby.push_back(j);
          }
        }
  };

  auto consider = [&](int i, int j) {
    const Vec3 diff = points[j] - points[i];
    const double sep = diff.norm();
    if (sep < 0.004 || sep + params.clearance > params.gripper.max_width) return;
    const Vec3 axis = diff / sep;
    const double c1 = -normals[i].dot(axis);  // outward normal at i opposes closing force
    const double c2 = normals[j].dot(axis);
    if (c1 < cos_cone || c2 < cos_cone) return;

    GraspPose g;
    g.center = 0.5 * (points[i] + points[j]);
    const GraspFrame frame = make_grasp_frame(axis, g.center);
    g.rotation = frame_to_rotation(frame);
    const double cone_score =
        std::min(1.0, std::max(0.0, (std::min(c1, c2) - cos_cone) / (1.0 - cos_cone)));

    // Open wider than the contact separation when the clutter allows it: a
    // snug opening fails on bodies whose true chord is slightly larger than
    // the apparent separation.
    const double snug = std::min(sep + params.clearance, params.gripper.max_width);
    const double widths[3] = {std::min(snug + 0.018, params.gripper.max_width),
                              std::min(snug + 0.009, params.gripper.max_width), snug};
    bool placed = false;
    for (const double width : widths) {
      bool collides = false;
      // Obstacles include the tabletop points stripped before pairing.
      for (const Vec3& op : obstacle_pts) {
        if (point_in_gripper_body(g.rotation.transpose() * (op - g.center), width,
                                  params.gripper)) {
          collides = true;
          break;
        }
      }
      if (!collides) {
        g.width = width;
        placed = true;
        break;
      }
    }
    if (!placed) return;

    // Enclosure: how much observed surface actually lies between the fingers.
    // Anything really sitting there shows the camera its front face, so only
    // the observed layer counts; pairs of stray points enclosing free space
    // score high on normal alignment alone and are gated out here.
    const double half_fh = params.gripper.finger_height / 2;
    int enclosed = 0;
    for (int p = 0; p < visible_count; ++p) {
      const Vec3 q_local = g.rotation.transpose() * (points[p] - g.center);
      if (std::abs(q_local.x()) < g.width / 2 && std::abs(q_local.y()) < half_fh &&
          q_local.z() > -params.gripper.finger_reach && q_local.z() < 0)
        ++enclosed;
    }
    if (enclosed < params.min_enclosed) return;

    // Rank by normal alignment; enclosure saturates quickly and acts as a
    // gate rather than a score. A hidden-layer contact whose view ray runs
    // along the closing axis is discounted: the chord of such a pinch rests
    // entirely on the estimated depth difference between the layers, the
    // least reliable measurement available.
    double trust = 1.0;
    if (i >= visible_count) trust *= 0.6 - 0.55 * std::abs(axis.dot(points[i].normalized()));
    if (j >= visible_count) trust *= 0.6 - 0.55 * std::abs(axis.dot(points[j].normalized()));
    g.q = std::min(1.0, enclosed / 20.0) * cone_score * cone_score * trust;
    proposals.push_back(g);
  };

  // Phase one: pairs within the observed layer. The draw sequence depends
  // only on the visible cloud, so reconstructions with and without a hidden
  // layer consider exactly the same observed-layer candidates.
  {
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
    std::uniform_int_distribution<int> pick(0, visible_count - 1);
    for (int s = 0; s < params.pair_samples; ++s) {
      const int i = pick(rng);
      gather_nearby(i, true);
      if (nearby.empty()) continue;
      consider(i, nearby[std::uniform_int_distribution<size_t>(0, nearby.size() - 1)(rng)]);
    }
  }
  // Phase two: pairs that need the hidden layer (e.g. the far side of a
  // transparent object).
  if (!invis.empty()) {
    std::mt19937_64 rng(seed ^ 0x853c49e6748fea9bull);
    std::uniform_int_distribution<int> pick(0, n - 1);
    for (int s = 0; s < params.pair_samples; ++s) {
      const int i = pick(rng);
      gather_nearby(i, false);
      if (nearby.empty()) continue;
      const int j = nearby[std::uniform_int_distribution<size_t>(0, nearby.size() - 1)(rng)];
      if (i < visible_count && j < visible_count) continue;  // covered by phase one
      consider(i, j);
    }
  }

  // Consensus: a genuinely graspable site attracts many independent pair
  // samples, while a pair manufactured by depth noise stands alone. Count how
  // many proposals land in the same pose bucket and discount the loners.
  {
    std::unordered_map<long long, int> support;
    auto pose_key = [](const GraspPose& g) {
      auto q = [](double v) { return static_cast<long long>(std::floor(v / 0.015)); };
      const Vec3 a = g.rotation.col(0);
      const int octant = (a.x() > 0) | ((a.y() > 0) << 1) | ((a.z() > 0) << 2);
      // The closing axis is sign-ambiguous; fold opposite octants together.
      const int fold = std::min(octant, 7 - octant);
      return (((q(g.center.x()) * 73856093LL) ^ (q(g.center.y()) * 19349663LL) ^
               (q(g.center.z()) * 83492791LL)) << 3) | fold;
    };
    for (const GraspPose& g : proposals) ++support[pose_key(g)];
    for (GraspPose& g : proposals) g.q *= std::min(1.0, support[pose_key(g)] / 8.0);
  }

  std::sort(proposals.begin(), proposals.end(),
            [](const GraspPose& a, const GraspPose& b) { return a.q > b.q; });
  if (static_cast<int>(proposals.size()) > params.max_proposals)
    proposals.resize(params.max_proposals);
  return proposals;
}

GraspVerdict score_grasp_against_gt(const GraspPose& grasp_cam, const SceneSpec& spec,
                                    const ScorerParams& params) {
  GraspVerdict verdict;
  const RelativePose cam_to_world = spec.camera_pose.inverse();
  const Vec3 center = cam_to_world.apply(grasp_cam.center);
  const Mat3 rot = cam_to_world.rotation * grasp_cam.rotation;
  const Vec3 x_axis = rot.col(0), y_axis = rot.col(1), z_axis = rot.col(2);
  const GripperParams& grip = params.gripper;

  // (a) the closing region must contain exactly one object
  int target = -1;
  {
    bool multiple = false;
    const int nx = 9, ny = 5, nz = 7;
    for (int oi = 0; oi < static_cast<int>(spec.objects.size()); ++oi) {
      bool inside = false;
      for (int ix = 0; ix < nx && !inside; ++ix) {
        const double lx = (ix / (nx - 1.0) - 0.5) * grasp_cam.width;
        for (int iy = 0; iy < ny && !inside; ++iy) {
          const double ly = (iy / (ny - 1.0) - 0.5) * grip.finger_height;
          for (int iz = 0; iz < nz && !inside; ++iz) {
            const double lz = -grip.finger_reach * iz / (nz - 1.0);
            const Vec3 probe = center + lx * x_axis + ly * y_axis + lz * z_axis;
            inside = point_inside_object(probe, spec.objects[oi]);
          }
        }
      }
      if (inside) {
        if (target >= 0) multiple = true;
        target = oi;
      }
    }
    if (target < 0) {
      verdict.reason = "closing region empty";
      return verdict;
    }
    if (multiple) {
      verdict.reason = "closing region spans multiple objects";
      return verdict;
    }
  }
  verdict.object_id = target;

  // (b) force closure of the first contacts made by the closing finger pads.
  // The pads are rigid rectangles, so each finger first touches the target's
  // extreme points along the closing axis within the pad footprint; probe a
  // grid of parallel closing lines across the footprint. A pad presses on a
  // contact patch rather than a mathematical point, so every hit within the
  // contact tolerance of the extreme counts as touching, and the patch grips
  // if its best-aligned contact lies inside the friction cone.
  {
    std::vector<SurfaceHit> hits;
    const int ny = 3, nz = 7;
    for (int iy = 0; iy < ny; ++iy) {
      const double ly = (iy / (ny - 1.0) - 0.5) * grip.finger_height;
      for (int iz = 0; iz < nz; ++iz) {
        const double lz = -grip.finger_reach * iz / (nz - 1.0);
        const Vec3 origin = center + ly * y_axis + lz * z_axis;
        for (const auto& h : intersect_object_line(origin, x_axis, spec.objects[target],
                                                   target))
          hits.push_back(h);
      }
    }
    if (hits.empty()) {
      verdict.reason = "finger pads miss the object";
      return verdict;
    }
    double t_lo = hits.front().t, t_hi = hits.front().t;
    for (const auto& h : hits) {
      t_lo = std::min(t_lo, h.t);
      t_hi = std::max(t_hi, h.t);
    }
    const double chord = t_hi - t_lo;
    if (chord > grasp_cam.width + params.contact_tolerance || chord > grip.max_width) {
      verdict.reason = "object wider than the gripper opening";
      return verdict;
    }
    double align_lo = -1, align_hi = -1;
    for (const auto& h : hits) {
      if (h.t <= t_lo + params.contact_tolerance)
        align_lo = std::max(align_lo, -h.normal.dot(x_axis));
      if (h.t >= t_hi - params.contact_tolerance)
        align_hi = std::max(align_hi, h.normal.dot(x_axis));
    }
    const double cos_cone =
        1.0 / std::sqrt(1.0 + params.friction_eval * params.friction_eval);
    if (align_lo < cos_cone || align_hi < cos_cone) {
      verdict.reason = "contact normals outside the friction cone";
      return verdict;
    }
  }

  // (c) gripper body free of other objects and the plane
  {
    const int nx = 5, ny = 3, nz = 9;
    auto probe_boxes = [&](auto&& test) {
      for (int side = -1; side <= 1; side += 2) {
        for (int ix = 0; ix < nx; ++ix) {
          const double lx =
              side * (grasp_cam.width / 2 + grip.finger_thickness * ix / (nx - 1.0));
          for (int iy = 0; iy < ny; ++iy) {
            const double ly = (iy / (ny - 1.0) - 0.5) * grip.finger_height;
            for (int iz = 0; iz < nz; ++iz) {
              const double lz = -grip.finger_reach * iz / (nz - 1.0);
              if (test(center + lx * x_axis + ly * y_axis + lz * z_axis)) return true;
            }
          }
        }
      }
      // palm slab
      for (int ix = 0; ix < 2 * nx; ++ix) {
        const double lx =
            (ix / (2 * nx - 1.0) - 0.5) * (grasp_cam.width + 2 * grip.finger_thickness);
        for (int iy = 0; iy < ny; ++iy) {
          const double ly = (iy / (ny - 1.0) - 0.5) * grip.finger_height;
          for (int iz = 0; iz < 3; ++iz) {
            const double lz = -grip.finger_reach - grip.palm_depth * iz / 2.0;
            if (test(center + lx * x_axis + ly * y_axis + lz * z_axis)) return true;
          }
        }
      }
      return false;
    };
    const bool collides = probe_boxes([&](const Vec3& p) {
      if (p.z() < spec.plane_height) return true;
      for (int oi = 0; oi < static_cast<int>(spec.objects.size()); ++oi) {
        if (oi == target) continue;
        if (point_inside_object(p, spec.objects[oi])) return true;
      }
      return false;
    });
    if (collides) {
      verdict.reason = "gripper collides with the scene";
      return verdict;
    }
  }

  verdict.success = true;
  verdict.reason = "ok";
  return verdict;
}

const char* termination_name(Termination t) {
  switch (t) {
    case Termination::Cleared: return "cleared";
    case Termination::NoGrasp: return "no_grasp";
    case Termination::TwoFailures: return "two_failures";
    case Termination::AttemptCap: return "attempt_cap";
  }
  return "?";
}

namespace {

TwoLayerDepth observe_depth(const SceneSpec& spec, const CameraRig& rig, DepthSource source,
                            const StereoNet* net, const EpisodeParams& params) {
  if (source == DepthSource::GtComplete) return raycast_two_layer(spec, rig).depth;

  if (source == DepthSource::Raw) {
    RaycastResult cast = raycast_two_layer(spec, rig);
    const ImageF raw = corrupt_raw_depth(cast.depth, cast.material_mask, spec.seed,
                                         params.corruption);
    TwoLayerDepth depth;
    depth.first = raw;
    depth.second = raw;
    depth.valid_mask = ImageU8::Zero(raw.rows(), raw.cols());
    for (int v = 0; v < raw.rows(); ++v)
      for (int u = 0; u < raw.cols(); ++u) depth.valid_mask(v, u) = raw(v, u) > 0 ? 1 : 0;
    return depth;
  }

  if (!net) throw ArgumentError("episode: reconstructed source requires a network");
  const RgbImageU8 rgb = render_rgb(spec, rig);
  const IrPair ir = render_ir_pair(spec, rig, params.pattern, params.render);
  const int iters = params.net_iterations > 0 ? params.net_iterations : net->config().iterations;
  ReconstructionOutput recon =
      net->reconstruct(to_float01_rgb(rgb.r, rgb.g, rgb.b), to_float01(ir.left),
                       to_float01(ir.right), rig, net->hypothesis_grid(), iters);
  if (source == DepthSource::ReconVisible) recon.depth.second = recon.depth.first;
  return recon.depth;
}

}  // namespace

EpisodeReport run_declutter_episode(SceneSpec spec, const CameraRig& rig, DepthSource source,
                                    const StereoNet* net, const EpisodeParams& params) {
  EpisodeReport report;
  report.total_objects = static_cast<int>(spec.objects.size());
  if (report.total_objects == 0) throw ArgumentError("episode: scene has no objects");
  for (const auto& obj : spec.objects)
    ++report.total_by_material[static_cast<int>(obj.material)];

  int consecutive_failures = 0;
  int step = 0;
  while (true) {
    if (spec.objects.empty()) {
      report.termination = Termination::Cleared;
      break;
    }
    if (report.attempts >= params.attempt_cap) {
      report.termination = Termination::AttemptCap;
      break;
    }

    std::vector<GraspPose> proposals;
    if (params.propose_override) {
      proposals = params.propose_override(spec, step);
    } else {
      try {
        const TwoLayerDepth depth = observe_depth(spec, rig, source, net, params);
        const GraspInput input =
            assemble_grasp_input(depth, rig.rgb, spec.seed + 1000 * step, params.input);
        proposals = propose_antipodal_grasps(input, params.proposer, spec.seed + 7777 * step);
      } catch (const DataError&) {
        // empty cloud inside the crop: nothing to grasp from this observation
      }
    }
    ++step;
    if (proposals.empty()) {
      ++report.zero_proposal_steps;
      report.termination = Termination::NoGrasp;
      break;
    }

    const GraspPose& best = proposals.front();
    const GraspVerdict verdict = params.score_override
                                     ? params.score_override(best, spec, report.attempts)
                                     : score_grasp_against_gt(best, spec, params.scorer);
    ++report.attempts;
    if (verdict.success && verdict.object_id >= 0 &&
        verdict.object_id < static_cast<int>(spec.objects.size())) {
      ++report.successes;
      ++report.removed;
      ++report.removed_by_material[static_cast<int>(
          spec.objects[verdict.object_id].material)];
      spec.objects.erase(spec.objects.begin() + verdict.object_id);
      consecutive_failures = 0;
    } else {
      if (++consecutive_failures >= 2) {
        report.termination = Termination::TwoFailures;
        break;
      }
    }
  }
  return report;
}

SrDr aggregate_sr_dr(const std::vector<EpisodeReport>& reports) {
  if (reports.empty()) throw ArgumentError("aggregate_sr_dr: no reports");
  long attempts = 0, successes = 0;
  double dr_sum = 0;
  for (const auto& r : reports) {
    attempts += r.attempts;
    successes += r.successes;
    dr_sum += r.total_objects > 0 ? static_cast<double>(r.removed) / r.total_objects : 0.0;
  }
  SrDr out;
  if (attempts > 0) out.success_rate = static_cast<double>(successes) / attempts;
  out.declutter_rate = dr_sum / static_cast<double>(reports.size());
  return out;
}

}  // namespace asgrasp
