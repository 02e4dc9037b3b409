// End-to-end acceptance gate. Each criterion prints exactly one PASS/FAIL
// line; the exit status is the number of failed criteria.

#include "asgrasp/config.hpp"
#include "asgrasp/graspeval.hpp"
#include "asgrasp/losses.hpp"
#include "asgrasp/record.hpp"
#include "asgrasp/render.hpp"
#include "asgrasp/scene.hpp"
#include "asgrasp/stereonet.hpp"
#include "asgrasp/train.hpp"

#include <Eigen/Geometry>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace asgrasp;

namespace {

struct Clock {
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
};

int g_failures = 0;

void report(int index, const std::string& name, bool pass, const std::string& detail) {
  std::printf("[%d] %s: %s (%s)\n", index, name.c_str(), pass ? "PASS" : "FAIL",
              detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Criterion 1: projection, backprojection, warping, and the hypothesis grid
// against independent brute-force references.

bool criterion_geometry(std::string& detail) {
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double max_err = 0;
  int cases = 0;

  auto random_intrinsics = [&]() {
    CameraIntrinsics K;
    K.width = 64;
    K.height = 48;
    K.fx = 80 + 300 * u(rng);
    K.fy = 80 + 300 * u(rng);
    K.cx = K.width / 2.0 + 6 * (u(rng) - 0.5);
    K.cy = K.height / 2.0 + 6 * (u(rng) - 0.5);
    return K;
  };

  // project/backproject round trip
  for (int c = 0; c < 1000; ++c) {
    const CameraIntrinsics K = random_intrinsics();
    const Vec2 px(u(rng) * (K.width - 1), u(rng) * (K.height - 1));
    const double depth = 0.2 + 2.0 * u(rng);
    const Vec3 p = backproject(px, depth, K);
    max_err = std::max(max_err, std::abs(p.z() - depth));
    const Vec2 back = project(p, K);
    max_err = std::max(max_err, (back - px).norm());
    ++cases;
  }

  // warp against an explicit homogeneous-matrix reference
  for (int c = 0; c < 1000; ++c) {
    const CameraIntrinsics K_ref = random_intrinsics();
    const CameraIntrinsics K_ir = random_intrinsics();
    RelativePose pose;
    const Vec3 axis = Vec3(u(rng) - 0.5, u(rng) - 0.5, u(rng) - 0.5).normalized();
    pose.rotation = Eigen::AngleAxisd(0.4 * (u(rng) - 0.5), axis).toRotationMatrix();
    pose.translation = Vec3(0.2 * (u(rng) - 0.5), 0.2 * (u(rng) - 0.5), 0.2 * (u(rng) - 0.5));

    const Vec2 px(u(rng) * (K_ref.width - 1), u(rng) * (K_ref.height - 1));
    const double depth = 0.3 + 2.0 * u(rng);

    Eigen::Matrix4d T = Eigen::Matrix4d::Identity();
    T.block<3, 3>(0, 0) = pose.rotation;
    T.block<3, 1>(0, 3) = pose.translation;
    Eigen::Vector4d hom;
    hom << depth * (px.x() - K_ref.cx) / K_ref.fx, depth * (px.y() - K_ref.cy) / K_ref.fy,
        depth, 1.0;
    const Eigen::Vector4d q = T * hom;

    const WarpResult w = warp_pixel(px, depth, K_ref, K_ir, pose);
    if (q.z() <= 0) {
      if (w.valid) {
        detail = "warp reported valid behind the camera";
        return false;
      }
      continue;
    }
    const Vec2 expect(K_ir.fx * q.x() / q.z() + K_ir.cx, K_ir.fy * q.y() / q.z() + K_ir.cy);
    if (!w.valid) {
      detail = "warp reported invalid in front of the camera";
      return false;
    }
    max_err = std::max(max_err, (w.pixel - expect).norm());
    ++cases;
  }

  // hypothesis grid: endpoints and uniform inverse-depth spacing
  for (int c = 0; c < 1000; ++c) {
    const double d_min = 0.2 + u(rng);
    const double d_max = d_min + 0.2 + 2.0 * u(rng);
    const int count = 2 + static_cast<int>(u(rng) * 30);
    const HypothesisGrid grid = make_hypotheses(d_min, d_max, count);
    const double inv0 = 1.0 / d_min, inv1 = 1.0 / d_max;
    for (int i = 0; i < count; ++i) {
      const double expect = 1.0 / (inv0 + i * (inv1 - inv0) / (count - 1));
      max_err = std::max(max_err, std::abs(grid.values[i] - expect));
    }
    ++cases;
  }

  detail = std::to_string(cases) + " cases, max err " + fmt(max_err);
  return max_err < 1e-9;
}

// ---------------------------------------------------------------------------
// Criterion 2: correlation volume vs a triple-loop reference on 8x8x4.

double bilinear_oracle(const nn::Array& f, const CameraIntrinsics& K_ref,
                       const CameraIntrinsics& K, const RelativePose& pose, int x, int y,
                       double depth, int c, int hh, int ww, bool& ok) {
  const WarpResult w = warp_pixel(Vec2(x, y), depth, K_ref, K, pose);
  double u = w.pixel.x(), v = w.pixel.y();
  const double snap = 1e-6;
  if (u > -snap && u < 0) u = 0;
  if (v > -snap && v < 0) v = 0;
  if (u > K.width - 1 && u < K.width - 1 + snap) u = K.width - 1;
  if (v > K.height - 1 && v < K.height - 1 + snap) v = K.height - 1;
  if (!w.valid || u < 0 || u > K.width - 1 || v < 0 || v > K.height - 1) {
    ok = false;
    return 0.0;
  }
  ok = true;
  const int x0 = std::min(static_cast<int>(u), K.width - 2);
  const int y0 = std::min(static_cast<int>(v), K.height - 2);
  const double fu = u - x0, fv = v - y0;
  auto at = [&](int yy, int xx) { return static_cast<double>(f((c * hh + yy) * ww + xx)); };
  return (1 - fu) * (1 - fv) * at(y0, x0) + fu * (1 - fv) * at(y0, x0 + 1) +
         (1 - fu) * fv * at(y0 + 1, x0) + fu * fv * at(y0 + 1, x0 + 1);
}

bool criterion_cost_volume(std::string& detail) {
  const int hh = 8, ww = 8, ch = 4, nhyp = 4;
  const CameraRig rig = make_default_rig(ww, hh);
  const HypothesisGrid grid = make_hypotheses(0.4, 1.2, nhyp);
  auto warps = make_warp_table(rig, grid, 1);

  std::mt19937_64 rng(7);
  std::uniform_real_distribution<float> uf(-1.0f, 1.0f);
  nn::Array fl(ch * hh * ww), fr(ch * hh * ww);
  for (int i = 0; i < fl.size(); ++i) {
    fl(i) = uf(rng);
    fr(i) = uf(rng);
  }

  nn::Tape tape;
  nn::Tensor cost = tape.cost_volume(tape.constant({ch, hh, ww}, fl),
                                     tape.constant({ch, hh, ww}, fr), warps);

  double max_err = 0;
  for (int hyp = 0; hyp < nhyp; ++hyp)
    for (int y = 0; y < hh; ++y)
      for (int x = 0; x < ww; ++x) {
        double dot = 0;
        bool ok_l = false, ok_r = false;
        for (int c = 0; c < ch; ++c) {
          const double a = bilinear_oracle(fl, rig.rgb, rig.ir_left.intrinsics,
                                           rig.ir_left.pose, x, y, grid.values[hyp], c, hh, ww,
                                           ok_l);
          const double b = bilinear_oracle(fr, rig.rgb, rig.ir_right.intrinsics,
                                           rig.ir_right.pose, x, y, grid.values[hyp], c, hh, ww,
                                           ok_r);
          dot += a * b;
        }
        if (!ok_l || !ok_r) dot = 0;
        max_err = std::max(max_err,
                           std::abs(dot - double(cost.value()((hyp * hh + y) * ww + x))));
      }
  detail = "max err " + fmt(max_err);
  return max_err < 1e-6;
}

// ---------------------------------------------------------------------------
// Criterion 3: finite-difference gradient checks on every learned op, on
// composed network paths, and on the training objective.

bool fd_check(nn::Parameter& p, const std::function<nn::Tensor(nn::Tape&)>& build, double eps,
              double rel_tol, double& worst, int checks = 8, std::uint64_t seed = 99) {
  p.grad = nn::Array::Zero(p.value.size());
  {
    nn::Tape tape;
    nn::Tensor loss = build(tape);
    tape.backward(loss);
  }
  const nn::Array analytic = p.grad;
  auto eval = [&]() {
    nn::Tape tape;
    return static_cast<double>(build(tape).value()(0));
  };

  std::mt19937_64 rng(seed);
  const int n = static_cast<int>(p.value.size());
  const nn::Array saved = p.value;
  bool ok = true;
  for (int c = 0; c < checks; ++c) {
    nn::Array dir(n);
    for (int i = 0; i < n; ++i) dir(i) = (rng() & 1) ? 1.0f : -1.0f;
    p.value = saved + static_cast<float>(eps) * dir;
    const double hi = eval();
    p.value = saved - static_cast<float>(eps) * dir;
    const double lo = eval();
    p.value = saved;
    const double fd = (hi - lo) / (2 * eps);
    const double an = static_cast<double>((analytic * dir).sum());
    const double rel =
        std::abs(an - fd) / std::max({std::abs(fd), std::abs(an), 5e-3});
    worst = std::max(worst, rel);
    ok = ok && rel < rel_tol;
  }
  return ok;
}

nn::Array random_arr(int n, std::uint64_t seed, float lo, float hi) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  nn::Array a(n);
  for (int i = 0; i < n; ++i) a(i) = u(rng);
  return a;
}

bool criterion_differentiability(std::string& detail) {
  using nn::Array;
  using nn::Parameter;
  using nn::Tape;
  using nn::Tensor;
  double worst = 0;
  bool ok = true;

  auto mean_l1 = [](Tape& t, Tensor x, float target) {
    const int n = x.shape().size();
    return t.weighted_l1(x, Array::Constant(n, target), Array::Constant(n, 1.0f / n));
  };

  // elementwise and reshaping ops
  Parameter p{"p", {2, 4, 4}, random_arr(32, 1, 0.2f, 0.9f), Array::Zero(32)};
  Parameter q{"q", {2, 4, 4}, random_arr(32, 2, 0.2f, 0.9f), Array::Zero(32)};
  ok &= fd_check(p, [&](Tape& t) { return mean_l1(t, t.mul(t.use(p), t.use(q)), -3); }, 1e-2,
                 1e-2, worst);
  ok &= fd_check(p, [&](Tape& t) { return mean_l1(t, t.sigmoid(t.use(p)), -3); }, 1e-2, 1e-2,
                 worst);
  ok &= fd_check(p, [&](Tape& t) { return mean_l1(t, t.tanh(t.use(p)), -3); }, 1e-2, 1e-2,
                 worst);
  ok &= fd_check(p, [&](Tape& t) { return mean_l1(t, t.relu(t.use(p)), -3); }, 1e-2, 1e-2,
                 worst);
  ok &= fd_check(
      p, [&](Tape& t) { return mean_l1(t, t.concat_c({t.use(p), t.use(q)}), -3); }, 1e-2, 1e-2,
      worst);
  ok &= fd_check(p, [&](Tape& t) { return mean_l1(t, t.avgpool_c2(t.use(p)), -3); }, 1e-2,
                 1e-2, worst);
  ok &= fd_check(
      p, [&](Tape& t) { return mean_l1(t, t.softmax_groups(t.use(p), 2), -3); }, 1e-2, 1e-2,
      worst);
  ok &= fd_check(
      p, [&](Tape& t) { return mean_l1(t, t.upsample_nearest(t.use(p), 2), -3); }, 1e-2, 1e-2,
      worst);
  ok &= fd_check(
      p,
      [&](Tape& t) {
        return t.add_scalars({mean_l1(t, t.use(p), -3), mean_l1(t, t.use(q), -3)},
                             {0.7f, 0.3f});
      },
      1e-2, 1e-2, worst);

  // conv2d
  {
    const int in_c = 2, out_c = 3, k = 3, h = 4, w = 5;
    Parameter x{"x", {in_c, h, w}, random_arr(in_c * h * w, 3, -1, 1),
                Array::Zero(in_c * h * w)};
    Parameter wgt{"w", {out_c, in_c * k * k, 1},
                  random_arr(out_c * in_c * k * k, 4, -0.4f, 0.4f),
                  Array::Zero(out_c * in_c * k * k)};
    Parameter bias{"b", {out_c, 1, 1}, random_arr(out_c, 5, -1, 1), Array::Zero(out_c)};
    auto build = [&](Tape& t) {
      return mean_l1(t, t.conv2d(t.use(x), t.use(wgt), t.use(bias), out_c, k, 1), -8);
    };
    ok &= fd_check(x, build, 1e-2, 1e-2, worst);
    ok &= fd_check(wgt, build, 1e-2, 1e-2, worst);
    ok &= fd_check(bias, build, 1e-2, 1e-2, worst);
  }

  // cost volume
  {
    const int hh = 8, ww = 8, ch = 4;
    const CameraRig rig = make_default_rig(ww, hh);
    auto warps = make_warp_table(rig, make_hypotheses(0.4, 1.2, 4), 1);
    Parameter fl{"fl", {ch, hh, ww}, random_arr(ch * hh * ww, 7, -1, 1),
                 Array::Zero(ch * hh * ww)};
    Parameter fr{"fr", {ch, hh, ww}, random_arr(ch * hh * ww, 8, -1, 1),
                 Array::Zero(ch * hh * ww)};
    auto build = [&](Tape& t) {
      return mean_l1(t, t.cost_volume(t.use(fl), t.use(fr), warps), -8);
    };
    ok &= fd_check(fl, build, 2e-2, 1e-2, worst);
    ok &= fd_check(fr, build, 2e-2, 1e-2, worst);
  }

  // pyramid lookup with respect to the disparity field
  {
    const int hh = 3, ww = 3, nhyp = 8;
    Array vol(nhyp * hh * ww);
    for (int c = 0; c < nhyp; ++c)
      for (int pix = 0; pix < hh * ww; ++pix) vol(c * hh * ww + pix) = 0.5f * c + 0.01f * pix;
    Parameter d{"d", {1, hh, ww}, Array::Constant(hh * ww, 3.3f), Array::Zero(hh * ww)};
    d.value(4) = 1.7f;
    ok &= fd_check(
        d,
        [&](Tape& t) {
          return mean_l1(t, t.lookup({t.constant({nhyp, hh, ww}, vol)}, t.use(d), 1), -9);
        },
        1e-2, 1e-2, worst);
  }

  // convex upsampling
  {
    const int hh = 2, ww = 3;
    Parameter d{"d", {1, hh, ww}, random_arr(hh * ww, 30, 0.0f, 4.0f), Array::Zero(hh * ww)};
    Parameter wraw{"wr", {144, hh, ww}, random_arr(144 * hh * ww, 31, -1, 1),
                   Array::Zero(144 * hh * ww)};
    auto build = [&](Tape& t) {
      return mean_l1(
          t, t.upsample_convex4(t.use(d), t.softmax_groups(t.use(wraw), 9)), -7);
    };
    ok &= fd_check(d, build, 1e-2, 1e-2, worst);
    ok &= fd_check(wraw, build, 1e-2, 1e-2, worst);
  }

  // training objective (piecewise linear; exact off the kinks). Checked
  // per-coordinate with kink-adjacent indices skipped, at the tight
  // tolerance.
  {
    std::mt19937_64 rng(15);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    const int h = 3, w = 4, n = h * w;
    ImageU8 valid = ImageU8::Constant(h, w, 1);
    ImageU8 mask = ImageU8::Zero(h, w);
    mask(1, 1) = 1;
    GeometryLossConfig cfg;
    cfg.iterations = 2;
    const Array weights = geometry_loss_weights(valid, mask, cfg.mask_weight);
    Array g1(n), g2(n);
    Parameter d1{"d1", {1, h, w}, Array(n), Array::Zero(n)};
    Parameter d2{"d2", {1, h, w}, Array(n), Array::Zero(n)};
    for (int i = 0; i < n; ++i) {
      g1(i) = u(rng);
      g2(i) = u(rng);
      d1.value(i) = u(rng);
      d2.value(i) = u(rng);
    }
    auto build = [&](Tape& t) {
      Tensor t1 = t.use(d1);
      Tensor t2 = t.use(d2);
      return geometry_loss(t, {{t1, t2}, {t1, t2}}, g1, g2, weights, cfg);
    };
    Array analytic;
    {
      Tape tape;
      Tensor loss = build(tape);
      tape.backward(loss);
      analytic = d1.grad;
    }
    const double eps = 1.0 / 16;
    for (int i = 0; i < n; ++i) {
      if (std::abs(d1.value(i) - g1(i)) < 2 * eps) continue;
      const float saved = d1.value(i);
      auto eval = [&]() {
        Tape t;
        return static_cast<double>(build(t).value()(0));
      };
      d1.value(i) = static_cast<float>(saved + eps);
      const double hi = eval();
      d1.value(i) = static_cast<float>(saved - eps);
      const double lo = eval();
      d1.value(i) = saved;
      const double fd = (hi - lo) / (2 * eps);
      const double rel = std::abs(analytic(i) - fd) / std::max(std::abs(fd), 1e-6);
      worst = std::max(worst, rel);
      ok = ok && rel < 1e-4;
    }
  }

  // composed network path: full forward plus the training objective,
  // differentiated with respect to parameters from every stage.
  {
    StereoNetConfig cfg;
    cfg.feature_channels = 8;
    cfg.context_channels = 8;
    cfg.hidden_channels = 8;
    cfg.hypothesis_count = 8;
    cfg.lookup_radius = 2;
    cfg.pyramid_levels = 2;
    cfg.iterations = 2;
    cfg.d_min = 0.3;
    cfg.d_max = 1.0;
    StereoNet net(cfg);
    const CameraRig rig = make_default_rig(32, 32);
    const HypothesisGrid grid = net.hypothesis_grid();

    std::mt19937_64 rng(40);
    std::uniform_real_distribution<float> u(0.0f, 1.0f);
    ImageF irl(32, 32), irr(32, 32);
    ImageRGB rgb{ImageF(32, 32), ImageF(32, 32), ImageF(32, 32)};
    const int n = 32 * 32;
    Array g1(n), g2(n);
    for (int v = 0; v < 32; ++v)
      for (int x = 0; x < 32; ++x) {
        irl(v, x) = u(rng);
        irr(v, x) = u(rng);
        rgb.r(v, x) = u(rng);
        rgb.g(v, x) = u(rng);
        rgb.b(v, x) = u(rng);
        g1(v * 32 + x) = 7.0f * u(rng);
        g2(v * 32 + x) = 7.0f * u(rng);
      }
    GeometryLossConfig lcfg;
    lcfg.iterations = cfg.iterations;
    const Array weights =
        geometry_loss_weights(ImageU8::Constant(32, 32, 1), ImageU8::Zero(32, 32), 2.0);

    auto build = [&](Tape& t) {
      StereoNet::ForwardPass pass = net.forward(t, rgb, irl, irr, rig, grid, cfg.iterations);
      return geometry_loss(t, pass.history, g1, g2, weights, lcfg);
    };
    for (const char* name :
         {"feature.conv1.weight", "context.conv1.weight", "gru.z.weight",
          "head1.conv1.weight", "upsample.conv1.weight", "gru.hidden_init.weight"}) {
      ok &= fd_check(net.params().at(name), build, 1e-2, 1e-2, worst, 4,
                     fnv1a64(name));
    }
  }

  detail = "worst rel err " + fmt(worst);
  return ok;
}

// ---------------------------------------------------------------------------
// Criterion 4: raycaster analytics and two-layer ordering.

bool criterion_raycast(std::string& detail) {
  double max_err = 0;

  // sphere straight ahead
  {
    SceneSpec spec;
    spec.seed = 1;
    spec.plane_height = 0;
    SceneObject obj;
    obj.shape = ShapeKind::Sphere;
    obj.pose.translation = Vec3(0, 0, 1.0);
    obj.scale = Vec3::Constant(0.2);
    spec.objects.push_back(obj);
    CameraRig rig = make_default_rig(64, 64);
    const RaycastResult rc = raycast_two_layer(spec, rig);
    const int cy = static_cast<int>(std::lround(rig.rgb.cy));
    const int cx = static_cast<int>(std::lround(rig.rgb.cx));
    // the principal ray passes through the center: hits at 0.8 and 1.2
    max_err = std::max(max_err, std::abs(rc.depth.first(cy, cx) - 0.8));
    max_err = std::max(max_err, std::abs(rc.depth.second(cy, cx) - 1.2));
  }

  // axis-aligned box face-on
  {
    SceneSpec spec;
    spec.seed = 2;
    spec.plane_height = 0;
    SceneObject obj;
    obj.shape = ShapeKind::Box;
    obj.pose.translation = Vec3(0, 0, 1.0);
    obj.scale = Vec3(0.3, 0.3, 0.15);
    spec.objects.push_back(obj);
    CameraRig rig = make_default_rig(64, 64);
    const RaycastResult rc = raycast_two_layer(spec, rig);
    const int cy = static_cast<int>(std::lround(rig.rgb.cy));
    const int cx = static_cast<int>(std::lround(rig.rgb.cx));
    max_err = std::max(max_err, std::abs(rc.depth.first(cy, cx) - 0.85));
    max_err = std::max(max_err, std::abs(rc.depth.second(cy, cx) - 1.15));
  }

  // layer ordering over random scenes
  long violations = 0;
  const CameraRig rig = make_default_rig(96, 72);
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const SceneSpec spec = build_scene(seed, 3 + static_cast<int>(seed % 5), MaterialMix{});
    const RaycastResult rc = raycast_two_layer(spec, rig);
    for (int v = 0; v < rc.depth.rows(); ++v)
      for (int x = 0; x < rc.depth.cols(); ++x)
        if (rc.depth.valid_mask(v, x) &&
            rc.depth.second(v, x) < rc.depth.first(v, x) - 1e-9f)
          ++violations;
  }

  detail = "analytic err " + fmt(max_err) + ", ordering violations " +
           std::to_string(violations) + "/100 scenes";
  return max_err < 1e-6 && violations == 0;
}

// ---------------------------------------------------------------------------
// Criteria 5-7 share one training run on the toy configuration.

struct ToyArtifacts {
  ExperimentConfig cfg;
  std::unique_ptr<StereoNet> net;
  std::vector<SceneRecord> holdout;
  std::vector<double> loss_history;
  bool ready = false;
};

CameraRig toy_rig(const DatasetConfig& d) {
  CameraRig rig = make_default_rig(d.width, d.height);
  rig.projector.pattern_seed = d.pattern.seed;
  return rig;
}

int toy_object_count(const DatasetConfig& d, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0xa5a5a5a5ull);
  return std::uniform_int_distribution<int>(d.object_min, d.object_max)(rng);
}

ToyArtifacts train_toy() {
  ToyArtifacts art;
  art.cfg = make_toy_config();
  const DatasetConfig& d = art.cfg.dataset;
  const CameraRig rig = toy_rig(d);

  const int holdout_count = 20;
  std::vector<SceneRecord> train;
  for (int i = 0; i < d.scene_count; ++i) {
    const std::uint64_t seed = d.seed + static_cast<std::uint64_t>(i);
    const SceneSpec spec = build_scene(seed, toy_object_count(d, seed), d.mix, d.generator);
    SceneRecord rec = make_record(spec, rig, d.pattern, d.render, d.corruption);
    if (i >= d.scene_count - holdout_count)
      art.holdout.push_back(std::move(rec));
    else
      train.push_back(std::move(rec));
  }

  art.net = std::make_unique<StereoNet>(art.cfg.network);
  const TrainResult result = train_network(*art.net, train, art.cfg.training);
  art.loss_history = result.loss_history;
  art.ready = true;
  return art;
}

struct MaeAccum {
  double sum = 0;
  int count = 0;
  void add(double v) {
    sum += v;
    ++count;
  }
  double mean() const { return count ? sum / count : 0.0; }
};

bool criterion_training(const ToyArtifacts& art, std::string& detail) {
  if (!art.ready) {
    detail = "training did not complete";
    return false;
  }
  const HypothesisGrid grid = art.net->hypothesis_grid();
  const int iters = art.cfg.training.iterations > 0 ? art.cfg.training.iterations
                                                    : art.cfg.network.iterations;

  MaeAccum recon_mae, raw_mae;
  for (const SceneRecord& r : art.holdout) {
    ImageU8 hl = ImageU8::Zero(r.gt.rows(), r.gt.cols());
    for (int v = 0; v < r.gt.rows(); ++v)
      for (int x = 0; x < r.gt.cols(); ++x) {
        const auto mat = static_cast<Material>(r.material_mask(v, x));
        hl(v, x) = (r.gt.valid_mask(v, x) &&
                    (mat == Material::Specular || mat == Material::Transparent))
                       ? 1
                       : 0;
      }
    if (hl.sum() == 0) continue;
    const ReconstructionOutput recon = art.net->reconstruct(
        to_float01_rgb(r.rgb.r, r.rgb.g, r.rgb.b), to_float01(r.ir_left),
        to_float01(r.ir_right), r.rig, grid, iters);
    recon_mae.add(depth_metrics(recon.depth.first, r.gt.first, hl).mae);
    raw_mae.add(depth_metrics(r.raw_depth, r.gt.first, hl).mae);
  }

  bool monotone = true;
  const int window = 200;
  std::vector<double> means;
  for (size_t start = 0; start + window <= art.loss_history.size(); start += window) {
    double s = 0;
    for (int i = 0; i < window; ++i) s += art.loss_history[start + i];
    means.push_back(s / window);
  }
  for (size_t i = 1; i < means.size(); ++i) monotone = monotone && means[i] <= means[i - 1];

  std::ostringstream os;
  os << "recon mae " << fmt(recon_mae.mean()) << " vs raw " << fmt(raw_mae.mean())
     << " on challenging pixels; loss windows";
  for (double m : means) os << " " << fmt(m);
  detail = os.str();
  return recon_mae.count > 0 && recon_mae.mean() < 0.5 * raw_mae.mean() && monotone;
}

bool criterion_second_layer(const ToyArtifacts& art, std::string& detail) {
  if (!art.ready) {
    detail = "training did not complete";
    return false;
  }
  const HypothesisGrid grid = art.net->hypothesis_grid();
  const int iters = art.cfg.training.iterations > 0 ? art.cfg.training.iterations
                                                    : art.cfg.network.iterations;

  MaeAccum second_mae, trivial_mae;
  for (const SceneRecord& r : art.holdout) {
    ImageU8 obj = ImageU8::Zero(r.gt.rows(), r.gt.cols());
    for (int v = 0; v < r.gt.rows(); ++v)
      for (int x = 0; x < r.gt.cols(); ++x)
        obj(v, x) = (r.gt.valid_mask(v, x) &&
                     r.material_mask(v, x) != static_cast<int>(Material::Background))
                        ? 1
                        : 0;
    if (obj.sum() == 0) continue;
    const ReconstructionOutput recon = art.net->reconstruct(
        to_float01_rgb(r.rgb.r, r.rgb.g, r.rgb.b), to_float01(r.ir_left),
        to_float01(r.ir_right), r.rig, grid, iters);
    second_mae.add(depth_metrics(recon.depth.second, r.gt.second, obj).mae);
    // trivial baseline: reuse the predicted first layer as the second
    trivial_mae.add(depth_metrics(recon.depth.first, r.gt.second, obj).mae);
  }

  detail = "second-layer mae " + fmt(second_mae.mean()) + " vs first-as-second " +
           fmt(trivial_mae.mean()) + " inside object masks";
  return second_mae.count > 0 && second_mae.mean() < trivial_mae.mean();
}

bool criterion_grasping(const ToyArtifacts& art, std::string& detail) {
  if (!art.ready) {
    detail = "training did not complete";
    return false;
  }
  const EvalConfig& ev = art.cfg.evaluation;
  const CameraRig rig = toy_rig(art.cfg.dataset);

  EpisodeParams params;
  params.input = ev.input;
  params.proposer = ev.proposer;
  params.scorer = ev.scorer;
  params.pattern = art.cfg.dataset.pattern;
  params.render = art.cfg.dataset.render;
  params.corruption = art.cfg.dataset.corruption;
  params.attempt_cap = ev.attempt_cap;
  params.net_iterations = art.cfg.training.iterations;

  const std::vector<DepthSource> sources = {DepthSource::GtComplete, DepthSource::ReconComplete,
                                            DepthSource::ReconVisible, DepthSource::Raw};
  std::vector<std::vector<EpisodeReport>> reports(sources.size());
  for (int e = 0; e < ev.episodes; ++e) {
    const std::uint64_t seed = ev.scene_seed + static_cast<std::uint64_t>(e);
    const SceneSpec spec =
        build_scene(seed, ev.objects_per_scene, ev.mix, art.cfg.dataset.generator);
    for (size_t s = 0; s < sources.size(); ++s)
      reports[s].push_back(
          run_declutter_episode(spec, rig, sources[s], art.net.get(), params));
  }

  const double dr_gt = aggregate_sr_dr(reports[0]).declutter_rate;
  const double dr_rc = aggregate_sr_dr(reports[1]).declutter_rate;
  const double dr_rv = aggregate_sr_dr(reports[2]).declutter_rate;
  const double dr_raw = aggregate_sr_dr(reports[3]).declutter_rate;

  // fixture validating the aggregate formulas
  EpisodeReport fa, fb;
  fa.successes = 2;
  fa.attempts = 4;
  fa.removed = 2;
  fa.total_objects = 4;
  fb.successes = 1;
  fb.attempts = 1;
  fb.removed = 1;
  fb.total_objects = 2;
  const SrDr fixture = aggregate_sr_dr({fa, fb});
  const bool fixture_ok = fixture.success_rate.has_value() &&
                          std::abs(*fixture.success_rate - 0.6) < 1e-12 &&
                          std::abs(fixture.declutter_rate - 0.5) < 1e-12;

  std::ostringstream os;
  os << "DR gt " << fmt(dr_gt) << " >= recon " << fmt(dr_rc) << " >= visible " << fmt(dr_rv)
     << " >= raw " << fmt(dr_raw) << "; fixture " << (fixture_ok ? "ok" : "bad");
  detail = os.str();
  return dr_gt >= dr_rc && dr_rc >= dr_rv && dr_rv >= dr_raw && dr_rc - dr_raw >= 0.25 &&
         fixture_ok;
}

// ---------------------------------------------------------------------------
// Criterion 8: episode protocol on scripted adversaries, and metric formulas
// against direct references.

bool criterion_protocol(std::string& detail) {
  SceneSpec spec;
  spec.seed = 3;
  spec.plane_height = 0;
  for (int i = 0; i < 3; ++i) {
    SceneObject obj;
    obj.shape = ShapeKind::Sphere;
    obj.pose.translation = Vec3(0.06 * i, 0, 0.5);
    obj.scale = Vec3::Constant(0.02);
    spec.objects.push_back(obj);
  }
  const CameraRig rig = make_default_rig(32, 32);
  GraspPose dummy;
  dummy.rotation = Mat3::Identity();
  dummy.width = 0.05;

  bool ok = true;
  std::string why;

  {  // zero proposals terminate immediately without an attempt
    EpisodeParams p;
    p.propose_override = [](const SceneSpec&, int) { return std::vector<GraspPose>{}; };
    const EpisodeReport r = run_declutter_episode(spec, rig, DepthSource::GtComplete, nullptr, p);
    if (r.attempts != 0 || r.termination != Termination::NoGrasp ||
        r.zero_proposal_steps != 1) {
      ok = false;
      why += " no-proposal rule";
    }
  }
  {  // two consecutive failures terminate
    EpisodeParams p;
    p.propose_override = [&](const SceneSpec&, int) { return std::vector<GraspPose>{dummy}; };
    p.score_override = [](const GraspPose&, const SceneSpec&, int) {
      return GraspVerdict{false, -1, "scripted"};
    };
    const EpisodeReport r = run_declutter_episode(spec, rig, DepthSource::GtComplete, nullptr, p);
    if (r.attempts != 2 || r.termination != Termination::TwoFailures) {
      ok = false;
      why += " two-failure rule";
    }
  }
  {  // interleaved failures do not terminate; clearing all objects does
    EpisodeParams p;
    p.propose_override = [&](const SceneSpec&, int) { return std::vector<GraspPose>{dummy}; };
    int call = 0;
    p.score_override = [&call](const GraspPose&, const SceneSpec&, int) {
      const bool succeed = (call++ % 2) == 1;
      return GraspVerdict{succeed, succeed ? 0 : -1, "scripted"};
    };
    const EpisodeReport r = run_declutter_episode(spec, rig, DepthSource::GtComplete, nullptr, p);
    if (r.termination != Termination::Cleared || r.removed != 3 || r.attempts != 6) {
      ok = false;
      why += " cleared rule";
    }
  }
  {  // attempt cap
    SceneSpec big = spec;
    for (int i = 0; i < 13; ++i) big.objects.push_back(spec.objects[0]);
    EpisodeParams p;
    p.propose_override = [&](const SceneSpec&, int) { return std::vector<GraspPose>{dummy}; };
    int call = 0;
    p.score_override = [&call](const GraspPose&, const SceneSpec&, int) {
      const bool succeed = (call++ % 2) == 1;
      return GraspVerdict{succeed, succeed ? 0 : -1, "scripted"};
    };
    const EpisodeReport r = run_declutter_episode(big, rig, DepthSource::GtComplete, nullptr, p);
    if (r.attempts != 15 || r.termination != Termination::AttemptCap) {
      ok = false;
      why += " attempt-cap rule";
    }
  }

  // metric formulas against direct references
  double max_err = 0;
  {
    std::mt19937_64 rng(60);
    std::uniform_real_distribution<float> u(0.2f, 2.0f);
    for (int trial = 0; trial < 50; ++trial) {
      ImageF pred(6, 5), gt(6, 5);
      ImageU8 mask(6, 5);
      double se = 0, ae = 0, re = 0;
      int n = 0;
      for (int v = 0; v < 6; ++v)
        for (int x = 0; x < 5; ++x) {
          pred(v, x) = u(rng);
          gt(v, x) = u(rng);
          mask(v, x) = (rng() % 4) ? 1 : 0;
          if (mask(v, x)) {
            const double e = double(pred(v, x)) - gt(v, x);
            se += e * e;
            ae += std::abs(e);
            re += std::abs(e) / gt(v, x);
            ++n;
          }
        }
      if (n == 0) continue;
      const DepthMetrics m = depth_metrics(pred, gt, mask);
      max_err = std::max({max_err, std::abs(m.rmse - std::sqrt(se / n)),
                          std::abs(m.mae - ae / n), std::abs(m.rel - re / n)});
    }

    std::uniform_int_distribution<int> cnt(0, 6);
    for (int trial = 0; trial < 50; ++trial) {
      std::vector<EpisodeReport> reports;
      long att = 0, succ = 0;
      double dr = 0;
      const int n = 1 + cnt(rng) % 5;
      for (int i = 0; i < n; ++i) {
        EpisodeReport r;
        r.attempts = cnt(rng);
        r.successes = std::min(r.attempts, cnt(rng));
        r.total_objects = 1 + cnt(rng);
        r.removed = std::min(r.total_objects, r.successes);
        reports.push_back(r);
        att += r.attempts;
        succ += r.successes;
        dr += static_cast<double>(r.removed) / r.total_objects;
      }
      const SrDr agg = aggregate_sr_dr(reports);
      if (att > 0)
        max_err = std::max(max_err,
                           std::abs(*agg.success_rate - static_cast<double>(succ) / att));
      else if (agg.success_rate.has_value()) {
        ok = false;
        why += " sr-defined-without-attempts";
      }
      max_err = std::max(max_err, std::abs(agg.declutter_rate - dr / n));
    }
  }

  detail = "formula max err " + fmt(max_err) + (why.empty() ? "" : ";" + why);
  return ok && max_err < 1e-9;
}

}  // namespace

int main() {
  {
    Clock c;
    std::string d;
    const bool p = criterion_geometry(d);
    report(1, "geometry oracles", p, d + ", " + fmt(c.seconds()) + "s");
  }
  {
    Clock c;
    std::string d;
    const bool p = criterion_cost_volume(d);
    report(2, "cost volume vs triple loop", p, d + ", " + fmt(c.seconds()) + "s");
  }
  {
    Clock c;
    std::string d;
    const bool p = criterion_differentiability(d);
    report(3, "gradient checks", p, d + ", " + fmt(c.seconds()) + "s");
  }
  {
    Clock c;
    std::string d;
    const bool p = criterion_raycast(d);
    report(4, "raycaster", p, d + ", " + fmt(c.seconds()) + "s");
  }
  {
    Clock c;
    std::string d;
    const bool p = criterion_protocol(d);
    report(8, "episode protocol and metrics", p, d + ", " + fmt(c.seconds()) + "s");
  }

  ToyArtifacts art;
  try {
    art = train_toy();
  } catch (const std::exception& e) {
    std::printf("toy training threw: %s\n", e.what());
  }
  {
    Clock c;
    std::string d;
    const bool p = criterion_training(art, d);
    report(5, "toy training vs raw depth", p, d + ", " + fmt(c.seconds()) + "s");
  }
  {
    Clock c;
    std::string d;
    const bool p = criterion_second_layer(art, d);
    report(6, "second layer vs trivial predictor", p, d + ", " + fmt(c.seconds()) + "s");
  }
  {
    Clock c;
    std::string d;
    const bool p = criterion_grasping(art, d);
    report(7, "grasp ordering across depth sources", p, d + ", " + fmt(c.seconds()) + "s");
  }

  std::printf("%s: %d of 8 criteria failed\n", g_failures ? "FAILURE" : "SUCCESS", g_failures);
  return g_failures;
}
