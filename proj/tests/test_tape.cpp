#include "asgrasp/camgeom.hpp"
#include "asgrasp/stereonet.hpp"
#include "asgrasp/tape.hpp"

#include <doctest.h>

#include <cmath>
#include <functional>
#include <random>

using namespace asgrasp;
using namespace asgrasp::nn;

namespace {

Array random_array(int n, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  Array a(n);
  for (int i = 0; i < n; ++i) a(i) = u(rng);
  return a;
}

// Central finite differences along random +-1 directions, compared against
// the tape's reverse-mode gradient. Directional probes keep the difference
// quotient well above the float32 rounding floor of the scalar loss.
void check_gradient(Parameter& p, const std::function<Tensor(Tape&)>& build, double eps,
                    double rel_tol, int checks = 8, std::uint64_t seed = 99) {
  p.grad = Array::Zero(p.value.size());
  {
    Tape tape;
    Tensor loss = build(tape);
    REQUIRE(loss.shape().size() == 1);
    tape.backward(loss);
  }
  const Array analytic = p.grad;

  auto eval = [&]() {
    Tape tape;
    return static_cast<double>(build(tape).value()(0));
  };

  std::mt19937_64 rng(seed);
  const int n = static_cast<int>(p.value.size());
  const Array saved = p.value;
  for (int c = 0; c < checks; ++c) {
    Array dir(n);
    for (int i = 0; i < n; ++i) dir(i) = (rng() & 1) ? 1.0f : -1.0f;
    p.value = saved + static_cast<float>(eps) * dir;
    const double hi = eval();
    p.value = saved - static_cast<float>(eps) * dir;
    const double lo = eval();
    p.value = saved;
    const double fd = (hi - lo) / (2 * eps);
    const double an = static_cast<double>((analytic * dir).sum());
    const double err = std::abs(an - fd);
    const double denom = std::max({std::abs(fd), std::abs(an), 5e-3});
    INFO("probe ", c, " analytic ", an, " fd ", fd);
    CHECK(err / denom < rel_tol);
  }
}

}  // namespace

TEST_CASE("elementwise op values") {
  Tape tape;
  Tensor a = tape.constant({1, 2, 2}, (Array(4) << 1, -2, 3, -4).finished());
  Tensor b = tape.constant({1, 2, 2}, (Array(4) << 0.5, 0.5, 2, 2).finished());
  CHECK(tape.add(a, b).value()(0) == 1.5f);
  CHECK(tape.sub(a, b).value()(1) == -2.5f);
  CHECK(tape.mul(a, b).value()(2) == 6.0f);
  CHECK(tape.relu(a).value()(1) == 0.0f);
  CHECK(tape.relu(a).value()(2) == 3.0f);
  CHECK(tape.sigmoid(a).value()(0) == doctest::Approx(1 / (1 + std::exp(-1.0))));
  CHECK(tape.tanh(a).value()(3) == doctest::Approx(std::tanh(-4.0)));
  CHECK(tape.affine(a, 2.0f, 1.0f).value()(0) == 3.0f);
}

TEST_CASE("elementwise op gradients") {
  Parameter p{"p", {2, 3, 3}, random_array(18, 1, 0.2f, 0.9f), Array::Zero(18)};
  Parameter q{"q", {2, 3, 3}, random_array(18, 2, 0.2f, 0.9f), Array::Zero(18)};
  auto scalar_sum = [](Tape& t, Tensor x) {
    const int n = x.shape().size();
    return t.weighted_l1(x, Array::Constant(n, -3.0f), Array::Constant(n, 1.0f / n));
  };
  check_gradient(p, [&](Tape& t) { return scalar_sum(t, t.mul(t.use(p), t.use(q))); }, 1e-2, 1e-2);
  check_gradient(p, [&](Tape& t) { return scalar_sum(t, t.sigmoid(t.use(p))); }, 1e-2, 1e-2);
  check_gradient(p, [&](Tape& t) { return scalar_sum(t, t.tanh(t.use(p))); }, 1e-2, 1e-2);
  check_gradient(p, [&](Tape& t) { return scalar_sum(t, t.relu(t.use(p))); }, 1e-2, 1e-2);
  check_gradient(
      p, [&](Tape& t) { return scalar_sum(t, t.concat_c({t.use(p), t.use(q)})); }, 1e-2, 1e-2);
  check_gradient(p, [&](Tape& t) { return scalar_sum(t, t.avgpool_c2(t.use(p))); }, 1e-2, 1e-2);
  check_gradient(
      p, [&](Tape& t) { return scalar_sum(t, t.softmax_groups(t.use(p), 2)); }, 1e-2, 1e-2);
}

TEST_CASE("conv2d matches a naive loop and its gradient checks out") {
  const int in_c = 2, out_c = 3, k = 3, h = 4, w = 5;
  Parameter x{"x", {in_c, h, w}, random_array(in_c * h * w, 3), Array::Zero(in_c * h * w)};
  Parameter wgt{"w",
                {out_c, in_c * k * k, 1},
                random_array(out_c * in_c * k * k, 4, -0.4f, 0.4f),
                Array::Zero(out_c * in_c * k * k)};
  Parameter bias{"b", {out_c, 1, 1}, random_array(out_c, 5), Array::Zero(out_c)};

  Tape tape;
  Tensor y = tape.conv2d(tape.use(x), tape.use(wgt), tape.use(bias), out_c, k, 1);
  REQUIRE(y.shape() == TensorShape{out_c, h, w});

  // independent naive convolution
  for (int oc = 0; oc < out_c; ++oc)
    for (int oy = 0; oy < h; ++oy)
      for (int ox = 0; ox < w; ++ox) {
        double acc = bias.value(oc);
        for (int ic = 0; ic < in_c; ++ic)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int iy = oy + ky - k / 2, ix = ox + kx - k / 2;
              if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
              acc += wgt.value((oc * in_c + ic) * k * k + ky * k + kx) *
                     x.value((ic * h + iy) * w + ix);
            }
        CHECK(y.value()((oc * h + oy) * w + ox) == doctest::Approx(acc).epsilon(1e-4));
      }

  auto build = [&](Tape& t) {
    Tensor out = t.conv2d(t.use(x), t.use(wgt), t.use(bias), out_c, k, 1);
    const int n = out.shape().size();
    return t.weighted_l1(out, Array::Constant(n, -8.0f), Array::Constant(n, 1.0f / n));
  };
  check_gradient(x, build, 1e-2, 1e-2);
  check_gradient(wgt, build, 1e-2, 1e-2);
  check_gradient(bias, build, 1e-2, 1e-2);

  Tensor ys = tape.conv2d(tape.use(x), tape.use(wgt), tape.use(bias), out_c, k, 2);
  CHECK(ys.shape() == TensorShape{out_c, (h + 1) / 2, (w + 1) / 2});
}

TEST_CASE("cost volume equals the brute-force triple loop on 8x8x4") {
  const int hh = 8, ww = 8, ch = 4, nhyp = 4;
  CameraRig rig = make_default_rig(ww, hh);
  const HypothesisGrid grid = make_hypotheses(0.4, 1.2, nhyp);
  auto warps = make_warp_table(rig, grid, 1);

  Parameter fl{"fl", {ch, hh, ww}, random_array(ch * hh * ww, 7), Array::Zero(ch * hh * ww)};
  Parameter fr{"fr", {ch, hh, ww}, random_array(ch * hh * ww, 8), Array::Zero(ch * hh * ww)};
  Tape tape;
  Tensor cost = tape.cost_volume(tape.use(fl), tape.use(fr), warps);
  REQUIRE(cost.shape() == TensorShape{nhyp, hh, ww});

  auto sample = [&](const Parameter& f, const CameraIntrinsics& K, const RelativePose& pose,
                    int x, int y, double depth, int c, bool& ok) {
    const WarpResult w = warp_pixel(Vec2(x, y), depth, rig.rgb, K, pose);
    double u = w.pixel.x(), v = w.pixel.y();
    // same round-off snap at the frame border as the implementation
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
    auto at = [&](int yy, int xx) { return double(f.value((c * hh + yy) * ww + xx)); };
    return (1 - fu) * (1 - fv) * at(y0, x0) + fu * (1 - fv) * at(y0, x0 + 1) +
           (1 - fu) * fv * at(y0 + 1, x0) + fu * fv * at(y0 + 1, x0 + 1);
  };

  double max_err = 0;
  for (int hyp = 0; hyp < nhyp; ++hyp)
    for (int y = 0; y < hh; ++y)
      for (int x = 0; x < ww; ++x) {
        double dot = 0;
        bool ok_l = false, ok_r = false;
        for (int c = 0; c < ch; ++c) {
          const double a = sample(fl, rig.ir_left.intrinsics, rig.ir_left.pose, x, y,
                                  grid.values[hyp], c, ok_l);
          const double b = sample(fr, rig.ir_right.intrinsics, rig.ir_right.pose, x, y,
                                  grid.values[hyp], c, ok_r);
          dot += a * b;
        }
        if (!ok_l || !ok_r) dot = 0;
        max_err = std::max(
            max_err, std::abs(dot - double(cost.value()((hyp * hh + y) * ww + x))));
      }
  CHECK(max_err < 1e-6);

  auto build = [&](Tape& t) {
    Tensor v = t.cost_volume(t.use(fl), t.use(fr), warps);
    const int n = v.shape().size();
    return t.weighted_l1(v, Array::Constant(n, -8.0f), Array::Constant(n, 1.0f / n));
  };
  check_gradient(fl, build, 1e-2, 1e-2);
  check_gradient(fr, build, 1e-2, 1e-2);
}

TEST_CASE("coincident identical features give squared norms at all hypotheses") {
  const int hh = 4, ww = 4, ch = 3, nhyp = 3;
  CameraRig rig;
  rig.rgb.fx = rig.rgb.fy = 10;
  rig.rgb.cx = rig.rgb.cy = 2;
  rig.rgb.width = ww;
  rig.rgb.height = hh;
  rig.ir_left.intrinsics = rig.rgb;
  rig.ir_right.intrinsics = rig.rgb;
  rig.ir_right.pose.translation = Vec3::Zero();
  const HypothesisGrid grid = make_hypotheses(0.5, 1.5, nhyp);
  auto warps = make_warp_table(rig, grid, 1);

  const Array f = random_array(ch * hh * ww, 20);
  Tape tape;
  Tensor fl = tape.constant({ch, hh, ww}, f);
  Tensor cost = tape.cost_volume(fl, fl, warps);
  for (int hyp = 0; hyp < nhyp; ++hyp)
    for (int pix = 0; pix < hh * ww; ++pix) {
      double norm2 = 0;
      for (int c = 0; c < ch; ++c) norm2 += double(f(c * hh * ww + pix)) * f(c * hh * ww + pix);
      CHECK(cost.value()(hyp * hh * ww + pix) == doctest::Approx(norm2).epsilon(1e-5));
    }
}

TEST_CASE("pyramid lookup interpolates linearly and differentiates") {
  const int hh = 3, ww = 3, nhyp = 8;
  // volume linear in the hypothesis index: value = 0.5 * index + pixel offset
  Array vol(nhyp * hh * ww);
  for (int c = 0; c < nhyp; ++c)
    for (int p = 0; p < hh * ww; ++p) vol(c * hh * ww + p) = 0.5f * c + 0.01f * p;

  Parameter d{"d", {1, hh, ww}, Array::Constant(hh * ww, 3.3f), Array::Zero(hh * ww)};
  d.value(4) = 1.7f;

  Tape tape;
  Tensor level0 = tape.constant({nhyp, hh, ww}, vol);
  Tensor looked = tape.lookup({level0}, tape.use(d), 1);
  REQUIRE(looked.shape() == TensorShape{3, hh, ww});
  // middle offset (0) at pixel 4: 0.5*1.7 + 0.04
  CHECK(looked.value()(1 * hh * ww + 4) == doctest::Approx(0.5 * 1.7 + 0.04).epsilon(1e-6));
  // offset -1 at pixel 0: 0.5*(3.3-1)
  CHECK(looked.value()(0) == doctest::Approx(0.5 * 2.3).epsilon(1e-6));

  SUBCASE("exact integer bin with radius 0") {
    Tape t2;
    Tensor lv = t2.constant({nhyp, hh, ww}, vol);
    Array di = Array::Constant(hh * ww, 2.0f);
    Tensor got = t2.lookup({lv}, t2.constant({1, hh, ww}, di), 0);
    CHECK(got.value()(0) == doctest::Approx(1.0).epsilon(1e-6));
  }

  check_gradient(
      d,
      [&](Tape& t) {
        Tensor lv = t.constant({nhyp, hh, ww}, vol);
        Tensor out = t.lookup({lv}, t.use(d), 1);
        const int n = out.shape().size();
        return t.weighted_l1(out, Array::Constant(n, -9.0f), Array::Constant(n, 1.0f / n));
      },
      1e-2, 1e-2);
}

TEST_CASE("convex upsampling stays within local bounds") {
  const int hh = 2, ww = 3;
  Parameter d{"d", {1, hh, ww}, random_array(hh * ww, 30, 0.0f, 4.0f), Array::Zero(hh * ww)};
  Parameter wraw{"w", {144, hh, ww}, random_array(144 * hh * ww, 31), Array::Zero(144 * hh * ww)};

  Tape tape;
  Tensor weights = tape.softmax_groups(tape.use(wraw), 9);
  Tensor up = tape.upsample_convex4(tape.use(d), weights);
  REQUIRE(up.shape() == TensorShape{1, 4 * hh, 4 * ww});
  const float lo = d.value.minCoeff(), hi = d.value.maxCoeff();
  for (int i = 0; i < up.shape().size(); ++i) {
    CHECK(up.value()(i) >= lo - 1e-5);
    CHECK(up.value()(i) <= hi + 1e-5);
  }

  SUBCASE("constant field maps to constant output") {
    Tape t2;
    Tensor dc = t2.constant({1, hh, ww}, Array::Constant(hh * ww, 2.5f));
    Tensor w2 = t2.softmax_groups(t2.constant({144, hh, ww}, random_array(144 * hh * ww, 32)), 9);
    Tensor u2 = t2.upsample_convex4(dc, w2);
    for (int i = 0; i < u2.shape().size(); ++i)
      CHECK(u2.value()(i) == doctest::Approx(2.5).epsilon(1e-6));
  }

  auto build = [&](Tape& t) {
    Tensor w2 = t.softmax_groups(t.use(wraw), 9);
    Tensor u2 = t.upsample_convex4(t.use(d), w2);
    const int n = u2.shape().size();
    return t.weighted_l1(u2, Array::Constant(n, -7.0f), Array::Constant(n, 1.0f / n));
  };
  check_gradient(d, build, 1e-2, 1e-2);
  check_gradient(wraw, build, 1e-2, 1e-2);
}

TEST_CASE("weighted L1 gradient is exact sign times weight") {
  Parameter p{"p", {1, 2, 2}, (Array(4) << 2, -3, 0.5, 4).finished(), Array::Zero(4)};
  const Array target = (Array(4) << 1, 1, 1, 1).finished();
  const Array weight = (Array(4) << 0.1, 0.2, 0.3, 0.4).finished();
  Tape tape;
  Tensor loss = tape.weighted_l1(tape.use(p), target, weight);
  CHECK(loss.value()(0) ==
        doctest::Approx(0.1 * 1 + 0.2 * 4 + 0.3 * 0.5 + 0.4 * 3).epsilon(1e-6));
  tape.backward(loss);
  CHECK(p.grad(0) == doctest::Approx(0.1));
  CHECK(p.grad(1) == doctest::Approx(-0.2));
  CHECK(p.grad(2) == doctest::Approx(-0.3));
  CHECK(p.grad(3) == doctest::Approx(0.4));
}

TEST_CASE("add_scalars combines losses with exact coefficients") {
  Tape tape;
  Tensor a = tape.constant({1, 1, 1}, Array::Constant(1, 2.0f));
  Tensor b = tape.constant({1, 1, 1}, Array::Constant(1, 5.0f));
  Tensor s = tape.add_scalars({a, b}, {0.5f, 2.0f});
  CHECK(s.value()(0) == doctest::Approx(11.0));
}

TEST_CASE("tape evaluation is deterministic") {
  auto run = [] {
    Parameter p{"p", {2, 4, 4}, random_array(32, 77), Array::Zero(32)};
    Tape tape;
    Tensor y = tape.tanh(tape.avgpool_c2(tape.use(p)));
    return Array(y.value());
  };
  const Array a = run();
  const Array b = run();
  CHECK((a == b).all());
}
