#include "asgrasp/stereonet.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

namespace asgrasp {

using nn::Tape;
using nn::Tensor;
using nn::TensorShape;

nlohmann::json StereoNetConfig::to_json() const {
  return {{"feature_channels", feature_channels},
          {"context_channels", context_channels},
          {"hidden_channels", hidden_channels},
          {"hypothesis_count", hypothesis_count},
          {"lookup_radius", lookup_radius},
          {"pyramid_levels", pyramid_levels},
          {"iterations", iterations},
          {"d_min", d_min},
          {"d_max", d_max},
          {"init_seed", init_seed}};
}

StereoNetConfig StereoNetConfig::from_json(const nlohmann::json& j) {
  StereoNetConfig c;
  c.feature_channels = j.value("feature_channels", c.feature_channels);
  c.context_channels = j.value("context_channels", c.context_channels);
  c.hidden_channels = j.value("hidden_channels", c.hidden_channels);
  c.hypothesis_count = j.value("hypothesis_count", c.hypothesis_count);
  c.lookup_radius = j.value("lookup_radius", c.lookup_radius);
  c.pyramid_levels = j.value("pyramid_levels", c.pyramid_levels);
  c.iterations = j.value("iterations", c.iterations);
  c.d_min = j.value("d_min", c.d_min);
  c.d_max = j.value("d_max", c.d_max);
  c.init_seed = j.value("init_seed", c.init_seed);
  c.validate();
  return c;
}

std::uint64_t StereoNetConfig::hash() const {
  const std::string s = to_json().dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ull;
  }
  return h;
}

void StereoNetConfig::validate() const {
  if (feature_channels < 2 || context_channels < 2 || hidden_channels < 2)
    throw ArgumentError("stereonet config: channel counts too small");
  if (hypothesis_count < 2) throw ArgumentError("stereonet config: need >= 2 hypotheses");
  if (pyramid_levels < 1) throw ArgumentError("stereonet config: need >= 1 pyramid level");
  if (lookup_radius < 0) throw ArgumentError("stereonet config: negative lookup radius");
  if (iterations < 1) throw ArgumentError("stereonet config: need >= 1 iteration");
  if (!(d_min > 0 && d_min < d_max)) throw ArgumentError("stereonet config: bad depth range");
}

std::shared_ptr<const nn::WarpTable> make_warp_table(const CameraRig& rig,
                                                     const HypothesisGrid& grid, int scale) {
  grid.validate();
  const CameraIntrinsics K_ref = rig.rgb.downscaled(scale);
  const CameraIntrinsics K_l = rig.ir_left.intrinsics.downscaled(scale);
  const CameraIntrinsics K_r = rig.ir_right.intrinsics.downscaled(scale);

  auto table = std::make_shared<nn::WarpTable>();
  table->hypotheses = grid.count;
  table->height = K_ref.height;
  table->width = K_ref.width;
  table->left.resize(static_cast<size_t>(grid.count) * K_ref.height * K_ref.width);
  table->right.resize(table->left.size());

  auto fill = [&](const CameraIntrinsics& K_ir, const RelativePose& pose,
                  std::vector<nn::WarpSample>& samples) {
    for (int hyp = 0; hyp < grid.count; ++hyp) {
      const double depth = grid.values[hyp];
      for (int y = 0; y < K_ref.height; ++y) {
        for (int x = 0; x < K_ref.width; ++x) {
          nn::WarpSample& s =
              samples[(static_cast<size_t>(hyp) * K_ref.height + y) * K_ref.width + x];
          const WarpResult w = warp_pixel(Vec2(x, y), depth, K_ref, K_ir, pose);
          if (!w.valid) continue;
          double u = w.pixel.x(), v = w.pixel.y();
          // snap round-off just past the border back onto it (coincident or
          // near-rectified cameras land exactly on the frame edge)
          const double snap = 1e-6;
          if (u > -snap && u < 0) u = 0;
          if (v > -snap && v < 0) v = 0;
          if (u > K_ir.width - 1 && u < K_ir.width - 1 + snap) u = K_ir.width - 1;
          if (v > K_ir.height - 1 && v < K_ir.height - 1 + snap) v = K_ir.height - 1;
          if (u < 0 || u > K_ir.width - 1 || v < 0 || v > K_ir.height - 1) continue;
          const int x0 = std::min(static_cast<int>(u), K_ir.width - 2 >= 0 ? K_ir.width - 2 : 0);
          const int y0 = std::min(static_cast<int>(v), K_ir.height - 2 >= 0 ? K_ir.height - 2 : 0);
          const float fu = static_cast<float>(u - x0);
          const float fv = static_cast<float>(v - y0);
          s.idx[0] = y0 * K_ir.width + x0;
          s.idx[1] = y0 * K_ir.width + std::min(x0 + 1, K_ir.width - 1);
          s.idx[2] = std::min(y0 + 1, K_ir.height - 1) * K_ir.width + x0;
          s.idx[3] = std::min(y0 + 1, K_ir.height - 1) * K_ir.width +
                     std::min(x0 + 1, K_ir.width - 1);
          s.weight[0] = (1 - fu) * (1 - fv);
          s.weight[1] = fu * (1 - fv);
          s.weight[2] = (1 - fu) * fv;
          s.weight[3] = fu * fv;
          s.valid = true;
        }
      }
    }
  };
  fill(K_l, rig.ir_left.pose, table->left);
  fill(K_r, rig.ir_right.pose, table->right);
  return table;
}

StereoNet::StereoNet(const StereoNetConfig& config) : config_(config), store_(config.init_seed) {
  config_.validate();
  const int cf = config_.feature_channels;
  const int cc = config_.context_channels;
  const int ch = config_.hidden_channels;
  const int taps = config_.pyramid_levels * (2 * config_.lookup_radius + 1);

  fe1_ = nn::Conv2d(store_, "feature.conv1", 1, cf / 2, 3, 2);
  fe2_ = nn::Conv2d(store_, "feature.conv2", cf / 2, cf, 3, 2);
  fe3_ = nn::Conv2d(store_, "feature.conv3", cf, cf, 3, 1);

  ce1_ = nn::Conv2d(store_, "context.conv1", 3, cc / 2, 3, 2);
  ce2_ = nn::Conv2d(store_, "context.conv2", cc / 2, cc, 3, 2);
  ce3_ = nn::Conv2d(store_, "context.conv3", cc, cc, 3, 1);
  ce8_ = nn::Conv2d(store_, "context.conv8", cc, cc, 3, 2);
  ce16_ = nn::Conv2d(store_, "context.conv16", cc, cc, 3, 2);

  hidden_init_ = nn::Conv2d(store_, "gru.hidden_init", 3 * cc, ch, 3, 1);
  context_input_ = nn::Conv2d(store_, "gru.context_input", 3 * cc, cc, 3, 1);
  motion_ = nn::Conv2d(store_, "gru.motion", 2 * taps + 2, cc, 3, 1);
  gru_z_ = nn::Conv2d(store_, "gru.z", ch + 2 * cc, ch, 3, 1);
  gru_r_ = nn::Conv2d(store_, "gru.r", ch + 2 * cc, ch, 3, 1);
  gru_q_ = nn::Conv2d(store_, "gru.q", ch + 2 * cc, ch, 3, 1);

  head1a_ = nn::Conv2d(store_, "head1.conv1", ch, ch, 3, 1);
  head1b_ = nn::Conv2d(store_, "head1.conv2", ch, 1, 3, 1);
  head2a_ = nn::Conv2d(store_, "head2.conv1", ch, ch, 3, 1);
  head2b_ = nn::Conv2d(store_, "head2.conv2", ch, 1, 3, 1);

  up_a_ = nn::Conv2d(store_, "upsample.conv1", ch, ch, 3, 1);
  up_b_ = nn::Conv2d(store_, "upsample.conv2", ch, 144, 3, 1);
}

namespace {

nn::Array image_to_array(const ImageF& img) {
  return Eigen::Map<const nn::Array>(img.data(), img.size());
}

void check_padded(int h, int w) {
  if (h % 16 != 0 || w % 16 != 0)
    throw ArgumentError("stereonet: image dimensions must be multiples of 16, got " +
                        std::to_string(w) + "x" + std::to_string(h));
}

}  // namespace

Tensor StereoNet::extract_features(Tape& tape, const ImageF& ir01) const {
  const int h = static_cast<int>(ir01.rows()), w = static_cast<int>(ir01.cols());
  check_padded(h, w);
  Tensor x = tape.constant({1, h, w}, image_to_array(ir01));
  x = tape.relu(fe1_(tape, x));
  x = tape.relu(fe2_(tape, x));
  return fe3_(tape, x);
}

StereoNet::ContextPyramid StereoNet::extract_context(Tape& tape, const ImageRGB& rgb01) const {
  const int h = rgb01.rows(), w = rgb01.cols();
  check_padded(h, w);
  nn::Array data(3 * h * w);
  data.segment(0, h * w) = image_to_array(rgb01.r);
  data.segment(h * w, h * w) = image_to_array(rgb01.g);
  data.segment(2 * h * w, h * w) = image_to_array(rgb01.b);
  Tensor x = tape.constant({3, h, w}, std::move(data));
  x = tape.relu(ce1_(tape, x));
  x = tape.relu(ce2_(tape, x));
  ContextPyramid ctx;
  ctx.q4 = ce3_(tape, x);
  ctx.q8 = tape.relu(ce8_(tape, ctx.q4));
  ctx.q16 = tape.relu(ce16_(tape, ctx.q8));
  return ctx;
}

std::vector<Tensor> StereoNet::build_cost_volume(Tape& tape, Tensor f_left, Tensor f_right,
                                                 std::shared_ptr<const nn::WarpTable> warps) const {
  std::vector<Tensor> levels;
  levels.push_back(tape.cost_volume(f_left, f_right, std::move(warps)));
  for (int l = 1; l < config_.pyramid_levels; ++l)
    levels.push_back(tape.avgpool_c2(levels.back()));
  return levels;
}

StereoNet::GruOutput StereoNet::gru_update(Tape& tape, Tensor hidden, Tensor context_input,
                                           Tensor cost_d1, Tensor cost_d2, Tensor d1,
                                           Tensor d2) const {
  Tensor m = tape.relu(motion_(tape, tape.concat_c({cost_d1, cost_d2, d1, d2})));
  Tensor x = tape.concat_c({m, context_input});
  Tensor hx = tape.concat_c({hidden, x});
  Tensor z = tape.sigmoid(gru_z_(tape, hx));
  Tensor r = tape.sigmoid(gru_r_(tape, hx));
  Tensor q = tape.tanh(gru_q_(tape, tape.concat_c({tape.mul(r, hidden), x})));
  // h' = (1-z) h + z q
  Tensor h_next = tape.add(hidden, tape.mul(z, tape.sub(q, hidden)));

  GruOutput out;
  out.hidden = h_next;
  out.delta_d1 = head1b_(tape, tape.relu(head1a_(tape, h_next)));
  out.delta_d2 = head2b_(tape, tape.relu(head2a_(tape, h_next)));
  return out;
}

Tensor StereoNet::upsample_disparity(Tape& tape, Tensor d, Tensor hidden) const {
  Tensor w = up_b_(tape, tape.relu(up_a_(tape, hidden)));
  return tape.upsample_convex4(d, tape.softmax_groups(w, 9));
}

StereoNet::ForwardPass StereoNet::forward(Tape& tape, const ImageRGB& rgb01,
                                          const ImageF& ir_left01, const ImageF& ir_right01,
                                          const CameraRig& rig, const HypothesisGrid& grid,
                                          int iterations) const {
  if (iterations < 1) throw ArgumentError("stereonet: need >= 1 iteration");
  if (grid.count != config_.hypothesis_count)
    throw ArgumentError("stereonet: hypothesis grid size does not match config");
  if (ir_left01.rows() != rgb01.rows() || ir_left01.cols() != rgb01.cols() ||
      ir_right01.rows() != rgb01.rows() || ir_right01.cols() != rgb01.cols())
    throw ArgumentError("stereonet: image size mismatch between views");

  Tensor fl = extract_features(tape, ir_left01);
  Tensor fr = extract_features(tape, ir_right01);
  ContextPyramid ctx = extract_context(tape, rgb01);
  Tensor ctx_cat = tape.concat_c(
      {ctx.q4, tape.upsample_nearest(ctx.q8, 2), tape.upsample_nearest(ctx.q16, 4)});
  Tensor hidden = tape.tanh(hidden_init_(tape, ctx_cat));
  Tensor cin = tape.relu(context_input_(tape, ctx_cat));

  std::vector<Tensor> volume = build_cost_volume(tape, fl, fr, make_warp_table(rig, grid, 4));

  // Initialize both surfaces at the correlation soft-argmax so the update
  // iterations refine an already plausible estimate instead of having to
  // integrate the full disparity from zero. The expectation is computed on
  // the tape, so its gradient with respect to the features is exact.
  const int dh = config_.hypothesis_count;
  Tensor probs = tape.softmax_groups(volume[0], dh);
  nn::Array index_weights(dh);
  for (int i = 0; i < dh; ++i) index_weights(i) = static_cast<float>(i);
  Tensor idx_w = tape.constant({1, dh, 1}, index_weights);
  Tensor idx_b = tape.constant({1, 1, 1}, nn::Array::Zero(1));
  Tensor d_init = tape.conv2d(probs, idx_w, idx_b, 1, 1, 1);

  Tensor d1 = d_init;
  Tensor d2 = d_init;

  ForwardPass pass;
  for (int it = 0; it < iterations; ++it) {
    Tensor cost1 = tape.lookup(volume, d1, config_.lookup_radius);
    Tensor cost2 = tape.lookup(volume, d2, config_.lookup_radius);
    GruOutput step = gru_update(tape, hidden, cin, cost1, cost2, d1, d2);
    hidden = step.hidden;
    d1 = tape.add(d1, step.delta_d1);
    d2 = tape.add(d2, step.delta_d2);
    pass.quarter_history.emplace_back(d1, d2);
    pass.history.emplace_back(upsample_disparity(tape, d1, hidden),
                              upsample_disparity(tape, d2, hidden));
  }
  return pass;
}

ReconstructionOutput StereoNet::reconstruct(const ImageRGB& rgb01, const ImageF& ir_left01,
                                            const ImageF& ir_right01, const CameraRig& rig,
                                            const HypothesisGrid& grid, int iterations) const {
  Tape tape;
  ForwardPass pass = forward(tape, rgb01, ir_left01, ir_right01, rig, grid, iterations);

  ReconstructionOutput out;
  const int h = rgb01.rows(), w = rgb01.cols();
  for (const auto& [t1, t2] : pass.history) {
    ImageF d1(h, w), d2(h, w);
    Eigen::Map<ImageF>(d1.data(), h, w) =
        Eigen::Map<const ImageF>(t1.value().data(), h, w);
    Eigen::Map<ImageF>(d2.data(), h, w) =
        Eigen::Map<const ImageF>(t2.value().data(), h, w);
    out.history.emplace_back(std::move(d1), std::move(d2));
  }

  const auto& [final_d1, final_d2] = out.history.back();
  out.depth.first.resize(h, w);
  out.depth.second.resize(h, w);
  out.depth.valid_mask = ImageU8::Constant(h, w, 1);
  long clamped = 0;
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const DisparityConversion c1 = disparity_to_depth(final_d1(v, u), grid);
      const DisparityConversion c2 = disparity_to_depth(final_d2(v, u), grid);
      out.depth.first(v, u) = static_cast<float>(c1.value);
      out.depth.second(v, u) = static_cast<float>(c2.value);
      clamped += (c1.clamped ? 1 : 0) + (c2.clamped ? 1 : 0);
    }
  }
  out.clamp_fraction = static_cast<double>(clamped) / (2.0 * h * w);
  return out;
}

ImageF to_float01(const ImageU8& img) {
  return img.cast<float>() / 255.0f;
}

ImageRGB to_float01_rgb(const ImageU8& r, const ImageU8& g, const ImageU8& b) {
  return {to_float01(r), to_float01(g), to_float01(b)};
}

}  // namespace asgrasp
