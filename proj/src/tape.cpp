#include "asgrasp/tape.hpp"

#include <cmath>

namespace asgrasp::nn {

using MatrixRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

const TensorShape& Tensor::shape() const { return tape->shape(id); }
const Array& Tensor::value() const { return tape->value(id); }
const Array& Tensor::grad() const { return tape->grad(id); }

Tensor Tape::make(const TensorShape& shape, Array value) {
  Node n;
  n.shape = shape;
  n.value = std::move(value);
  n.grad = Array::Zero(shape.size());
  nodes_.push_back(std::move(n));
  return {this, static_cast<int>(nodes_.size()) - 1};
}

Tensor Tape::constant(const TensorShape& shape, Array data) {
  if (data.size() != shape.size()) throw ArgumentError("tape: constant size mismatch");
  return make(shape, std::move(data));
}

Tensor Tape::zeros(const TensorShape& shape) { return make(shape, Array::Zero(shape.size())); }

Tensor Tape::use(Parameter& p) {
  Tensor t = make(p.shape, p.value);
  backward_ops_.push_back([this, t, &p] { p.grad += node(t).grad; });
  return t;
}

Tensor Tape::add(Tensor a, Tensor b) {
  if (!(a.shape() == b.shape())) throw ArgumentError("tape: add shape mismatch");
  Tensor out = make(a.shape(), a.value() + b.value());
  backward_ops_.push_back([this, a, b, out] {
    node(a).grad += node(out).grad;
    node(b).grad += node(out).grad;
  });
  return out;
}

Tensor Tape::sub(Tensor a, Tensor b) {
  if (!(a.shape() == b.shape())) throw ArgumentError("tape: sub shape mismatch");
  Tensor out = make(a.shape(), a.value() - b.value());
  backward_ops_.push_back([this, a, b, out] {
    node(a).grad += node(out).grad;
    node(b).grad -= node(out).grad;
  });
  return out;
}

Tensor Tape::mul(Tensor a, Tensor b) {
  if (!(a.shape() == b.shape())) throw ArgumentError("tape: mul shape mismatch");
  Tensor out = make(a.shape(), a.value() * b.value());
  backward_ops_.push_back([this, a, b, out] {
    node(a).grad += node(out).grad * node(b).value;
    node(b).grad += node(out).grad * node(a).value;
  });
  return out;
}

Tensor Tape::affine(Tensor a, float s, float t) {
  Tensor out = make(a.shape(), s * a.value() + t);
  backward_ops_.push_back([this, a, out, s] { node(a).grad += s * node(out).grad; });
  return out;
}

Tensor Tape::relu(Tensor a) {
  Tensor out = make(a.shape(), a.value().max(0.0f));
  backward_ops_.push_back([this, a, out] {
    node(a).grad += node(out).grad * (node(a).value > 0.0f).cast<float>();
  });
  return out;
}

Tensor Tape::sigmoid(Tensor a) {
  Array y = 1.0f / (1.0f + (-a.value()).exp());
  Tensor out = make(a.shape(), std::move(y));
  backward_ops_.push_back([this, a, out] {
    const Array& y_ = node(out).value;
    node(a).grad += node(out).grad * y_ * (1.0f - y_);
  });
  return out;
}

Tensor Tape::tanh(Tensor a) {
  Tensor out = make(a.shape(), a.value().tanh());
  backward_ops_.push_back([this, a, out] {
    const Array& y_ = node(out).value;
    node(a).grad += node(out).grad * (1.0f - y_ * y_);
  });
  return out;
}

Tensor Tape::concat_c(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ArgumentError("tape: concat of nothing");
  const int h = parts[0].shape().h, w = parts[0].shape().w;
  int c_total = 0;
  for (const auto& p : parts) {
    if (p.shape().h != h || p.shape().w != w) throw ArgumentError("tape: concat spatial mismatch");
    c_total += p.shape().c;
  }
  Array value(c_total * h * w);
  int offset = 0;
  for (const auto& p : parts) {
    value.segment(offset, p.shape().size()) = p.value();
    offset += p.shape().size();
  }
  Tensor out = make({c_total, h, w}, std::move(value));
  backward_ops_.push_back([this, parts, out] {
    int off = 0;
    for (const auto& p : parts) {
      node(p).grad += node(out).grad.segment(off, node(p).shape.size());
      off += node(p).shape.size();
    }
  });
  return out;
}

Tensor Tape::conv2d(Tensor x, Tensor weight, Tensor bias, int out_c, int k, int stride) {
  const TensorShape xs = x.shape();
  const int pad = k / 2;
  const int h_out = (xs.h + 2 * pad - k) / stride + 1;
  const int w_out = (xs.w + 2 * pad - k) / stride + 1;
  const int patch = xs.c * k * k;
  if (weight.shape().size() != out_c * patch || bias.shape().size() != out_c)
    throw ArgumentError("tape: conv2d weight/bias shape mismatch");

  // im2col, kept alive for the backward pass
  auto col = std::make_shared<MatrixRM>(patch, h_out * w_out);
  col->setZero();
  const float* xv = x.value().data();
  for (int ci = 0; ci < xs.c; ++ci) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const int row = (ci * k + ky) * k + kx;
        float* dst = col->data() + static_cast<std::ptrdiff_t>(row) * h_out * w_out;
        for (int oy = 0; oy < h_out; ++oy) {
          const int y = oy * stride - pad + ky;
          if (y < 0 || y >= xs.h) continue;
          for (int ox = 0; ox < w_out; ++ox) {
            const int xcoord = ox * stride - pad + kx;
            if (xcoord < 0 || xcoord >= xs.w) continue;
            dst[oy * w_out + ox] = xv[(ci * xs.h + y) * xs.w + xcoord];
          }
        }
      }
    }
  }

  Eigen::Map<const MatrixRM> wm(weight.value().data(), out_c, patch);
  MatrixRM y = wm * (*col);
  for (int co = 0; co < out_c; ++co) y.row(co).array() += bias.value()(co);

  Array value = Eigen::Map<const Array>(y.data(), y.size());
  Tensor out = make({out_c, h_out, w_out}, std::move(value));

  backward_ops_.push_back([this, x, weight, bias, out, col, out_c, k, stride, xs, h_out, w_out,
                           patch] {
    Eigen::Map<const MatrixRM> dy(node(out).grad.data(), out_c, h_out * w_out);
    // dW and db
    Eigen::Map<MatrixRM> dw(node(weight).grad.data(), out_c, patch);
    dw.noalias() += dy * col->transpose();
    for (int co = 0; co < out_c; ++co) node(bias).grad(co) += dy.row(co).sum();
    // dx via col2im of W^T * dY
    Eigen::Map<const MatrixRM> wm_(node(weight).value.data(), out_c, patch);
    MatrixRM dcol = wm_.transpose() * dy;
    float* dx = node(x).grad.data();
    const int pad_ = k / 2;
    for (int ci = 0; ci < xs.c; ++ci) {
      for (int ky = 0; ky < k; ++ky) {
        for (int kx = 0; kx < k; ++kx) {
          const int row = (ci * k + ky) * k + kx;
          const float* src = dcol.data() + static_cast<std::ptrdiff_t>(row) * h_out * w_out;
          for (int oy = 0; oy < h_out; ++oy) {
            const int yy = oy * stride - pad_ + ky;
            if (yy < 0 || yy >= xs.h) continue;
            for (int ox = 0; ox < w_out; ++ox) {
              const int xx = ox * stride - pad_ + kx;
              if (xx < 0 || xx >= xs.w) continue;
              dx[(ci * xs.h + yy) * xs.w + xx] += src[oy * w_out + ox];
            }
          }
        }
      }
    }
  });
  return out;
}

Tensor Tape::cost_volume(Tensor f_left, Tensor f_right, std::shared_ptr<const WarpTable> warps_ptr) {
  const WarpTable& warps = *warps_ptr;
  const TensorShape fs = f_left.shape();
  if (!(fs == f_right.shape())) throw ArgumentError("tape: cost_volume feature shape mismatch");
  if (fs.h != warps.height || fs.w != warps.width)
    throw ArgumentError("tape: cost_volume warp table size mismatch");
  if (warps.hypotheses < 2) throw ArgumentError("tape: cost_volume needs >= 2 hypotheses");

  const int hw = fs.h * fs.w;
  const float* fl = f_left.value().data();
  const float* fr = f_right.value().data();
  Array value = Array::Zero(warps.hypotheses * hw);
  for (int hyp = 0; hyp < warps.hypotheses; ++hyp) {
    for (int pix = 0; pix < hw; ++pix) {
      const WarpSample& sl = warps.at_left(hyp, pix);
      const WarpSample& sr = warps.at_right(hyp, pix);
      if (!sl.valid || !sr.valid) continue;
      float cost = 0;
      for (int c = 0; c < fs.c; ++c) {
        const float* plane_l = fl + static_cast<std::ptrdiff_t>(c) * hw;
        const float* plane_r = fr + static_cast<std::ptrdiff_t>(c) * hw;
        float a = 0, b = 0;
        for (int j = 0; j < 4; ++j) {
          a += sl.weight[j] * plane_l[sl.idx[j]];
          b += sr.weight[j] * plane_r[sr.idx[j]];
        }
        cost += a * b;
      }
      value(hyp * hw + pix) = cost;
    }
  }
  Tensor out = make({warps.hypotheses, fs.h, fs.w}, std::move(value));

  backward_ops_.push_back([this, f_left, f_right, out, warps_ptr, fs, hw] {
    const WarpTable& warps = *warps_ptr;
    const float* fl_ = node(f_left).value.data();
    const float* fr_ = node(f_right).value.data();
    float* dl = node(f_left).grad.data();
    float* dr = node(f_right).grad.data();
    const float* g = node(out).grad.data();
    for (int hyp = 0; hyp < warps.hypotheses; ++hyp) {
      for (int pix = 0; pix < hw; ++pix) {
        const float gv = g[hyp * hw + pix];
        if (gv == 0.0f) continue;
        const WarpSample& sl = warps.at_left(hyp, pix);
        const WarpSample& sr = warps.at_right(hyp, pix);
        if (!sl.valid || !sr.valid) continue;
        for (int c = 0; c < fs.c; ++c) {
          const std::ptrdiff_t base = static_cast<std::ptrdiff_t>(c) * hw;
          float a = 0, b = 0;
          for (int j = 0; j < 4; ++j) {
            a += sl.weight[j] * fl_[base + sl.idx[j]];
            b += sr.weight[j] * fr_[base + sr.idx[j]];
          }
          for (int j = 0; j < 4; ++j) {
            dl[base + sl.idx[j]] += gv * sl.weight[j] * b;
            dr[base + sr.idx[j]] += gv * sr.weight[j] * a;
          }
        }
      }
    }
  });
  return out;
}

Tensor Tape::avgpool_c2(Tensor a) {
  const TensorShape as = a.shape();
  const int out_c = (as.c + 1) / 2;
  const int hw = as.h * as.w;
  Array value(out_c * hw);
  for (int co = 0; co < out_c; ++co) {
    const int c0 = 2 * co, c1 = 2 * co + 1;
    if (c1 < as.c)
      value.segment(co * hw, hw) =
          0.5f * (a.value().segment(c0 * hw, hw) + a.value().segment(c1 * hw, hw));
    else
      value.segment(co * hw, hw) = a.value().segment(c0 * hw, hw);
  }
  Tensor out = make({out_c, as.h, as.w}, std::move(value));
  backward_ops_.push_back([this, a, out, as, out_c, hw] {
    for (int co = 0; co < out_c; ++co) {
      const int c0 = 2 * co, c1 = 2 * co + 1;
      if (c1 < as.c) {
        node(a).grad.segment(c0 * hw, hw) += 0.5f * node(out).grad.segment(co * hw, hw);
        node(a).grad.segment(c1 * hw, hw) += 0.5f * node(out).grad.segment(co * hw, hw);
      } else {
        node(a).grad.segment(c0 * hw, hw) += node(out).grad.segment(co * hw, hw);
      }
    }
  });
  return out;
}

Tensor Tape::lookup(const std::vector<Tensor>& levels, Tensor d, int radius) {
  if (levels.empty()) throw ArgumentError("tape: lookup with no pyramid levels");
  const TensorShape ds = d.shape();
  if (ds.c != 1) throw ArgumentError("tape: lookup disparity must have one channel");
  const int hw = ds.h * ds.w;
  const int taps = 2 * radius + 1;
  const int out_c = static_cast<int>(levels.size()) * taps;
  Array value(out_c * hw);

  for (size_t l = 0; l < levels.size(); ++l) {
    const TensorShape vs = levels[l].shape();
    if (vs.h != ds.h || vs.w != ds.w) throw ArgumentError("tape: lookup level size mismatch");
    const float scale = 1.0f / static_cast<float>(1 << l);
    const float* vol = levels[l].value().data();
    for (int t = 0; t < taps; ++t) {
      const int oc = static_cast<int>(l) * taps + t;
      for (int pix = 0; pix < hw; ++pix) {
        float pos = d.value()(pix) * scale + static_cast<float>(t - radius);
        pos = std::min(std::max(pos, 0.0f), static_cast<float>(vs.c - 1));
        const int i0 = std::min(static_cast<int>(pos), vs.c - 2 >= 0 ? vs.c - 2 : 0);
        const float frac = pos - static_cast<float>(i0);
        const float v0 = vol[i0 * hw + pix];
        const float v1 = vol[std::min(i0 + 1, vs.c - 1) * hw + pix];
        value(oc * hw + pix) = (1.0f - frac) * v0 + frac * v1;
      }
    }
  }
  Tensor out = make({out_c, ds.h, ds.w}, std::move(value));

  backward_ops_.push_back([this, levels, d, out, radius, hw, taps] {
    const float* g = node(out).grad.data();
    for (size_t l = 0; l < levels.size(); ++l) {
      const TensorShape vs = node(levels[l]).shape;
      const float scale = 1.0f / static_cast<float>(1 << l);
      const float* vol = node(levels[l]).value.data();
      float* dvol = node(levels[l]).grad.data();
      float* dd = node(d).grad.data();
      for (int t = 0; t < taps; ++t) {
        const int oc = static_cast<int>(l) * taps + t;
        for (int pix = 0; pix < hw; ++pix) {
          const float gv = g[oc * hw + pix];
          if (gv == 0.0f) continue;
          const float raw = node(d).value(pix) * scale + static_cast<float>(t - radius);
          const bool clamped = raw <= 0.0f || raw >= static_cast<float>(vs.c - 1);
          const float pos = std::min(std::max(raw, 0.0f), static_cast<float>(vs.c - 1));
          const int i0 = std::min(static_cast<int>(pos), vs.c - 2 >= 0 ? vs.c - 2 : 0);
          const int i1 = std::min(i0 + 1, vs.c - 1);
          const float frac = pos - static_cast<float>(i0);
          dvol[i0 * hw + pix] += gv * (1.0f - frac);
          dvol[i1 * hw + pix] += gv * frac;
          if (!clamped) dd[pix] += gv * (vol[i1 * hw + pix] - vol[i0 * hw + pix]) * scale;
        }
      }
    }
  });
  return out;
}

Tensor Tape::softmax_groups(Tensor a, int group) {
  const TensorShape as = a.shape();
  if (as.c % group != 0) throw ArgumentError("tape: softmax group does not divide channels");
  const int hw = as.h * as.w;
  const int groups = as.c / group;
  Array value(as.size());
  const float* x = a.value().data();
  for (int gidx = 0; gidx < groups; ++gidx) {
    for (int pix = 0; pix < hw; ++pix) {
      float mx = -1e30f;
      for (int j = 0; j < group; ++j) mx = std::max(mx, x[(gidx * group + j) * hw + pix]);
      float denom = 0;
      for (int j = 0; j < group; ++j) {
        const float e = std::exp(x[(gidx * group + j) * hw + pix] - mx);
        value((gidx * group + j) * hw + pix) = e;
        denom += e;
      }
      for (int j = 0; j < group; ++j) value((gidx * group + j) * hw + pix) /= denom;
    }
  }
  Tensor out = make(as, std::move(value));
  backward_ops_.push_back([this, a, out, group, groups, hw] {
    const float* y = node(out).value.data();
    const float* g = node(out).grad.data();
    float* dx = node(a).grad.data();
    for (int gidx = 0; gidx < groups; ++gidx) {
      for (int pix = 0; pix < hw; ++pix) {
        float dot = 0;
        for (int j = 0; j < group; ++j) {
          const int i = (gidx * group + j) * hw + pix;
          dot += g[i] * y[i];
        }
        for (int j = 0; j < group; ++j) {
          const int i = (gidx * group + j) * hw + pix;
          dx[i] += y[i] * (g[i] - dot);
        }
      }
    }
  });
  return out;
}

Tensor Tape::upsample_convex4(Tensor d, Tensor weights) {
  const TensorShape ds = d.shape();
  if (ds.c != 1) throw ArgumentError("tape: upsample input must have one channel");
  if (weights.shape().c != 9 * 16 || weights.shape().h != ds.h || weights.shape().w != ds.w)
    throw ArgumentError("tape: upsample weights shape mismatch");
  const int h = ds.h, w = ds.w, hw = h * w;
  const int H = 4 * h, W = 4 * w;
  Array value(H * W);
  const float* dv = d.value().data();
  const float* wv = weights.value().data();
  auto clamp_idx = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };
  for (int Y = 0; Y < H; ++Y) {
    const int cy = Y / 4, sy = Y % 4;
    for (int X = 0; X < W; ++X) {
      const int cx = X / 4, sx = X % 4;
      const int s = sy * 4 + sx;
      float acc = 0;
      for (int j = 0; j < 9; ++j) {
        const int ny = clamp_idx(cy + j / 3 - 1, 0, h - 1);
        const int nx = clamp_idx(cx + j % 3 - 1, 0, w - 1);
        acc += wv[(s * 9 + j) * hw + cy * w + cx] * dv[ny * w + nx];
      }
      value(Y * W + X) = acc;
    }
  }
  Tensor out = make({1, H, W}, std::move(value));
  backward_ops_.push_back([this, d, weights, out, h, w, hw, H, W, clamp_idx] {
    const float* g = node(out).grad.data();
    const float* dv_ = node(d).value.data();
    const float* wv_ = node(weights).value.data();
    float* dd = node(d).grad.data();
    float* dw = node(weights).grad.data();
    for (int Y = 0; Y < H; ++Y) {
      const int cy = Y / 4, sy = Y % 4;
      for (int X = 0; X < W; ++X) {
        const float gv = g[Y * W + X];
        if (gv == 0.0f) continue;
        const int cx = X / 4, sx = X % 4;
        const int s = sy * 4 + sx;
        for (int j = 0; j < 9; ++j) {
          const int ny = clamp_idx(cy + j / 3 - 1, 0, h - 1);
          const int nx = clamp_idx(cx + j % 3 - 1, 0, w - 1);
          dw[(s * 9 + j) * hw + cy * w + cx] += gv * dv_[ny * w + nx];
          dd[ny * w + nx] += gv * wv_[(s * 9 + j) * hw + cy * w + cx];
        }
      }
    }
  });
  return out;
}

Tensor Tape::upsample_nearest(Tensor a, int factor) {
  const TensorShape as = a.shape();
  const int H = as.h * factor, W = as.w * factor;
  Array value(as.c * H * W);
  const float* x = a.value().data();
  for (int c = 0; c < as.c; ++c)
    for (int Y = 0; Y < H; ++Y)
      for (int X = 0; X < W; ++X)
        value((c * H + Y) * W + X) = x[(c * as.h + Y / factor) * as.w + X / factor];
  Tensor out = make({as.c, H, W}, std::move(value));
  backward_ops_.push_back([this, a, out, as, factor, H, W] {
    const float* g = node(out).grad.data();
    float* dx = node(a).grad.data();
    for (int c = 0; c < as.c; ++c)
      for (int Y = 0; Y < H; ++Y)
        for (int X = 0; X < W; ++X)
          dx[(c * as.h + Y / factor) * as.w + X / factor] += g[(c * H + Y) * W + X];
  });
  return out;
}

Tensor Tape::weighted_l1(Tensor pred, const Array& target, const Array& weight) {
  if (pred.value().size() != target.size() || target.size() != weight.size())
    throw ArgumentError("tape: weighted_l1 size mismatch");
  const float total = (weight * (pred.value() - target).abs()).sum();
  Tensor out = make({1, 1, 1}, Array::Constant(1, total));
  // shared_ptr keeps the captured constants alive past the caller's frame
  auto tgt = std::make_shared<Array>(target);
  auto wgt = std::make_shared<Array>(weight);
  backward_ops_.push_back([this, pred, out, tgt, wgt] {
    const float g = node(out).grad(0);
    node(pred).grad += g * (*wgt) * (node(pred).value - *tgt).sign();
  });
  return out;
}

Tensor Tape::add_scalars(const std::vector<Tensor>& scalars, const std::vector<float>& coeffs) {
  if (scalars.size() != coeffs.size() || scalars.empty())
    throw ArgumentError("tape: add_scalars arity mismatch");
  float total = 0;
  for (size_t i = 0; i < scalars.size(); ++i) {
    if (scalars[i].shape().size() != 1) throw ArgumentError("tape: add_scalars needs scalars");
    total += coeffs[i] * scalars[i].value()(0);
  }
  Tensor out = make({1, 1, 1}, Array::Constant(1, total));
  backward_ops_.push_back([this, scalars, coeffs, out] {
    const float g = node(out).grad(0);
    for (size_t i = 0; i < scalars.size(); ++i) node(scalars[i]).grad(0) += g * coeffs[i];
  });
  return out;
}

void Tape::backward(Tensor loss) {
  if (loss.shape().size() != 1) throw ArgumentError("tape: backward needs a scalar loss");
  node(loss).grad(0) = 1.0f;
  for (auto it = backward_ops_.rbegin(); it != backward_ops_.rend(); ++it) (*it)();
}

}  // namespace asgrasp::nn
