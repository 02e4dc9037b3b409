#pragma once

#include "asgrasp/types.hpp"

#include <Eigen/Core>

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace asgrasp::nn {

using Array = Eigen::ArrayXf;

// Channel-major tensor layout: index = (c * h + y) * w + x.
struct TensorShape {
  int c = 1, h = 1, w = 1;

  int size() const { return c * h * w; }
  bool operator==(const TensorShape&) const = default;
};

struct Parameter {
  std::string name;
  TensorShape shape;
  Array value;
  Array grad;
};

class Tape;

// Lightweight handle to a node on a tape.
struct Tensor {
  Tape* tape = nullptr;
  int id = -1;

  const TensorShape& shape() const;
  const Array& value() const;
  const Array& grad() const;
};

// Bilinear sampling plan for one warped feature fetch.
struct WarpSample {
  int idx[4] = {0, 0, 0, 0};  // spatial indices (y*w+x) of the 4 neighbors
  float weight[4] = {0, 0, 0, 0};
  bool valid = false;
};

// Precomputed warps for cost-volume construction: sample[hyp][pixel].
struct WarpTable {
  int hypotheses = 0;
  int height = 0, width = 0;
  std::vector<WarpSample> left, right;  // hypotheses * height * width

  const WarpSample& at_left(int hyp, int pix) const { return left[hyp * height * width + pix]; }
  const WarpSample& at_right(int hyp, int pix) const { return right[hyp * height * width + pix]; }
};

// Reverse-mode autodiff over dense float tensors. Values are computed
// eagerly; backward replays recorded closures in reverse order.
class Tape {
 public:
  Tensor constant(const TensorShape& shape, Array data);
  Tensor zeros(const TensorShape& shape);
  // Registers a trainable parameter; backward accumulates into p.grad.
  Tensor use(Parameter& p);

  Tensor add(Tensor a, Tensor b);
  Tensor sub(Tensor a, Tensor b);
  Tensor mul(Tensor a, Tensor b);
  // s * a + t, elementwise
  Tensor affine(Tensor a, float s, float t);
  Tensor relu(Tensor a);
  Tensor sigmoid(Tensor a);
  Tensor tanh(Tensor a);
  Tensor concat_c(const std::vector<Tensor>& parts);

  // 3x3 / kxk convolution, zero padding k/2, arbitrary stride. Weight layout:
  // (out_c, in_c * k * k) row-major; bias length out_c.
  Tensor conv2d(Tensor x, Tensor weight, Tensor bias, int out_c, int k, int stride);

  // Correlation volume: out channel i = <left(warp_l(p, d_i)), right(warp_r(p, d_i))>.
  // Invalid warps contribute zero. The table is shared with the backward pass.
  Tensor cost_volume(Tensor f_left, Tensor f_right, std::shared_ptr<const WarpTable> warps);

  // Halves the channel count by averaging channel pairs (odd tail kept as-is).
  Tensor avgpool_c2(Tensor a);

  // Per-pixel 1-D linear interpolation along the channel axis of each pyramid
  // level at positions d/2^level + offset for offsets in [-radius, radius].
  // Positions are clamped to the level's channel range.
  Tensor lookup(const std::vector<Tensor>& levels, Tensor d, int radius);

  // Softmax over consecutive channel groups of size `group` at each pixel.
  Tensor softmax_groups(Tensor a, int group);

  // Learned convex 4x upsampling: d is (1,h,w), weights (9*16,h,w) already
  // softmaxed over each group of 9.
  Tensor upsample_convex4(Tensor d, Tensor weights);

  Tensor upsample_nearest(Tensor a, int factor);

  // sum(weight * |pred - target|) as a scalar tensor.
  Tensor weighted_l1(Tensor pred, const Array& target, const Array& weight);

  Tensor add_scalars(const std::vector<Tensor>& scalars, const std::vector<float>& coeffs);

  void backward(Tensor loss);

  const TensorShape& shape(int id) const { return nodes_[id].shape; }
  const Array& value(int id) const { return nodes_[id].value; }
  const Array& grad(int id) const { return nodes_[id].grad; }

 private:
  struct Node {
    TensorShape shape;
    Array value;
    Array grad;
  };

  Tensor make(const TensorShape& shape, Array value);
  Node& node(Tensor t) { return nodes_[t.id]; }

  std::vector<Node> nodes_;
  std::vector<std::function<void()>> backward_ops_;
};

}  // namespace asgrasp::nn
