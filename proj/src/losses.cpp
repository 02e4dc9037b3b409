#include "asgrasp/losses.hpp"

#include <cmath>

namespace asgrasp {

void GeometryLossConfig::validate() const {
  if (!(gamma > 0 && gamma <= 1)) throw ArgumentError("geometry loss: gamma must be in (0,1]");
  if (mask_weight < 1) throw ArgumentError("geometry loss: mask_weight must be >= 1");
  if (iterations < 1) throw ArgumentError("geometry loss: need >= 1 iteration");
  if (second_layer_weight < 0) throw ArgumentError("geometry loss: negative layer weight");
}

nn::Array geometry_loss_weights(const ImageU8& valid, const ImageU8& highlight,
                                double mask_weight) {
  if (valid.rows() != highlight.rows() || valid.cols() != highlight.cols())
    throw ArgumentError("geometry loss: mask size mismatch");
  nn::Array w(valid.size());
  double total = 0;
  const int h = static_cast<int>(valid.rows()), wd = static_cast<int>(valid.cols());
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < wd; ++u) {
      const double weight = valid(v, u) ? (highlight(v, u) ? mask_weight : 1.0) : 0.0;
      w(v * wd + u) = static_cast<float>(weight);
      total += weight;
    }
  }
  if (total <= 0) throw ArgumentError("geometry loss: empty valid mask");
  w /= static_cast<float>(total);
  return w;
}

double geometry_loss(const std::vector<std::pair<ImageF, ImageF>>& history, const ImageF& gt_d1,
                     const ImageF& gt_d2, const ImageU8& valid, const ImageU8& highlight,
                     const GeometryLossConfig& cfg) {
  cfg.validate();
  if (static_cast<int>(history.size()) != cfg.iterations)
    throw ArgumentError("geometry loss: history length does not match configured iterations");
  const nn::Array w = geometry_loss_weights(valid, highlight, cfg.mask_weight);
  auto l1 = [&](const ImageF& pred, const ImageF& gt) {
    const nn::Array diff =
        (Eigen::Map<const nn::Array>(pred.data(), pred.size()) -
         Eigen::Map<const nn::Array>(gt.data(), gt.size()))
            .abs();
    return static_cast<double>((w * diff).sum());
  };
  double loss = 0;
  const int n = cfg.iterations;
  for (int i = 1; i <= n; ++i) {
    const double discount = std::pow(cfg.gamma, n - i);
    const auto& [d1, d2] = history[i - 1];
    loss += discount * (l1(d1, gt_d1) + cfg.second_layer_weight * l1(d2, gt_d2));
  }
  if (!std::isfinite(loss)) throw DomainError("geometry loss: non-finite value");
  return loss;
}

nn::Tensor geometry_loss(nn::Tape& tape,
                         const std::vector<std::pair<nn::Tensor, nn::Tensor>>& history,
                         const nn::Array& gt_d1, const nn::Array& gt_d2, const nn::Array& weights,
                         const GeometryLossConfig& cfg) {
  cfg.validate();
  if (static_cast<int>(history.size()) != cfg.iterations)
    throw ArgumentError("geometry loss: history length does not match configured iterations");
  std::vector<nn::Tensor> terms;
  std::vector<float> coeffs;
  const int n = cfg.iterations;
  for (int i = 1; i <= n; ++i) {
    const float discount = static_cast<float>(std::pow(cfg.gamma, n - i));
    terms.push_back(tape.weighted_l1(history[i - 1].first, gt_d1, weights));
    coeffs.push_back(discount);
    if (cfg.second_layer_weight > 0) {
      terms.push_back(tape.weighted_l1(history[i - 1].second, gt_d2, weights));
      coeffs.push_back(discount * static_cast<float>(cfg.second_layer_weight));
    }
  }
  return tape.add_scalars(terms, coeffs);
}

double grasp_loss(const GraspLossComponents& c) {
  for (double v : {c.l_objectness, c.l_point, c.l_view, c.l_score, c.l_width}) {
    if (v < 0) throw ArgumentError("grasp loss: negative component");
    if (!std::isfinite(v)) throw ArgumentError("grasp loss: non-finite component");
  }
  return c.l_objectness + c.alpha * (c.l_point + c.lambda * c.l_view) +
         c.beta * (c.l_score + c.l_width);
}

}  // namespace asgrasp
