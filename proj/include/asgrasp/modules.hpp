#pragma once

#include "asgrasp/tape.hpp"

#include <cstdint>
#include <map>
#include <string>

namespace asgrasp::nn {

// Named parameter set with deterministic, seed-driven initialization.
// std::map keeps iteration order stable across runs.
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t init_seed = 1) : init_seed_(init_seed) {}

  // He-uniform initialized weight; fan_in is the flattened input size.
  Parameter& create(const std::string& name, const TensorShape& shape, int fan_in);
  Parameter& create_zeros(const std::string& name, const TensorShape& shape);

  Parameter& at(const std::string& name);
  const std::map<std::string, Parameter>& all() const { return params_; }
  std::map<std::string, Parameter>& all() { return params_; }

  void zero_grads();
  std::size_t total_size() const;

 private:
  std::map<std::string, Parameter> params_;
  std::uint64_t init_seed_;
};

// Convolution layer bound to a ParamStore.
struct Conv2d {
  Parameter* weight = nullptr;
  Parameter* bias = nullptr;
  int in_c = 0, out_c = 0, k = 3, stride = 1;

  Conv2d() = default;
  Conv2d(ParamStore& store, const std::string& name, int in_c, int out_c, int k, int stride);

  Tensor operator()(Tape& tape, Tensor x) const;
};

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;
  double grad_clip = 1.0;  // elementwise clamp to [-grad_clip, grad_clip]; <=0 disables
};

class AdamW {
 public:
  explicit AdamW(const AdamWConfig& cfg) : cfg_(cfg) {}

  void step(ParamStore& store, double lr_scale = 1.0);
  int steps_taken() const { return t_; }

 private:
  AdamWConfig cfg_;
  std::map<std::string, Array> m_, v_;
  int t_ = 0;
};

// Checkpoint container: magic, JSON manifest (config hash, step count,
// tensor directory), then little-endian f32 payload.
void save_checkpoint(const std::string& path, const ParamStore& store, std::uint64_t config_hash,
                     int step);
// Throws DataError on config-hash mismatch or malformed file.
int load_checkpoint(const std::string& path, ParamStore& store, std::uint64_t expected_hash);

}  // namespace asgrasp::nn
