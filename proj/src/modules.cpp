#include "asgrasp/modules.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include <nlohmann/json.hpp>

namespace asgrasp::nn {

using nlohmann::json;

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

Parameter& ParamStore::create(const std::string& name, const TensorShape& shape, int fan_in) {
  auto [it, inserted] = params_.try_emplace(name);
  if (!inserted) throw ArgumentError("parameter already exists: " + name);
  Parameter& p = it->second;
  p.name = name;
  p.shape = shape;
  p.value.resize(shape.size());
  p.grad = Array::Zero(shape.size());
  std::mt19937_64 rng(init_seed_ ^ fnv1a(name));
  const float bound = std::sqrt(6.0f / static_cast<float>(std::max(1, fan_in)));
  std::uniform_real_distribution<float> dist(-bound, bound);
  for (int i = 0; i < shape.size(); ++i) p.value(i) = dist(rng);
  return p;
}

Parameter& ParamStore::create_zeros(const std::string& name, const TensorShape& shape) {
  auto [it, inserted] = params_.try_emplace(name);
  if (!inserted) throw ArgumentError("parameter already exists: " + name);
  Parameter& p = it->second;
  p.name = name;
  p.shape = shape;
  p.value = Array::Zero(shape.size());
  p.grad = Array::Zero(shape.size());
  return p;
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw ArgumentError("no such parameter: " + name);
  return it->second;
}

void ParamStore::zero_grads() {
  for (auto& [name, p] : params_) p.grad.setZero();
}

std::size_t ParamStore::total_size() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += static_cast<std::size_t>(p.shape.size());
  return n;
}

Conv2d::Conv2d(ParamStore& store, const std::string& name, int in_c_, int out_c_, int k_,
               int stride_)
    : in_c(in_c_), out_c(out_c_), k(k_), stride(stride_) {
  weight = &store.create(name + ".weight", {out_c_, in_c_ * k_ * k_, 1}, in_c_ * k_ * k_);
  bias = &store.create_zeros(name + ".bias", {out_c_, 1, 1});
}

Tensor Conv2d::operator()(Tape& tape, Tensor x) const {
  if (x.shape().c != in_c) throw ArgumentError("conv " + weight->name + ": channel mismatch");
  return tape.conv2d(x, tape.use(*weight), tape.use(*bias), out_c, k, stride);
}

void AdamW::step(ParamStore& store, double lr_scale) {
  ++t_;
  const float b1 = static_cast<float>(cfg_.beta1);
  const float b2 = static_cast<float>(cfg_.beta2);
  const float bias1 = 1.0f - std::pow(b1, static_cast<float>(t_));
  const float bias2 = 1.0f - std::pow(b2, static_cast<float>(t_));
  const float lr = static_cast<float>(cfg_.lr * lr_scale);
  for (auto& [name, p] : store.all()) {
    Array g = p.grad;
    if (cfg_.grad_clip > 0) {
      const float c = static_cast<float>(cfg_.grad_clip);
      g = g.min(c).max(-c);
    }
    auto& m = m_.try_emplace(name, Array::Zero(g.size())).first->second;
    auto& v = v_.try_emplace(name, Array::Zero(g.size())).first->second;
    m = b1 * m + (1.0f - b1) * g;
    v = b2 * v + (1.0f - b2) * g * g;
    const Array m_hat = m / bias1;
    const Array v_hat = v / bias2;
    // decoupled weight decay
    p.value -= lr * static_cast<float>(cfg_.weight_decay) * p.value;
    p.value -= lr * m_hat / (v_hat.sqrt() + static_cast<float>(cfg_.eps));
  }
}

void save_checkpoint(const std::string& path, const ParamStore& store, std::uint64_t config_hash,
                     int step) {
  json manifest;
  manifest["config_hash"] = config_hash;
  manifest["step"] = step;
  json tensors = json::array();
  std::size_t offset = 0;
  for (const auto& [name, p] : store.all()) {
    tensors.push_back({{"name", name},
                       {"shape", {p.shape.c, p.shape.h, p.shape.w}},
                       {"offset", offset}});
    offset += static_cast<std::size_t>(p.shape.size());
  }
  manifest["tensors"] = tensors;
  const std::string mstr = manifest.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out.write("ASGCKPT1", 8);
  const std::uint64_t mlen = mstr.size();
  out.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
  out.write(mstr.data(), static_cast<std::streamsize>(mstr.size()));
  for (const auto& [name, p] : store.all())
    out.write(reinterpret_cast<const char*>(p.value.data()),
              static_cast<std::streamsize>(sizeof(float) * p.value.size()));
}

int load_checkpoint(const std::string& path, ParamStore& store, std::uint64_t expected_hash) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint: " + path);
  char magic[8];
  in.read(magic, 8);
  if (in.gcount() != 8 || std::memcmp(magic, "ASGCKPT1", 8) != 0)
    throw DataError("not a checkpoint file: " + path);
  std::uint64_t mlen = 0;
  in.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
  std::string mstr(mlen, '\0');
  in.read(mstr.data(), static_cast<std::streamsize>(mlen));
  if (in.gcount() != static_cast<std::streamsize>(mlen))
    throw DataError("truncated checkpoint manifest: " + path);
  json manifest;
  try {
    manifest = json::parse(mstr);
  } catch (const json::exception& e) {
    throw DataError("corrupt checkpoint manifest: " + std::string(e.what()));
  }
  const std::uint64_t hash = manifest.at("config_hash");
  if (hash != expected_hash)
    throw DataError("checkpoint config hash mismatch (file " + std::to_string(hash) +
                    ", expected " + std::to_string(expected_hash) + ")");
  for (const auto& entry : manifest.at("tensors")) {
    const std::string name = entry.at("name");
    Parameter& p = store.at(name);
    const auto shape = entry.at("shape").get<std::vector<int>>();
    if (shape.size() != 3 || shape[0] != p.shape.c || shape[1] != p.shape.h ||
        shape[2] != p.shape.w)
      throw DataError("checkpoint tensor shape mismatch for " + name);
    in.read(reinterpret_cast<char*>(p.value.data()),
            static_cast<std::streamsize>(sizeof(float) * p.value.size()));
    if (in.gcount() != static_cast<std::streamsize>(sizeof(float) * p.value.size()))
      throw DataError("truncated checkpoint payload at " + name);
  }
  return manifest.at("step");
}

}  // namespace asgrasp::nn
