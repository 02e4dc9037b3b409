#pragma once

#include "asgrasp/graspeval.hpp"
#include "asgrasp/render.hpp"
#include "asgrasp/scene.hpp"
#include "asgrasp/stereonet.hpp"
#include "asgrasp/train.hpp"

#include <nlohmann/json_fwd.hpp>

#include <string>

namespace asgrasp {

struct DatasetConfig {
  int scene_count = 200;
  int object_min = 4;
  int object_max = 8;
  std::uint64_t seed = 0;       // scene seeds are seed .. seed + scene_count - 1
  int width = 128;
  int height = 96;
  MaterialMix mix;
  GeneratorParams generator;
  SpecklePattern pattern;
  RenderParams render;
  CorruptionParams corruption;

  void validate() const;
};

struct EvalConfig {
  int episodes = 50;
  std::uint64_t scene_seed = 100000;
  int objects_per_scene = 5;
  int attempt_cap = 15;
  MaterialMix mix;  // episode scenes; defaults to an even material split
  GraspInputParams input;
  ProposerParams proposer;
  ScorerParams scorer;

  void validate() const;
};

// Everything one run needs: data synthesis, network, optimizer, evaluation.
struct ExperimentConfig {
  DatasetConfig dataset;
  StereoNetConfig network;
  TrainConfig training;
  EvalConfig evaluation;

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  std::uint64_t hash() const;  // stable digest of the canonical JSON form
  void validate() const;
};

ExperimentConfig load_experiment_config(const std::string& path);

// Small toy setup sized so a CPU training run finishes quickly.
ExperimentConfig make_toy_config();

std::uint64_t fnv1a64(const std::string& data);

}  // namespace asgrasp
