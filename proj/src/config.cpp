#include "asgrasp/config.hpp"

#include <nlohmann/json.hpp>

#include <fstream>

namespace asgrasp {

std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace {

using nlohmann::json;

json mix_to_json(const MaterialMix& m) {
  return {{"diffuse", m.diffuse}, {"specular", m.specular}, {"transparent", m.transparent}};
}

MaterialMix mix_from_json(const json& j) {
  MaterialMix m;
  m.diffuse = j.value("diffuse", m.diffuse);
  m.specular = j.value("specular", m.specular);
  m.transparent = j.value("transparent", m.transparent);
  return m;
}

json generator_to_json(const GeneratorParams& g) {
  return {{"workspace_radius", g.workspace_radius},
          {"camera_distance_min", g.camera_distance_min},
          {"camera_distance_max", g.camera_distance_max},
          {"camera_elevation_min", g.camera_elevation_min},
          {"camera_elevation_max", g.camera_elevation_max},
          {"max_rejections", g.max_rejections}};
}

GeneratorParams generator_from_json(const json& j) {
  GeneratorParams g;
  g.workspace_radius = j.value("workspace_radius", g.workspace_radius);
  g.camera_distance_min = j.value("camera_distance_min", g.camera_distance_min);
  g.camera_distance_max = j.value("camera_distance_max", g.camera_distance_max);
  g.camera_elevation_min = j.value("camera_elevation_min", g.camera_elevation_min);
  g.camera_elevation_max = j.value("camera_elevation_max", g.camera_elevation_max);
  g.max_rejections = j.value("max_rejections", g.max_rejections);
  return g;
}

json pattern_to_json(const SpecklePattern& p) {
  return {{"seed", p.seed}, {"dot_density", p.dot_density}, {"fov", p.fov}};
}

SpecklePattern pattern_from_json(const json& j) {
  SpecklePattern p;
  p.seed = j.value("seed", p.seed);
  p.dot_density = j.value("dot_density", p.dot_density);
  p.fov = j.value("fov", p.fov);
  return p;
}

json render_to_json(const RenderParams& r) {
  return {{"tau", r.tau},
          {"rho_spec", r.rho_spec},
          {"sigma_ir", r.sigma_ir},
          {"spec_dropout", r.spec_dropout},
          {"ambient", r.ambient}};
}

RenderParams render_from_json(const json& j) {
  RenderParams r;
  r.tau = j.value("tau", r.tau);
  r.rho_spec = j.value("rho_spec", r.rho_spec);
  r.sigma_ir = j.value("sigma_ir", r.sigma_ir);
  r.spec_dropout = j.value("spec_dropout", r.spec_dropout);
  r.ambient = j.value("ambient", r.ambient);
  return r;
}

json corruption_to_json(const CorruptionParams& c) {
  return {{"sigma_d", c.sigma_d},
          {"p_miss", c.p_miss},
          {"p_through", c.p_through},
          {"p_spec", c.p_spec}};
}

CorruptionParams corruption_from_json(const json& j) {
  CorruptionParams c;
  c.sigma_d = j.value("sigma_d", c.sigma_d);
  c.p_miss = j.value("p_miss", c.p_miss);
  c.p_through = j.value("p_through", c.p_through);
  c.p_spec = j.value("p_spec", c.p_spec);
  return c;
}

json training_to_json(const TrainConfig& t) {
  return {{"steps", t.steps},
          {"batch_size", t.batch_size},
          {"lr", t.lr},
          {"lr_decay_per_epoch", t.lr_decay_per_epoch},
          {"weight_decay", t.weight_decay},
          {"grad_clip", t.grad_clip},
          {"gamma", t.gamma},
          {"mask_weight", t.mask_weight},
          {"phase1_steps", t.phase1_steps},
          {"iterations", t.iterations},
          {"shuffle_seed", t.shuffle_seed},
          {"checkpoint_interval", t.checkpoint_interval}};
}

TrainConfig training_from_json(const json& j) {
  TrainConfig t;
  t.steps = j.value("steps", t.steps);
  t.batch_size = j.value("batch_size", t.batch_size);
  t.lr = j.value("lr", t.lr);
  t.lr_decay_per_epoch = j.value("lr_decay_per_epoch", t.lr_decay_per_epoch);
  t.weight_decay = j.value("weight_decay", t.weight_decay);
  t.grad_clip = j.value("grad_clip", t.grad_clip);
  t.gamma = j.value("gamma", t.gamma);
  t.mask_weight = j.value("mask_weight", t.mask_weight);
  t.phase1_steps = j.value("phase1_steps", t.phase1_steps);
  t.iterations = j.value("iterations", t.iterations);
  t.shuffle_seed = j.value("shuffle_seed", t.shuffle_seed);
  t.checkpoint_interval = j.value("checkpoint_interval", t.checkpoint_interval);
  return t;
}

json gripper_to_json(const GripperParams& g) {
  return {{"max_width", g.max_width},
          {"finger_thickness", g.finger_thickness},
          {"finger_height", g.finger_height},
          {"finger_reach", g.finger_reach},
          {"palm_depth", g.palm_depth}};
}

GripperParams gripper_from_json(const json& j) {
  GripperParams g;
  g.max_width = j.value("max_width", g.max_width);
  g.finger_thickness = j.value("finger_thickness", g.finger_thickness);
  g.finger_height = j.value("finger_height", g.finger_height);
  g.finger_reach = j.value("finger_reach", g.finger_reach);
  g.palm_depth = j.value("palm_depth", g.palm_depth);
  return g;
}

json eval_to_json(const EvalConfig& e) {
  return {{"episodes", e.episodes},
          {"scene_seed", e.scene_seed},
          {"objects_per_scene", e.objects_per_scene},
          {"attempt_cap", e.attempt_cap},
          {"mix", mix_to_json(e.mix)},
          {"input",
           {{"crop_min", e.input.crop_min},
            {"crop_max", e.input.crop_max},
            {"visible_cap", e.input.visible_cap},
            {"invisible_cap", e.input.invisible_cap},
            {"layer_eps", e.input.layer_eps}}},
          {"proposer",
           {{"friction", e.proposer.friction},
            {"pair_samples", e.proposer.pair_samples},
            {"max_proposals", e.proposer.max_proposals},
            {"normal_neighbors", e.proposer.normal_neighbors},
            {"clearance", e.proposer.clearance},
            {"min_enclosed", e.proposer.min_enclosed},
            {"gripper", gripper_to_json(e.proposer.gripper)}}},
          {"scorer",
           {{"friction_eval", e.scorer.friction_eval},
            {"contact_tolerance", e.scorer.contact_tolerance},
            {"gripper", gripper_to_json(e.scorer.gripper)}}}};
}

EvalConfig eval_from_json(const json& j) {
  EvalConfig e;
  e.episodes = j.value("episodes", e.episodes);
  e.scene_seed = j.value("scene_seed", e.scene_seed);
  e.objects_per_scene = j.value("objects_per_scene", e.objects_per_scene);
  e.attempt_cap = j.value("attempt_cap", e.attempt_cap);
  if (j.contains("mix")) e.mix = mix_from_json(j.at("mix"));
  if (j.contains("input")) {
    const json& i = j.at("input");
    e.input.crop_min = i.value("crop_min", e.input.crop_min);
    e.input.crop_max = i.value("crop_max", e.input.crop_max);
    e.input.visible_cap = i.value("visible_cap", e.input.visible_cap);
    e.input.invisible_cap = i.value("invisible_cap", e.input.invisible_cap);
    e.input.layer_eps = i.value("layer_eps", e.input.layer_eps);
  }
  if (j.contains("proposer")) {
    const json& p = j.at("proposer");
    e.proposer.friction = p.value("friction", e.proposer.friction);
    e.proposer.pair_samples = p.value("pair_samples", e.proposer.pair_samples);
    e.proposer.max_proposals = p.value("max_proposals", e.proposer.max_proposals);
    e.proposer.normal_neighbors = p.value("normal_neighbors", e.proposer.normal_neighbors);
    e.proposer.clearance = p.value("clearance", e.proposer.clearance);
    e.proposer.min_enclosed = p.value("min_enclosed", e.proposer.min_enclosed);
    if (p.contains("gripper")) e.proposer.gripper = gripper_from_json(p.at("gripper"));
  }
  if (j.contains("scorer")) {
    const json& s = j.at("scorer");
    e.scorer.friction_eval = s.value("friction_eval", e.scorer.friction_eval);
    e.scorer.contact_tolerance = s.value("contact_tolerance", e.scorer.contact_tolerance);
    if (s.contains("gripper")) e.scorer.gripper = gripper_from_json(s.at("gripper"));
  }
  return e;
}

}  // namespace

void DatasetConfig::validate() const {
  if (scene_count < 1) throw ArgumentError("dataset: scene_count must be >= 1");
  if (object_min < 0 || object_max < object_min)
    throw ArgumentError("dataset: bad object count range");
  if (width < 16 || height < 16 || width % 16 || height % 16)
    throw ArgumentError("dataset: image dimensions must be positive multiples of 16");
  mix.validate();
}

void EvalConfig::validate() const {
  if (episodes < 1) throw ArgumentError("evaluation: episodes must be >= 1");
  if (objects_per_scene < 1) throw ArgumentError("evaluation: objects_per_scene must be >= 1");
  if (attempt_cap < 1) throw ArgumentError("evaluation: attempt_cap must be >= 1");
  if (!(input.crop_min > 0 && input.crop_max > input.crop_min))
    throw ArgumentError("evaluation: bad crop range");
  mix.validate();
}

nlohmann::json ExperimentConfig::to_json() const {
  return {{"dataset",
           {{"scene_count", dataset.scene_count},
            {"object_min", dataset.object_min},
            {"object_max", dataset.object_max},
            {"seed", dataset.seed},
            {"width", dataset.width},
            {"height", dataset.height},
            {"mix", mix_to_json(dataset.mix)},
            {"generator", generator_to_json(dataset.generator)},
            {"pattern", pattern_to_json(dataset.pattern)},
            {"render", render_to_json(dataset.render)},
            {"corruption", corruption_to_json(dataset.corruption)}}},
          {"network", network.to_json()},
          {"training", training_to_json(training)},
          {"evaluation", eval_to_json(evaluation)}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    c.dataset.scene_count = d.value("scene_count", c.dataset.scene_count);
    c.dataset.object_min = d.value("object_min", c.dataset.object_min);
    c.dataset.object_max = d.value("object_max", c.dataset.object_max);
    c.dataset.seed = d.value("seed", c.dataset.seed);
    c.dataset.width = d.value("width", c.dataset.width);
    c.dataset.height = d.value("height", c.dataset.height);
    if (d.contains("mix")) c.dataset.mix = mix_from_json(d.at("mix"));
    if (d.contains("generator")) c.dataset.generator = generator_from_json(d.at("generator"));
    if (d.contains("pattern")) c.dataset.pattern = pattern_from_json(d.at("pattern"));
    if (d.contains("render")) c.dataset.render = render_from_json(d.at("render"));
    if (d.contains("corruption"))
      c.dataset.corruption = corruption_from_json(d.at("corruption"));
  }
  if (j.contains("network")) c.network = StereoNetConfig::from_json(j.at("network"));
  if (j.contains("training")) c.training = training_from_json(j.at("training"));
  if (j.contains("evaluation")) c.evaluation = eval_from_json(j.at("evaluation"));
  return c;
}

std::uint64_t ExperimentConfig::hash() const { return fnv1a64(to_json().dump()); }

void ExperimentConfig::validate() const {
  dataset.validate();
  network.validate();
  training.validate();
  evaluation.validate();
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ArgumentError("config: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError("config: parse error in " + path + ": " + e.what());
  }
  try {
    ExperimentConfig c = ExperimentConfig::from_json(j);
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ArgumentError("config: bad value in " + path + ": " + e.what());
  }
}

ExperimentConfig make_toy_config() {
  ExperimentConfig c;
  c.dataset.scene_count = 200;
  c.dataset.object_min = 3;
  c.dataset.object_max = 6;
  c.dataset.width = 128;
  c.dataset.height = 96;
  c.dataset.generator.camera_distance_min = 0.4;
  c.dataset.generator.camera_distance_max = 0.7;

  c.network.feature_channels = 16;
  c.network.context_channels = 16;
  c.network.hidden_channels = 16;
  c.network.hypothesis_count = 16;
  c.network.lookup_radius = 3;
  c.network.pyramid_levels = 2;
  c.network.iterations = 5;
  c.network.d_min = 0.25;
  c.network.d_max = 1.0;

  c.training.steps = 600;
  c.training.phase1_steps = 150;
  c.training.iterations = 5;

  c.evaluation.episodes = 50;
  c.evaluation.objects_per_scene = 5;
  c.evaluation.mix = {0.2, 0.2, 0.6};  // transparent-heavy episodes
  return c;
}

}  // namespace asgrasp
