#include "asgrasp/config.hpp"
#include "asgrasp/graspeval.hpp"
#include "asgrasp/train.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace asgrasp;

namespace {

CameraRig make_rig(const DatasetConfig& d) {
  CameraRig rig = make_default_rig(d.width, d.height);
  rig.projector.pattern_seed = d.pattern.seed;
  return rig;
}

int scene_object_count(const DatasetConfig& d, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0xa5a5a5a5ull);
  return std::uniform_int_distribution<int>(d.object_min, d.object_max)(rng);
}

void generate_dataset(const ExperimentConfig& cfg, std::uint64_t base_seed, int count,
                      const fs::path& out, bool verbose) {
  const CameraRig rig = make_rig(cfg.dataset);
  fs::create_directories(out);
  json records = json::array();
  std::uint64_t checksum = 0xcbf29ce484222325ull;
  for (int i = 0; i < count; ++i) {
    const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(i);
    const SceneSpec spec = build_scene(seed, scene_object_count(cfg.dataset, seed),
                                       cfg.dataset.mix, cfg.dataset.generator);
    const SceneRecord record =
        make_record(spec, rig, cfg.dataset.pattern, cfg.dataset.render, cfg.dataset.corruption);
    const std::string rel = "scene_" + std::to_string(seed) + "/view_0";
    write_record(record, out / rel);
    records.push_back(rel);
    checksum = fnv1a64(std::to_string(checksum) + rel);
    if (verbose && (i + 1) % 25 == 0)
      std::cout << "generated " << (i + 1) << "/" << count << " scenes\n";
  }
  json manifest = {{"config_hash", cfg.hash()},
                   {"scene_count", count},
                   {"width", cfg.dataset.width},
                   {"height", cfg.dataset.height},
                   {"records", records},
                   {"checksum", checksum}};
  std::ofstream(out / "manifest.json") << manifest.dump(2) << "\n";
}

void check_manifest(const fs::path& data) {
  const fs::path path = data / "manifest.json";
  if (!fs::exists(path)) return;  // loose directories of records are accepted
  std::ifstream in(path);
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw DataError("manifest: parse error: " + std::string(e.what()));
  }
  std::uint64_t checksum = 0xcbf29ce484222325ull;
  for (const auto& rel : manifest.at("records")) {
    if (!fs::exists(data / rel.get<std::string>() / "meta.json"))
      throw DataError("manifest: missing record " + rel.get<std::string>());
    checksum = fnv1a64(std::to_string(checksum) + rel.get<std::string>());
  }
  if (checksum != manifest.at("checksum").get<std::uint64_t>())
    throw DataError("manifest: checksum mismatch");
}

struct LayerMetrics {
  double sum_mae = 0, sum_rmse = 0, sum_rel = 0;
  long n = 0;
  void add(const DepthMetrics& m) {
    sum_mae += m.mae;
    sum_rmse += m.rmse;
    sum_rel += m.rel;
    ++n;
  }
  json to_json() const {
    if (n == 0) return {{"count", 0}};
    return {{"mae", sum_mae / n}, {"rmse", sum_rmse / n}, {"rel", sum_rel / n}, {"count", n}};
  }
};

ImageU8 highlight_mask(const SceneRecord& r) {
  ImageU8 m = ImageU8::Zero(r.gt.rows(), r.gt.cols());
  for (int v = 0; v < r.gt.rows(); ++v)
    for (int u = 0; u < r.gt.cols(); ++u) {
      const auto mat = static_cast<Material>(r.material_mask(v, u));
      m(v, u) = (r.gt.valid_mask(v, u) &&
                 (mat == Material::Specular || mat == Material::Transparent))
                    ? 1
                    : 0;
    }
  return m;
}

json eval_depth(const ExperimentConfig& cfg, const StereoNet& net,
                const std::vector<SceneRecord>& records) {
  const HypothesisGrid grid = net.hypothesis_grid();
  const int iters =
      cfg.training.iterations > 0 ? cfg.training.iterations : cfg.network.iterations;
  LayerMetrics first_all, first_hl, second_all, second_hl, raw_all, raw_hl;
  for (const auto& r : records) {
    const ReconstructionOutput recon =
        net.reconstruct(to_float01_rgb(r.rgb.r, r.rgb.g, r.rgb.b), to_float01(r.ir_left),
                        to_float01(r.ir_right), r.rig, grid, iters);
    const ImageU8 hl = highlight_mask(r);
    const bool has_hl = hl.sum() > 0;
    first_all.add(depth_metrics(recon.depth.first, r.gt.first, r.gt.valid_mask));
    second_all.add(depth_metrics(recon.depth.second, r.gt.second, r.gt.valid_mask));
    raw_all.add(depth_metrics(r.raw_depth, r.gt.first, r.gt.valid_mask));
    if (has_hl) {
      first_hl.add(depth_metrics(recon.depth.first, r.gt.first, hl));
      second_hl.add(depth_metrics(recon.depth.second, r.gt.second, hl));
      raw_hl.add(depth_metrics(r.raw_depth, r.gt.first, hl));
    }
  }
  return {{"first_layer", {{"all", first_all.to_json()}, {"challenging", first_hl.to_json()}}},
          {"second_layer", {{"all", second_all.to_json()}, {"challenging", second_hl.to_json()}}},
          {"raw", {{"all", raw_all.to_json()}, {"challenging", raw_hl.to_json()}}}};
}

void print_depth_table(const json& m) {
  auto row = [](const std::string& name, const json& cell) {
    std::cout << "  " << name << ": ";
    if (cell.value("count", 0) == 0) {
      std::cout << "n/a\n";
      return;
    }
    std::cout << "mae=" << cell["mae"].get<double>() << " rmse=" << cell["rmse"].get<double>()
              << " rel=" << cell["rel"].get<double>() << "\n";
  };
  for (const std::string key : {"first_layer", "second_layer", "raw"}) {
    std::cout << key << "\n";
    row("all pixels   ", m[key]["all"]);
    row("spec/transp  ", m[key]["challenging"]);
  }
}

const char* source_name(DepthSource s) {
  switch (s) {
    case DepthSource::GtComplete: return "gt_complete";
    case DepthSource::ReconComplete: return "recon_complete";
    case DepthSource::ReconVisible: return "recon_visible";
    case DepthSource::Raw: return "raw";
  }
  return "?";
}

json eval_grasp(const ExperimentConfig& cfg, const StereoNet* net, const fs::path& out,
                bool verbose) {
  const CameraRig rig = make_rig(cfg.dataset);
  EpisodeParams params;
  params.input = cfg.evaluation.input;
  params.proposer = cfg.evaluation.proposer;
  params.scorer = cfg.evaluation.scorer;
  params.pattern = cfg.dataset.pattern;
  params.render = cfg.dataset.render;
  params.corruption = cfg.dataset.corruption;
  params.attempt_cap = cfg.evaluation.attempt_cap;
  params.net_iterations =
      cfg.training.iterations > 0 ? cfg.training.iterations : cfg.network.iterations;

  std::vector<DepthSource> sources = {DepthSource::GtComplete, DepthSource::Raw};
  if (net) {
    sources.push_back(DepthSource::ReconComplete);
    sources.push_back(DepthSource::ReconVisible);
  }

  fs::create_directories(out);
  std::ofstream lines(out / "episodes.jsonl");
  std::map<std::string, std::vector<EpisodeReport>> by_source;
  for (int e = 0; e < cfg.evaluation.episodes; ++e) {
    const std::uint64_t seed = cfg.evaluation.scene_seed + static_cast<std::uint64_t>(e);
    const SceneSpec spec = build_scene(seed, cfg.evaluation.objects_per_scene,
                                       cfg.evaluation.mix, cfg.dataset.generator);
    for (DepthSource src : sources) {
      const EpisodeReport r = run_declutter_episode(spec, rig, src, net, params);
      by_source[source_name(src)].push_back(r);
      lines << json{{"episode", e},
                    {"scene_seed", seed},
                    {"source", source_name(src)},
                    {"attempts", r.attempts},
                    {"successes", r.successes},
                    {"removed", r.removed},
                    {"total_objects", r.total_objects},
                    {"termination", termination_name(r.termination)},
                    {"zero_proposal_steps", r.zero_proposal_steps}}
                   .dump()
            << "\n";
    }
    if (verbose && (e + 1) % 10 == 0)
      std::cout << "episode " << (e + 1) << "/" << cfg.evaluation.episodes << "\n";
  }

  json summary;
  const char* material_names[4] = {"background", "diffuse", "specular", "transparent"};
  for (const auto& [name, reports] : by_source) {
    const SrDr agg = aggregate_sr_dr(reports);
    json s = {{"declutter_rate", agg.declutter_rate}, {"episodes", reports.size()}};
    if (agg.success_rate) s["success_rate"] = *agg.success_rate;
    for (int m = 1; m < 4; ++m) {
      double sum = 0;
      int count = 0;
      for (const auto& r : reports) {
        if (r.total_by_material[m] == 0) continue;
        sum += static_cast<double>(r.removed_by_material[m]) / r.total_by_material[m];
        ++count;
      }
      if (count > 0) s["declutter_rate_" + std::string(material_names[m])] = sum / count;
    }
    summary[name] = s;
    std::cout << name << ": DR=" << agg.declutter_rate;
    if (agg.success_rate) std::cout << " SR=" << *agg.success_rate;
    std::cout << "\n";
  }
  return summary;
}

StereoNet load_net(const ExperimentConfig& cfg, const std::string& checkpoint) {
  StereoNet net(cfg.network);
  load_checkpoint(checkpoint, net.params(), cfg.network.hash());
  return net;
}

int run(int argc, char** argv) {
  CLI::App app{"Active-stereo two-layer depth reconstruction and grasp evaluation"};
  app.require_subcommand(1);
  app.fallthrough(true);

  std::string config_path, data_dir, out_dir, checkpoint;
  std::int64_t seed = -1;
  app.add_option("--config", config_path, "experiment config JSON");
  app.add_option("--seed", seed, "override seed");
  app.add_option("--out", out_dir, "output directory");

  auto* gen = app.add_subcommand("generate", "render a synthetic dataset");
  auto* train = app.add_subcommand("train", "train the reconstruction network");
  train->add_option("--data", data_dir, "dataset root")->required();
  auto* evd = app.add_subcommand("eval-depth", "depth metrics on a dataset");
  evd->add_option("--data", data_dir, "dataset root")->required();
  evd->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
  auto* evg = app.add_subcommand("eval-grasp", "declutter episodes per depth source");
  evg->add_option("--checkpoint", checkpoint, "trained checkpoint (optional)");
  auto* toy = app.add_subcommand("repro-toy", "end-to-end toy run with pinned seeds");

  CLI11_PARSE(app, argc, argv);

  ExperimentConfig cfg =
      toy->parsed() ? make_toy_config()
                    : (config_path.empty() ? ExperimentConfig{} : load_experiment_config(config_path));
  if (toy->parsed() && !config_path.empty()) cfg = load_experiment_config(config_path);
  cfg.validate();
  if (out_dir.empty()) throw ArgumentError("--out is required");
  const fs::path out(out_dir);
  fs::create_directories(out);

  if (gen->parsed()) {
    const std::uint64_t base = seed >= 0 ? static_cast<std::uint64_t>(seed) : cfg.dataset.seed;
    generate_dataset(cfg, base, cfg.dataset.scene_count, out, true);
    std::cout << "wrote " << cfg.dataset.scene_count << " scenes to " << out << "\n";
    return 0;
  }

  if (train->parsed()) {
    check_manifest(data_dir);
    const std::vector<SceneRecord> records = load_dataset(data_dir);
    if (seed >= 0) cfg.network.init_seed = static_cast<std::uint64_t>(seed);
    StereoNet net(cfg.network);
    std::ofstream curve(out / "loss_curve.csv");
    curve << "step,loss,l1_d1,l1_d2\n";
    const TrainResult result = train_network(
        net, records, cfg.training, out, [&](int step, double loss, double l1a, double l1b) {
          curve << step << "," << loss << "," << l1a << "," << l1b << "\n";
          if ((step + 1) % 25 == 0)
            std::cout << "step " << (step + 1) << "/" << cfg.training.steps << " loss " << loss
                      << std::endl;
        });
    std::ofstream(out / "config.json") << cfg.to_json().dump(2) << "\n";
    std::cout << "final loss " << result.loss_history.back() << ", final lr " << result.final_lr
              << "\n";
    return 0;
  }

  if (evd->parsed()) {
    check_manifest(data_dir);
    const std::vector<SceneRecord> records = load_dataset(data_dir);
    const StereoNet net = load_net(cfg, checkpoint);
    const json metrics = eval_depth(cfg, net, records);
    std::ofstream(out / "depth_metrics.json") << metrics.dump(2) << "\n";
    print_depth_table(metrics);
    return 0;
  }

  if (evg->parsed()) {
    if (seed >= 0) cfg.evaluation.scene_seed = static_cast<std::uint64_t>(seed);
    std::optional<StereoNet> net;
    if (!checkpoint.empty()) net.emplace(load_net(cfg, checkpoint));
    const json summary = eval_grasp(cfg, net ? &*net : nullptr, out, true);
    std::ofstream(out / "grasp_summary.json") << summary.dump(2) << "\n";
    return 0;
  }

  // repro-toy: generate -> train -> eval-depth on held-out scenes -> eval-grasp
  std::cout << "[1/4] generating training data\n";
  generate_dataset(cfg, cfg.dataset.seed, cfg.dataset.scene_count, out / "data", true);
  std::cout << "[2/4] training\n";
  std::vector<SceneRecord> records = load_dataset(out / "data");
  StereoNet net(cfg.network);
  {
    std::ofstream curve(out / "loss_curve.csv");
    curve << "step,loss,l1_d1,l1_d2\n";
    train_network(net, records, cfg.training, out, [&](int step, double loss, double l1a, double l1b) {
      curve << step << "," << loss << "," << l1a << "," << l1b << "\n";
      if ((step + 1) % 25 == 0)
        std::cout << "step " << (step + 1) << "/" << cfg.training.steps << " loss " << loss
                  << std::endl;
    });
  }
  std::cout << "[3/4] held-out depth metrics\n";
  ExperimentConfig holdout_cfg = cfg;
  holdout_cfg.dataset.seed = cfg.dataset.seed + 500000;
  holdout_cfg.dataset.scene_count = 20;
  generate_dataset(holdout_cfg, holdout_cfg.dataset.seed, 20, out / "holdout", false);
  const json metrics = eval_depth(cfg, net, load_dataset(out / "holdout"));
  std::ofstream(out / "depth_metrics.json") << metrics.dump(2) << "\n";
  print_depth_table(metrics);
  std::cout << "[4/4] grasp episodes\n";
  const json summary = eval_grasp(cfg, &net, out, true);
  std::ofstream(out / "grasp_summary.json") << summary.dump(2) << "\n";
  std::ofstream(out / "config.json") << cfg.to_json().dump(2) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const ArgumentError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const DomainError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
