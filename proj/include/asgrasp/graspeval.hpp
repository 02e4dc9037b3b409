#pragma once

#include "asgrasp/camgeom.hpp"
#include "asgrasp/record.hpp"
#include "asgrasp/scene.hpp"
#include "asgrasp/stereonet.hpp"

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace asgrasp {

struct DepthMetrics {
  double rmse = 0;
  double rel = 0;
  double mae = 0;
};

// RMSE / REL / MAE over nonzero-mask pixels. If eval_height/width are set,
// prediction, ground truth and mask are bilinearly (mask: nearest) resized
// to that resolution first.
DepthMetrics depth_metrics(const ImageF& pred, const ImageF& gt, const ImageU8& mask,
                           int eval_height = 0, int eval_width = 0);

ImageF resize_bilinear(const ImageF& img, int out_h, int out_w);
ImageU8 resize_nearest(const ImageU8& img, int out_h, int out_w);

struct GraspInputParams {
  double crop_min = 0.25;  // depth crop, meters
  double crop_max = 1.0;
  int visible_cap = 2500;
  int invisible_cap = 1000;
  double layer_eps = 1e-3;
};

struct GraspInput {
  PointCloud visible;    // reference camera frame
  PointCloud invisible;
};

GraspInput assemble_grasp_input(const TwoLayerDepth& depths, const CameraIntrinsics& K,
                                std::uint64_t seed, const GraspInputParams& params = {});

struct GraspPose {
  double q = 0;         // quality score in [0,1]
  Vec3 center;          // camera frame, meters
  Mat3 rotation;        // camera frame; x = closing axis, z = approach
  double width = 0;     // opening width, meters
};

struct GripperParams {
  double max_width = 0.08;
  double finger_thickness = 0.01;
  double finger_height = 0.02;   // extent along the approach axis near the contacts
  double finger_reach = 0.04;    // how far fingers extend back from the contact plane
  double palm_depth = 0.015;
};

struct ProposerParams {
  double friction = 0.5;       // proposal-side friction coefficient
  int pair_samples = 8000;
  int max_proposals = 48;
  int normal_neighbors = 24;
  double clearance = 0.006;    // added to the contact separation to get the opening width
  int min_enclosed = 8;        // least observed points between the fingers
  GripperParams gripper;
};

// Proposals are returned in attempt order: grasps supported entirely by the
// visible layer first, then pairs that need the estimated hidden layer, each
// group sorted by its quality score q.
std::vector<GraspPose> propose_antipodal_grasps(const GraspInput& input,
                                                const ProposerParams& params,
                                                std::uint64_t seed = 0);

struct ScorerParams {
  double friction_eval = 0.5;
  GripperParams gripper;
  double contact_tolerance = 0.01;  // slack between stated width and actual chord
};

struct GraspVerdict {
  bool success = false;
  int object_id = -1;
  std::string reason;
};

// Analytic grasp check against ground-truth geometry: the closing region must
// intersect exactly one object, the closing-line contacts must be force
// closed at the evaluation friction, and the gripper body must be free of
// collisions with other objects and the support plane.
GraspVerdict score_grasp_against_gt(const GraspPose& grasp_cam, const SceneSpec& spec,
                                    const ScorerParams& params = {});

enum class Termination { Cleared, NoGrasp, TwoFailures, AttemptCap };

struct EpisodeReport {
  int attempts = 0;
  int successes = 0;
  int removed = 0;
  int total_objects = 0;
  Termination termination = Termination::Cleared;
  int zero_proposal_steps = 0;  // steps excluded from the attempt count
  // Indexed by Material (0 = background, unused).
  std::array<int, 4> removed_by_material = {0, 0, 0, 0};
  std::array<int, 4> total_by_material = {0, 0, 0, 0};
};

const char* termination_name(Termination t);

enum class DepthSource { GtComplete, ReconComplete, ReconVisible, Raw };

struct EpisodeParams {
  GraspInputParams input;
  ProposerParams proposer;
  ScorerParams scorer;
  SpecklePattern pattern;
  RenderParams render;
  CorruptionParams corruption;
  int attempt_cap = 15;
  int net_iterations = 0;  // 0 = network config default

  // Test hooks: replace observation+proposal or grasp scoring with scripted
  // behavior to exercise the episode protocol in isolation.
  std::function<std::vector<GraspPose>(const SceneSpec&, int step)> propose_override;
  std::function<GraspVerdict(const GraspPose&, const SceneSpec&, int attempt)> score_override;
};

// Grasp-and-remove loop on one scene. For reconstructed sources, `net` runs
// on freshly rendered images each attempt.
EpisodeReport run_declutter_episode(SceneSpec spec, const CameraRig& rig, DepthSource source,
                                    const StereoNet* net, const EpisodeParams& params = {});

struct SrDr {
  std::optional<double> success_rate;  // absent when no attempts were made
  double declutter_rate = 0;
};

SrDr aggregate_sr_dr(const std::vector<EpisodeReport>& reports);

}  // namespace asgrasp
