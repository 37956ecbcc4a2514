#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "pokedyn/model.hpp"
#include "pokedyn/sim.hpp"

namespace pokedyn {

/// One user-marked object point: a pixel in the current frame and its target
/// pixel in the goal frame.
struct PlanMarker {
    double px = 0, py = 0;  // current-frame pixel
    double gx = 0, gy = 0;  // goal-frame pixel
};

struct PlanTask {
    Cloud P;
    Image I;
    Cloud P_goal;
    Image I_goal;
    std::vector<PlanMarker> markers;
};

struct CemConfig {
    int population = 64;  // J
    int horizon = 1;      // H
    int elites = 6;       // K_e
    int iterations = 4;
    double alpha = 1.0;   // marker pixel-distance weight
    double beta = 1e3;    // Chamfer weight
    double init_mean_x = 0.0, init_mean_y = 0.0;  // center the first Gaussian here
    double init_sd_xy = 0.14;
    double init_sd_theta = 3.141592653589793;
    double bound_x = 0.28, bound_y = 0.28;  // arena half extents
    int chamfer_subsample = 1024;
    std::uint64_t seed = 0;
};

/// One predicted step: the next cloud and the [H,W,2] implicit optical flow
/// on the step's input frame.
struct StepPrediction {
    Cloud next_cloud;
    std::vector<double> flow;
};

/// Evaluates a full candidate action sequence; the planner is agnostic to
/// whether the dynamics come from the trained model or the simulator oracle.
using RolloutFn = std::function<std::vector<StepPrediction>(const std::vector<PokeAction>&)>;

/// Hybrid cost: alpha * sum of marker pixel distances after advecting each
/// marker through the rollout flows, plus beta * Chamfer to the goal cloud
/// (on subsampled points). Markers advected off-image are clamped to the
/// border and flagged.
double plan_cost(const PlanTask& task, const std::vector<StepPrediction>& rollout,
                 const CemConfig& cfg, bool* clamped = nullptr);

struct CemResult {
    std::vector<PokeAction> actions;      // best evaluated sequence
    std::vector<double> best_cost_trace;  // best-so-far per iteration, non-increasing
    double best_cost = 0.0;
};

CemResult cem_plan(const PlanTask& task, const RolloutFn& rollout, const CemConfig& cfg);

/// Rollout function backed by the trained forward model (no gradients).
RolloutFn model_rollout_fn(const PlanTask& task, const ModelConfig& mcfg, const ParamStore& params,
                           const CameraIntrinsics& cam);

/// Rollout function backed by the simulator itself (oracle dynamics).
RolloutFn oracle_rollout_fn(const SceneState& current, const SimConfig& scfg);

/// Builds a PlanTask from simulator states: renders both, places one marker
/// per object (an object pixel nearest the projected centroid, paired with
/// the projected goal centroid).
PlanTask make_plan_task(const SceneState& current, const SceneState& goal, const SimConfig& scfg);

/// Mean object-to-goal centroid distance, meters.
double mean_goal_distance(const SceneState& s, const SceneState& goal);

struct MpcLog {
    std::vector<PokeAction> actions;
    std::vector<double> distances;  // length actions.size() + 1, pre/post each poke
    bool success = false;
    SceneState final_state;
};

/// Replan-execute loop: cem_plan, execute the first action in the simulator,
/// re-observe; stops when mean object distance < eps_goal or max_pokes.
/// `use_oracle` swaps the trained model for the simulator as dynamics.
MpcLog mpc_rollout(const SceneState& start, const SceneState& goal, const SimConfig& scfg,
                   const ModelConfig& mcfg, const ParamStore& params, const CemConfig& cfg,
                   double eps_goal, int max_pokes, bool use_oracle = false);

}  // namespace pokedyn
