#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pokedyn/geometry.hpp"

namespace pokedyn {

struct Vec2 {
    double x = 0, y = 0;
};

/// Rigid footprint on the arena plane: a disc or a convex polygon (local
/// frame, CCW), extruded to `height`.
struct ShapeSpec {
    enum class Kind { Disc, Poly } kind = Kind::Disc;
    double radius = 0.04;            // disc
    std::vector<Vec2> verts;         // convex CCW polygon, local frame
    double height = 0.05;
    double bound_radius() const;
};

struct ObjectState {
    ShapeSpec shape;
    Vec2 pos;
    double yaw = 0;
    Vec3 color = {0.8, 0.2, 0.2};
    int id = 0;
};

struct SceneState {
    std::vector<ObjectState> objects;
    double arena_half_x = 0.28, arena_half_y = 0.28;  // centered at origin, plane z = 0
};

struct PokeAction {
    double ax = 0, ay = 0;   // target position on arena plane, meters
    double atheta = 0;       // in-plane approach bearing, [0, 2pi)
};

struct CameraModel {
    CameraIntrinsics K;
    Vec3 pos;      // world
    Mat3 R_wc;     // world -> camera rotation (rows = camera axes in world)

    Vec3 to_cam(const Vec3& pw) const;
    Vec3 to_world(const Vec3& pc) const;
    /// Projects a world point to continuous pixel coordinates.
    Vec2 project(const Vec3& pw) const;
};

struct SimConfig {
    int H = 64, W = 64;
    double cam_distance = 0.95;      // along the 45-degree oblique view
    double cam_tilt_deg = 45.0;
    double focal = 64.0;
    double arena_half_x = 0.28, arena_half_y = 0.28;
    int min_objects = 2, max_objects = 2;
    double stroke_len = 0.10;
    double poker_radius = 0.02;
    double yaw_gain = 0.5;           // torque-proportional yaw response
    int push_substeps = 50;
    int contact_max_iter = 50;
    int grid = 20;                   // G x G workspace grid
    double tau_occ = 0.01;           // occupancy depth threshold, meters
    double shadow_strength = 0.35;   // 0 disables shadows
    double depth_noise_sd = 0.0;     // meters at reference depth
    CameraModel camera() const;
};

struct RenderResult {
    Cloud cloud;                  // camera-frame organized points
    Image image;
    std::vector<int> mask_ids;    // per pixel object id, -1 background
    std::vector<double> world_pts;  // H*W*3 hit points, world frame
};

struct EpisodeRecord {
    Cloud P_t, P_t1;
    Image I_t, I_t1;
    PokeAction action;
    std::vector<double> gt_flow;     // H*W*3 camera-frame displacement, zero on background
    std::vector<int> gt_mask_ids;    // before-frame per-pixel object id, -1 background
    std::vector<double> gt_corr;     // H*W*2 continuous after-frame pixel of each before pixel
    std::vector<uint8_t> corr_valid;
    int gt_start_cell = -1, gt_end_cell = -1;  // flat indices into G x G grid
};

// scene construction and dynamics
SceneState make_scene(const SimConfig& cfg, std::uint64_t seed);
/// Kinematic push response; throws on non-convergent contact resolution.
SceneState apply_poke(const SceneState& s, const PokeAction& u, const SimConfig& cfg);

RenderResult render(const SceneState& s, const SimConfig& cfg);

/// Per-pixel rigid displacement of the before-render surface points, camera
/// frame; zero at background pixels.
std::vector<double> gt_scene_flow(const SceneState& before, const SceneState& after,
                                  const RenderResult& render_before, const SimConfig& cfg);

void add_depth_noise(Cloud& P, const SimConfig& cfg, std::mt19937_64& rng);

/// Spurious-association model for the supervised baseline: each
/// correspondence is re-targeted uniformly in an n x n window, gated by a
/// +-10 cm depth difference in the after frame.
void corrupt_associations(std::vector<double>& corr, const std::vector<uint8_t>& corr_valid,
                          const Cloud& P_after, int H, int W, int window,
                          double depth_threshold, std::mt19937_64& rng);

struct PokeSample {
    PokeAction action;
    int start_cell = -1, end_cell = -1;
};

/// Background subtraction against the empty-arena render, pooled to the G x G
/// grid; picks a random occupied target cell and free start cell.
PokeSample sample_random_poke(const SceneState& s, const RenderResult& scene_render,
                              const RenderResult& empty_render, const SimConfig& cfg,
                              std::mt19937_64& rng);

/// Occupancy grid used by sample_random_poke, exposed for tests.
std::vector<uint8_t> occupancy_grid(const RenderResult& scene_render,
                                    const RenderResult& empty_render, const SimConfig& cfg);

/// Full interaction: sample a poke, simulate, render both frames and the
/// ground truth. Depth noise (if configured) is applied to the stored clouds
/// only; ground truth stays exact.
EpisodeRecord generate_episode(const SceneState& s, const RenderResult& empty_render,
                               const SimConfig& cfg, std::mt19937_64& rng,
                               SceneState* after_out = nullptr);

// footprint helpers (exposed for tests)
double footprint_signed_distance(const ObjectState& o, const Vec2& p);
bool footprints_overlap(const ObjectState& a, const ObjectState& b);
int grid_cell_of(const Vec2& p, const SimConfig& cfg);  // -1 outside arena
Vec2 grid_cell_center(int cell, const SimConfig& cfg);

}  // namespace pokedyn
