#pragma once

#include <string>

#include "pokedyn/autodiff.hpp"
#include "pokedyn/geometry.hpp"
#include "pokedyn/sim.hpp"

namespace pokedyn {

struct ModelConfig {
    int H = 64, W = 64;
    int K = 3;         // motion components (background + movers)
    int G = 20;        // action heatmap grid
    int latent = 128;
    int c1 = 8, c2 = 16, c3 = 24;
    double cloud_z_offset = 0.95;  // input normalization
    double cloud_scale = 2.0;
    double arena_half_x = 0.28, arena_half_y = 0.28;  // action normalization
    // Fixed camera rig (matches the capture setup); used to splat the
    // per-pixel depth-change map into the world-frame action grid for the
    // inverse model's spatial readout.
    double cam_distance = 0.95;
    double cam_tilt_deg = 45.0;
    double focal = 64.0;
    // Fixed pusher geometry (rig constants, like the camera): the forward
    // model samples the observed height field along the stroke corridor so
    // the action head sees how deeply a candidate poke engages an object.
    double stroke_len = 0.10;
    double poker_radius = 0.02;
    // Initial background-mask dominance. Softmax share with K=3: bias 1.0
    // gives the background ~0.58 — dominant, but leaving the object slots
    // enough mask weight that gradients reach the SE(3) head early on
    // (bias 4.0 starves them to ~2% and training stalls).
    double mask_bg_bias = 1.0;

    bool operator==(const ModelConfig&) const = default;
};

struct Param {
    std::string name;
    Shape shape;
    std::vector<double> value;
};

/// Named flat parameter arrays; the single source of truth mutated by the
/// optimizer. Tapes get per-step leaf copies via leaves().
class ParamStore {
public:
    Param& add(const std::string& name, Shape shape);
    Param& at(const std::string& name);
    const Param& at(const std::string& name) const;
    std::vector<Param>& all() { return params_; }
    const std::vector<Param>& all() const { return params_; }
    std::size_t total_size() const;

private:
    std::vector<Param> params_;
};

/// Per-tape leaf tensors for every parameter, in store order.
struct ParamLeaves {
    std::vector<Tensor> leaves;  // aligned with ParamStore::all()
    Tensor at(const ParamStore& store, const std::string& name) const;
};

ParamLeaves make_leaves(Tape& tape, const ParamStore& store, bool requires_grad);

/// Builds all forward+inverse parameters with the documented initialization:
/// SE(3) head outputs the zero twist (identity transform) and the first mask
/// channel dominates everywhere.
ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed);

struct EncoderOut {
    Tensor latent;        // [latent]
    Tensor skip1, skip2;  // post-activation conv features for the decoder
};

/// Normalized [3,H,W] input channels for a cloud (constant leaf).
Tensor cloud_input(Tape& tape, const Cloud& P, const ModelConfig& cfg);

EncoderOut encode(Tape& tape, const Tensor& input, const ParamStore& store,
                  const ParamLeaves& pl, const ModelConfig& cfg);

struct ForwardOut {
    Tensor masks;   // [K,H,W], per-pixel softmax
    Tensor se3;     // [K,6] twists
    Tensor P_hat;   // [H,W,3]
    Tensor flow;    // [H,W,2]
    Tensor s_next;  // [latent] predicted next embedding
};

ForwardOut forward_model(Tape& tape, const Cloud& P_t, const PokeAction& u,
                         const ParamStore& store, const ParamLeaves& pl,
                         const ModelConfig& cfg, const CameraIntrinsics& cam);

struct InverseOut {
    Tensor heat_start;  // [G,G], sums to 1
    Tensor heat_end;    // [G,G]
    Tensor latent_next; // encoder embedding of P_{t+1} (the L_sim target)
};

InverseOut inverse_model(Tape& tape, const Tensor& input_t, const Tensor& input_t1,
                         const ParamStore& store, const ParamLeaves& pl, const ModelConfig& cfg);

// checkpoint file: JSON manifest + named float32 arrays
void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ParamStore& store,
                     int step);
/// Loads and validates the manifest against cfg (throws on mismatch).
ParamStore load_checkpoint(const std::string& path, ModelConfig& cfg, int* step = nullptr);

}  // namespace pokedyn
