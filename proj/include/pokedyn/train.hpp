#pragma once

#include <string>

#include "pokedyn/dataset.hpp"
#include "pokedyn/losses.hpp"
#include "pokedyn/model.hpp"

namespace pokedyn {

/// Loss configurations of the ablation grid, plus the supervised
/// data-association baseline.
enum class Ablation { Full, TwoDOnly, ThreeDOnly, TwoDThreeD, SupervisedAssoc };

const char* ablation_name(Ablation a);

struct TrainConfig {
    double lr = 1e-4;
    int batch = 8;
    int epochs = 10;
    std::uint64_t seed = 0;
    LossWeights weights;
    Ablation ablation = Ablation::Full;
    int assoc_window = 1;        // DA-noise window for the supervised baseline (odd)
    // 2D-group (lambda2) warm-up schedule, applied only when both the 3D and
    // 2D groups are active: lambda2 is held at 0 for the first
    // warmup_2d_delay fraction of the run's optimizer steps, then ramps
    // linearly to its configured value over the next warmup_2d_ramp fraction.
    // The photometric gradient is pure noise until predicted flow is within
    // ~a pixel of the truth, and that noise swamps the Chamfer signal (~5x
    // its norm at init), trapping the optimizer in the zero-motion basin;
    // the 3D terms must establish the masks and motions first.
    // warmup_2d_ramp = 0 disables the schedule.
    double warmup_2d_delay = 0.40;
    double warmup_2d_ramp = 0.15;
    // Keep the parameters from the epoch with the best holdout MSE (early
    // stopping); the returned params and final checkpoint are the best, not
    // the last.
    bool keep_best = true;
    double holdout_frac = 0.1;   // split by trailing episode index
    double clip_norm = 10.0;
    int threads = 0;             // 0 = all cores; 1 = strict serial (bit-reproducible)
    std::string log_path;        // per-step loss breakdown CSV, optional
    std::string checkpoint_path; // final checkpoint, optional
    int checkpoint_every = 0;    // epochs; 0 = final only
};

struct AdamState {
    std::vector<double> m, v;
    long step = 0;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    int skipped_steps = 0;
};

/// Standard bias-corrected update over the flattened parameter vector.
/// Non-finite gradients skip the step and increment skipped_steps.
void adam_step(ParamStore& params, const std::vector<double>& grads, AdamState& state, double lr);

struct TrainResult {
    ParamStore params;
    std::vector<double> holdout_mse_per_epoch;  // mean cm^2
    double final_holdout_mse = 0.0;
    double nomotion_holdout_mse = 0.0;
    int holdout_begin = 0;  // first held-out episode index
};

TrainResult train(const Dataset& ds, const ModelConfig& mcfg, const TrainConfig& tcfg);

}  // namespace pokedyn
