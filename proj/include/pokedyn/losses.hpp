#pragma once

#include <optional>

#include "pokedyn/autodiff.hpp"
#include "pokedyn/geometry.hpp"

namespace pokedyn {

enum class NnBackend { BruteForce, KdTree };

/// The two continuous distance transforms produced by the Chamfer distance:
/// per-pixel squared distance to the nearest valid point of the other cloud.
struct DistanceTransformPair {
    Tensor pred_to_obs;  // [H,W], on the predicted cloud's grid
    Tensor obs_to_pred;  // [H,W], on the observed cloud's grid
};

struct ChamferResult {
    Tensor loss;  // scalar: sum of both transforms
    DistanceTransformPair dt;
    std::vector<int> nn_pred_to_obs;  // per valid predicted pixel, flat obs pixel index (-1 invalid)
    std::vector<int> nn_obs_to_pred;
};

/// Symmetric squared-distance Chamfer loss. Nearest-neighbor indices are
/// constants of the forward pass; gradients flow into P_hat through the
/// distances only.
ChamferResult chamfer_loss(Tape& tape, const Tensor& P_hat, const std::vector<uint8_t>& valid_hat,
                           const Cloud& P_obs, NnBackend backend = NnBackend::KdTree,
                           bool parallel = true);

/// Plain double-valued Chamfer distance between two raw point sets (used by
/// the planner; no gradients).
double chamfer_point_sets(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

/// L1 photometric error between I_t and the warped reconstruction, summed
/// over valid pixels and channels.
Tensor photometric_loss(Tape& tape, const Image& I_t, const Tensor& I_hat,
                        const std::vector<uint8_t>& valid);

/// Edge-aware total variation of a [H,W,C] (or [H,W]) field: forward
/// differences weighted by exp(-channel-mean |grad I|) per direction.
/// Edge-aware total variation. |d| is smoothed as sqrt(d^2+eps^2)-eps; eps
/// should sit below the scale at which differences in `field` are
/// meaningful (pixels for flow, meters for distance transforms).
Tensor edge_aware_tv(Tape& tape, const Tensor& field, const Image& edges, double eps = 1e-4);

Tensor flow_smoothness_loss(Tape& tape, const Tensor& flow, const Image& I_t);
Tensor dt_smoothness_loss(Tape& tape, const DistanceTransformPair& dt, const Image& I_next);

/// Cross-entropy of the two action heatmaps against the true grid cells.
Tensor inverse_action_loss(Tape& tape, const Tensor& A_hat, const Tensor& B_hat,
                           int gt_start_cell, int gt_end_cell);

/// L1 between predicted and target next-state embedding; the target is a
/// constant of the step.
Tensor embedding_similarity_loss(Tape& tape, const Tensor& s_pred, const std::vector<double>& s_target);

struct LossWeights {
    double lambda1 = 1e5;  // 3D group: L_CD + L_ds
    double lambda2 = 1e3;  // 2D group: L_rec + L_fs
    double lambda3 = 1.0;  // inverse group: L_act + L_sim
};

/// Component losses; undefined tensors count as zero (ablations).
struct LossParts {
    Tensor cd, ds, rec, fs, act, sim;
};

struct LossBreakdown {
    double cd = 0, ds = 0, rec = 0, fs = 0, act = 0, sim = 0, total = 0;
};

/// Weighted sum per the grouped objective; throws on a non-finite part,
/// naming the offending term.
Tensor full_loss(Tape& tape, const LossParts& parts, const LossWeights& w,
                 LossBreakdown* breakdown = nullptr);

}  // namespace pokedyn
