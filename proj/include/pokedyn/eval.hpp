#pragma once

#include <optional>
#include <string>

#include "pokedyn/dataset.hpp"
#include "pokedyn/losses.hpp"
#include "pokedyn/model.hpp"

namespace pokedyn {

/// Mean squared Euclidean flow error over pixels with non-zero ground-truth
/// flow, in cm^2 (and its RMS in cm). Episodes without movers are excluded.
struct FlowMse {
    double mean_cm2 = 0.0;
    double rms_cm = 0.0;
    int mover_pixels = 0;
    bool has_movers() const { return mover_pixels > 0; }
};

FlowMse flow_mse(const std::vector<double>& pred_flow, const std::vector<double>& gt_flow,
                 std::size_t npix);

/// Average endpoint error of a 2D flow field in pixels over valid pixels.
double aee(const std::vector<double>& pred_uv, const std::vector<double>& gt_uv,
           const std::vector<uint8_t>& valid);

/// Sum of squared distances between each predicted point and its associated
/// observed target point; the supervised stand-in for the 3D+2D losses.
Tensor supervised_association_loss(Tape& tape, const Tensor& P_hat,
                                   const std::vector<double>& targets,
                                   const std::vector<uint8_t>& assoc_valid);

/// Runs the forward model on an episode (no gradients) and returns the
/// predicted scene flow (P_hat - P_t, zero at invalid pixels).
std::vector<double> predict_scene_flow(const StoredEpisode& ep, const ModelConfig& cfg,
                                       const ParamStore& params, const CameraIntrinsics& cam,
                                       std::vector<double>* pred_uv = nullptr);

struct EvalSummary {
    double model_mean_cm2 = 0.0, model_rms_cm = 0.0;
    double nomotion_mean_cm2 = 0.0, nomotion_rms_cm = 0.0;
    double aee_px = 0.0;
    int episodes_used = 0, episodes_skipped = 0;
};

/// Aggregate metrics over a range of episodes [begin, end).
EvalSummary evaluate_model(const Dataset& ds, const ModelConfig& cfg, const ParamStore& params,
                           int begin, int end);

void write_metrics_csv(const std::string& path, const EvalSummary& s,
                       const std::string& config_fingerprint);

}  // namespace pokedyn
