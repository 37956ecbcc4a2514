#include "pokedyn/eval.hpp"

#include <cmath>
#include <fstream>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pokedyn {

FlowMse flow_mse(const std::vector<double>& pred_flow, const std::vector<double>& gt_flow,
                 std::size_t npix) {
    if (pred_flow.size() != npix * 3 || gt_flow.size() != npix * 3)
        throw std::invalid_argument("flow_mse: shape mismatch");
    FlowMse r;
    double acc = 0.0;
    for (std::size_t p = 0; p < npix; ++p) {
        double gx = gt_flow[p * 3], gy = gt_flow[p * 3 + 1], gz = gt_flow[p * 3 + 2];
        if (gx == 0.0 && gy == 0.0 && gz == 0.0) continue;
        double dx = pred_flow[p * 3] - gx, dy = pred_flow[p * 3 + 1] - gy,
               dz = pred_flow[p * 3 + 2] - gz;
        acc += dx * dx + dy * dy + dz * dz;
        ++r.mover_pixels;
    }
    if (r.mover_pixels > 0) {
        r.mean_cm2 = acc / r.mover_pixels * 1e4;  // m^2 -> cm^2
        r.rms_cm = std::sqrt(r.mean_cm2);
    }
    return r;
}

double aee(const std::vector<double>& pred_uv, const std::vector<double>& gt_uv,
           const std::vector<uint8_t>& valid) {
    if (pred_uv.size() != valid.size() * 2 || gt_uv.size() != valid.size() * 2)
        throw std::invalid_argument("aee: shape mismatch");
    double acc = 0.0;
    int n = 0;
    for (std::size_t p = 0; p < valid.size(); ++p) {
        if (!valid[p]) continue;
        double du = pred_uv[p * 2] - gt_uv[p * 2], dv = pred_uv[p * 2 + 1] - gt_uv[p * 2 + 1];
        acc += std::sqrt(du * du + dv * dv);
        ++n;
    }
    return n ? acc / n : 0.0;
}

Tensor supervised_association_loss(Tape& tape, const Tensor& P_hat,
                                   const std::vector<double>& targets,
                                   const std::vector<uint8_t>& assoc_valid) {
    if (targets.size() != P_hat.size() || assoc_valid.size() * 3 != P_hat.size())
        throw std::invalid_argument("supervised_association_loss: shape mismatch");
    Tensor out = tape.make_node({1}, P_hat.requires_grad());
    double s = 0.0;
    for (std::size_t p = 0; p < assoc_valid.size(); ++p) {
        if (!assoc_valid[p]) continue;
        for (int c = 0; c < 3; ++c) {
            double d = P_hat.val()[p * 3 + c] - targets[p * 3 + c];
            s += d * d;
        }
    }
    out.val()[0] = s;
    if (out.requires_grad()) {
        auto Pn = P_hat.node(); auto on = out.node();
        std::vector<double> tg = targets;
        std::vector<uint8_t> av = assoc_valid;
        tape.push_backward([Pn, on, tg = std::move(tg), av = std::move(av)] {
            Pn->ensure_grad();
            double g = on->grad[0];
            for (std::size_t p = 0; p < av.size(); ++p) {
                if (!av[p]) continue;
                for (int c = 0; c < 3; ++c)
                    Pn->grad[p * 3 + c] += g * 2.0 * (Pn->val[p * 3 + c] - tg[p * 3 + c]);
            }
        });
    }
    return out;
}

std::vector<double> predict_scene_flow(const StoredEpisode& ep, const ModelConfig& cfg,
                                       const ParamStore& params, const CameraIntrinsics& cam,
                                       std::vector<double>* pred_uv) {
    Tape tape;
    ParamLeaves pl = make_leaves(tape, params, false);
    Cloud P_t = ep.cloud_t(cfg.H, cfg.W);
    ForwardOut out = forward_model(tape, P_t, ep.poke(), params, pl, cfg, cam);
    std::size_t npix = P_t.npix();
    std::vector<double> flow(npix * 3, 0.0);
    for (std::size_t p = 0; p < npix; ++p) {
        if (!P_t.valid[p]) continue;
        for (int c = 0; c < 3; ++c)
            flow[p * 3 + c] = out.P_hat.val()[p * 3 + c] - P_t.pts[p * 3 + c];
    }
    if (pred_uv) *pred_uv = out.flow.val();
    return flow;
}

EvalSummary evaluate_model(const Dataset& ds, const ModelConfig& cfg, const ParamStore& params,
                           int begin, int end) {
    CameraIntrinsics cam = ds.manifest.intrinsics;
    std::size_t npix = static_cast<std::size_t>(cfg.H) * cfg.W;
    int n = end - begin;
    std::vector<double> model_mse(n, -1.0), nomo_mse(n, -1.0), ep_aee(n, 0.0);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (int i = 0; i < n; ++i) {
        const StoredEpisode& ep = ds.episodes[begin + i];
        std::vector<double> gt(ep.gt_flow.begin(), ep.gt_flow.end());
        std::vector<double> uv;
        std::vector<double> pred = predict_scene_flow(ep, cfg, params, cam, &uv);
        FlowMse m = flow_mse(pred, gt, npix);
        if (!m.has_movers()) continue;
        model_mse[i] = m.mean_cm2;
        std::vector<double> zero(npix * 3, 0.0);
        nomo_mse[i] = flow_mse(zero, gt, npix).mean_cm2;
        // ground-truth pixel flow from the correspondence map
        std::vector<double> gt_uv(npix * 2, 0.0);
        for (std::size_t p = 0; p < npix; ++p) {
            gt_uv[p * 2] = ep.gt_corr[p * 2] - static_cast<double>(p % cfg.W);
            gt_uv[p * 2 + 1] = ep.gt_corr[p * 2 + 1] - static_cast<double>(p / cfg.W);
        }
        ep_aee[i] = aee(uv, gt_uv, ep.corr_valid);
    }

    EvalSummary s;
    for (int i = 0; i < n; ++i) {
        if (model_mse[i] < 0) { ++s.episodes_skipped; continue; }
        s.model_mean_cm2 += model_mse[i];
        s.nomotion_mean_cm2 += nomo_mse[i];
        s.aee_px += ep_aee[i];
        ++s.episodes_used;
    }
    if (s.episodes_used > 0) {
        s.model_mean_cm2 /= s.episodes_used;
        s.nomotion_mean_cm2 /= s.episodes_used;
        s.aee_px /= s.episodes_used;
        s.model_rms_cm = std::sqrt(s.model_mean_cm2);
        s.nomotion_rms_cm = std::sqrt(s.nomotion_mean_cm2);
    }
    return s;
}

void write_metrics_csv(const std::string& path, const EvalSummary& s,
                       const std::string& config_fingerprint) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("write_metrics_csv: cannot open " + path);
    f << "metric,value,config\n";
    f << "model_mse_cm2," << s.model_mean_cm2 << "," << config_fingerprint << "\n";
    f << "model_rms_cm," << s.model_rms_cm << "," << config_fingerprint << "\n";
    f << "nomotion_mse_cm2," << s.nomotion_mean_cm2 << "," << config_fingerprint << "\n";
    f << "nomotion_rms_cm," << s.nomotion_rms_cm << "," << config_fingerprint << "\n";
    f << "aee_px," << s.aee_px << "," << config_fingerprint << "\n";
    f << "episodes_used," << s.episodes_used << "," << config_fingerprint << "\n";
    f << "episodes_skipped," << s.episodes_skipped << "," << config_fingerprint << "\n";
}

}  // namespace pokedyn
