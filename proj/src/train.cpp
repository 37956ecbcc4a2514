#include "pokedyn/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <random>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "pokedyn/eval.hpp"

namespace pokedyn {

const char* ablation_name(Ablation a) {
    switch (a) {
        case Ablation::Full: return "full";
        case Ablation::TwoDOnly: return "2d-only";
        case Ablation::ThreeDOnly: return "3d-only";
        case Ablation::TwoDThreeD: return "2d+3d";
        case Ablation::SupervisedAssoc: return "supervised-assoc";
    }
    return "?";
}

void adam_step(ParamStore& params, const std::vector<double>& grads, AdamState& state, double lr) {
    std::size_t n = params.total_size();
    if (grads.size() != n) throw std::invalid_argument("adam_step: gradient length mismatch");
    if (state.m.size() != n) { state.m.assign(n, 0.0); state.v.assign(n, 0.0); }
    for (double g : grads)
        if (!std::isfinite(g)) { ++state.skipped_steps; return; }
    ++state.step;
    double bc1 = 1.0 - std::pow(state.beta1, state.step);
    double bc2 = 1.0 - std::pow(state.beta2, state.step);
    std::size_t off = 0;
    for (auto& p : params.all()) {
        for (std::size_t i = 0; i < p.value.size(); ++i, ++off) {
            double g = grads[off];
            state.m[off] = state.beta1 * state.m[off] + (1.0 - state.beta1) * g;
            state.v[off] = state.beta2 * state.v[off] + (1.0 - state.beta2) * g * g;
            double mhat = state.m[off] / bc1;
            double vhat = state.v[off] / bc2;
            p.value[i] -= lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

namespace {

struct SampleGrad {
    std::vector<double> grad;  // flat, store order
    LossBreakdown parts;
    bool ok = false;
    std::string error;
};

std::vector<double> association_targets(const StoredEpisode& ep, const std::vector<float>& corr,
                                        int H, int W, std::vector<uint8_t>* valid_out) {
    std::size_t npix = static_cast<std::size_t>(H) * W;
    std::vector<double> targets(npix * 3, 0.0);
    std::vector<uint8_t> valid(npix, 0);
    for (std::size_t p = 0; p < npix; ++p) {
        if (!ep.corr_valid[p] || !ep.valid_t[p]) continue;
        int tx = static_cast<int>(std::lround(corr[p * 2]));
        int ty = static_cast<int>(std::lround(corr[p * 2 + 1]));
        if (tx < 0 || tx >= W || ty < 0 || ty >= H) continue;
        std::size_t q = static_cast<std::size_t>(ty) * W + tx;
        if (!ep.valid_t1[q]) continue;
        for (int c = 0; c < 3; ++c) targets[p * 3 + c] = ep.P_t1[q * 3 + c];
        valid[p] = 1;
    }
    if (valid_out) *valid_out = std::move(valid);
    return targets;
}

SampleGrad sample_gradient(const StoredEpisode& ep, const std::vector<float>& assoc_corr,
                           const ModelConfig& mcfg, const TrainConfig& tcfg, double lam2_scale,
                           const ParamStore& params, const CameraIntrinsics& cam) {
    SampleGrad out;
    try {
        Tape tape;
        ParamLeaves pl = make_leaves(tape, params, true);
        Cloud P_t = ep.cloud_t(mcfg.H, mcfg.W);
        Cloud P_t1 = ep.cloud_t1(mcfg.H, mcfg.W);
        Image I_t = ep.image_t(mcfg.H, mcfg.W);
        Image I_t1 = ep.image_t1(mcfg.H, mcfg.W);

        ForwardOut fwd = forward_model(tape, P_t, ep.poke(), params, pl, mcfg, cam);
        LossParts parts;

        bool use3d = tcfg.ablation == Ablation::Full || tcfg.ablation == Ablation::ThreeDOnly ||
                     tcfg.ablation == Ablation::TwoDThreeD;
        bool use2d = tcfg.ablation == Ablation::Full || tcfg.ablation == Ablation::TwoDOnly ||
                     tcfg.ablation == Ablation::TwoDThreeD;
        bool useinv = tcfg.ablation == Ablation::Full;
        use2d = use2d && lam2_scale > 0.0;

        if (tcfg.ablation == Ablation::SupervisedAssoc) {
            std::vector<uint8_t> av;
            std::vector<double> targets = association_targets(ep, assoc_corr, mcfg.H, mcfg.W, &av);
            parts.cd = supervised_association_loss(tape, fwd.P_hat, targets, av);
        }
        if (use3d) {
            ChamferResult ch = chamfer_loss(tape, fwd.P_hat, P_t.valid, P_t1,
                                            NnBackend::KdTree, /*parallel=*/false);
            parts.cd = ch.loss;
            parts.ds = dt_smoothness_loss(tape, ch.dt, I_t1);
        }
        if (use2d) {
            Tensor I_next = tape.constant({mcfg.H, mcfg.W, 3}, I_t1.rgb);
            Tensor warped = bilinear_warp(tape, I_next, fwd.flow);
            parts.rec = photometric_loss(tape, I_t, warped, P_t.valid);
            parts.fs = flow_smoothness_loss(tape, fwd.flow, I_t);
        }
        if (useinv) {
            Tensor in_t = cloud_input(tape, P_t, mcfg);
            Tensor in_t1 = cloud_input(tape, P_t1, mcfg);
            InverseOut inv = inverse_model(tape, in_t, in_t1, params, pl, mcfg);
            parts.act = inverse_action_loss(tape, inv.heat_start, inv.heat_end,
                                            ep.start_cell, ep.end_cell);
            // target embedding is a constant of the step
            parts.sim = embedding_similarity_loss(tape, fwd.s_next, inv.latent_next.val());
        }

        LossWeights w = tcfg.weights;
        w.lambda2 *= lam2_scale;
        Tensor total = full_loss(tape, parts, w, &out.parts);
        tape.backward(total);

        out.grad.reserve(params.total_size());
        for (auto& leaf : pl.leaves) {
            const auto& g = leaf.grad();
            out.grad.insert(out.grad.end(), g.begin(), g.end());
        }
        out.ok = true;
    } catch (const std::exception& e) {
        out.error = e.what();
    }
    return out;
}

}  // namespace

TrainResult train(const Dataset& ds, const ModelConfig& mcfg, const TrainConfig& tcfg) {
    if (ds.manifest.H != mcfg.H || ds.manifest.W != mcfg.W)
        throw std::invalid_argument("train: dataset resolution " + std::to_string(ds.manifest.H) +
                                    "x" + std::to_string(ds.manifest.W) +
                                    " does not match model config");
    if (ds.manifest.G != mcfg.G)
        throw std::invalid_argument("train: dataset grid does not match model config");
    if (tcfg.assoc_window % 2 == 0)
        throw std::invalid_argument("train: assoc_window must be odd");

    const int n = static_cast<int>(ds.episodes.size());
    const int holdout = std::max(1, static_cast<int>(n * tcfg.holdout_frac));
    const int ntrain = n - holdout;
    if (ntrain <= 0) throw std::invalid_argument("train: no training episodes after holdout split");
    CameraIntrinsics cam = ds.manifest.intrinsics;

    // supervised-baseline association maps, optionally DA-corrupted
    std::vector<std::vector<float>> assoc(n);
    if (tcfg.ablation == Ablation::SupervisedAssoc) {
        for (int i = 0; i < n; ++i) {
            assoc[i] = ds.episodes[i].gt_corr;
            if (tcfg.assoc_window > 1) {
                std::mt19937_64 rng(tcfg.seed * 0x9e3779b9ULL + i);
                std::vector<double> c(assoc[i].begin(), assoc[i].end());
                Cloud after = ds.episodes[i].cloud_t1(mcfg.H, mcfg.W);
                corrupt_associations(c, ds.episodes[i].corr_valid, after, mcfg.H, mcfg.W,
                                     tcfg.assoc_window, 0.10, rng);
                assoc[i].assign(c.begin(), c.end());
            }
        }
    }

    TrainResult res;
    res.params = init_params(mcfg, tcfg.seed);
    res.holdout_begin = ntrain;
    AdamState adam;
    std::mt19937_64 shuffle_rng(tcfg.seed ^ 0xABCDEF12345ULL);

    std::ofstream log;
    if (!tcfg.log_path.empty()) {
        log.open(tcfg.log_path);
        log << "step,L_CD,L_rec,L_fs,L_ds,L_act,L_sim,total\n";
    }

    std::vector<int> order(ntrain);
    std::iota(order.begin(), order.end(), 0);
    long step = 0;

    const bool ramp2d = tcfg.warmup_2d_ramp > 0 &&
                        (tcfg.ablation == Ablation::Full || tcfg.ablation == Ablation::TwoDThreeD);
    const long steps_per_epoch = (ntrain + tcfg.batch - 1) / tcfg.batch;
    const long total_steps = steps_per_epoch * tcfg.epochs;
    const long delay_steps = static_cast<long>(tcfg.warmup_2d_delay * total_steps);
    const long ramp_steps = std::max<long>(1, static_cast<long>(tcfg.warmup_2d_ramp * total_steps));

    double best_mse = std::numeric_limits<double>::infinity();
    ParamStore best_params;

    for (int epoch = 0; epoch < tcfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        for (int b = 0; b < ntrain; b += tcfg.batch) {
            int bs = std::min(tcfg.batch, ntrain - b);
            double lam2_scale = 1.0;
            if (ramp2d)
                lam2_scale =
                    std::clamp(static_cast<double>(step - delay_steps) / ramp_steps, 0.0, 1.0);
            std::vector<SampleGrad> grads(bs);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) if (tcfg.threads != 1) \
    num_threads(tcfg.threads > 0 ? tcfg.threads : omp_get_max_threads())
#endif
            for (int i = 0; i < bs; ++i) {
                int ei = order[b + i];
                grads[i] = sample_gradient(ds.episodes[ei], assoc[ei], mcfg, tcfg, lam2_scale,
                                           res.params, cam);
            }

            std::vector<double> acc(res.params.total_size(), 0.0);
            LossBreakdown mean{};
            int ok = 0;
            for (const auto& g : grads) {
                if (!g.ok) {
                    std::cerr << "train: step " << step << " sample aborted: " << g.error << "\n";
                    continue;
                }
                for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += g.grad[j];
                mean.cd += g.parts.cd; mean.rec += g.parts.rec; mean.fs += g.parts.fs;
                mean.ds += g.parts.ds; mean.act += g.parts.act; mean.sim += g.parts.sim;
                mean.total += g.parts.total;
                ++ok;
            }
            if (ok == 0) { ++step; continue; }
            for (auto& v : acc) v /= ok;
            mean.cd /= ok; mean.rec /= ok; mean.fs /= ok; mean.ds /= ok;
            mean.act /= ok; mean.sim /= ok; mean.total /= ok;

            if (tcfg.clip_norm > 0.0) {
                double nrm = 0.0;
                for (double v : acc) nrm += v * v;
                nrm = std::sqrt(nrm);
                if (nrm > tcfg.clip_norm)
                    for (auto& v : acc) v *= tcfg.clip_norm / nrm;
            }
            adam_step(res.params, acc, adam, tcfg.lr);

            if (log.is_open())
                log << step << "," << mean.cd << "," << mean.rec << "," << mean.fs << ","
                    << mean.ds << "," << mean.act << "," << mean.sim << "," << mean.total << "\n";
            ++step;
        }

        EvalSummary s = evaluate_model(ds, mcfg, res.params, ntrain, n);
        res.holdout_mse_per_epoch.push_back(s.model_mean_cm2);
        res.nomotion_holdout_mse = s.nomotion_mean_cm2;
        std::cerr << "train[" << ablation_name(tcfg.ablation) << "] epoch " << epoch
                  << " holdout MSE " << s.model_mean_cm2 << " cm^2 (no-motion "
                  << s.nomotion_mean_cm2 << ")\n";

        if (tcfg.keep_best && s.model_mean_cm2 < best_mse) {
            best_mse = s.model_mean_cm2;
            best_params = res.params;
        }

        if (!tcfg.checkpoint_path.empty() && tcfg.checkpoint_every > 0 &&
            (epoch + 1) % tcfg.checkpoint_every == 0)
            save_checkpoint(tcfg.checkpoint_path, mcfg, res.params, static_cast<int>(step));
    }

    if (tcfg.epochs == 0) {
        EvalSummary s = evaluate_model(ds, mcfg, res.params, ntrain, n);
        res.holdout_mse_per_epoch.push_back(s.model_mean_cm2);
        res.nomotion_holdout_mse = s.nomotion_mean_cm2;
    }
    if (tcfg.keep_best && best_mse < std::numeric_limits<double>::infinity()) {
        // The inverse heatmap conv readouts consume only the fixed
        // depth-change feature bank (not encoder activations), so the fully
        // trained final values remain valid alongside the best-epoch weights
        // of everything else; flow selection would otherwise truncate their
        // training at the best-flow epoch.
        for (std::size_t i = 0; i < best_params.all().size(); ++i) {
            const auto& name = best_params.all()[i].name;
            if (name.find("inv.heat_") != std::string::npos &&
                name.find(".conv.") != std::string::npos)
                best_params.all()[i].value = res.params.all()[i].value;
        }
        res.params = std::move(best_params);
        res.final_holdout_mse = best_mse;
    } else {
        res.final_holdout_mse = res.holdout_mse_per_epoch.back();
    }
    if (!tcfg.checkpoint_path.empty())
        save_checkpoint(tcfg.checkpoint_path, mcfg, res.params, static_cast<int>(step));
    return res;
}

}  // namespace pokedyn
