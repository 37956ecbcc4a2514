#include "pokedyn/plan.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "pokedyn/losses.hpp"

namespace pokedyn {

namespace {

std::vector<Vec3> subsample_valid(const Cloud& P, int target, std::uint64_t salt) {
    std::vector<Vec3> pts;
    std::size_t npix = static_cast<std::size_t>(P.H) * P.W;
    for (std::size_t i = 0; i < npix; ++i)
        if (P.valid[i]) pts.push_back({P.pts[i * 3], P.pts[i * 3 + 1], P.pts[i * 3 + 2]});
    if (static_cast<int>(pts.size()) <= target) return pts;
    // deterministic stride subsample; salt rotates the phase so repeated
    // calls on the same cloud do not always pick the same pixels
    std::vector<Vec3> out;
    out.reserve(target);
    double stride = static_cast<double>(pts.size()) / target;
    double phase = static_cast<double>(salt % 97) / 97.0;
    for (int k = 0; k < target; ++k)
        out.push_back(pts[static_cast<std::size_t>((k + phase) * stride)]);
    return out;
}

double clampd(double v, double lo, double hi) { return std::min(std::max(v, lo), hi); }

}  // namespace

double plan_cost(const PlanTask& task, const std::vector<StepPrediction>& rollout,
                 const CemConfig& cfg, bool* clamped) {
    if (rollout.empty()) throw std::invalid_argument("plan_cost: empty rollout");
    const int H = task.P.H, W = task.P.W;
    bool any_clamped = false;

    double pixel_term = 0.0;
    for (const auto& m : task.markers) {
        double x = m.px, y = m.py;
        for (const auto& step : rollout) {
            double uv[2];
            bilinear_sample(step.flow, H, W, 2, x, y, uv);
            x += uv[0];
            y += uv[1];
            double cx = clampd(x, 0.0, W - 1.0), cy = clampd(y, 0.0, H - 1.0);
            if (cx != x || cy != y) any_clamped = true;
            x = cx;
            y = cy;
        }
        pixel_term += std::hypot(x - m.gx, y - m.gy);
    }

    double chamfer_term = 0.0;
    if (cfg.beta != 0.0) {
        std::vector<Vec3> pred = subsample_valid(rollout.back().next_cloud, cfg.chamfer_subsample, 0);
        std::vector<Vec3> goal = subsample_valid(task.P_goal, cfg.chamfer_subsample, 1);
        chamfer_term = chamfer_point_sets(pred, goal);
    }
    if (clamped) *clamped = any_clamped;
    return cfg.alpha * pixel_term + cfg.beta * chamfer_term;
}

CemResult cem_plan(const PlanTask& task, const RolloutFn& rollout, const CemConfig& cfg) {
    if (cfg.elites > cfg.population || cfg.elites < 1)
        throw std::invalid_argument("cem_plan: elite count must be in [1, population]");
    const int H = cfg.horizon;
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    // per-step action mean/SD, coordinates (ax, ay, atheta)
    std::vector<double> mean(H * 3), sd(H * 3);
    for (int h = 0; h < H; ++h) {
        mean[h * 3] = cfg.init_mean_x;
        mean[h * 3 + 1] = cfg.init_mean_y;
        mean[h * 3 + 2] = 3.141592653589793;
        sd[h * 3] = cfg.init_sd_xy;
        sd[h * 3 + 1] = cfg.init_sd_xy;
        sd[h * 3 + 2] = cfg.init_sd_theta;
    }
    auto clip = [&](std::vector<double>& a) {
        for (int h = 0; h < H; ++h) {
            a[h * 3] = clampd(a[h * 3], -cfg.bound_x, cfg.bound_x);
            a[h * 3 + 1] = clampd(a[h * 3 + 1], -cfg.bound_y, cfg.bound_y);
            a[h * 3 + 2] = clampd(a[h * 3 + 2], 0.0, 6.283185307179586);
        }
    };
    auto to_actions = [&](const std::vector<double>& a) {
        std::vector<PokeAction> seq(H);
        for (int h = 0; h < H; ++h) seq[h] = {a[h * 3], a[h * 3 + 1], a[h * 3 + 2]};
        return seq;
    };
    auto evaluate = [&](const std::vector<double>& a, double& cost) {
        std::vector<StepPrediction> pred = rollout(to_actions(a));
        cost = plan_cost(task, pred, cfg);
        return std::isfinite(cost);
    };

    CemResult res;
    std::vector<double> best;
    double best_cost = std::numeric_limits<double>::infinity();

    for (int it = 0; it < cfg.iterations; ++it) {
        std::vector<std::vector<double>> samples(cfg.population);
        std::vector<double> costs(cfg.population);
        std::vector<char> finite(cfg.population, 0);
        for (int j = 0; j < cfg.population; ++j) {
            samples[j].resize(H * 3);
            for (int d = 0; d < H * 3; ++d) samples[j][d] = mean[d] + sd[d] * gauss(rng);
            clip(samples[j]);
        }
        // candidate evaluation is independent; kept serial here because the
        // simulator-oracle rollout dominates and is already cheap at J=64
        int any = 0;
        for (int j = 0; j < cfg.population; ++j) {
            finite[j] = evaluate(samples[j], costs[j]) ? 1 : 0;
            any += finite[j];
            if (finite[j] && costs[j] < best_cost) { best_cost = costs[j]; best = samples[j]; }
        }
        if (any == 0 && best.empty())
            throw std::runtime_error("cem_plan: all candidate rollouts non-finite");

        std::vector<int> order;
        for (int j = 0; j < cfg.population; ++j)
            if (finite[j]) order.push_back(j);
        std::sort(order.begin(), order.end(), [&](int a, int b) { return costs[a] < costs[b]; });
        int ne = std::min<int>(cfg.elites, static_cast<int>(order.size()));
        if (ne > 0) {
            // elite-keeping: the best-so-far sequence joins the elite set
            std::vector<const std::vector<double>*> elite;
            elite.push_back(&best);
            for (int e = 0; e < ne && static_cast<int>(elite.size()) < cfg.elites + 1; ++e)
                elite.push_back(&samples[order[e]]);
            for (int d = 0; d < H * 3; ++d) {
                double m = 0;
                for (auto* e : elite) m += (*e)[d];
                m /= elite.size();
                double v = 0;
                for (auto* e : elite) v += ((*e)[d] - m) * ((*e)[d] - m);
                mean[d] = m;
                sd[d] = std::sqrt(v / elite.size());
            }
        }
        res.best_cost_trace.push_back(best_cost);
    }

    // the refit mean is itself a candidate; keep whichever evaluates best
    std::vector<double> m = mean;
    clip(m);
    double mc;
    if (evaluate(m, mc) && mc < best_cost) { best_cost = mc; best = m; }

    res.actions = to_actions(best);
    res.best_cost = best_cost;
    return res;
}

RolloutFn model_rollout_fn(const PlanTask& task, const ModelConfig& mcfg, const ParamStore& params,
                           const CameraIntrinsics& cam) {
    Cloud start = task.P;
    return [start, mcfg, &params, cam](const std::vector<PokeAction>& seq) {
        std::vector<StepPrediction> out;
        Cloud cur = start;
        for (const auto& u : seq) {
            Tape tape;
            ParamLeaves pl = make_leaves(tape, params, false);
            ForwardOut fwd = forward_model(tape, cur, u, params, pl, mcfg, cam);
            StepPrediction step;
            step.next_cloud = cur;
            step.next_cloud.pts = fwd.P_hat.val();
            step.flow = fwd.flow.val();
            out.push_back(step);
            cur = out.back().next_cloud;
        }
        return out;
    };
}

RolloutFn oracle_rollout_fn(const SceneState& current, const SimConfig& scfg) {
    return [current, scfg](const std::vector<PokeAction>& seq) {
        std::vector<StepPrediction> out;
        SceneState s = current;
        for (const auto& u : seq) {
            RenderResult before = render(s, scfg);
            SceneState s1 = apply_poke(s, u, scfg);
            std::vector<double> flow3 = gt_scene_flow(s, s1, before, scfg);
            RenderResult after = render(s1, scfg);
            // project the 3D flow to pixel flow on the before frame
            CameraModel cam = scfg.camera();
            int H = scfg.H, W = scfg.W;
            StepPrediction step;
            step.next_cloud = after.cloud;
            step.flow.assign(static_cast<std::size_t>(H) * W * 2, 0.0);
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    std::size_t p = static_cast<std::size_t>(y) * W + x;
                    if (!before.cloud.valid[p]) continue;
                    double Z = before.cloud.pts[p * 3 + 2];
                    double Xn = before.cloud.pts[p * 3] + flow3[p * 3];
                    double Yn = before.cloud.pts[p * 3 + 1] + flow3[p * 3 + 1];
                    double Zn = Z + flow3[p * 3 + 2];
                    if (Zn <= 1e-6) continue;
                    step.flow[p * 2] = cam.K.fx * Xn / Zn + cam.K.cx - x;
                    step.flow[p * 2 + 1] = cam.K.fy * Yn / Zn + cam.K.cy - y;
                }
            out.push_back(step);
            s = s1;
        }
        return out;
    };
}

PlanTask make_plan_task(const SceneState& current, const SceneState& goal, const SimConfig& scfg) {
    if (current.objects.size() != goal.objects.size())
        throw std::invalid_argument("make_plan_task: object count mismatch");
    RenderResult rc = render(current, scfg);
    RenderResult rg = render(goal, scfg);
    CameraModel cam = scfg.camera();
    PlanTask task;
    task.P = rc.cloud;
    task.I = rc.image;
    task.P_goal = rg.cloud;
    task.I_goal = rg.image;

    int H = scfg.H, W = scfg.W;
    for (std::size_t k = 0; k < current.objects.size(); ++k) {
        const auto& obj = current.objects[k];
        Vec2 cp = cam.project({obj.pos.x, obj.pos.y, obj.shape.height * 0.5});
        // nearest rendered pixel belonging to this object
        double bestd = std::numeric_limits<double>::infinity();
        PlanMarker m;
        bool found = false;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                std::size_t p = static_cast<std::size_t>(y) * W + x;
                if (rc.mask_ids[p] != obj.id) continue;
                double d = (x - cp.x) * (x - cp.x) + (y - cp.y) * (y - cp.y);
                if (d < bestd) { bestd = d; m.px = x; m.py = y; found = true; }
            }
        if (!found)
            throw std::runtime_error("make_plan_task: object " + std::to_string(obj.id) +
                                     " not visible in the current frame");
        const auto& gobj = goal.objects[k];
        Vec2 gp = cam.project({gobj.pos.x, gobj.pos.y, gobj.shape.height * 0.5});
        m.gx = clampd(gp.x, 0.0, W - 1.0);
        m.gy = clampd(gp.y, 0.0, H - 1.0);
        task.markers.push_back(m);
    }
    return task;
}

double mean_goal_distance(const SceneState& s, const SceneState& goal) {
    if (s.objects.size() != goal.objects.size())
        throw std::invalid_argument("mean_goal_distance: object count mismatch");
    double d = 0;
    for (std::size_t k = 0; k < s.objects.size(); ++k)
        d += std::hypot(s.objects[k].pos.x - goal.objects[k].pos.x,
                        s.objects[k].pos.y - goal.objects[k].pos.y);
    return d / s.objects.size();
}

MpcLog mpc_rollout(const SceneState& start, const SceneState& goal, const SimConfig& scfg,
                   const ModelConfig& mcfg, const ParamStore& params, const CemConfig& cfg,
                   double eps_goal, int max_pokes, bool use_oracle) {
    MpcLog log;
    SceneState s = start;
    log.distances.push_back(mean_goal_distance(s, goal));
    for (int step = 0; step < max_pokes; ++step) {
        if (log.distances.back() < eps_goal) break;
        PlanTask task = make_plan_task(s, goal, scfg);
        RolloutFn fn = use_oracle ? oracle_rollout_fn(s, scfg)
                                  : model_rollout_fn(task, mcfg, params, scfg.camera().K);
        CemConfig step_cfg = cfg;
        step_cfg.seed = cfg.seed + static_cast<std::uint64_t>(step) * 0x9e3779b97f4a7c15ULL;
        // start the search near the objects; a mean at the arena origin
        // rarely samples touching pokes when objects sit near the walls
        double cx = 0, cy = 0;
        for (const auto& o : s.objects) {
            cx += o.pos.x / s.objects.size();
            cy += o.pos.y / s.objects.size();
        }
        step_cfg.init_mean_x = cx;
        step_cfg.init_mean_y = cy;
        CemResult plan = cem_plan(task, fn, step_cfg);
        try {
            s = apply_poke(s, plan.actions.front(), scfg);
        } catch (const std::runtime_error&) {
            // non-convergent contact: skip this poke, keep the state
        }
        log.actions.push_back(plan.actions.front());
        log.distances.push_back(mean_goal_distance(s, goal));
    }
    log.success = log.distances.back() < eps_goal;
    log.final_state = s;
    return log;
}

}  // namespace pokedyn
