// pokedyn: dataset generation, training, evaluation, planning and plotting
// for the structured scene-dynamics pipeline. Exit codes: 0 ok, 1 usage,
// 2 data/schema error, 3 numerical failure.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pokedyn/dataset.hpp"
#include "pokedyn/eval.hpp"
#include "pokedyn/plan.hpp"
#include "pokedyn/plots.hpp"
#include "pokedyn/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace pokedyn;

namespace {

/// One writer per run directory: an exclusively-created lockfile, removed on
/// scope exit.
class DirLock {
public:
    explicit DirLock(const fs::path& dir) : path_(dir / ".lock") {
        fs::create_directories(dir);
        std::FILE* f = std::fopen(path_.c_str(), "wx");
        if (!f) throw std::runtime_error("run directory is locked by another writer: " + dir.string());
        std::fclose(f);
    }
    ~DirLock() { std::error_code ec; fs::remove(path_, ec); }

private:
    fs::path path_;
};

void persist_config(CLI::App* sub, const fs::path& dir) {
    std::ofstream f(dir / "config.ini");
    f << sub->config_to_str(true, false);
}

Ablation parse_ablation(const std::string& s) {
    if (s == "full") return Ablation::Full;
    if (s == "2d") return Ablation::TwoDOnly;
    if (s == "3d") return Ablation::ThreeDOnly;
    if (s == "2d3d") return Ablation::TwoDThreeD;
    if (s == "assoc") return Ablation::SupervisedAssoc;
    throw CLI::ValidationError("--ablation", "expected full|2d|3d|2d3d|assoc");
}

/// Re-samples object positions to build a goal configuration for the same
/// objects, rejection-sampled against overlap.
SceneState sample_goal(const SceneState& start, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    SceneState goal = start;
    std::uniform_real_distribution<double> ux(-start.arena_half_x * 0.75, start.arena_half_x * 0.75);
    std::uniform_real_distribution<double> uy(-start.arena_half_y * 0.75, start.arena_half_y * 0.75);
    for (std::size_t k = 0; k < goal.objects.size(); ++k) {
        for (int tries = 0;; ++tries) {
            if (tries > 2000) throw std::runtime_error("goal sampling infeasible");
            goal.objects[k].pos = {ux(rng), uy(rng)};
            bool ok = true;
            for (std::size_t j = 0; j < k; ++j)
                if (footprints_overlap(goal.objects[k], goal.objects[j])) ok = false;
            if (ok) break;
        }
    }
    return goal;
}

int cmd_gen_data(const std::string& out, int episodes, std::uint64_t seed, int min_objects,
                 int max_objects, double noise_sd, int size) {
    if (min_objects < 1) {
        std::cerr << "gen-data: --min-objects must be >= 1 (no actionable cells otherwise)\n";
        return 1;
    }
    SimConfig cfg;
    cfg.H = cfg.W = size;
    cfg.focal = size;
    cfg.min_objects = min_objects;
    cfg.max_objects = std::max(min_objects, max_objects);
    cfg.depth_noise_sd = noise_sd;
    DirLock lock{out};
    generate_dataset(out, cfg, episodes, seed);

    Dataset ds = load_dataset(out);
    std::size_t movers = 0, pts = 0;
    double motion = 0;
    for (const auto& ep : ds.episodes)
        for (std::size_t p = 0; p < ep.gt_flow.size() / 3; ++p) {
            double m = std::sqrt(double(ep.gt_flow[p * 3]) * ep.gt_flow[p * 3] +
                                 double(ep.gt_flow[p * 3 + 1]) * ep.gt_flow[p * 3 + 1] +
                                 double(ep.gt_flow[p * 3 + 2]) * ep.gt_flow[p * 3 + 2]);
            if (m > 0) { ++movers; motion += m; }
            ++pts;
        }
    std::cout << "episodes: " << ds.episodes.size() << "\n"
              << "mover fraction: " << (pts ? double(movers) / pts : 0) << "\n"
              << "mean motion magnitude (movers): " << (movers ? motion / movers : 0) << " m\n";
    return 0;
}

int cmd_train(const std::string& dataset, const std::string& out, TrainConfig tcfg,
              const std::string& ablation, int K) {
    tcfg.ablation = parse_ablation(ablation);
    DirLock lock{out};
    Dataset ds = load_dataset(dataset);
    ModelConfig mcfg;
    mcfg.H = ds.manifest.H;
    mcfg.W = ds.manifest.W;
    mcfg.G = ds.manifest.G;
    mcfg.K = K;
    tcfg.log_path = (fs::path(out) / "train_log.csv").string();
    tcfg.checkpoint_path = (fs::path(out) / "checkpoint.bin").string();
    TrainResult res = train(ds, mcfg, tcfg);

    EvalSummary s = evaluate_model(ds, mcfg, res.params, res.holdout_begin,
                                   static_cast<int>(ds.episodes.size()));
    write_metrics_csv((fs::path(out) / "metrics.csv").string(), s, ablation);
    std::cout << "final holdout MSE: " << res.final_holdout_mse << " cm^2 (no-motion "
              << res.nomotion_holdout_mse << ")\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& dataset, const std::string& out) {
    DirLock lock{out};
    Dataset ds = load_dataset(dataset);
    ModelConfig mcfg;
    ParamStore params = load_checkpoint(checkpoint, mcfg);
    if (mcfg.H != ds.manifest.H || mcfg.W != ds.manifest.W)
        throw std::runtime_error("checkpoint resolution does not match dataset");
    EvalSummary s = evaluate_model(ds, mcfg, params, 0, static_cast<int>(ds.episodes.size()));
    write_metrics_csv((fs::path(out) / "metrics.csv").string(), s, checkpoint);
    std::cout << "model MSE " << s.model_mean_cm2 << " cm^2, no-motion " << s.nomotion_mean_cm2
              << " cm^2, AEE " << s.aee_px << " px over " << s.episodes_used << " episodes\n";
    return 0;
}

int cmd_plan(const std::string& task_path, const std::string& checkpoint, const std::string& out,
             int max_pokes, bool oracle, std::uint64_t seed) {
    std::ifstream tf(task_path);
    if (!tf) throw std::runtime_error("cannot open task file " + task_path);
    json task = json::parse(tf);
    DirLock lock{out};

    SimConfig scfg;
    scfg.min_objects = scfg.max_objects = task.value("objects", 1);
    if (task.contains("size")) { scfg.H = scfg.W = task["size"]; scfg.focal = scfg.H; }
    SceneState start = make_scene(scfg, task.value("scene_seed", 1));
    SceneState goal = sample_goal(start, task.value("goal_seed", 2));

    ModelConfig mcfg;
    ParamStore params;
    if (!oracle) {
        if (checkpoint.empty()) {
            std::cerr << "plan: --checkpoint required unless --oracle\n";
            return 1;
        }
        params = load_checkpoint(checkpoint, mcfg);
        if (mcfg.H != scfg.H || mcfg.W != scfg.W)
            throw std::runtime_error("checkpoint resolution does not match task");
    }
    CemConfig cem;
    cem.seed = seed;
    MpcLog log = mpc_rollout(start, goal, scfg, mcfg, params, cem, 0.02, max_pokes, oracle);

    json traj;
    traj["success"] = log.success;
    traj["distances"] = log.distances;
    for (const auto& a : log.actions)
        traj["actions"].push_back({{"ax", a.ax}, {"ay", a.ay}, {"atheta", a.atheta}});
    std::ofstream(fs::path(out) / "trajectory.json") << traj.dump(2) << "\n";

    save_image_bmp((fs::path(out) / "start.bmp").string(), render(start, scfg).image);
    save_image_bmp((fs::path(out) / "goal.bmp").string(), render(goal, scfg).image);
    save_image_bmp((fs::path(out) / "final.bmp").string(), render(log.final_state, scfg).image);
    std::cout << (log.success ? "reached goal" : "max pokes exhausted") << " after "
              << log.actions.size() << " pokes; final distance " << log.distances.back() << " m\n";
    return 0;
}

std::vector<std::vector<double>> read_csv_columns(const fs::path& p, int skip_header) {
    std::ifstream f(p);
    if (!f) throw std::runtime_error("missing log: " + p.string());
    std::vector<std::vector<double>> cols;
    std::string line;
    int row = 0;
    while (std::getline(f, line)) {
        if (row++ < skip_header) continue;
        std::stringstream ss(line);
        std::string cell;
        std::size_t c = 0;
        while (std::getline(ss, cell, ',')) {
            if (cols.size() <= c) cols.resize(c + 1);
            cols[c].push_back(std::strtod(cell.c_str(), nullptr));
            ++c;
        }
    }
    if (cols.empty()) throw std::runtime_error("empty log: " + p.string());
    return cols;
}

int cmd_plots(const std::string& run, const std::string& out) {
    fs::create_directories(out);
    bool any = false;

    fs::path log = fs::path(run) / "train_log.csv";
    if (fs::exists(log)) {
        auto cols = read_csv_columns(log, 1);
        // columns: step, L_CD, L_rec, L_fs, L_ds, L_act, L_sim, total
        const char* names[] = {"L_CD", "L_rec", "L_fs", "L_ds", "L_act", "L_sim", "total"};
        std::vector<Series> series;
        for (int i = 0; i < 7 && i + 1 < static_cast<int>(cols.size()); ++i) {
            Series s;
            s.label = names[i];
            s.y = cols[i + 1];
            s.r = static_cast<uint8_t>(40 * i + 20);
            s.g = static_cast<uint8_t>(200 - 25 * i);
            s.b = static_cast<uint8_t>(60 + 20 * i);
            series.push_back(s);
        }
        plot_lines((fs::path(out) / "loss_curves.bmp").string(), series);
        any = true;
    }

    fs::path traj = fs::path(run) / "trajectory.json";
    if (fs::exists(traj)) {
        json t = json::parse(std::ifstream(traj));
        Series s;
        s.label = "mean goal distance (m)";
        for (double d : t["distances"]) s.y.push_back(d);
        plot_lines((fs::path(out) / "distance_vs_pokes.bmp").string(), {s});
        any = true;
    }

    // ablation bars: sibling run dirs named ablation_<name> with metrics.csv
    std::vector<std::string> labels;
    std::vector<double> values;
    for (const char* name : {"full", "2d", "3d", "2d3d", "assoc"}) {
        fs::path m = fs::path(run) / ("ablation_" + std::string(name)) / "metrics.csv";
        if (!fs::exists(m)) continue;
        auto cols = read_csv_columns(m, 1);
        labels.push_back(name);
        values.push_back(cols[0][0]);
    }
    if (!values.empty()) {
        plot_bars((fs::path(out) / "ablation_mse.bmp").string(), labels, values);
        any = true;
    }

    if (!any) throw std::runtime_error("no logs found under " + run);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"structured scene-dynamics pipeline"};
    app.require_subcommand(1);
    app.set_config("--config", "", "key=value config file; flags override it");

    // gen-data
    auto* gd = app.add_subcommand("gen-data", "generate a poking dataset");
    std::string gd_out = "dataset";
    int gd_eps = 100, gd_min = 2, gd_max = 2, gd_size = 64;
    std::uint64_t gd_seed = 1;
    double gd_noise = 0.0;
    gd->add_option("--out", gd_out, "output directory");
    gd->add_option("--episodes", gd_eps);
    gd->add_option("--seed", gd_seed);
    gd->add_option("--min-objects", gd_min);
    gd->add_option("--max-objects", gd_max);
    gd->add_option("--noise", gd_noise, "depth noise SD at reference depth, meters");
    gd->add_option("--size", gd_size, "square image resolution");

    // train
    auto* tr = app.add_subcommand("train", "train the forward+inverse model");
    std::string tr_data, tr_out = "run";
    std::string tr_ablation = "full";
    TrainConfig tcfg;
    int tr_K = 3;
    tr->add_option("--dataset", tr_data)->required();
    tr->add_option("--out", tr_out);
    tr->add_option("--epochs", tcfg.epochs);
    tr->add_option("--batch", tcfg.batch);
    tr->add_option("--lr", tcfg.lr);
    tr->add_option("--seed", tcfg.seed);
    tr->add_option("--threads", tcfg.threads, "0 = all cores, 1 = serial (bit-reproducible)");
    tr->add_option("--ablation", tr_ablation, "full|2d|3d|2d3d|assoc");
    tr->add_option("--assoc-window", tcfg.assoc_window, "DA-corruption window (odd), assoc only");
    tr->add_option("--components", tr_K, "motion components K");
    tr->add_option("--warmup-2d-delay", tcfg.warmup_2d_delay,
                   "fraction of steps with the 2D losses off");
    tr->add_option("--warmup-2d-ramp", tcfg.warmup_2d_ramp,
                   "fraction of steps over which the 2D weight ramps to full");
    tr->add_option("--keep-best", tcfg.keep_best,
                   "checkpoint the best holdout epoch instead of the last");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    std::string ev_ckpt, ev_data, ev_out = "eval";
    ev->add_option("--checkpoint", ev_ckpt)->required();
    ev->add_option("--dataset", ev_data)->required();
    ev->add_option("--out", ev_out);

    // plan
    auto* pl = app.add_subcommand("plan", "CEM model-predictive pushing");
    std::string pl_task, pl_ckpt, pl_out = "plan";
    int pl_max = 15;
    bool pl_oracle = false;
    std::uint64_t pl_seed = 1;
    pl->add_option("--task", pl_task)->required();
    pl->add_option("--checkpoint", pl_ckpt);
    pl->add_option("--out", pl_out);
    pl->add_option("--max-pokes", pl_max);
    pl->add_option("--seed", pl_seed);
    pl->add_flag("--oracle", pl_oracle, "use the simulator as dynamics (optimizer check)");

    // plots
    auto* pp = app.add_subcommand("plots", "render plots from a run directory");
    std::string pp_run, pp_out = "plots";
    pp->add_option("--run", pp_run)->required();
    pp->add_option("--out", pp_out);

    CLI11_PARSE(app, argc, argv);

    try {
        int rc = 1;
        if (gd->parsed()) {
            rc = cmd_gen_data(gd_out, gd_eps, gd_seed, gd_min, gd_max, gd_noise, gd_size);
            if (rc == 0) persist_config(gd, gd_out);
        } else if (tr->parsed()) {
            rc = cmd_train(tr_data, tr_out, tcfg, tr_ablation, tr_K);
            if (rc == 0) persist_config(tr, tr_out);
        } else if (ev->parsed()) {
            rc = cmd_eval(ev_ckpt, ev_data, ev_out);
            if (rc == 0) persist_config(ev, ev_out);
        } else if (pl->parsed()) {
            rc = cmd_plan(pl_task, pl_ckpt, pl_out, pl_max, pl_oracle, pl_seed);
            if (rc == 0) persist_config(pl, pl_out);
        } else if (pp->parsed()) {
            rc = cmd_plots(pp_run, pp_out);
        }
        return rc;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;  // numerical/precondition failure
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;  // data/schema error
    }
}
