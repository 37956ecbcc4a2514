#include "pokedyn/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <random>

#include "json.hpp"

namespace pokedyn {

Param& ParamStore::add(const std::string& name, Shape shape) {
    for (const auto& p : params_)
        if (p.name == name) throw std::logic_error("ParamStore: duplicate " + name);
    Param p;
    p.name = name;
    p.value.assign(shape_numel(shape), 0.0);
    p.shape = std::move(shape);
    params_.push_back(std::move(p));
    return params_.back();
}

Param& ParamStore::at(const std::string& name) {
    for (auto& p : params_)
        if (p.name == name) return p;
    throw std::out_of_range("ParamStore: missing " + name);
}

const Param& ParamStore::at(const std::string& name) const {
    return const_cast<ParamStore*>(this)->at(name);
}

std::size_t ParamStore::total_size() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
}

ParamLeaves make_leaves(Tape& tape, const ParamStore& store, bool requires_grad) {
    ParamLeaves pl;
    pl.leaves.reserve(store.all().size());
    for (const auto& p : store.all())
        pl.leaves.push_back(tape.leaf(p.shape, p.value, requires_grad));
    return pl;
}

Tensor ParamLeaves::at(const ParamStore& store, const std::string& name) const {
    const auto& ps = store.all();
    for (std::size_t i = 0; i < ps.size(); ++i)
        if (ps[i].name == name) return leaves[i];
    throw std::out_of_range("ParamLeaves: missing " + name);
}

namespace {

void uniform_init(Param& p, int fan_in, std::mt19937_64& rng) {
    double s = std::sqrt(1.0 / fan_in);
    std::uniform_real_distribution<double> u(-s, s);
    for (auto& v : p.value) v = u(rng);
}

}  // namespace

ParamStore init_params(const ModelConfig& cfg, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    ParamStore s;
    int enc_flat = cfg.c3 * (cfg.H / 8) * (cfg.W / 8);
    int fused = cfg.latent + 32;

    auto conv = [&](const std::string& n, int o, int c, int k) {
        uniform_init(s.add(n + ".w", {o, c, k, k}), c * k * k, rng);
        s.add(n + ".b", {o});
    };
    auto fc = [&](const std::string& n, int o, int i) {
        uniform_init(s.add(n + ".w", {o, i}), i, rng);
        s.add(n + ".b", {o});
    };

    conv("enc.conv1", cfg.c1, 3, 4);
    conv("enc.conv2", cfg.c2, cfg.c1, 4);
    conv("enc.conv3", cfg.c3, cfg.c2, 4);
    fc("enc.fc", cfg.latent, enc_flat);
    fc("act.fc", 32, 4 + 13 * 3);
    fc("fwd.se3.fc1", 64, fused);
    s.add("fwd.se3.fc2.w", {cfg.K * 6, 64});  // zero: identity transforms at init
    s.add("fwd.se3.fc2.b", {cfg.K * 6});
    fc("fwd.dec.fc", enc_flat, fused);
    conv("fwd.dec.conv1", cfg.c2, cfg.c3 + cfg.c2, 3);
    conv("fwd.dec.conv2", cfg.c1, cfg.c2 + cfg.c1, 3);
    conv("fwd.dec.mask", cfg.K, cfg.c1, 3);
    s.at("fwd.dec.mask.b").value[0] = cfg.mask_bg_bias;  // background channel dominates
    fc("fwd.trans.fc", cfg.latent, fused);
    fc("inv.fuse", cfg.latent, 2 * cfg.latent);
    // Heatmap readouts are zero-initialized so both heads start exactly
    // uniform: with a random init the softmax saturates on arbitrary cells
    // and the optimizer burns thousands of steps flattening it before any
    // localization signal can accumulate.
    s.add("inv.heat_start.w", {cfg.G * cfg.G, cfg.latent});
    s.add("inv.heat_start.b", {cfg.G * cfg.G});
    s.add("inv.heat_end.w", {cfg.G * cfg.G, cfg.latent});
    s.add("inv.heat_end.b", {cfg.G * cfg.G});
    // Weight-shared spatial readouts over the 22-channel steerable
    // depth-change bank (appearance / disappearance maps at 11 shifts along
    // the observed motion direction), one 5x5 kernel per head; see
    // inverse_model for why this path exists and why it is zero-initialized.
    s.add("inv.heat_start.conv.w", {1, 22, 5, 5});
    s.add("inv.heat_start.conv.b", {1});
    s.add("inv.heat_end.conv.w", {1, 22, 5, 5});
    s.add("inv.heat_end.conv.b", {1});
    return s;
}

Tensor cloud_input(Tape& tape, const Cloud& P, const ModelConfig& cfg) {
    if (P.H != cfg.H || P.W != cfg.W)
        throw std::invalid_argument("cloud_input: resolution mismatch with model config (" +
                                    std::to_string(P.H) + "x" + std::to_string(P.W) + " vs " +
                                    std::to_string(cfg.H) + "x" + std::to_string(cfg.W) + ")");
    std::size_t npix = P.npix();
    std::vector<double> d(3 * npix, 0.0);
    for (std::size_t p = 0; p < npix; ++p) {
        if (!P.valid[p]) continue;
        d[p] = P.pts[p * 3] * cfg.cloud_scale;
        d[npix + p] = P.pts[p * 3 + 1] * cfg.cloud_scale;
        d[2 * npix + p] = (P.pts[p * 3 + 2] - cfg.cloud_z_offset) * cfg.cloud_scale;
    }
    return tape.constant({3, cfg.H, cfg.W}, std::move(d));
}

EncoderOut encode(Tape& tape, const Tensor& input, const ParamStore& store,
                  const ParamLeaves& pl, const ModelConfig&) {
    EncoderOut e;
    Tensor h1 = tape.relu(tape.conv2d(input, pl.at(store, "enc.conv1.w"), pl.at(store, "enc.conv1.b"), 2, 1));
    Tensor h2 = tape.relu(tape.conv2d(h1, pl.at(store, "enc.conv2.w"), pl.at(store, "enc.conv2.b"), 2, 1));
    Tensor h3 = tape.relu(tape.conv2d(h2, pl.at(store, "enc.conv3.w"), pl.at(store, "enc.conv3.b"), 2, 1));
    Tensor flat = tape.reshape(h3, {static_cast<int>(h3.size())});
    e.latent = tape.relu(tape.dense(flat, pl.at(store, "enc.fc.w"), pl.at(store, "enc.fc.b")));
    e.skip1 = h1;
    e.skip2 = h2;
    return e;
}

namespace {

Tensor action_features(Tape& tape, const PokeAction& u, const Cloud& P,
                       const ParamStore& store, const ParamLeaves& pl, const ModelConfig& cfg) {
    std::vector<double> a = {u.ax / cfg.arena_half_x, u.ay / cfg.arena_half_y,
                             std::cos(u.atheta), std::sin(u.atheta)};

    // Engagement-geometry features. The displacement an action produces is
    // set by how the fixed-length stroke intersects the object (grazing vs
    // center push), which a global scene latent plus four action scalars
    // cannot resolve: without it the model regresses every touching poke
    // toward the dataset-mean displacement, which is fatal for planning.
    // Here the observed cloud is splatted into a world-frame height map and
    // sampled along the stroke corridor (13 stations from the stroke start
    // to two object radii past the target, at lateral offsets of one poker
    // radius), giving the action head a direct view of the swept mass.
    const int G = cfg.G;
    std::vector<double> hmap(static_cast<std::size_t>(G) * G, 0.0);
    {
        const double tilt = cfg.cam_tilt_deg * 3.14159265358979323846 / 180.0;
        const double pz = cfg.cam_distance * std::sin(tilt);
        const double py = -cfg.cam_distance * std::cos(tilt);
        const double fwd[3] = {0.0, std::cos(tilt), -std::sin(tilt)};
        const double down[3] = {0.0, -std::sin(tilt), -std::cos(tilt)};
        std::size_t npix = P.npix();
        for (std::size_t p = 0; p < npix; ++p) {
            if (!P.valid[p]) continue;
            double X = P.pts[p * 3], Y = P.pts[p * 3 + 1], Z = P.pts[p * 3 + 2];
            double wx = X;  // right axis is world +x
            double wy = py + down[1] * Y + fwd[1] * Z;
            double wz = pz + down[2] * Y + fwd[2] * Z;
            if (wz < 0.005) continue;  // table plane
            int cx = static_cast<int>((wx + cfg.arena_half_x) / (2.0 * cfg.arena_half_x) * G);
            int cy = static_cast<int>((wy + cfg.arena_half_y) / (2.0 * cfg.arena_half_y) * G);
            if (cx < 0 || cx >= G || cy < 0 || cy >= G) continue;
            std::size_t c = static_cast<std::size_t>(cy) * G + cx;
            hmap[c] = std::max(hmap[c], wz);
        }
    }
    auto sample_h = [&](double wx, double wy) {
        double gx = (wx + cfg.arena_half_x) / (2.0 * cfg.arena_half_x) * G - 0.5;
        double gy = (wy + cfg.arena_half_y) / (2.0 * cfg.arena_half_y) * G - 0.5;
        if (gx < 0 || gy < 0 || gx > G - 1 || gy > G - 1) return 0.0;
        int x0 = static_cast<int>(gx), y0 = static_cast<int>(gy);
        int x1 = std::min(x0 + 1, G - 1), y1 = std::min(y0 + 1, G - 1);
        double ax = gx - x0, ay = gy - y0;
        return (1 - ay) * ((1 - ax) * hmap[y0 * G + x0] + ax * hmap[y0 * G + x1]) +
               ay * ((1 - ax) * hmap[y1 * G + x0] + ax * hmap[y1 * G + x1]);
    };
    const double dx = std::cos(u.atheta), dy = std::sin(u.atheta);
    const int n_along = 13;
    const double t0 = -cfg.stroke_len, t1 = 0.08;
    for (int i = 0; i < n_along; ++i) {
        double t = t0 + (t1 - t0) * i / (n_along - 1);
        for (int j = -1; j <= 1; ++j) {
            double wx = u.ax + dx * t - dy * j * cfg.poker_radius;
            double wy = u.ay + dy * t + dx * j * cfg.poker_radius;
            a.push_back(sample_h(wx, wy) * 15.0);
        }
    }
    const int na = static_cast<int>(a.size());
    Tensor at = tape.constant({na}, std::move(a));
    return tape.relu(tape.dense(at, pl.at(store, "act.fc.w"), pl.at(store, "act.fc.b")));
}

}  // namespace

ForwardOut forward_model(Tape& tape, const Cloud& P_t, const PokeAction& u,
                         const ParamStore& store, const ParamLeaves& pl,
                         const ModelConfig& cfg, const CameraIntrinsics& cam) {
    Tensor input = cloud_input(tape, P_t, cfg);
    EncoderOut enc = encode(tape, input, store, pl, cfg);
    Tensor act = action_features(tape, u, P_t, store, pl, cfg);
    Tensor fused = tape.concat(enc.latent, act);

    ForwardOut out;
    // SE(3) head
    Tensor h = tape.relu(tape.dense(fused, pl.at(store, "fwd.se3.fc1.w"), pl.at(store, "fwd.se3.fc1.b")));
    out.se3 = tape.reshape(
        tape.dense(h, pl.at(store, "fwd.se3.fc2.w"), pl.at(store, "fwd.se3.fc2.b")), {cfg.K, 6});

    // mask decoder, mirrors the encoder with skip connections
    Tensor z = tape.relu(tape.dense(fused, pl.at(store, "fwd.dec.fc.w"), pl.at(store, "fwd.dec.fc.b")));
    Tensor z3 = tape.reshape(z, {cfg.c3, cfg.H / 8, cfg.W / 8});
    Tensor u2 = tape.concat_channels(tape.upsample2x(z3), enc.skip2);
    Tensor d2 = tape.relu(tape.conv2d(u2, pl.at(store, "fwd.dec.conv1.w"), pl.at(store, "fwd.dec.conv1.b"), 1, 1));
    Tensor u1 = tape.concat_channels(tape.upsample2x(d2), enc.skip1);
    Tensor d1 = tape.relu(tape.conv2d(u1, pl.at(store, "fwd.dec.conv2.w"), pl.at(store, "fwd.dec.conv2.b"), 1, 1));
    Tensor u0 = tape.upsample2x(d1);
    Tensor logits = tape.conv2d(u0, pl.at(store, "fwd.dec.mask.w"), pl.at(store, "fwd.dec.mask.b"), 1, 1);
    out.masks = tape.softmax_channels(logits);

    Tensor P_leaf = tape.constant({cfg.H, cfg.W, 3}, P_t.pts);
    out.P_hat = transform_layer(tape, P_leaf, P_t.valid, out.masks, out.se3);
    out.flow = project_to_flow(tape, P_t, out.P_hat, cam);
    out.s_next = tape.dense(fused, pl.at(store, "fwd.trans.fc.w"), pl.at(store, "fwd.trans.fc.b"));
    return out;
}

InverseOut inverse_model(Tape& tape, const Tensor& input_t, const Tensor& input_t1,
                         const ParamStore& store, const ParamLeaves& pl, const ModelConfig& cfg) {
    EncoderOut e0 = encode(tape, input_t, store, pl, cfg);
    EncoderOut e1 = encode(tape, input_t1, store, pl, cfg);
    // The global latents alone cannot localize the poke (a 400-way
    // classification from two 128-d summaries trains far too slowly), so
    // each head also reads a spatial change map: the signed per-pixel depth
    // difference between the two input clouds, average-pooled to the G x G
    // action grid and split into appearance / disappearance channels. This
    // signal is a fixed function of the inputs — it does not drift while the
    // encoder trains — and a weight-shared kernel over it generalizes by
    // construction (the dense rows each see ~1/(G*G) of the data and
    // memorize instead). The 9x9 support lets a head place its peak at a
    // learned offset from the changed region: the poke start sits a few
    // cells behind the object, not on it. The gain renormalizes pooled
    // depth changes (~1e-2 input units) so the logits can separate cells
    // within the step budget at the fixed learning rate.
    Tensor fused_in = tape.concat(e0.latent, e1.latent);
    Tensor fused = tape.relu(
        tape.dense(fused_in, pl.at(store, "inv.fuse.w"), pl.at(store, "inv.fuse.b")));

    // The change maps below are fixed functions of the two input clouds (the
    // inputs are tape constants, so no gradient would flow through them
    // anyway); they are computed in plain arithmetic and enter the tape as a
    // constant feature bank.
    const int npix = cfg.H * cfg.W;
    const int cells = cfg.G * cfg.G;
    // Splat the signed per-pixel depth change into the world-frame action
    // grid through each pixel's ray / ground-plane intersection (the camera
    // is oblique, so image rows/columns do NOT align with the arena grid).
    std::vector<double> pos(cells, 0.0), neg(cells, 0.0);
    {
        const double tilt = cfg.cam_tilt_deg * 3.14159265358979323846 / 180.0;
        const double px = 0.0, py = -cfg.cam_distance * std::cos(tilt),
                     pz = cfg.cam_distance * std::sin(tilt);
        // camera axes in world coordinates (right, down, forward)
        const double fwd[3] = {0.0, std::cos(tilt), -std::sin(tilt)};
        const double right[3] = {1.0, 0.0, 0.0};
        const double down[3] = {fwd[1] * right[2] - fwd[2] * right[1],
                                fwd[2] * right[0] - fwd[0] * right[2],
                                fwd[0] * right[1] - fwd[1] * right[0]};
        const auto& v0 = input_t.val();
        const auto& v1 = input_t1.val();
        std::vector<int> count(cells, 0);
        std::vector<double> pos_sum(cells, 0.0), neg_sum(cells, 0.0);
        for (int y = 0; y < cfg.H; ++y) {
            for (int x = 0; x < cfg.W; ++x) {
                double dcx = (x - cfg.W / 2.0) / cfg.focal, dcy = (y - cfg.H / 2.0) / cfg.focal;
                double dw[3];
                for (int k = 0; k < 3; ++k) dw[k] = right[k] * dcx + down[k] * dcy + fwd[k];
                if (dw[2] >= -1e-12) continue;
                double t = -pz / dw[2];
                double wx = px + t * dw[0], wy = py + t * dw[1];
                double fx = (wx + cfg.arena_half_x) / (2.0 * cfg.arena_half_x);
                double fy = (wy + cfg.arena_half_y) / (2.0 * cfg.arena_half_y);
                if (fx < 0.0 || fx >= 1.0 || fy < 0.0 || fy >= 1.0) continue;
                int cell = static_cast<int>(fy * cfg.G) * cfg.G + static_cast<int>(fx * cfg.G);
                int p = y * cfg.W + x;
                double dz = v1[2 * npix + p] - v0[2 * npix + p];
                if (dz > 0) pos_sum[cell] += dz; else neg_sum[cell] -= dz;
                ++count[cell];
            }
        }
        for (int c = 0; c < cells; ++c) {
            double inv = 1000.0 / std::max(1, count[c]);  // gain: O(1e-2) -> O(10)
            pos[c] = pos_sum[c] * inv;   // depth grew: object left the cell
            neg[c] = neg_sum[c] * inv;   // depth shrank: object arrived
        }
    }
    // Motion direction measured from the change maps: disappearance centroid
    // -> appearance centroid, in grid units.
    double ux = 0.0, uy = 0.0;
    {
        double mp = 0, mpx = 0, mpy = 0, mn = 0, mnx = 0, mny = 0;
        for (int c = 0; c < cells; ++c) {
            double gx = c % cfg.G + 0.5, gy = c / cfg.G + 0.5;
            mp += pos[c]; mpx += pos[c] * gx; mpy += pos[c] * gy;
            mn += neg[c]; mnx += neg[c] * gx; mny += neg[c] * gy;
        }
        if (mp > 1e-6 && mn > 1e-6) {
            double dx = mnx / mn - mpx / mp, dy = mny / mn - mpy / mp;
            double n = std::hypot(dx, dy);
            if (n > 1e-9) { ux = dx / n; uy = dy / n; }
        }
    }
    // Steerable feature bank: both maps resampled at offsets of k cells
    // forward along the motion direction, so a peak appears shifted k cells
    // BACKWARD in channel k. The poke start sits a few cells behind the
    // pushed object and the poke target a learned offset behind its arrival
    // centroid; a linear readout over this bank can express "peak at offset
    // d along -u from the changed region" with learned d, which a fixed
    // kernel cannot (the offset direction varies per episode).
    // Half-cell spacing around 2.5-4.5 cells because that band covers the
    // stroke length (~3.6 cells), where start localization needs the most
    // radial resolution.
    const double kShifts[] = {-2, -1, 0, 1, 2, 2.5, 3, 3.5, 4, 4.5, 5};
    const int nshift = 11;
    std::vector<double> bank(static_cast<std::size_t>(2 * nshift) * cells, 0.0);
    auto sample = [&](const std::vector<double>& m, double gx, double gy) {
        if (gx < 0 || gy < 0 || gx > cfg.G - 1 || gy > cfg.G - 1) return 0.0;
        int x0 = static_cast<int>(gx), y0 = static_cast<int>(gy);
        int x1 = std::min(x0 + 1, cfg.G - 1), y1 = std::min(y0 + 1, cfg.G - 1);
        double ax = gx - x0, ay = gy - y0;
        return (1 - ay) * ((1 - ax) * m[y0 * cfg.G + x0] + ax * m[y0 * cfg.G + x1]) +
               ay * ((1 - ax) * m[y1 * cfg.G + x0] + ax * m[y1 * cfg.G + x1]);
    };
    for (int s = 0; s < nshift; ++s) {
        double off = kShifts[s];
        for (int c = 0; c < cells; ++c) {
            double gx = c % cfg.G + off * ux, gy = c / cfg.G + off * uy;
            bank[static_cast<std::size_t>(s) * cells + c] = sample(pos, gx, gy);
            bank[static_cast<std::size_t>(nshift + s) * cells + c] = sample(neg, gx, gy);
        }
    }
    Tensor change = tape.constant({2 * nshift, cfg.G, cfg.G}, std::move(bank));

    auto head = [&](const std::string& name) {
        Tensor grid = tape.conv2d(change, pl.at(store, name + ".conv.w"),
                                  pl.at(store, name + ".conv.b"), 1, 2);
        Tensor logits =
            tape.add(tape.reshape(grid, {cfg.G * cfg.G}),
                     tape.dense(fused, pl.at(store, name + ".w"), pl.at(store, name + ".b")));
        return tape.reshape(tape.softmax(logits), {cfg.G, cfg.G});
    };
    InverseOut out;
    out.heat_start = head("inv.heat_start");
    out.heat_end = head("inv.heat_end");
    out.latent_next = e1.latent;
    return out;
}

void save_checkpoint(const std::string& path, const ModelConfig& cfg, const ParamStore& store,
                     int step) {
    nlohmann::json manifest;
    manifest["format"] = "pokedyn-checkpoint-v1";
    manifest["step"] = step;
    manifest["config"] = {
        {"H", cfg.H}, {"W", cfg.W}, {"K", cfg.K}, {"G", cfg.G}, {"latent", cfg.latent},
        {"c1", cfg.c1}, {"c2", cfg.c2}, {"c3", cfg.c3},
        {"cloud_z_offset", cfg.cloud_z_offset}, {"cloud_scale", cfg.cloud_scale},
        {"arena_half_x", cfg.arena_half_x}, {"arena_half_y", cfg.arena_half_y},
        {"mask_bg_bias", cfg.mask_bg_bias}};
    auto& plist = manifest["params"] = nlohmann::json::array();
    for (const auto& p : store.all()) plist.push_back({{"name", p.name}, {"shape", p.shape}});

    std::string js = manifest.dump();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_checkpoint: cannot open " + path);
    std::uint32_t len = static_cast<std::uint32_t>(js.size());
    f.write("PDCKPT1\n", 8);
    f.write(reinterpret_cast<const char*>(&len), 4);
    f.write(js.data(), js.size());
    for (const auto& p : store.all()) {
        std::vector<float> buf(p.value.begin(), p.value.end());
        f.write(reinterpret_cast<const char*>(buf.data()), buf.size() * sizeof(float));
    }
    if (!f) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

ParamStore load_checkpoint(const std::string& path, ModelConfig& cfg, int* step) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("load_checkpoint: cannot open " + path);
    char magic[8];
    f.read(magic, 8);
    if (!f || std::memcmp(magic, "PDCKPT1\n", 8) != 0)
        throw std::runtime_error("load_checkpoint: bad magic in " + path);
    std::uint32_t len = 0;
    f.read(reinterpret_cast<char*>(&len), 4);
    std::string js(len, '\0');
    f.read(js.data(), len);
    auto manifest = nlohmann::json::parse(js);
    const auto& c = manifest["config"];
    ModelConfig loaded;
    loaded.H = c["H"]; loaded.W = c["W"]; loaded.K = c["K"]; loaded.G = c["G"];
    loaded.latent = c["latent"]; loaded.c1 = c["c1"]; loaded.c2 = c["c2"]; loaded.c3 = c["c3"];
    loaded.cloud_z_offset = c["cloud_z_offset"]; loaded.cloud_scale = c["cloud_scale"];
    loaded.arena_half_x = c["arena_half_x"]; loaded.arena_half_y = c["arena_half_y"];
    loaded.mask_bg_bias = c["mask_bg_bias"];
    cfg = loaded;
    if (step) *step = manifest["step"];

    ParamStore store;
    for (const auto& pj : manifest["params"]) {
        Shape shape = pj["shape"].get<Shape>();
        Param& p = store.add(pj["name"], shape);
        std::vector<float> buf(p.value.size());
        f.read(reinterpret_cast<char*>(buf.data()), buf.size() * sizeof(float));
        if (!f) throw std::runtime_error("load_checkpoint: truncated file " + path);
        std::copy(buf.begin(), buf.end(), p.value.begin());
    }
    return store;
}

}  // namespace pokedyn
