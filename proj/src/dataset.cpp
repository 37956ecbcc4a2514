#include "pokedyn/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace pokedyn {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Cloud make_cloud(const std::vector<float>& pts, const std::vector<uint8_t>& valid, int H, int W) {
    Cloud c;
    c.init(H, W);
    for (std::size_t i = 0; i < pts.size(); ++i) c.pts[i] = pts[i];
    c.valid = valid;
    // Component-wise 3x3 median over valid neighbors. Range noise is
    // independent per pixel, so at realistic noise levels neighboring
    // points stop forming a coherent surface and nearest-neighbor
    // association (Chamfer, distance transforms) degrades into matching
    // noise; the median restores local coherence while keeping depth
    // edges, and is close to the identity on noise-free renders.
    std::vector<double> filtered = c.pts;
    double win[9];
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
            std::size_t p = static_cast<std::size_t>(y) * W + x;
            if (!c.valid[p]) continue;
            for (int ch = 0; ch < 3; ++ch) {
                int m = 0;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        int ny = y + dy, nx = x + dx;
                        if (ny < 0 || ny >= H || nx < 0 || nx >= W) continue;
                        std::size_t q = static_cast<std::size_t>(ny) * W + nx;
                        if (c.valid[q]) win[m++] = c.pts[q * 3 + ch];
                    }
                }
                std::nth_element(win, win + m / 2, win + m);
                filtered[p * 3 + ch] = win[m / 2];
            }
        }
    }
    c.pts = std::move(filtered);
    return c;
}

Image make_image(const std::vector<float>& rgb, int H, int W) {
    Image im;
    im.init(H, W);
    for (std::size_t i = 0; i < rgb.size(); ++i) im.rgb[i] = rgb[i];
    return im;
}

void write_f32(std::ofstream& f, const std::vector<float>& v) {
    f.write(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(float));
}

std::vector<float> read_f32(std::ifstream& f, std::size_t n) {
    std::vector<float> v(n);
    f.read(reinterpret_cast<char*>(v.data()), n * sizeof(float));
    return v;
}

}  // namespace

Cloud StoredEpisode::cloud_t(int H, int W) const { return make_cloud(P_t, valid_t, H, W); }
Cloud StoredEpisode::cloud_t1(int H, int W) const { return make_cloud(P_t1, valid_t1, H, W); }
Image StoredEpisode::image_t(int H, int W) const { return make_image(I_t, H, W); }
Image StoredEpisode::image_t1(int H, int W) const { return make_image(I_t1, H, W); }

StoredEpisode store_episode(const EpisodeRecord& ep) {
    StoredEpisode s;
    auto f32 = [](const std::vector<double>& v) { return std::vector<float>(v.begin(), v.end()); };
    s.P_t = f32(ep.P_t.pts);
    s.valid_t = ep.P_t.valid;
    s.I_t = f32(ep.I_t.rgb);
    s.P_t1 = f32(ep.P_t1.pts);
    s.valid_t1 = ep.P_t1.valid;
    s.I_t1 = f32(ep.I_t1.rgb);
    s.gt_flow = f32(ep.gt_flow);
    s.gt_mask_ids.assign(ep.gt_mask_ids.begin(), ep.gt_mask_ids.end());
    s.gt_corr = f32(ep.gt_corr);
    s.corr_valid = ep.corr_valid;
    s.action[0] = static_cast<float>(ep.action.ax);
    s.action[1] = static_cast<float>(ep.action.ay);
    s.action[2] = static_cast<float>(ep.action.atheta);
    s.start_cell = ep.gt_start_cell;
    s.end_cell = ep.gt_end_cell;
    return s;
}

void write_episode_file(const std::string& path, const StoredEpisode& ep, int H, int W) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("write_episode_file: cannot open " + path);
    std::size_t npix = static_cast<std::size_t>(H) * W;
    auto as_f32 = [](const std::vector<uint8_t>& v) {
        return std::vector<float>(v.begin(), v.end());
    };
    write_f32(f, ep.P_t);
    write_f32(f, as_f32(ep.valid_t));
    write_f32(f, ep.I_t);
    write_f32(f, ep.P_t1);
    write_f32(f, as_f32(ep.valid_t1));
    write_f32(f, ep.I_t1);
    write_f32(f, ep.gt_flow);
    std::vector<float> ids(ep.gt_mask_ids.begin(), ep.gt_mask_ids.end());
    write_f32(f, ids);
    write_f32(f, ep.gt_corr);
    write_f32(f, as_f32(ep.corr_valid));
    std::vector<float> tail = {ep.action[0], ep.action[1], ep.action[2],
                               static_cast<float>(ep.start_cell), static_cast<float>(ep.end_cell)};
    write_f32(f, tail);
    if (!f) throw std::runtime_error("write_episode_file: write failed " + path);
    (void)npix;
}

StoredEpisode read_episode_file(const std::string& path, int H, int W) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("read_episode_file: cannot open " + path);
    std::size_t npix = static_cast<std::size_t>(H) * W;
    StoredEpisode ep;
    auto as_u8 = [](const std::vector<float>& v) {
        std::vector<uint8_t> o(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) o[i] = v[i] != 0.0f;
        return o;
    };
    ep.P_t = read_f32(f, npix * 3);
    ep.valid_t = as_u8(read_f32(f, npix));
    ep.I_t = read_f32(f, npix * 3);
    ep.P_t1 = read_f32(f, npix * 3);
    ep.valid_t1 = as_u8(read_f32(f, npix));
    ep.I_t1 = read_f32(f, npix * 3);
    ep.gt_flow = read_f32(f, npix * 3);
    auto ids = read_f32(f, npix);
    ep.gt_mask_ids.resize(npix);
    for (std::size_t i = 0; i < npix; ++i) ep.gt_mask_ids[i] = static_cast<int16_t>(ids[i]);
    ep.gt_corr = read_f32(f, npix * 2);
    ep.corr_valid = as_u8(read_f32(f, npix));
    auto tail = read_f32(f, 5);
    if (!f) throw std::runtime_error("read_episode_file: truncated " + path);
    ep.action[0] = tail[0];
    ep.action[1] = tail[1];
    ep.action[2] = tail[2];
    ep.start_cell = static_cast<int>(tail[3]);
    ep.end_cell = static_cast<int>(tail[4]);
    return ep;
}

DatasetManifest generate_dataset(const std::string& dir, const SimConfig& cfg, int episodes,
                                 std::uint64_t seed) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);

    SceneState empty;
    empty.arena_half_x = cfg.arena_half_x;
    empty.arena_half_y = cfg.arena_half_y;
    RenderResult empty_render = render(empty, cfg);

    DatasetManifest man;
    man.H = cfg.H;
    man.W = cfg.W;
    man.G = cfg.grid;
    man.intrinsics = cfg.camera().K;
    man.depth_noise_sd = cfg.depth_noise_sd;
    man.arena_half_x = cfg.arena_half_x;
    man.arena_half_y = cfg.arena_half_y;
    man.episode_count = episodes;
    man.seed = seed;

    std::uint64_t salt = 0;
    for (int i = 0; i < episodes; ++i) {
        for (;;) {
            std::uint64_t ep_seed = splitmix64(seed ^ (static_cast<std::uint64_t>(i) << 20) ^ salt);
            try {
                SceneState scene = make_scene(cfg, ep_seed);
                std::mt19937_64 rng(splitmix64(ep_seed));
                EpisodeRecord ep = generate_episode(scene, empty_render, cfg, rng);
                char name[32];
                std::snprintf(name, sizeof(name), "ep_%06d.bin", i);
                write_episode_file((fs::path(dir) / name).string(), store_episode(ep), cfg.H, cfg.W);
                break;
            } catch (const std::runtime_error&) {
                ++salt;  // non-convergent contact or degenerate scene: reseed
                if (salt > 1000) throw;
            }
        }
    }

    nlohmann::json j;
    j["schema_version"] = man.schema_version;
    j["H"] = man.H;
    j["W"] = man.W;
    j["G"] = man.G;
    j["intrinsics"] = {{"fx", man.intrinsics.fx}, {"fy", man.intrinsics.fy},
                       {"cx", man.intrinsics.cx}, {"cy", man.intrinsics.cy}};
    j["depth_noise_sd"] = man.depth_noise_sd;
    j["arena_half_x"] = man.arena_half_x;
    j["arena_half_y"] = man.arena_half_y;
    j["episode_count"] = man.episode_count;
    j["seed"] = man.seed;
    std::ofstream mf(fs::path(dir) / "manifest.json");
    mf << j.dump(2) << "\n";
    return man;
}

Dataset load_dataset(const std::string& dir) {
    namespace fs = std::filesystem;
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw std::runtime_error("load_dataset: missing manifest.json in " + dir);
    nlohmann::json j;
    mf >> j;
    Dataset ds;
    ds.manifest.schema_version = j["schema_version"];
    if (ds.manifest.schema_version != 1)
        throw std::runtime_error("load_dataset: unsupported schema version");
    ds.manifest.H = j["H"];
    ds.manifest.W = j["W"];
    ds.manifest.G = j["G"];
    ds.manifest.intrinsics = {j["intrinsics"]["fx"], j["intrinsics"]["fy"],
                              j["intrinsics"]["cx"], j["intrinsics"]["cy"]};
    ds.manifest.depth_noise_sd = j["depth_noise_sd"];
    ds.manifest.arena_half_x = j["arena_half_x"];
    ds.manifest.arena_half_y = j["arena_half_y"];
    ds.manifest.episode_count = j["episode_count"];
    ds.manifest.seed = j["seed"];
    ds.episodes.reserve(ds.manifest.episode_count);
    for (int i = 0; i < ds.manifest.episode_count; ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "ep_%06d.bin", i);
        ds.episodes.push_back(
            read_episode_file((fs::path(dir) / name).string(), ds.manifest.H, ds.manifest.W));
    }
    return ds;
}

}  // namespace pokedyn
