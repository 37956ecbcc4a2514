#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pokedyn/sim.hpp"

namespace pokedyn {

/// Compact float32 storage of one interaction, matching the on-disk record.
struct StoredEpisode {
    std::vector<float> P_t, I_t, P_t1, I_t1;  // H*W*3 each
    std::vector<uint8_t> valid_t, valid_t1;   // H*W
    std::vector<float> gt_flow;               // H*W*3
    std::vector<int16_t> gt_mask_ids;         // H*W, -1 background
    std::vector<float> gt_corr;               // H*W*2 continuous after-frame pixel
    std::vector<uint8_t> corr_valid;          // H*W
    float action[3] = {0, 0, 0};
    int start_cell = -1, end_cell = -1;

    Cloud cloud_t(int H, int W) const;
    Cloud cloud_t1(int H, int W) const;
    Image image_t(int H, int W) const;
    Image image_t1(int H, int W) const;
    PokeAction poke() const { return {action[0], action[1], action[2]}; }
};

struct DatasetManifest {
    int schema_version = 1;
    int H = 0, W = 0, G = 0;
    CameraIntrinsics intrinsics;
    double depth_noise_sd = 0.0;
    double arena_half_x = 0, arena_half_y = 0;
    int episode_count = 0;
    std::uint64_t seed = 0;
};

struct Dataset {
    DatasetManifest manifest;
    std::vector<StoredEpisode> episodes;
};

StoredEpisode store_episode(const EpisodeRecord& ep);

/// Generates `episodes` seeded interactions into `dir` (manifest.json +
/// ep_NNNNNN.bin). Episodes whose contact resolution fails are replaced from
/// follow-up seeds. Returns the manifest.
DatasetManifest generate_dataset(const std::string& dir, const SimConfig& cfg, int episodes,
                                 std::uint64_t seed);

Dataset load_dataset(const std::string& dir);

void write_episode_file(const std::string& path, const StoredEpisode& ep, int H, int W);
StoredEpisode read_episode_file(const std::string& path, int H, int W);

}  // namespace pokedyn
