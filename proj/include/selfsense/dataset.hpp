#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "selfsense/scene.hpp"

namespace selfsense {

inline constexpr int kLabelEnvironment = 0;
inline constexpr int kLabelSelf = 1;

// Per-dimension z-score statistics for proprioception vectors.
struct ProprioNorm {
    std::vector<float> mean;
    std::vector<float> stdev;
};

// A fully generated scene dataset held in memory. Images are stored exactly
// as they land in samples.bin: float32, channel-major (3 x H x W).
struct SceneDataset {
    SceneSpec scene;
    RobotSpec robot;
    uint64_t seed = 0;
    int count = 0;

    std::vector<float> images;
    std::vector<float> proprios;
    std::vector<uint8_t> labels;
    std::vector<uint64_t> sample_ids;

    size_t image_elems() const {
        return 3 * static_cast<size_t>(scene.image_h) * static_cast<size_t>(scene.image_w);
    }
    size_t proprio_elems() const { return static_cast<size_t>(robot.proprio_dim()); }
    std::span<const float> image_at(int i) const {
        return std::span<const float>(images).subspan(static_cast<size_t>(i) * image_elems(),
                                                      image_elems());
    }
    std::span<const float> proprio_at(int i) const {
        return std::span<const float>(proprios)
            .subspan(static_cast<size_t>(i) * proprio_elems(), proprio_elems());
    }
};

// One sample replayed from its per-record stream; carries the masks that the
// packed dataset format drops.
struct GeneratedSample {
    std::vector<float> angles;
    std::vector<float> angles_prev;
    std::vector<float> proprio;
    std::vector<float> image;
    std::vector<uint8_t> arm_mask;
    std::vector<uint8_t> gripper_mask;
    int label = kLabelEnvironment;
};

uint64_t sample_stream_seed(uint64_t scene_seed, int index);
uint64_t scene_seed_for(uint64_t root_seed, SceneKind kind);
uint64_t make_sample_id(SceneKind kind, int index);

// Deterministic single-sample synthesis; both the bulk generator and mask
// regeneration go through here. Labels alternate (even index = environment),
// which keeps every scene dataset exactly 50/50.
GeneratedSample synthesize_sample(const SceneSpec& scene, const RobotSpec& robot,
                                  uint64_t scene_seed, int index);

// count must be even (exact class balance) and >= 2.
SceneDataset generate_scene_dataset(const SceneSpec& scene, const RobotSpec& robot,
                                    int count, uint64_t scene_seed);

// Dataset directory layout: <dir>/manifest.json + <dir>/samples.bin.
// Returns the manifest hash (FNV-1a 64 of the manifest text).
uint64_t write_scene_dataset(const std::filesystem::path& dir, const SceneDataset& ds);
SceneDataset load_scene_dataset(const std::filesystem::path& dir, bool verify_hash = true);
uint64_t scene_manifest_hash(const std::filesystem::path& dir);

nlohmann::json robot_to_json(const RobotSpec& r);
RobotSpec robot_from_json(const nlohmann::json& j);
nlohmann::json scene_to_json(const SceneSpec& s);
SceneSpec scene_from_json(const nlohmann::json& j);

// Leave-one-group-out layout: three training scenes, one unseen test scene.
struct GroupSpec {
    int id = 1;
    std::array<SceneKind, 3> train_scenes{};
    SceneKind test_scene = SceneKind::ClutterA;
};

GroupSpec group_spec(int group_id);

// A sample reference usable for both matched data (image and proprio from the
// same record) and confounding cross-pairings.
struct SampleRef {
    const SceneDataset* image_ds = nullptr;
    int image_index = 0;
    const SceneDataset* proprio_ds = nullptr;
    int proprio_index = 0;
    int label = kLabelEnvironment;
};

using DatasetView = std::vector<SampleRef>;

DatasetView matched_view(const SceneDataset& ds);
DatasetView concat_views(const std::vector<DatasetView>& views);

ProprioNorm compute_proprio_norm(const std::vector<const SceneDataset*>& scenes);

struct ConfoundingCases {
    DatasetView case1;  // matched self
    DatasetView case2;  // matched environment
    DatasetView case3;  // self image, environment proprio, label environment
    DatasetView case4;  // environment image, self proprio, label environment
};

ConfoundingCases make_confounding_cases(const SceneDataset& test, uint64_t seed);

// Group manifest: scene hashes plus the training-pool normalization stats.
struct GroupManifest {
    GroupSpec spec;
    ProprioNorm norm;
    uint64_t root_seed = 0;
    std::vector<std::pair<std::string, std::string>> scene_hashes;  // kind -> hex hash
};

uint64_t write_group_manifest(const std::filesystem::path& data_dir,
                              const GroupManifest& gm);
GroupManifest load_group_manifest(const std::filesystem::path& data_dir, int group_id);

}  // namespace selfsense
