#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "selfsense/dataset.hpp"
#include "selfsense/model.hpp"

namespace selfsense {

// Gradient attribution of the predicted-class logit over the input image:
// per-pixel max over channels of |d logit / d pixel|, min-max normalized.
struct SaliencyMap {
    int h = 0;
    int w = 0;
    std::vector<float> values;  // [0,1]
    int predicted_label = 0;
    uint64_t sample_id = 0;
    float raw_min = 0.0f;
    float raw_max = 0.0f;
    bool all_zero = false;

    nlohmann::json sidecar_json() const;
};

SaliencyMap compute_saliency(LevelOneParams& params, std::span<const float> image_chw,
                             std::span<const float> proprio_raw, const ProprioNorm& norm,
                             uint64_t sample_id);

// Joint 2D histogram of two flattened weight tensors, each binned over its
// own [min, max] with equal-width bins; entropies and mutual information in
// bits.
struct MIReport {
    int bins = 32;
    std::vector<int64_t> joint_counts;  // bins x bins, row = model A bin
    std::vector<double> joint;          // probabilities, sums to 1
    double h_a = 0.0;
    double h_b = 0.0;
    double mi = 0.0;
    std::string layer = "fc2";
    std::string model_a;
    std::string model_b;

    nlohmann::json to_json() const;
};

// layer: fc2 (default) | fc1 | fc0 | vision_proj; weights only, bias excluded.
Tensor layer_weights(LevelOneParams& params, const std::string& layer);

MIReport weight_mutual_information(LevelOneParams& a, LevelOneParams& b,
                                   const std::string& layer = "fc2", int bins = 32);
// Same computation on raw vectors (used for analysis and tests).
MIReport mutual_information_vectors(std::span<const float> a, std::span<const float> b,
                                    int bins);

// Log-scaled grayscale render of the joint histogram, values in [0,1] so the
// busiest cell quantizes to exactly 255 in a PGM.
std::vector<float> joint_histogram_render(const MIReport& report);

struct MIMatrix {
    std::vector<MIReport> pairs;  // 6 unordered pairs in (a,b) index order
    double min_mi = 0.0;
    double max_mi = 0.0;
    double mean_mi = 0.0;

    std::string to_csv() const;  // header model_a,model_b,mi_bits,h_a,h_b
};

MIMatrix compare_group_models(std::vector<ModelBundle*> bundles,
                              const std::vector<std::string>& names,
                              const std::string& layer = "fc2", int bins = 32);

// Saliency mass captured by the arm mask, relative to what a uniform map
// would capture, averaged over self samples of a test scene. Values above 1
// mean the attribution concentrates on the arms.
struct EnrichmentStats {
    double mean_mass_fraction = 0.0;
    double mean_area_fraction = 0.0;
    double enrichment = 0.0;
    int64_t samples = 0;
};

EnrichmentStats saliency_arm_enrichment(LevelOneParams& params, const ProprioNorm& norm,
                                        const SceneDataset& test, int max_samples);

}  // namespace selfsense
