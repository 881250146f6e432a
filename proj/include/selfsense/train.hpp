#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "selfsense/dataset.hpp"
#include "selfsense/model.hpp"
#include "selfsense/optim.hpp"

namespace selfsense {

struct TrainConfig {
    int epochs = 24;
    int batch_size = 64;
    float learning_rate = 0.001f;
    OptimizerKind optimizer = OptimizerKind::Adam;
    float momentum = 0.9f;
    float weight_decay = 0.0f;
    std::string augment = "none";  // none | hflip
    double split_fraction = 0.8;
    uint64_t seed = 0;
    bool deterministic = true;
    bool early_stop = false;
    int early_stop_patience = 5;

    void validate() const;
    nlohmann::json to_json() const;
};

TrainConfig train_config_from_json(const nlohmann::json& j);

// 2x2 counts indexed [true][predicted]; environment = 0, self = 1.
struct ConfusionMatrix {
    std::array<std::array<int64_t, 2>, 2> counts{};

    void add(int true_label, int predicted) {
        counts[static_cast<size_t>(true_label)][static_cast<size_t>(predicted)]++;
    }
    int64_t total() const;
    int64_t correct() const;
    double accuracy() const;
    double true_rate(int label) const;  // per-class recall
    std::string to_csv() const;         // header true,predicted,count
    nlohmann::json to_json() const;
};

struct EpochRecord {
    double mean_loss = 0.0;
    double val_accuracy = 0.0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    int best_epoch = -1;  // 0-based epoch restored into the model
    double best_val_accuracy = 0.0;
    int64_t steps = 0;
    int64_t parameter_count = 0;
    double wall_seconds = 0.0;
    nlohmann::json config_echo;

    nlohmann::json to_json() const;
};

struct SplitResult {
    DatasetView train;
    DatasetView val;
};

// Disjoint, exhaustive, stratified by (scene kind, label); deterministic per
// seed.
SplitResult split_train_val(const DatasetView& pool, double fraction, uint64_t seed);

// Assemble dense batch tensors from references; proprio is z-scored here.
struct Batch {
    Tensor images;
    Tensor proprio;
    std::vector<int> labels;
};

Batch make_batch(const DatasetView& view, const std::vector<int>& order, size_t begin,
                 size_t end, const ProprioNorm& norm);

// Runs the full recipe and leaves the best-validation-accuracy parameters in
// `params` (running stats included).
TrainReport train_model(LevelOneParams& params, const DatasetView& train_view,
                        const DatasetView& val_view, const TrainConfig& config,
                        const ProprioNorm& norm);

ConfusionMatrix evaluate_model(LevelOneParams& params, const DatasetView& view,
                               const ProprioNorm& norm);

struct CaseResult {
    int case_id = 0;
    int64_t count = 0;
    int64_t correct = 0;
    double accuracy() const {
        return count == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(count);
    }
};

struct AblationReport {
    int group = 0;
    std::array<CaseResult, 4> cases;
    // Whether confounding proprioception on environment images (case 4) is
    // the weakest case, as observed for cluttered scenes.
    bool case4_most_misclassified = false;

    std::string to_csv() const;  // header case,n,accuracy
    nlohmann::json to_json() const;
};

AblationReport run_confounding_ablation(LevelOneParams& params, const SceneDataset& test,
                                        const ProprioNorm& norm, uint64_t seed, int group);

}  // namespace selfsense
