#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "selfsense/tensor.hpp"

namespace selfsense {

struct BackboneSpec {
    int stem_channels = 16;
    std::vector<int> block_widths = {16, 32, 64};
};

// All the feature widths of the fusion architecture: a residual vision
// backbone projected to 19 features, a proprioception layer producing 76,
// their 95-wide concatenation, a 32-wide hidden layer, and the two-class
// head.
struct LevelOneConfig {
    int image_h = 64;
    int image_w = 64;
    int proprio_input_dim = 18;
    int vision_feature_dim = 19;
    int fc0_out = 76;
    int concat_dim = 95;
    int fc1_out = 32;
    int num_classes = 2;
    BackboneSpec backbone;
    uint64_t seed = 0;
    float bn_momentum = 0.1f;
    float bn_eps = 1e-5f;

    void validate() const;
};

nlohmann::json model_config_to_json(const LevelOneConfig& c);
LevelOneConfig model_config_from_json(const nlohmann::json& j);

struct ConvBnLayer {
    Tensor weight, bias, gamma, beta;
    BatchNormState bn;
    int stride = 1;
    int padding = 1;
};

struct ResidualBlock {
    ConvBnLayer conv1, conv2;
    bool has_projection = false;
    ConvBnLayer projection;  // 1x1, matches conv1's stride
};

struct LevelOneParams {
    LevelOneConfig config;
    ConvBnLayer stem;
    std::vector<ResidualBlock> blocks;
    Tensor vision_w, vision_b;  // backbone features -> 19
    Tensor fc0_w, fc0_b;        // proprio -> 76
    Tensor fc1_w, fc1_b;        // 95 -> 32
    Tensor fc2_w, fc2_b;        // 32 -> 2

    std::vector<Tensor> parameters();  // trainable tensors, fixed order
    // Parameters plus batchnorm running stats, named, in checkpoint order.
    std::vector<std::pair<std::string, Tensor>> named_tensors();
    int64_t parameter_count();
};

LevelOneParams init_model(const LevelOneConfig& config);

enum class Mode { Train, Eval };

// images: N x 3 x H x W, proprio: N x D (already normalized) -> logits N x 2.
Tensor model_forward(LevelOneParams& params, const Tensor& images, const Tensor& proprio,
                     Mode mode);

struct FeatureSplit {
    Tensor vision;        // N x 19
    Tensor proprio;       // N x 76
};

// Pre-concat activations of the two subnetworks (eval mode).
FeatureSplit feature_split(LevelOneParams& params, const Tensor& images,
                           const Tensor& proprio);

struct Prediction {
    int label = 0;
    float confidence = 0.0f;
};

// Argmax with ties broken toward label 0; confidence is the softmax mass of
// the chosen class.
std::vector<Prediction> predict(LevelOneParams& params, const Tensor& images,
                                const Tensor& proprio);
std::vector<Prediction> predictions_from_logits(const Tensor& logits);

// A trained model plus everything needed to evaluate it: the proprio
// normalization it was trained with and free-form metadata (group, seeds,
// training recipe echo).
struct ModelBundle {
    LevelOneParams params;
    std::vector<float> norm_mean;
    std::vector<float> norm_std;
    nlohmann::json meta;
};

// Checkpoint format: magic "L1SA0001", u32 LE length + canonical JSON header,
// each tensor in the TNSR dump format in the header's declared order, then a
// CRC-32 of everything between the magic and the checksum.
void save_checkpoint(const std::filesystem::path& path, ModelBundle& bundle);
ModelBundle load_checkpoint(const std::filesystem::path& path);

}  // namespace selfsense
