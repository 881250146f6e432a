#pragma once

#include <string>
#include <vector>

#include "selfsense/tensor.hpp"

namespace selfsense {

enum class OptimizerKind { Sgd, SgdMomentum, Adam };

OptimizerKind optimizer_kind_from_string(const std::string& s);
std::string optimizer_kind_name(OptimizerKind k);

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Adam;
    float learning_rate = 0.001f;
    float momentum = 0.9f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float weight_decay = 0.0f;
};

// Holds the per-parameter auxiliary buffers and applies one update rule per
// step; step_count increments by exactly 1 per step.
class Optimizer {
public:
    Optimizer(std::vector<Tensor> params, OptimizerConfig config);

    void step();
    void zero_grad();

    int64_t step_count() const { return step_count_; }
    const OptimizerConfig& config() const { return config_; }

private:
    std::vector<Tensor> params_;
    OptimizerConfig config_;
    int64_t step_count_ = 0;
    std::vector<std::vector<float>> momentum_;  // sgd-momentum / adam first moment
    std::vector<std::vector<float>> second_moment_;
};

}  // namespace selfsense
