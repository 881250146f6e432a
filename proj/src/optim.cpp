#include "selfsense/optim.hpp"

#include <cmath>
#include <sstream>

namespace selfsense {

OptimizerKind optimizer_kind_from_string(const std::string& s) {
    if (s == "sgd") return OptimizerKind::Sgd;
    if (s == "sgd-momentum") return OptimizerKind::SgdMomentum;
    if (s == "adam") return OptimizerKind::Adam;
    throw ConfigError("unknown optimizer kind '" + s + "' (sgd | sgd-momentum | adam)");
}

std::string optimizer_kind_name(OptimizerKind k) {
    switch (k) {
        case OptimizerKind::Sgd: return "sgd";
        case OptimizerKind::SgdMomentum: return "sgd-momentum";
        case OptimizerKind::Adam: return "adam";
    }
    return "?";
}

Optimizer::Optimizer(std::vector<Tensor> params, OptimizerConfig config)
    : params_(std::move(params)), config_(config) {
    if (config_.kind != OptimizerKind::Sgd) {
        momentum_.reserve(params_.size());
        for (const Tensor& p : params_) {
            momentum_.emplace_back(static_cast<size_t>(p.numel()), 0.0f);
        }
    }
    if (config_.kind == OptimizerKind::Adam) {
        second_moment_.reserve(params_.size());
        for (const Tensor& p : params_) {
            second_moment_.emplace_back(static_cast<size_t>(p.numel()), 0.0f);
        }
    }
}

void Optimizer::step() {
    ++step_count_;
    const float lr = config_.learning_rate;
    for (size_t pi = 0; pi < params_.size(); ++pi) {
        Tensor& p = params_[pi];
        if (!p.has_grad()) {
            std::ostringstream os;
            os << "optimizer: parameter " << pi << " has no gradient populated";
            throw ValidationError(os.str());
        }
        auto data = p.data();
        auto grad = p.grad();
        switch (config_.kind) {
            case OptimizerKind::Sgd: {
                for (size_t i = 0; i < data.size(); ++i) {
                    float g = grad[i] + config_.weight_decay * data[i];
                    data[i] -= lr * g;
                }
                break;
            }
            case OptimizerKind::SgdMomentum: {
                auto& vel = momentum_[pi];
                for (size_t i = 0; i < data.size(); ++i) {
                    float g = grad[i] + config_.weight_decay * data[i];
                    vel[i] = config_.momentum * vel[i] + g;
                    data[i] -= lr * vel[i];
                }
                break;
            }
            case OptimizerKind::Adam: {
                auto& m = momentum_[pi];
                auto& v = second_moment_[pi];
                const float b1 = config_.beta1, b2 = config_.beta2;
                const float bc1 = 1.0f - std::pow(b1, static_cast<float>(step_count_));
                const float bc2 = 1.0f - std::pow(b2, static_cast<float>(step_count_));
                for (size_t i = 0; i < data.size(); ++i) {
                    float g = grad[i] + config_.weight_decay * data[i];
                    m[i] = b1 * m[i] + (1.0f - b1) * g;
                    v[i] = b2 * v[i] + (1.0f - b2) * g * g;
                    const float mhat = m[i] / bc1;
                    const float vhat = v[i] / bc2;
                    data[i] -= lr * mhat / (std::sqrt(vhat) + config_.eps);
                }
                break;
            }
        }
    }
}

void Optimizer::zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
}

}  // namespace selfsense
