#include "selfsense/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "selfsense/io_util.hpp"

namespace selfsense {

using nlohmann::json;

void LevelOneConfig::validate() const {
    if (image_h < 16 || image_w < 16 || image_h % 16 != 0 || image_w % 16 != 0) {
        throw ConfigError("model: image size must be a multiple of 16 (stem and three "
                          "stages each halve it)");
    }
    if (proprio_input_dim <= 0 || vision_feature_dim <= 0 || fc0_out <= 0 || fc1_out <= 0) {
        throw ConfigError("model: all feature dims must be positive");
    }
    if (concat_dim != vision_feature_dim + fc0_out) {
        std::ostringstream os;
        os << "model: concat_dim (" << concat_dim << ") != vision_feature_dim ("
           << vision_feature_dim << ") + fc0_out (" << fc0_out << ")";
        throw ConfigError(os.str());
    }
    if (num_classes != 2) throw ConfigError("model: num_classes must be 2");
    if (backbone.stem_channels <= 0) throw ConfigError("model: stem channels must be positive");
    if (backbone.block_widths.empty()) throw ConfigError("model: need at least one block");
    for (int w : backbone.block_widths) {
        if (w <= 0) throw ConfigError("model: block widths must be positive");
    }
}

json model_config_to_json(const LevelOneConfig& c) {
    json j;
    j["image_size"] = json::array({c.image_h, c.image_w});
    j["proprio_input_dim"] = c.proprio_input_dim;
    j["vision_feature_dim"] = c.vision_feature_dim;
    j["fc0_out"] = c.fc0_out;
    j["concat_dim"] = c.concat_dim;
    j["fc1_out"] = c.fc1_out;
    j["num_classes"] = c.num_classes;
    j["backbone"] = {{"stem_channels", c.backbone.stem_channels},
                     {"block_widths", c.backbone.block_widths}};
    j["seed"] = hex64(c.seed);
    j["bn_momentum"] = c.bn_momentum;
    j["bn_eps"] = c.bn_eps;
    return j;
}

LevelOneConfig model_config_from_json(const json& j) {
    LevelOneConfig c;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        if (k != "image_size" && k != "proprio_input_dim" && k != "vision_feature_dim" &&
            k != "fc0_out" && k != "concat_dim" && k != "fc1_out" && k != "num_classes" &&
            k != "backbone" && k != "seed" && k != "bn_momentum" && k != "bn_eps") {
            throw ConfigError("model: unknown key '" + k + "'");
        }
    }
    if (j.contains("image_size")) {
        c.image_h = j["image_size"][0].get<int>();
        c.image_w = j["image_size"][1].get<int>();
    }
    if (j.contains("proprio_input_dim")) c.proprio_input_dim = j["proprio_input_dim"].get<int>();
    if (j.contains("vision_feature_dim")) {
        c.vision_feature_dim = j["vision_feature_dim"].get<int>();
    }
    if (j.contains("fc0_out")) c.fc0_out = j["fc0_out"].get<int>();
    if (j.contains("concat_dim")) c.concat_dim = j["concat_dim"].get<int>();
    if (j.contains("fc1_out")) c.fc1_out = j["fc1_out"].get<int>();
    if (j.contains("num_classes")) c.num_classes = j["num_classes"].get<int>();
    if (j.contains("backbone")) {
        const auto& b = j["backbone"];
        if (b.contains("stem_channels")) c.backbone.stem_channels = b["stem_channels"].get<int>();
        if (b.contains("block_widths")) {
            c.backbone.block_widths = b["block_widths"].get<std::vector<int>>();
        }
    }
    if (j.contains("seed")) c.seed = std::stoull(j["seed"].get<std::string>(), nullptr, 16);
    if (j.contains("bn_momentum")) c.bn_momentum = j["bn_momentum"].get<float>();
    if (j.contains("bn_eps")) c.bn_eps = j["bn_eps"].get<float>();
    c.validate();
    return c;
}

namespace {

ConvBnLayer make_conv_bn(int in_c, int out_c, int k, int stride, int padding,
                         uint64_t seed, uint64_t& ordinal) {
    ConvBnLayer l;
    Rng rng(mix64(seed, 0x9a7aull, ordinal++));
    l.weight = Tensor::he_uniform({out_c, in_c, k, k},
                                  static_cast<int64_t>(in_c) * k * k, rng, true);
    l.bias = Tensor::zeros({out_c}, true);
    l.gamma = Tensor::full({out_c}, 1.0f, true);
    l.beta = Tensor::zeros({out_c}, true);
    l.bn.running_mean = Tensor::zeros({out_c});
    l.bn.running_var = Tensor::full({out_c}, 1.0f);
    l.stride = stride;
    l.padding = padding;
    return l;
}

Tensor make_linear_w(int out_f, int in_f, uint64_t seed, uint64_t& ordinal) {
    Rng rng(mix64(seed, 0x9a7aull, ordinal++));
    return Tensor::he_uniform({out_f, in_f}, in_f, rng, true);
}

void push_layer(std::vector<std::pair<std::string, Tensor>>& out, const std::string& name,
                const ConvBnLayer& l) {
    out.emplace_back(name + ".weight", l.weight);
    out.emplace_back(name + ".bias", l.bias);
    out.emplace_back(name + ".gamma", l.gamma);
    out.emplace_back(name + ".beta", l.beta);
    out.emplace_back(name + ".running_mean", l.bn.running_mean);
    out.emplace_back(name + ".running_var", l.bn.running_var);
}

Tensor conv_bn_forward(ConvBnLayer& l, const Tensor& x, Mode mode, const LevelOneConfig& c) {
    Tensor y = conv2d(x, l.weight, l.bias, l.stride, l.padding);
    return batchnorm2d(y, l.gamma, l.beta, l.bn, mode == Mode::Train, c.bn_momentum,
                       c.bn_eps);
}

// Backbone: stem conv (stride 2) pooled down before its batchnorm, then one
// residual block per width; every block after the first downsamples by 2 and
// projects its skip.
Tensor backbone_forward(LevelOneParams& p, const Tensor& images, Mode mode) {
    const LevelOneConfig& c = p.config;
    Tensor x = avg_pool2x2(conv2d(images, p.stem.weight, p.stem.bias, p.stem.stride,
                                  p.stem.padding));
    x = relu(batchnorm2d(x, p.stem.gamma, p.stem.beta, p.stem.bn, mode == Mode::Train,
                         c.bn_momentum, c.bn_eps));
    for (size_t bi = 0; bi < p.blocks.size(); ++bi) {
        ResidualBlock& b = p.blocks[bi];
        Tensor h = relu(conv_bn_forward(b.conv1, x, mode, c));
        h = conv_bn_forward(b.conv2, h, mode, c);
        Tensor skip = b.has_projection ? conv_bn_forward(b.projection, x, mode, c) : x;
        x = relu(add(h, skip));
    }
    return linear(global_avg_pool(x), p.vision_w, p.vision_b);
}

}  // namespace

std::vector<Tensor> LevelOneParams::parameters() {
    std::vector<Tensor> out;
    auto push = [&](const ConvBnLayer& l) {
        out.push_back(l.weight);
        out.push_back(l.bias);
        out.push_back(l.gamma);
        out.push_back(l.beta);
    };
    push(stem);
    for (auto& b : blocks) {
        push(b.conv1);
        push(b.conv2);
        if (b.has_projection) push(b.projection);
    }
    out.push_back(vision_w);
    out.push_back(vision_b);
    out.push_back(fc0_w);
    out.push_back(fc0_b);
    out.push_back(fc1_w);
    out.push_back(fc1_b);
    out.push_back(fc2_w);
    out.push_back(fc2_b);
    return out;
}

std::vector<std::pair<std::string, Tensor>> LevelOneParams::named_tensors() {
    std::vector<std::pair<std::string, Tensor>> out;
    push_layer(out, "stem", stem);
    for (size_t i = 0; i < blocks.size(); ++i) {
        const std::string base = "block" + std::to_string(i);
        push_layer(out, base + ".conv1", blocks[i].conv1);
        push_layer(out, base + ".conv2", blocks[i].conv2);
        if (blocks[i].has_projection) push_layer(out, base + ".proj", blocks[i].projection);
    }
    out.emplace_back("vision_proj.weight", vision_w);
    out.emplace_back("vision_proj.bias", vision_b);
    out.emplace_back("fc0.weight", fc0_w);
    out.emplace_back("fc0.bias", fc0_b);
    out.emplace_back("fc1.weight", fc1_w);
    out.emplace_back("fc1.bias", fc1_b);
    out.emplace_back("fc2.weight", fc2_w);
    out.emplace_back("fc2.bias", fc2_b);
    return out;
}

int64_t LevelOneParams::parameter_count() {
    int64_t n = 0;
    for (const Tensor& t : parameters()) n += t.numel();
    return n;
}

LevelOneParams init_model(const LevelOneConfig& config) {
    config.validate();
    LevelOneParams p;
    p.config = config;
    uint64_t ordinal = 0;
    const uint64_t seed = config.seed;

    p.stem = make_conv_bn(3, config.backbone.stem_channels, 3, 2, 1, seed, ordinal);
    int in_c = config.backbone.stem_channels;
    for (size_t bi = 0; bi < config.backbone.block_widths.size(); ++bi) {
        const int out_c = config.backbone.block_widths[bi];
        const int stride = bi == 0 ? 1 : 2;
        ResidualBlock b;
        b.conv1 = make_conv_bn(in_c, out_c, 3, stride, 1, seed, ordinal);
        b.conv2 = make_conv_bn(out_c, out_c, 3, 1, 1, seed, ordinal);
        b.has_projection = stride != 1 || in_c != out_c;
        if (b.has_projection) {
            b.projection = make_conv_bn(in_c, out_c, 1, stride, 0, seed, ordinal);
        }
        p.blocks.push_back(std::move(b));
        in_c = out_c;
    }

    p.vision_w = make_linear_w(config.vision_feature_dim, in_c, seed, ordinal);
    p.vision_b = Tensor::zeros({config.vision_feature_dim}, true);
    p.fc0_w = make_linear_w(config.fc0_out, config.proprio_input_dim, seed, ordinal);
    p.fc0_b = Tensor::zeros({config.fc0_out}, true);
    p.fc1_w = make_linear_w(config.fc1_out, config.concat_dim, seed, ordinal);
    p.fc1_b = Tensor::zeros({config.fc1_out}, true);
    p.fc2_w = make_linear_w(config.num_classes, config.fc1_out, seed, ordinal);
    p.fc2_b = Tensor::zeros({config.num_classes}, true);
    return p;
}

Tensor model_forward(LevelOneParams& p, const Tensor& images, const Tensor& proprio,
                     Mode mode) {
    if (images.rank() != 4 || images.size(1) != 3 || images.size(2) != p.config.image_h ||
        images.size(3) != p.config.image_w) {
        std::ostringstream os;
        os << "forward: images must be N x 3 x " << p.config.image_h << " x "
           << p.config.image_w;
        throw DimensionError(os.str());
    }
    if (proprio.rank() != 2 || proprio.size(1) != p.config.proprio_input_dim) {
        std::ostringstream os;
        os << "forward: proprio must be N x " << p.config.proprio_input_dim << ", got ";
        os << (proprio.rank() == 2 ? std::to_string(proprio.size(1)) : "wrong rank");
        throw DimensionError(os.str());
    }
    if (images.size(0) != proprio.size(0)) {
        throw DimensionError("forward: image batch and proprio batch differ");
    }

    Tensor vision = backbone_forward(p, images, mode);           // N x 19
    Tensor prop = relu(linear(proprio, p.fc0_w, p.fc0_b));       // N x 76
    Tensor fused = concat(vision, prop);                         // N x 95
    Tensor hidden = relu(linear(fused, p.fc1_w, p.fc1_b));       // N x 32
    return linear(hidden, p.fc2_w, p.fc2_b);                     // N x 2
}

FeatureSplit feature_split(LevelOneParams& p, const Tensor& images, const Tensor& proprio) {
    FeatureSplit fs;
    fs.vision = backbone_forward(p, images, Mode::Eval);
    fs.proprio = relu(linear(proprio, p.fc0_w, p.fc0_b));
    return fs;
}

std::vector<Prediction> predictions_from_logits(const Tensor& logits) {
    const std::vector<float> probs = softmax_rows(logits);
    const int64_t N = logits.size(0), K = logits.size(1);
    std::vector<Prediction> out(static_cast<size_t>(N));
    for (int64_t n = 0; n < N; ++n) {
        int best = 0;
        for (int k = 1; k < K; ++k) {
            // Ties break toward label 0.
            if (logits.data()[n * K + k] > logits.data()[n * K + best]) best = k;
        }
        out[static_cast<size_t>(n)].label = best;
        out[static_cast<size_t>(n)].confidence =
            probs[static_cast<size_t>(n * K + best)];
    }
    return out;
}

std::vector<Prediction> predict(LevelOneParams& p, const Tensor& images,
                                const Tensor& proprio) {
    Tensor logits = model_forward(p, images, proprio, Mode::Eval);
    return predictions_from_logits(logits);
}

void save_checkpoint(const std::filesystem::path& path, ModelBundle& bundle) {
    auto tensors = bundle.params.named_tensors();
    json header;
    header["magic_note"] = "level-1 self/environment fusion checkpoint";
    header["model"] = model_config_to_json(bundle.params.config);
    header["proprio_norm"] = {{"mean", bundle.norm_mean}, {"std", bundle.norm_std}};
    header["label_map"] = {{"environment", 0}, {"self", 1}};
    header["meta"] = bundle.meta;
    json order = json::array();
    for (const auto& [name, t] : tensors) order.push_back(name);
    header["tensor_order"] = order;

    std::ostringstream payload;
    const std::string header_text = header.dump();
    write_u32(payload, static_cast<uint32_t>(header_text.size()));
    payload.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (auto& [name, t] : tensors) write_tensor(payload, t);

    const std::string body = payload.str();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    os.write("L1SA0001", 8);
    os.write(body.data(), static_cast<std::streamsize>(body.size()));
    write_u32(os, crc32(body.data(), body.size()));
}

ModelBundle load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint " + path.string());
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, "L1SA0001", 8) != 0) {
        throw DataError("bad checkpoint magic in " + path.string());
    }
    std::ostringstream rest;
    rest << is.rdbuf();
    const std::string tail = rest.str();
    if (tail.size() < 8) throw DataError("truncated checkpoint " + path.string());

    const std::string body = tail.substr(0, tail.size() - 4);
    const uint32_t stored_crc =
        static_cast<uint8_t>(tail[tail.size() - 4]) |
        (static_cast<uint32_t>(static_cast<uint8_t>(tail[tail.size() - 3])) << 8) |
        (static_cast<uint32_t>(static_cast<uint8_t>(tail[tail.size() - 2])) << 16) |
        (static_cast<uint32_t>(static_cast<uint8_t>(tail[tail.size() - 1])) << 24);
    if (crc32(body.data(), body.size()) != stored_crc) {
        throw DataError("checkpoint checksum mismatch in " + path.string());
    }

    std::istringstream bs(body);
    const uint32_t header_len = read_u32(bs);
    std::string header_text(header_len, '\0');
    bs.read(header_text.data(), header_len);
    if (!bs) throw DataError("truncated checkpoint header in " + path.string());
    json header;
    try {
        header = json::parse(header_text);
    } catch (const json::exception& e) {
        throw DataError(std::string("malformed checkpoint header: ") + e.what());
    }

    ModelBundle bundle;
    bundle.params = init_model(model_config_from_json(header.at("model")));
    bundle.norm_mean = header.at("proprio_norm").at("mean").get<std::vector<float>>();
    bundle.norm_std = header.at("proprio_norm").at("std").get<std::vector<float>>();
    bundle.meta = header.value("meta", json::object());

    auto tensors = bundle.params.named_tensors();
    const auto& order = header.at("tensor_order");
    if (order.size() != tensors.size()) {
        throw DataError("checkpoint tensor count does not match this configuration");
    }
    for (size_t i = 0; i < tensors.size(); ++i) {
        if (order[i].get<std::string>() != tensors[i].first) {
            throw DataError("checkpoint tensor order mismatch at '" +
                            order[i].get<std::string>() + "'");
        }
        Tensor loaded = read_tensor(bs);
        if (loaded.shape() != tensors[i].second.shape()) {
            throw DataError("checkpoint tensor shape mismatch at '" + tensors[i].first +
                            "'");
        }
        std::memcpy(tensors[i].second.data().data(), loaded.data().data(),
                    static_cast<size_t>(loaded.numel()) * sizeof(float));
    }
    return bundle;
}

}  // namespace selfsense
