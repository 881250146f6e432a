#include "selfsense/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <map>
#include <sstream>

#include "selfsense/io_util.hpp"

namespace selfsense {

using nlohmann::json;

void TrainConfig::validate() const {
    if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (!(split_fraction > 0.0 && split_fraction < 1.0)) {
        throw ConfigError("train: split_fraction must be in (0,1)");
    }
    if (!(learning_rate >= 0.0f)) throw ConfigError("train: learning_rate must be >= 0");
    if (augment != "none" && augment != "hflip") {
        throw ConfigError("train: augment must be 'none' or 'hflip'");
    }
    if (early_stop && early_stop_patience < 1) {
        throw ConfigError("train: early_stop_patience must be >= 1");
    }
}

json TrainConfig::to_json() const {
    json j;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["learning_rate"] = learning_rate;
    j["optimizer"] = optimizer_kind_name(optimizer);
    j["momentum"] = momentum;
    j["weight_decay"] = weight_decay;
    j["augment"] = augment;
    j["split_fraction"] = split_fraction;
    j["seed"] = hex64(seed);
    j["deterministic"] = deterministic;
    j["early_stop"] = early_stop;
    j["early_stop_patience"] = early_stop_patience;
    return j;
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig c;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        if (k != "epochs" && k != "batch_size" && k != "learning_rate" && k != "optimizer" &&
            k != "momentum" && k != "weight_decay" && k != "augment" &&
            k != "split_fraction" && k != "seed" && k != "deterministic" &&
            k != "early_stop" && k != "early_stop_patience") {
            throw ConfigError("train: unknown key '" + k + "'");
        }
    }
    if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
    if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
    if (j.contains("learning_rate")) c.learning_rate = j["learning_rate"].get<float>();
    if (j.contains("optimizer")) {
        c.optimizer = optimizer_kind_from_string(j["optimizer"].get<std::string>());
    }
    if (j.contains("momentum")) c.momentum = j["momentum"].get<float>();
    if (j.contains("weight_decay")) c.weight_decay = j["weight_decay"].get<float>();
    if (j.contains("augment")) c.augment = j["augment"].get<std::string>();
    if (j.contains("split_fraction")) c.split_fraction = j["split_fraction"].get<double>();
    if (j.contains("seed")) {
        c.seed = std::stoull(j["seed"].get<std::string>(), nullptr, 16);
    }
    if (j.contains("deterministic")) c.deterministic = j["deterministic"].get<bool>();
    if (j.contains("early_stop")) c.early_stop = j["early_stop"].get<bool>();
    if (j.contains("early_stop_patience")) {
        c.early_stop_patience = j["early_stop_patience"].get<int>();
    }
    c.validate();
    return c;
}

int64_t ConfusionMatrix::total() const {
    return counts[0][0] + counts[0][1] + counts[1][0] + counts[1][1];
}

int64_t ConfusionMatrix::correct() const { return counts[0][0] + counts[1][1]; }

double ConfusionMatrix::accuracy() const {
    const int64_t t = total();
    return t == 0 ? 0.0 : static_cast<double>(correct()) / static_cast<double>(t);
}

double ConfusionMatrix::true_rate(int label) const {
    const auto l = static_cast<size_t>(label);
    const int64_t row = counts[l][0] + counts[l][1];
    return row == 0 ? 0.0 : static_cast<double>(counts[l][l]) / static_cast<double>(row);
}

std::string ConfusionMatrix::to_csv() const {
    std::ostringstream os;
    os << "true,predicted,count\n";
    for (int t = 0; t < 2; ++t) {
        for (int pr = 0; pr < 2; ++pr) {
            os << t << "," << pr << ","
               << counts[static_cast<size_t>(t)][static_cast<size_t>(pr)] << "\n";
        }
    }
    return os.str();
}

json ConfusionMatrix::to_json() const {
    json j;
    j["counts"] = {{counts[0][0], counts[0][1]}, {counts[1][0], counts[1][1]}};
    j["total"] = total();
    j["accuracy"] = accuracy();
    j["environment_rate"] = true_rate(0);
    j["self_rate"] = true_rate(1);
    return j;
}

json TrainReport::to_json() const {
    json j;
    json es = json::array();
    for (const auto& e : epochs) {
        es.push_back({{"loss", e.mean_loss}, {"val_accuracy", e.val_accuracy}});
    }
    j["epochs"] = es;
    j["best_epoch"] = best_epoch;
    j["best_val_accuracy"] = best_val_accuracy;
    j["steps"] = steps;
    j["parameter_count"] = parameter_count;
    j["wall_seconds"] = wall_seconds;
    j["config"] = config_echo;
    return j;
}

SplitResult split_train_val(const DatasetView& pool, double fraction, uint64_t seed) {
    if (pool.size() < 5) throw ValidationError("split: dataset must have at least 5 samples");
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw ValidationError("split: fraction must be in (0,1)");
    }

    // Strata keyed by (scene kind, label), in deterministic key order.
    std::map<std::pair<int, int>, std::vector<int>> strata;
    for (size_t i = 0; i < pool.size(); ++i) {
        const auto kind = static_cast<int>(pool[i].image_ds->scene.kind);
        strata[{kind, pool[i].label}].push_back(static_cast<int>(i));
    }
    int labels_seen[2] = {0, 0};
    for (const auto& [key, idx] : strata) labels_seen[key.second] += static_cast<int>(idx.size());
    if (labels_seen[0] == 0 || labels_seen[1] == 0) {
        throw ValidationError("split: stratification requires both classes present");
    }

    SplitResult out;
    uint64_t stratum_tag = 0;
    for (auto& [key, idx] : strata) {
        Rng rng(mix64(seed, 0x59173ull, stratum_tag++));
        for (size_t i = idx.size(); i > 1; --i) {
            const auto j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1));
            std::swap(idx[i - 1], idx[j]);
        }
        const auto cut = static_cast<size_t>(
            std::llround(fraction * static_cast<double>(idx.size())));
        for (size_t i = 0; i < idx.size(); ++i) {
            (i < cut ? out.train : out.val).push_back(pool[static_cast<size_t>(idx[i])]);
        }
    }
    if (out.train.empty() || out.val.empty()) {
        throw ValidationError("split: fraction leaves an empty side");
    }
    return out;
}

Batch make_batch(const DatasetView& view, const std::vector<int>& order, size_t begin,
                 size_t end, const ProprioNorm& norm) {
    const auto n = static_cast<int64_t>(end - begin);
    const SceneDataset* first = view[static_cast<size_t>(order[begin])].image_ds;
    const int64_t h = first->scene.image_h, w = first->scene.image_w;
    const auto dim = static_cast<int64_t>(first->proprio_elems());
    if (norm.mean.size() != static_cast<size_t>(dim)) {
        throw DimensionError("make_batch: normalization dims do not match proprio dims");
    }

    Batch b;
    b.images = Tensor::zeros({n, 3, h, w});
    b.proprio = Tensor::zeros({n, dim});
    b.labels.resize(static_cast<size_t>(n));
    float* ip = b.images.data().data();
    float* pp = b.proprio.data().data();
    const size_t img_elems = first->image_elems();
    for (int64_t i = 0; i < n; ++i) {
        const SampleRef& ref = view[static_cast<size_t>(order[begin + static_cast<size_t>(i)])];
        std::memcpy(ip + static_cast<size_t>(i) * img_elems,
                    ref.image_ds->image_at(ref.image_index).data(),
                    img_elems * sizeof(float));
        const auto src = ref.proprio_ds->proprio_at(ref.proprio_index);
        for (int64_t d = 0; d < dim; ++d) {
            pp[i * dim + d] = (src[static_cast<size_t>(d)] - norm.mean[static_cast<size_t>(d)]) /
                              norm.stdev[static_cast<size_t>(d)];
        }
        b.labels[static_cast<size_t>(i)] = ref.label;
    }
    return b;
}

namespace {

void hflip_image(float* img, int64_t h, int64_t w) {
    for (int64_t c = 0; c < 3; ++c) {
        float* plane = img + c * h * w;
        for (int64_t i = 0; i < h; ++i) {
            float* row = plane + i * w;
            for (int64_t j = 0; j < w / 2; ++j) std::swap(row[j], row[w - 1 - j]);
        }
    }
}

std::vector<std::vector<float>> snapshot(LevelOneParams& params) {
    std::vector<std::vector<float>> snap;
    for (auto& [name, t] : params.named_tensors()) {
        snap.emplace_back(t.data().begin(), t.data().end());
    }
    return snap;
}

void restore(LevelOneParams& params, const std::vector<std::vector<float>>& snap) {
    auto tensors = params.named_tensors();
    for (size_t i = 0; i < tensors.size(); ++i) {
        std::copy(snap[i].begin(), snap[i].end(), tensors[i].second.data().begin());
    }
}

}  // namespace

TrainReport train_model(LevelOneParams& params, const DatasetView& train_view,
                        const DatasetView& val_view, const TrainConfig& config,
                        const ProprioNorm& norm) {
    config.validate();
    if (train_view.empty() || val_view.empty()) {
        throw ValidationError("train: empty train or validation set");
    }
    const auto t0 = std::chrono::steady_clock::now();

    OptimizerConfig oc;
    oc.kind = config.optimizer;
    oc.learning_rate = config.learning_rate;
    oc.momentum = config.momentum;
    oc.weight_decay = config.weight_decay;
    Optimizer opt(params.parameters(), oc);

    TrainReport report;
    report.parameter_count = params.parameter_count();
    report.config_echo = config.to_json();

    std::vector<int> order(train_view.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    std::vector<std::vector<float>> best;
    int epochs_since_best = 0;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        Rng shuffle_rng(mix64(config.seed, 0xe90c4ull, static_cast<uint64_t>(epoch)));
        for (size_t i = order.size(); i > 1; --i) {
            const auto j =
                static_cast<size_t>(shuffle_rng.uniform_int(0, static_cast<int64_t>(i) - 1));
            std::swap(order[i - 1], order[j]);
        }

        double loss_sum = 0.0;
        int64_t seen = 0;
        const auto bs = static_cast<size_t>(config.batch_size);
        for (size_t begin = 0; begin < order.size(); begin += bs) {
            const size_t end = std::min(order.size(), begin + bs);
            Batch batch = make_batch(train_view, order, begin, end, norm);
            if (config.augment == "hflip") {
                const int64_t h = batch.images.size(2), w = batch.images.size(3);
                for (int64_t i = 0; i < batch.images.size(0); ++i) {
                    if (shuffle_rng.bernoulli(0.5)) {
                        hflip_image(batch.images.data().data() + i * 3 * h * w, h, w);
                    }
                }
            }

            Tape tape;
            Tensor logits = model_forward(params, batch.images, batch.proprio, Mode::Train);
            Tensor loss = softmax_cross_entropy(logits, batch.labels);
            const float loss_v = loss.item();
            if (!std::isfinite(loss_v)) {
                std::ostringstream os;
                os << "train: loss diverged (non-finite) at step " << report.steps
                   << " (epoch " << epoch << ")";
                throw NumericError(os.str());
            }
            opt.zero_grad();
            tape.backward(loss);
            opt.step();
            ++report.steps;
            loss_sum += static_cast<double>(loss_v) * static_cast<double>(end - begin);
            seen += static_cast<int64_t>(end - begin);
        }

        EpochRecord rec;
        rec.mean_loss = loss_sum / static_cast<double>(seen);
        rec.val_accuracy = evaluate_model(params, val_view, norm).accuracy();
        report.epochs.push_back(rec);

        if (report.best_epoch < 0 || rec.val_accuracy > report.best_val_accuracy) {
            report.best_epoch = epoch;
            report.best_val_accuracy = rec.val_accuracy;
            best = snapshot(params);
            epochs_since_best = 0;
        } else if (config.early_stop && ++epochs_since_best >= config.early_stop_patience) {
            break;
        }
    }

    restore(params, best);
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

ConfusionMatrix evaluate_model(LevelOneParams& params, const DatasetView& view,
                               const ProprioNorm& norm) {
    if (view.empty()) throw ValidationError("evaluate: empty dataset");
    ConfusionMatrix cm;
    std::vector<int> order(view.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    constexpr size_t kEvalBatch = 256;
    for (size_t begin = 0; begin < view.size(); begin += kEvalBatch) {
        const size_t end = std::min(view.size(), begin + kEvalBatch);
        Batch batch = make_batch(view, order, begin, end, norm);
        const auto preds = predict(params, batch.images, batch.proprio);
        for (size_t i = 0; i < preds.size(); ++i) {
            cm.add(batch.labels[i], preds[i].label);
        }
    }
    return cm;
}

std::string AblationReport::to_csv() const {
    std::ostringstream os;
    os << "case,n,accuracy\n";
    for (const auto& c : cases) {
        os << c.case_id << "," << c.count << "," << c.accuracy() << "\n";
    }
    return os.str();
}

json AblationReport::to_json() const {
    json j;
    j["group"] = group;
    json cs = json::array();
    for (const auto& c : cases) {
        cs.push_back({{"case", c.case_id},
                      {"n", c.count},
                      {"correct", c.correct},
                      {"accuracy", c.accuracy()}});
    }
    j["cases"] = cs;
    j["case4_most_misclassified"] = case4_most_misclassified;
    return j;
}

AblationReport run_confounding_ablation(LevelOneParams& params, const SceneDataset& test,
                                        const ProprioNorm& norm, uint64_t seed, int group) {
    const ConfoundingCases cases = make_confounding_cases(test, seed);
    AblationReport report;
    report.group = group;
    const DatasetView* views[4] = {&cases.case1, &cases.case2, &cases.case3, &cases.case4};
    for (int ci = 0; ci < 4; ++ci) {
        const ConfusionMatrix cm = evaluate_model(params, *views[ci], norm);
        report.cases[static_cast<size_t>(ci)] =
            CaseResult{ci + 1, cm.total(), cm.correct()};
    }
    double worst = 2.0;
    int worst_case = 0;
    for (const auto& c : report.cases) {
        if (c.accuracy() < worst) {
            worst = c.accuracy();
            worst_case = c.case_id;
        }
    }
    report.case4_most_misclassified = worst_case == 4;
    return report;
}

}  // namespace selfsense
