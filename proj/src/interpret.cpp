#include "selfsense/interpret.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "selfsense/io_util.hpp"

namespace selfsense {

using nlohmann::json;

json SaliencyMap::sidecar_json() const {
    json j;
    j["sample_id"] = sample_id;
    j["predicted_label"] = predicted_label;
    j["raw_min"] = raw_min;
    j["raw_max"] = raw_max;
    j["all_zero"] = all_zero;
    return j;
}

SaliencyMap compute_saliency(LevelOneParams& params, std::span<const float> image_chw,
                             std::span<const float> proprio_raw, const ProprioNorm& norm,
                             uint64_t sample_id) {
    const int h = params.config.image_h, w = params.config.image_w;
    const size_t plane = static_cast<size_t>(h) * static_cast<size_t>(w);
    if (image_chw.size() != 3 * plane) {
        throw DimensionError("saliency: image size does not match the model config");
    }
    if (proprio_raw.size() != norm.mean.size()) {
        throw DimensionError("saliency: proprio size does not match normalization stats");
    }

    Tensor image = Tensor::from_data({1, 3, h, w},
                                     std::vector<float>(image_chw.begin(), image_chw.end()),
                                     /*requires_grad=*/true);
    std::vector<float> pn(proprio_raw.size());
    for (size_t d = 0; d < pn.size(); ++d) {
        pn[d] = (proprio_raw[d] - norm.mean[d]) / norm.stdev[d];
    }
    Tensor proprio =
        Tensor::from_data({1, static_cast<int64_t>(pn.size())}, std::move(pn));

    SaliencyMap map;
    map.h = h;
    map.w = w;
    map.sample_id = sample_id;
    {
        Tape tape;
        Tensor logits = model_forward(params, image, proprio, Mode::Eval);
        const auto preds = predictions_from_logits(logits);
        map.predicted_label = preds[0].label;
        Tensor picked = select(logits, map.predicted_label);
        tape.backward(picked);
    }

    const auto g = image.grad();
    map.values.resize(plane);
    for (size_t i = 0; i < plane; ++i) {
        map.values[i] = std::max({std::fabs(g[i]), std::fabs(g[plane + i]),
                                  std::fabs(g[2 * plane + i])});
    }
    float mn = map.values[0], mx = map.values[0];
    for (float v : map.values) {
        mn = std::min(mn, v);
        mx = std::max(mx, v);
    }
    map.raw_min = mn;
    map.raw_max = mx;
    if (mx == 0.0f) {
        map.all_zero = true;  // no gradient path through the vision branch
        return map;
    }
    if (mx == mn) {
        std::fill(map.values.begin(), map.values.end(), 1.0f);
        return map;
    }
    const float inv = 1.0f / (mx - mn);
    for (float& v : map.values) v = (v - mn) * inv;
    return map;
}

Tensor layer_weights(LevelOneParams& params, const std::string& layer) {
    if (layer == "fc2") return params.fc2_w;
    if (layer == "fc1") return params.fc1_w;
    if (layer == "fc0") return params.fc0_w;
    if (layer == "vision_proj") return params.vision_w;
    throw ConfigError("unknown layer '" + layer + "' (fc2 | fc1 | fc0 | vision_proj)");
}

json MIReport::to_json() const {
    json j;
    j["bins"] = bins;
    j["layer"] = layer;
    j["model_a"] = model_a;
    j["model_b"] = model_b;
    j["h_a_bits"] = h_a;
    j["h_b_bits"] = h_b;
    j["mi_bits"] = mi;
    return j;
}

namespace {

int bin_of(float v, float mn, float mx, int bins) {
    const int idx = static_cast<int>((v - mn) * static_cast<float>(bins) / (mx - mn));
    return std::min(bins - 1, std::max(0, idx));
}

}  // namespace

MIReport mutual_information_vectors(std::span<const float> a, std::span<const float> b,
                                    int bins) {
    if (a.size() != b.size()) {
        throw DimensionError("mutual information: vectors differ in length");
    }
    if (a.empty()) throw DimensionError("mutual information: empty vectors");
    if (bins < 2) throw ValidationError("mutual information: need at least 2 bins");

    const auto [amn_it, amx_it] = std::minmax_element(a.begin(), a.end());
    const auto [bmn_it, bmx_it] = std::minmax_element(b.begin(), b.end());
    const float amn = *amn_it, amx = *amx_it, bmn = *bmn_it, bmx = *bmx_it;
    if (amx == amn || bmx == bmn) {
        throw DataError("mutual information: constant weight vector has a degenerate "
                        "range");
    }

    MIReport r;
    r.bins = bins;
    r.joint_counts.assign(static_cast<size_t>(bins) * static_cast<size_t>(bins), 0);
    for (size_t i = 0; i < a.size(); ++i) {
        const int ia = bin_of(a[i], amn, amx, bins);
        const int ib = bin_of(b[i], bmn, bmx, bins);
        r.joint_counts[static_cast<size_t>(ia) * static_cast<size_t>(bins) +
                       static_cast<size_t>(ib)]++;
    }

    const double n = static_cast<double>(a.size());
    r.joint.resize(r.joint_counts.size());
    for (size_t i = 0; i < r.joint.size(); ++i) {
        r.joint[i] = static_cast<double>(r.joint_counts[i]) / n;
    }

    std::vector<double> pa(static_cast<size_t>(bins), 0.0), pb(static_cast<size_t>(bins), 0.0);
    for (int i = 0; i < bins; ++i) {
        for (int jj = 0; jj < bins; ++jj) {
            const double p = r.joint[static_cast<size_t>(i) * static_cast<size_t>(bins) +
                                     static_cast<size_t>(jj)];
            pa[static_cast<size_t>(i)] += p;
            pb[static_cast<size_t>(jj)] += p;
        }
    }
    for (int i = 0; i < bins; ++i) {
        if (pa[static_cast<size_t>(i)] > 0.0) {
            r.h_a -= pa[static_cast<size_t>(i)] * std::log2(pa[static_cast<size_t>(i)]);
        }
        if (pb[static_cast<size_t>(i)] > 0.0) {
            r.h_b -= pb[static_cast<size_t>(i)] * std::log2(pb[static_cast<size_t>(i)]);
        }
    }
    // Log-difference form: for identical operands the diagonal terms reduce
    // to -p*log2(p) with the same operation sequence as the entropy above,
    // making MI(X,X) == H(X) bitwise.
    for (int i = 0; i < bins; ++i) {
        for (int jj = 0; jj < bins; ++jj) {
            const double p = r.joint[static_cast<size_t>(i) * static_cast<size_t>(bins) +
                                     static_cast<size_t>(jj)];
            if (p > 0.0) {
                r.mi += p * (std::log2(p) - std::log2(pa[static_cast<size_t>(i)]) -
                             std::log2(pb[static_cast<size_t>(jj)]));
            }
        }
    }
    return r;
}

MIReport weight_mutual_information(LevelOneParams& a, LevelOneParams& b,
                                   const std::string& layer, int bins) {
    Tensor wa = layer_weights(a, layer);
    Tensor wb = layer_weights(b, layer);
    if (wa.shape() != wb.shape()) {
        throw DimensionError("mutual information: layer '" + layer +
                             "' has different shapes in the two models");
    }
    MIReport r = mutual_information_vectors(wa.data(), wb.data(), bins);
    r.layer = layer;
    return r;
}

std::vector<float> joint_histogram_render(const MIReport& report) {
    int64_t cmax = 0;
    for (int64_t c : report.joint_counts) cmax = std::max(cmax, c);
    std::vector<float> img(report.joint_counts.size(), 0.0f);
    if (cmax == 0) return img;
    const double denom = std::log1p(static_cast<double>(cmax));
    for (size_t i = 0; i < img.size(); ++i) {
        img[i] = static_cast<float>(
            std::log1p(static_cast<double>(report.joint_counts[i])) / denom);
    }
    return img;
}

std::string MIMatrix::to_csv() const {
    std::ostringstream os;
    os << "model_a,model_b,mi_bits,h_a,h_b\n";
    for (const auto& r : pairs) {
        os << r.model_a << "," << r.model_b << "," << r.mi << "," << r.h_a << "," << r.h_b
           << "\n";
    }
    return os.str();
}

MIMatrix compare_group_models(std::vector<ModelBundle*> bundles,
                              const std::vector<std::string>& names,
                              const std::string& layer, int bins) {
    if (bundles.size() < 2 || bundles.size() != names.size()) {
        throw ValidationError("compare models: need 2..4 named checkpoints");
    }
    const auto ref = model_config_to_json(bundles[0]->params.config);
    for (size_t i = 1; i < bundles.size(); ++i) {
        json other = model_config_to_json(bundles[i]->params.config);
        other["seed"] = ref["seed"];  // seeds may differ; shapes may not
        json ref_copy = ref;
        ref_copy["seed"] = ref["seed"];
        if (other != ref_copy) {
            throw ValidationError("compare models: checkpoint configs are incompatible");
        }
    }

    MIMatrix m;
    for (size_t i = 0; i < bundles.size(); ++i) {
        for (size_t j = i + 1; j < bundles.size(); ++j) {
            MIReport r = weight_mutual_information(bundles[i]->params, bundles[j]->params,
                                                   layer, bins);
            r.model_a = names[i];
            r.model_b = names[j];
            m.pairs.push_back(std::move(r));
        }
    }
    m.min_mi = m.pairs[0].mi;
    m.max_mi = m.pairs[0].mi;
    double sum = 0.0;
    for (const auto& r : m.pairs) {
        m.min_mi = std::min(m.min_mi, r.mi);
        m.max_mi = std::max(m.max_mi, r.mi);
        sum += r.mi;
    }
    m.mean_mi = sum / static_cast<double>(m.pairs.size());
    return m;
}

EnrichmentStats saliency_arm_enrichment(LevelOneParams& params, const ProprioNorm& norm,
                                        const SceneDataset& test, int max_samples) {
    EnrichmentStats st;
    double mass_sum = 0.0, area_sum = 0.0;
    for (int i = 0; i < test.count && st.samples < max_samples; ++i) {
        if (test.labels[static_cast<size_t>(i)] != kLabelSelf) continue;
        // Masks are not stored in the packed dataset; replay the sample's
        // stream to recover them.
        GeneratedSample gs = synthesize_sample(test.scene, test.robot, test.seed, i);
        SaliencyMap map = compute_saliency(params, test.image_at(i), test.proprio_at(i),
                                           norm, test.sample_ids[static_cast<size_t>(i)]);
        if (map.all_zero) {
            ++st.samples;
            area_sum += 0.0;
            continue;
        }
        double total = 0.0, inside = 0.0;
        int64_t mask_pixels = 0;
        for (size_t p = 0; p < map.values.size(); ++p) {
            total += map.values[p];
            if (gs.arm_mask[p]) {
                inside += map.values[p];
                ++mask_pixels;
            }
        }
        if (total <= 0.0) continue;
        mass_sum += inside / total;
        area_sum += static_cast<double>(mask_pixels) / static_cast<double>(map.values.size());
        ++st.samples;
    }
    if (st.samples == 0) throw DataError("enrichment: no self samples in the test scene");
    st.mean_mass_fraction = mass_sum / static_cast<double>(st.samples);
    st.mean_area_fraction = area_sum / static_cast<double>(st.samples);
    st.enrichment = st.mean_area_fraction > 0.0
                        ? st.mean_mass_fraction / st.mean_area_fraction
                        : 0.0;
    return st;
}

}  // namespace selfsense
