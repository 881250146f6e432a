#include "selfsense/dataset.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "selfsense/io_util.hpp"
#include "selfsense/parallel.hpp"

namespace selfsense {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

json color_to_json(const std::array<float, 3>& c) { return json::array({c[0], c[1], c[2]}); }

std::array<float, 3> color_from_json(const json& j) {
    if (!j.is_array() || j.size() != 3) throw ConfigError("color must be a 3-array");
    return {j[0].get<float>(), j[1].get<float>(), j[2].get<float>()};
}

json palette_to_json(const std::vector<std::array<float, 3>>& p) {
    json a = json::array();
    for (const auto& c : p) a.push_back(color_to_json(c));
    return a;
}

std::vector<std::array<float, 3>> palette_from_json(const json& j) {
    std::vector<std::array<float, 3>> p;
    for (const auto& c : j) p.push_back(color_from_json(c));
    return p;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const char* context) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed) {
            if (it.key() == k) {
                ok = true;
                break;
            }
        }
        if (!ok) {
            throw ConfigError(std::string(context) + ": unknown key '" + it.key() + "'");
        }
    }
}

}  // namespace

uint64_t sample_stream_seed(uint64_t scene_seed, int index) {
    return mix64(scene_seed, 0x5a17ull, static_cast<uint64_t>(index));
}

uint64_t scene_seed_for(uint64_t root_seed, SceneKind kind) {
    return mix64(root_seed, 0x5ceeull, static_cast<uint64_t>(kind));
}

uint64_t make_sample_id(SceneKind kind, int index) {
    return (static_cast<uint64_t>(kind) << 32) | static_cast<uint64_t>(index);
}

GeneratedSample synthesize_sample(const SceneSpec& scene, const RobotSpec& robot,
                                  uint64_t scene_seed, int index) {
    GeneratedSample s;
    s.label = (index % 2 == 0) ? kLabelEnvironment : kLabelSelf;
    Rng rng(sample_stream_seed(scene_seed, index));

    const SampleLabel label =
        s.label == kLabelSelf ? SampleLabel::Self : SampleLabel::Environment;
    s.angles = sample_pose(robot, scene.image_h, scene.image_w, label, rng);

    // Previous pose: a waving arm takes a sizable step (occasionally pausing),
    // a parked arm only drifts.
    const int total = robot.total_joints();
    s.angles_prev.resize(static_cast<size_t>(total));
    float step_sigma = robot.park_vel_sigma;
    if (s.label == kLabelSelf && !rng.bernoulli(robot.pause_probability)) {
        step_sigma = robot.move_sigma;
    }
    for (int q = 0; q < total; ++q) {
        s.angles_prev[static_cast<size_t>(q)] =
            s.angles[static_cast<size_t>(q)] -
            static_cast<float>(rng.normal(0.0, step_sigma));
    }

    s.proprio = synthesize_proprio(s.angles, s.angles_prev, robot, rng);

    RenderResult render = render_scene(scene, robot, s.angles, rng);
    s.image = std::move(render.image);
    s.arm_mask = std::move(render.arm_mask);
    s.gripper_mask = std::move(render.gripper_mask);
    add_pixel_noise(s.image, scene.pixel_noise, rng);

    // Label/mask consistency is checked on every generated sample.
    int64_t coverage = 0;
    for (uint8_t v : s.arm_mask) coverage += v;
    const auto pixels = static_cast<int64_t>(s.arm_mask.size());
    if (s.label == kLabelSelf) {
        if (static_cast<double>(coverage) <
            kMinSelfCoverage * static_cast<double>(pixels)) {
            throw NumericError("generator invariant violated: self sample below minimum "
                               "arm coverage");
        }
    } else if (coverage != 0) {
        throw NumericError("generator invariant violated: environment sample has arm "
                           "pixels");
    }
    return s;
}

SceneDataset generate_scene_dataset(const SceneSpec& scene, const RobotSpec& robot,
                                    int count, uint64_t scene_seed) {
    scene.validate();
    robot.validate();
    if (count < 2) throw ValidationError("generate: need at least 2 samples per scene");
    if (count % 2 != 0) {
        throw ValidationError("generate: sample count must be even for exact class "
                              "balance");
    }

    SceneDataset ds;
    ds.scene = scene;
    ds.scene.seed = scene_seed;
    ds.robot = robot;
    ds.seed = scene_seed;
    ds.count = count;
    ds.images.resize(static_cast<size_t>(count) * ds.image_elems());
    ds.proprios.resize(static_cast<size_t>(count) * ds.proprio_elems());
    ds.labels.resize(static_cast<size_t>(count));
    ds.sample_ids.resize(static_cast<size_t>(count));

    // Per-sample streams make generation order irrelevant.
    parallel_chunks(count, 64, [&](int64_t, int64_t b, int64_t e) {
        for (int64_t i = b; i < e; ++i) {
            GeneratedSample s = synthesize_sample(scene, robot, scene_seed,
                                                  static_cast<int>(i));
            std::memcpy(ds.images.data() + static_cast<size_t>(i) * ds.image_elems(),
                        s.image.data(), ds.image_elems() * sizeof(float));
            std::memcpy(ds.proprios.data() + static_cast<size_t>(i) * ds.proprio_elems(),
                        s.proprio.data(), ds.proprio_elems() * sizeof(float));
            ds.labels[static_cast<size_t>(i)] = static_cast<uint8_t>(s.label);
            ds.sample_ids[static_cast<size_t>(i)] =
                make_sample_id(scene.kind, static_cast<int>(i));
        }
    });
    return ds;
}

json robot_to_json(const RobotSpec& r) {
    json j;
    j["arms"] = r.arms;
    j["joints_per_arm"] = r.joints_per_arm;
    j["link_lengths"] = r.link_lengths;
    j["base_positions"] = json::array({json::array({r.base_positions[0].x, r.base_positions[0].y}),
                                       json::array({r.base_positions[1].x, r.base_positions[1].y})});
    j["arm_color"] = color_to_json(r.arm_color);
    j["gripper_radius"] = r.gripper_radius;
    j["arm_width"] = r.arm_width;
    json limits = json::array();
    for (const auto& l : r.joint_limits) limits.push_back(json::array({l[0], l[1]}));
    j["joint_limits"] = limits;
    j["dt"] = r.dt;
    j["gravity_scale"] = r.gravity_scale;
    j["torque_noise"] = r.torque_noise;
    j["move_sigma"] = r.move_sigma;
    j["pause_probability"] = r.pause_probability;
    j["park_pose_sigma"] = r.park_pose_sigma;
    j["park_vel_sigma"] = r.park_vel_sigma;
    return j;
}

RobotSpec robot_from_json(const json& j) {
    check_keys(j,
               {"arms", "joints_per_arm", "link_lengths", "base_positions", "arm_color",
                "gripper_radius", "arm_width", "joint_limits", "dt", "gravity_scale",
                "torque_noise", "move_sigma", "pause_probability", "park_pose_sigma",
                "park_vel_sigma"},
               "robot");
    RobotSpec r;
    if (j.contains("arms")) r.arms = j["arms"].get<int>();
    if (j.contains("joints_per_arm")) r.joints_per_arm = j["joints_per_arm"].get<int>();
    if (j.contains("link_lengths")) {
        r.link_lengths = j["link_lengths"].get<std::vector<float>>();
    }
    if (j.contains("base_positions")) {
        const auto& b = j["base_positions"];
        if (!b.is_array() || b.size() != 2) {
            throw ConfigError("robot: base_positions must be two points");
        }
        for (size_t a = 0; a < 2; ++a) {
            r.base_positions[a] = Vec2{b[a][0].get<float>(), b[a][1].get<float>()};
        }
    }
    if (j.contains("arm_color")) r.arm_color = color_from_json(j["arm_color"]);
    if (j.contains("gripper_radius")) r.gripper_radius = j["gripper_radius"].get<float>();
    if (j.contains("arm_width")) r.arm_width = j["arm_width"].get<float>();
    if (j.contains("joint_limits")) {
        r.joint_limits.clear();
        for (const auto& l : j["joint_limits"]) {
            r.joint_limits.push_back({l[0].get<float>(), l[1].get<float>()});
        }
    }
    if (j.contains("dt")) r.dt = j["dt"].get<float>();
    if (j.contains("gravity_scale")) r.gravity_scale = j["gravity_scale"].get<float>();
    if (j.contains("torque_noise")) r.torque_noise = j["torque_noise"].get<float>();
    if (j.contains("move_sigma")) r.move_sigma = j["move_sigma"].get<float>();
    if (j.contains("pause_probability")) {
        r.pause_probability = j["pause_probability"].get<float>();
    }
    if (j.contains("park_pose_sigma")) r.park_pose_sigma = j["park_pose_sigma"].get<float>();
    if (j.contains("park_vel_sigma")) r.park_vel_sigma = j["park_vel_sigma"].get<float>();
    r.validate();
    return r;
}

json scene_to_json(const SceneSpec& s) {
    json j;
    j["kind"] = scene_kind_name(s.kind);
    j["background_palette"] = palette_to_json(s.background_palette);
    j["distractor_palette"] = palette_to_json(s.distractor_palette);
    j["bright_palette"] = palette_to_json(s.bright_palette);
    j["distractor_count_range"] = json::array({s.distractor_min, s.distractor_max});
    j["shapes"] = json::array();
    if (s.rectangles) j["shapes"].push_back("rectangle");
    if (s.discs) j["shapes"].push_back("disc");
    j["bright_distractor_probability"] = s.bright_distractor_probability;
    j["arm_colored_probability"] = s.arm_colored_probability;
    j["image_size"] = json::array({s.image_h, s.image_w});
    j["pixel_noise"] = s.pixel_noise;
    j["seed"] = hex64(s.seed);
    return j;
}

SceneSpec scene_from_json(const json& j) {
    check_keys(j,
               {"kind", "background_palette", "distractor_palette", "bright_palette",
                "distractor_count_range", "shapes", "bright_distractor_probability",
                "arm_colored_probability", "image_size", "pixel_noise", "seed"},
               "scene");
    if (!j.contains("kind")) throw ConfigError("scene: missing 'kind'");
    SceneSpec s = default_scene(scene_kind_from_string(j["kind"].get<std::string>()));
    if (j.contains("background_palette")) {
        s.background_palette = palette_from_json(j["background_palette"]);
    }
    if (j.contains("distractor_palette")) {
        s.distractor_palette = palette_from_json(j["distractor_palette"]);
    }
    if (j.contains("bright_palette")) s.bright_palette = palette_from_json(j["bright_palette"]);
    if (j.contains("distractor_count_range")) {
        s.distractor_min = j["distractor_count_range"][0].get<int>();
        s.distractor_max = j["distractor_count_range"][1].get<int>();
    }
    if (j.contains("shapes")) {
        s.rectangles = false;
        s.discs = false;
        for (const auto& shape : j["shapes"]) {
            const std::string name = shape.get<std::string>();
            if (name == "rectangle") {
                s.rectangles = true;
            } else if (name == "disc") {
                s.discs = true;
            } else {
                throw ConfigError("scene: unknown shape '" + name + "'");
            }
        }
    }
    if (j.contains("bright_distractor_probability")) {
        s.bright_distractor_probability = j["bright_distractor_probability"].get<float>();
    }
    if (j.contains("arm_colored_probability")) {
        s.arm_colored_probability = j["arm_colored_probability"].get<float>();
    }
    if (j.contains("image_size")) {
        s.image_h = j["image_size"][0].get<int>();
        s.image_w = j["image_size"][1].get<int>();
    }
    if (j.contains("pixel_noise")) s.pixel_noise = j["pixel_noise"].get<float>();
    if (j.contains("seed")) {
        s.seed = std::stoull(j["seed"].get<std::string>(), nullptr, 16);
    }
    s.validate();
    return s;
}

uint64_t write_scene_dataset(const std::filesystem::path& dir, const SceneDataset& ds) {
    std::filesystem::create_directories(dir);
    const auto bin_path = dir / "samples.bin";
    {
        std::ofstream os(bin_path, std::ios::binary);
        if (!os) throw DataError("cannot open " + bin_path.string() + " for writing");
        for (int i = 0; i < ds.count; ++i) {
            os.write(reinterpret_cast<const char*>(ds.image_at(i).data()),
                     static_cast<std::streamsize>(ds.image_elems() * sizeof(float)));
            os.write(reinterpret_cast<const char*>(ds.proprio_at(i).data()),
                     static_cast<std::streamsize>(ds.proprio_elems() * sizeof(float)));
        }
    }
    const uint64_t data_hash = hash_file(bin_path);

    // Per-scene stats are informational; training uses the group pool stats.
    ProprioNorm stats = compute_proprio_norm({&ds});

    const size_t stride = (ds.image_elems() + ds.proprio_elems()) * sizeof(float);
    json j;
    j["format_version"] = kFormatVersion;
    j["kind"] = "scene-dataset";
    j["scene"] = scene_to_json(ds.scene);
    j["robot"] = robot_to_json(ds.robot);
    j["seed"] = hex64(ds.seed);
    j["count"] = ds.count;
    j["image"] = {{"channels", 3}, {"h", ds.scene.image_h}, {"w", ds.scene.image_w}};
    j["proprio_dim"] = ds.robot.proprio_dim();
    j["label_map"] = {{"environment", kLabelEnvironment}, {"self", kLabelSelf}};
    j["record_stride_bytes"] = stride;
    j["data_file"] = "samples.bin";
    j["data_hash"] = hex64(data_hash);
    j["proprio_stats"] = {{"mean", stats.mean}, {"std", stats.stdev}};
    json records = json::array();
    for (int i = 0; i < ds.count; ++i) {
        json r;
        r["sample_id"] = ds.sample_ids[static_cast<size_t>(i)];
        r["offset"] = static_cast<uint64_t>(i) * stride;
        r["label"] = ds.labels[static_cast<size_t>(i)];
        r["scene_kind"] = scene_kind_name(ds.scene.kind);
        r["case_tag"] = nullptr;
        r["seed"] = hex64(sample_stream_seed(ds.seed, i));
        records.push_back(std::move(r));
    }
    j["records"] = std::move(records);

    const std::string text = j.dump(2) + "\n";
    write_text_file(dir / "manifest.json", text);
    return fnv1a64(text.data(), text.size());
}

uint64_t scene_manifest_hash(const std::filesystem::path& dir) {
    const std::string text = read_text_file(dir / "manifest.json");
    return fnv1a64(text.data(), text.size());
}

SceneDataset load_scene_dataset(const std::filesystem::path& dir, bool verify_hash) {
    const auto manifest_path = dir / "manifest.json";
    json j;
    try {
        j = json::parse(read_text_file(manifest_path));
    } catch (const json::exception& e) {
        throw DataError("malformed manifest " + manifest_path.string() + ": " + e.what());
    }
    if (j.value("kind", "") != "scene-dataset") {
        throw DataError(manifest_path.string() + " is not a scene dataset manifest");
    }
    if (j.value("format_version", -1) != kFormatVersion) {
        throw DataError("unsupported dataset format version");
    }

    SceneDataset ds;
    ds.scene = scene_from_json(j.at("scene"));
    ds.robot = robot_from_json(j.at("robot"));
    ds.seed = std::stoull(j.at("seed").get<std::string>(), nullptr, 16);
    ds.count = j.at("count").get<int>();
    if (ds.count <= 0) throw DataError("dataset count must be positive");

    const auto bin_path = dir / j.at("data_file").get<std::string>();
    if (verify_hash) {
        const uint64_t h = hash_file(bin_path);
        if (hex64(h) != j.at("data_hash").get<std::string>()) {
            throw DataError("samples.bin hash mismatch for " + dir.string());
        }
    }

    const size_t stride = (ds.image_elems() + ds.proprio_elems()) * sizeof(float);
    if (j.at("record_stride_bytes").get<size_t>() != stride) {
        throw DataError("record stride disagrees with specs in " + manifest_path.string());
    }
    std::ifstream is(bin_path, std::ios::binary);
    if (!is) throw DataError("cannot open " + bin_path.string());
    is.seekg(0, std::ios::end);
    const auto file_size = static_cast<size_t>(is.tellg());
    if (file_size != stride * static_cast<size_t>(ds.count)) {
        throw DataError("samples.bin size mismatch in " + dir.string());
    }
    is.seekg(0);
    ds.images.resize(static_cast<size_t>(ds.count) * ds.image_elems());
    ds.proprios.resize(static_cast<size_t>(ds.count) * ds.proprio_elems());
    for (int i = 0; i < ds.count; ++i) {
        is.read(reinterpret_cast<char*>(ds.images.data() +
                                        static_cast<size_t>(i) * ds.image_elems()),
                static_cast<std::streamsize>(ds.image_elems() * sizeof(float)));
        is.read(reinterpret_cast<char*>(ds.proprios.data() +
                                        static_cast<size_t>(i) * ds.proprio_elems()),
                static_cast<std::streamsize>(ds.proprio_elems() * sizeof(float)));
    }
    if (!is) throw DataError("unexpected end of samples.bin in " + dir.string());

    const auto& records = j.at("records");
    if (records.size() != static_cast<size_t>(ds.count)) {
        throw DataError("record table count mismatch in " + manifest_path.string());
    }
    ds.labels.resize(static_cast<size_t>(ds.count));
    ds.sample_ids.resize(static_cast<size_t>(ds.count));
    uint64_t prev_offset = 0;
    for (int i = 0; i < ds.count; ++i) {
        const auto& r = records[static_cast<size_t>(i)];
        const uint64_t offset = r.at("offset").get<uint64_t>();
        if (i > 0 && offset <= prev_offset) {
            throw DataError("record offsets are not strictly increasing");
        }
        prev_offset = offset;
        ds.labels[static_cast<size_t>(i)] = r.at("label").get<uint8_t>();
        ds.sample_ids[static_cast<size_t>(i)] = r.at("sample_id").get<uint64_t>();
    }
    return ds;
}

GroupSpec group_spec(int group_id) {
    // Training scenes listed in each row's order; the held-out kind is the
    // unseen test scene.
    switch (group_id) {
        case 1:
            return {1,
                    {SceneKind::ClutterB, SceneKind::PlainB, SceneKind::PlainA},
                    SceneKind::ClutterA};
        case 2:
            return {2,
                    {SceneKind::ClutterA, SceneKind::ClutterB, SceneKind::PlainB},
                    SceneKind::PlainA};
        case 3:
            return {3,
                    {SceneKind::ClutterA, SceneKind::PlainB, SceneKind::PlainA},
                    SceneKind::ClutterB};
        case 4:
            return {4,
                    {SceneKind::ClutterA, SceneKind::ClutterB, SceneKind::PlainA},
                    SceneKind::PlainB};
        default:
            throw ValidationError("group id must be 1..4");
    }
}

DatasetView matched_view(const SceneDataset& ds) {
    DatasetView v;
    v.reserve(static_cast<size_t>(ds.count));
    for (int i = 0; i < ds.count; ++i) {
        v.push_back({&ds, i, &ds, i, static_cast<int>(ds.labels[static_cast<size_t>(i)])});
    }
    return v;
}

DatasetView concat_views(const std::vector<DatasetView>& views) {
    DatasetView out;
    size_t total = 0;
    for (const auto& v : views) total += v.size();
    out.reserve(total);
    for (const auto& v : views) out.insert(out.end(), v.begin(), v.end());
    return out;
}

ProprioNorm compute_proprio_norm(const std::vector<const SceneDataset*>& scenes) {
    if (scenes.empty()) throw ValidationError("compute_proprio_norm: no scenes");
    const size_t dim = scenes[0]->proprio_elems();
    std::vector<double> sum(dim, 0.0), sumsq(dim, 0.0);
    int64_t n = 0;
    for (const SceneDataset* ds : scenes) {
        if (ds->proprio_elems() != dim) {
            throw DimensionError("compute_proprio_norm: proprio dims differ across scenes");
        }
        for (int i = 0; i < ds->count; ++i) {
            const auto p = ds->proprio_at(i);
            for (size_t d = 0; d < dim; ++d) {
                sum[d] += p[d];
                sumsq[d] += static_cast<double>(p[d]) * static_cast<double>(p[d]);
            }
            ++n;
        }
    }
    ProprioNorm norm;
    norm.mean.resize(dim);
    norm.stdev.resize(dim);
    for (size_t d = 0; d < dim; ++d) {
        const double mu = sum[d] / static_cast<double>(n);
        double var = sumsq[d] / static_cast<double>(n) - mu * mu;
        if (var < 0.0) var = 0.0;
        norm.mean[d] = static_cast<float>(mu);
        norm.stdev[d] = static_cast<float>(std::max(std::sqrt(var), 1e-6));
    }
    return norm;
}

ConfoundingCases make_confounding_cases(const SceneDataset& test, uint64_t seed) {
    std::vector<int> self_idx, env_idx;
    for (int i = 0; i < test.count; ++i) {
        (test.labels[static_cast<size_t>(i)] == kLabelSelf ? self_idx : env_idx).push_back(i);
    }
    if (self_idx.empty() || env_idx.empty()) {
        throw DataError("make_confounding_cases: pairing requires both classes in the "
                        "test set");
    }

    ConfoundingCases c;
    for (int i : self_idx) c.case1.push_back({&test, i, &test, i, kLabelSelf});
    for (int i : env_idx) c.case2.push_back({&test, i, &test, i, kLabelEnvironment});

    // Seed-deterministic cross pairings.
    auto shuffled = [&](std::vector<int> v, uint64_t tag) {
        Rng rng(mix64(seed, tag));
        for (size_t i = v.size(); i > 1; --i) {
            const auto j = static_cast<size_t>(rng.uniform_int(0, static_cast<int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
        return v;
    };
    const std::vector<int> env_perm = shuffled(env_idx, 0xca5e3ull);
    const std::vector<int> self_perm = shuffled(self_idx, 0xca5e4ull);

    for (size_t i = 0; i < self_idx.size(); ++i) {
        c.case3.push_back({&test, self_idx[i], &test, env_perm[i % env_perm.size()],
                           kLabelEnvironment});
    }
    for (size_t i = 0; i < env_idx.size(); ++i) {
        c.case4.push_back({&test, env_idx[i], &test, self_perm[i % self_perm.size()],
                           kLabelEnvironment});
    }
    return c;
}

uint64_t write_group_manifest(const std::filesystem::path& data_dir,
                              const GroupManifest& gm) {
    json j;
    j["format_version"] = kFormatVersion;
    j["kind"] = "group-manifest";
    j["group"] = gm.spec.id;
    json train = json::array();
    for (SceneKind k : gm.spec.train_scenes) train.push_back(scene_kind_name(k));
    j["train_scenes"] = train;
    j["test_scene"] = scene_kind_name(gm.spec.test_scene);
    j["label_map"] = {{"environment", kLabelEnvironment}, {"self", kLabelSelf}};
    j["proprio_norm"] = {{"mean", gm.norm.mean}, {"std", gm.norm.stdev}};
    j["seed"] = hex64(gm.root_seed);
    json hashes;
    for (const auto& [kind, hash] : gm.scene_hashes) hashes[kind] = hash;
    j["scene_manifest_hashes"] = hashes;

    const std::string text = j.dump(2) + "\n";
    write_text_file(data_dir / ("group_" + std::to_string(gm.spec.id) + ".json"), text);
    return fnv1a64(text.data(), text.size());
}

GroupManifest load_group_manifest(const std::filesystem::path& data_dir, int group_id) {
    const auto path = data_dir / ("group_" + std::to_string(group_id) + ".json");
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw DataError("malformed group manifest " + path.string() + ": " + e.what());
    }
    if (j.value("kind", "") != "group-manifest") {
        throw DataError(path.string() + " is not a group manifest");
    }
    GroupManifest gm;
    gm.spec = group_spec(j.at("group").get<int>());
    const auto train = j.at("train_scenes");
    for (size_t i = 0; i < 3; ++i) {
        if (scene_kind_from_string(train[i].get<std::string>()) != gm.spec.train_scenes[i]) {
            throw DataError("group manifest train scenes disagree with the group layout");
        }
    }
    gm.norm.mean = j.at("proprio_norm").at("mean").get<std::vector<float>>();
    gm.norm.stdev = j.at("proprio_norm").at("std").get<std::vector<float>>();
    gm.root_seed = std::stoull(j.at("seed").get<std::string>(), nullptr, 16);
    for (const auto& [k, v] : j.at("scene_manifest_hashes").items()) {
        gm.scene_hashes.emplace_back(k, v.get<std::string>());
    }
    return gm;
}

}  // namespace selfsense
