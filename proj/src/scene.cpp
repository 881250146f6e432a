#include "selfsense/scene.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace selfsense {

namespace {

constexpr float kPi = 3.14159265358979323846f;

float wrap_angle(float a) {
    float w = std::fmod(a + kPi, 2.0f * kPi);
    if (w < 0.0f) w += 2.0f * kPi;
    return w - kPi;
}

float clampf(float v, float lo, float hi) { return std::min(hi, std::max(lo, v)); }

// Geometry lives in units of image width; pixel (i, j) has its center at
// ((j+0.5)/W, (i+0.5)/W) and the frame is [0,1] x [0,H/W].
struct Grid {
    int h, w;
    float unit;
    explicit Grid(int image_h, int image_w)
        : h(image_h), w(image_w), unit(1.0f / static_cast<float>(image_w)) {}
    float px(int j) const { return (static_cast<float>(j) + 0.5f) * unit; }
    float py(int i) const { return (static_cast<float>(i) + 0.5f) * unit; }
    float aspect() const { return static_cast<float>(h) * unit; }
};

float dist2_point_segment(float px, float py, Vec2 a, Vec2 b) {
    const float vx = b.x - a.x, vy = b.y - a.y;
    const float wx = px - a.x, wy = py - a.y;
    const float vv = vx * vx + vy * vy;
    float t = vv > 0.0f ? (wx * vx + wy * vy) / vv : 0.0f;
    t = clampf(t, 0.0f, 1.0f);
    const float dx = wx - t * vx, dy = wy - t * vy;
    return dx * dx + dy * dy;
}

template <typename Fn>
void for_pixels_in_box(const Grid& g, float x0, float y0, float x1, float y1, Fn&& fn) {
    int j0 = static_cast<int>(std::floor(x0 / g.unit - 0.5f));
    int j1 = static_cast<int>(std::ceil(x1 / g.unit - 0.5f));
    int i0 = static_cast<int>(std::floor(y0 / g.unit - 0.5f));
    int i1 = static_cast<int>(std::ceil(y1 / g.unit - 0.5f));
    j0 = std::max(j0, 0);
    i0 = std::max(i0, 0);
    j1 = std::min(j1, g.w - 1);
    i1 = std::min(i1, g.h - 1);
    for (int i = i0; i <= i1; ++i) {
        for (int j = j0; j <= j1; ++j) fn(i, j);
    }
}

template <typename Fn>
void rasterize_capsule(const Grid& g, Vec2 a, Vec2 b, float radius, Fn&& hit) {
    const float x0 = std::min(a.x, b.x) - radius, x1 = std::max(a.x, b.x) + radius;
    const float y0 = std::min(a.y, b.y) - radius, y1 = std::max(a.y, b.y) + radius;
    const float r2 = radius * radius;
    for_pixels_in_box(g, x0, y0, x1, y1, [&](int i, int j) {
        if (dist2_point_segment(g.px(j), g.py(i), a, b) <= r2) hit(i, j);
    });
}

template <typename Fn>
void rasterize_disc(const Grid& g, Vec2 c, float radius, Fn&& hit) {
    const float r2 = radius * radius;
    for_pixels_in_box(g, c.x - radius, c.y - radius, c.x + radius, c.y + radius,
                      [&](int i, int j) {
                          const float dx = g.px(j) - c.x, dy = g.py(i) - c.y;
                          if (dx * dx + dy * dy <= r2) hit(i, j);
                      });
}

template <typename Fn>
void rasterize_rect(const Grid& g, Vec2 c, float half_long, float half_short, float angle,
                    Fn&& hit) {
    const float ca = std::cos(angle), sa = std::sin(angle);
    const float ext = std::sqrt(half_long * half_long + half_short * half_short);
    for_pixels_in_box(g, c.x - ext, c.y - ext, c.x + ext, c.y + ext, [&](int i, int j) {
        const float dx = g.px(j) - c.x, dy = g.py(i) - c.y;
        const float u = dx * ca + dy * sa;
        const float v = -dx * sa + dy * ca;
        if (std::fabs(u) <= half_long && std::fabs(v) <= half_short) hit(i, j);
    });
}

void paint(std::vector<float>& image, const Grid& g, int i, int j,
           const std::array<float, 3>& color) {
    const size_t plane = static_cast<size_t>(g.h) * static_cast<size_t>(g.w);
    const size_t at = static_cast<size_t>(i) * static_cast<size_t>(g.w) +
                      static_cast<size_t>(j);
    image[at] = color[0];
    image[plane + at] = color[1];
    image[2 * plane + at] = color[2];
}

std::array<float, 3> jitter_color(std::array<float, 3> c, Rng& rng, float sigma) {
    for (float& v : c) v = clampf(v + static_cast<float>(rng.normal(0.0, sigma)), 0.0f, 1.0f);
    return c;
}

}  // namespace

void RobotSpec::validate() const {
    if (arms != 2) throw ConfigError("robot: exactly two arms are supported");
    if (joints_per_arm < 1) throw ConfigError("robot: joints_per_arm must be >= 1");
    if (static_cast<int>(link_lengths.size()) != joints_per_arm) {
        throw ConfigError("robot: link_lengths must have one entry per joint");
    }
    for (float l : link_lengths) {
        if (!(l > 0.0f)) throw ConfigError("robot: link lengths must be positive");
    }
    if (static_cast<int>(joint_limits.size()) != joints_per_arm) {
        throw ConfigError("robot: joint_limits must have one entry per joint");
    }
    for (const auto& lim : joint_limits) {
        if (!(lim[0] <= lim[1])) throw ConfigError("robot: joint limits must be ordered");
    }
    if (!(gripper_radius > 0.0f) || !(arm_width > 0.0f)) {
        throw ConfigError("robot: gripper_radius and arm_width must be positive");
    }
    if (!(dt > 0.0f)) throw ConfigError("robot: dt must be positive");
    if (pause_probability < 0.0f || pause_probability > 1.0f) {
        throw ConfigError("robot: pause_probability must be in [0,1]");
    }
}

const char* scene_kind_name(SceneKind kind) {
    switch (kind) {
        case SceneKind::PlainA: return "plain-a";
        case SceneKind::PlainB: return "plain-b";
        case SceneKind::ClutterA: return "clutter-a";
        case SceneKind::ClutterB: return "clutter-b";
    }
    return "?";
}

SceneKind scene_kind_from_string(const std::string& name) {
    for (SceneKind k : kAllSceneKinds) {
        if (name == scene_kind_name(k)) return k;
    }
    throw ConfigError("unknown scene kind '" + name +
                      "' (plain-a | plain-b | clutter-a | clutter-b)");
}

void SceneSpec::validate() const {
    const bool plain = kind == SceneKind::PlainA || kind == SceneKind::PlainB;
    if (distractor_min < 0 || distractor_max < distractor_min) {
        throw ConfigError("scene: distractor count range must be ordered and non-negative");
    }
    if (plain && distractor_max > 2) {
        throw ConfigError("scene: plain kinds allow at most 2 distractors");
    }
    if (!plain && distractor_min < 5) {
        throw ConfigError("scene: clutter kinds require at least 5 distractors");
    }
    if (bright_distractor_probability < 0.0f || bright_distractor_probability > 1.0f ||
        arm_colored_probability < 0.0f || arm_colored_probability > 1.0f) {
        throw ConfigError("scene: probabilities must be in [0,1]");
    }
    if (image_h < 8 || image_w < 8) throw ConfigError("scene: image size must be >= 8x8");
    if (background_palette.empty() || distractor_palette.empty() || bright_palette.empty()) {
        throw ConfigError("scene: palettes must not be empty");
    }
    if (!rectangles && !discs) throw ConfigError("scene: enable at least one distractor shape");
    if (pixel_noise < 0.0f) throw ConfigError("scene: pixel_noise must be >= 0");
}

SceneSpec default_scene(SceneKind kind) {
    SceneSpec s;
    s.kind = kind;
    switch (kind) {
        case SceneKind::PlainA:
            s.background_palette = {{0.55f, 0.65f, 0.75f}, {0.50f, 0.60f, 0.70f},
                                    {0.60f, 0.68f, 0.78f}};
            s.distractor_palette = {{0.42f, 0.47f, 0.52f}, {0.56f, 0.52f, 0.46f}};
            s.bright_palette = {{0.90f, 0.85f, 0.30f}, {0.85f, 0.90f, 0.90f}};
            s.distractor_min = 0;
            s.distractor_max = 2;
            s.bright_distractor_probability = 0.15f;
            s.arm_colored_probability = 0.0f;
            break;
        case SceneKind::PlainB:
            s.background_palette = {{0.82f, 0.80f, 0.76f}, {0.78f, 0.78f, 0.80f},
                                    {0.86f, 0.84f, 0.80f}};
            s.distractor_palette = {{0.60f, 0.58f, 0.55f}, {0.50f, 0.52f, 0.56f}};
            s.bright_palette = {{0.95f, 0.92f, 0.75f}, {0.90f, 0.65f, 0.20f}};
            s.distractor_min = 0;
            s.distractor_max = 2;
            s.bright_distractor_probability = 0.35f;
            s.arm_colored_probability = 0.0f;
            break;
        case SceneKind::ClutterA:
            s.background_palette = {{0.25f, 0.27f, 0.30f}, {0.30f, 0.30f, 0.34f},
                                    {0.22f, 0.24f, 0.28f}};
            s.distractor_palette = {{0.45f, 0.42f, 0.40f}, {0.35f, 0.40f, 0.45f},
                                    {0.50f, 0.50f, 0.52f}};
            s.bright_palette = {{0.95f, 0.85f, 0.25f}, {0.90f, 0.90f, 0.85f},
                                {0.30f, 0.80f, 0.90f}};
            s.distractor_min = 6;
            s.distractor_max = 10;
            s.bright_distractor_probability = 0.50f;
            s.arm_colored_probability = 0.45f;
            break;
        case SceneKind::ClutterB:
            s.background_palette = {{0.45f, 0.42f, 0.38f}, {0.40f, 0.38f, 0.35f},
                                    {0.50f, 0.46f, 0.42f}};
            s.distractor_palette = {{0.55f, 0.52f, 0.48f}, {0.38f, 0.42f, 0.47f},
                                    {0.60f, 0.55f, 0.50f}};
            s.bright_palette = {{0.92f, 0.90f, 0.88f}, {0.95f, 0.80f, 0.30f},
                                {0.85f, 0.30f, 0.60f}};
            s.distractor_min = 6;
            s.distractor_max = 10;
            s.bright_distractor_probability = 0.60f;
            s.arm_colored_probability = 0.45f;
            break;
    }
    return s;
}

std::vector<Vec2> forward_kinematics_arm(Vec2 base, std::span<const float> angles,
                                         std::span<const float> links) {
    std::vector<Vec2> points;
    points.reserve(angles.size() + 1);
    points.push_back(base);
    float theta = 0.0f;
    Vec2 p = base;
    for (size_t k = 0; k < angles.size(); ++k) {
        theta += angles[k];
        p.x += links[k] * std::cos(theta);
        p.y += links[k] * std::sin(theta);
        points.push_back(p);
    }
    return points;
}

std::vector<std::vector<Vec2>> forward_kinematics(const RobotSpec& robot,
                                                  std::span<const float> angles) {
    const int J = robot.joints_per_arm;
    if (static_cast<int>(angles.size()) != robot.arms * J) {
        std::ostringstream os;
        os << "forward_kinematics: expected " << robot.arms * J << " angles, got "
           << angles.size();
        throw DimensionError(os.str());
    }
    std::vector<std::vector<Vec2>> chains;
    chains.reserve(static_cast<size_t>(robot.arms));
    for (int a = 0; a < robot.arms; ++a) {
        chains.push_back(forward_kinematics_arm(
            robot.base_positions[static_cast<size_t>(a)],
            angles.subspan(static_cast<size_t>(a * J), static_cast<size_t>(J)),
            robot.link_lengths));
    }
    return chains;
}

std::vector<uint8_t> rasterize_arm_mask(const RobotSpec& robot,
                                        std::span<const float> angles, int image_h,
                                        int image_w) {
    const Grid g(image_h, image_w);
    std::vector<uint8_t> mask(static_cast<size_t>(image_h) * static_cast<size_t>(image_w),
                              0);
    const auto chains = forward_kinematics(robot, angles);
    auto hit = [&](int i, int j) {
        mask[static_cast<size_t>(i) * static_cast<size_t>(image_w) +
             static_cast<size_t>(j)] = 1;
    };
    for (const auto& chain : chains) {
        for (size_t k = 0; k + 1 < chain.size(); ++k) {
            rasterize_capsule(g, chain[k], chain[k + 1], robot.arm_width, hit);
        }
        rasterize_disc(g, chain.back(), robot.gripper_radius, hit);
    }
    return mask;
}

namespace {

bool point_in_frame(Vec2 p, const Grid& g) {
    return p.x >= 0.0f && p.x < 1.0f && p.y >= 0.0f && p.y < g.aspect();
}

int64_t count_mask(const std::vector<uint8_t>& mask) {
    int64_t n = 0;
    for (uint8_t v : mask) n += v;
    return n;
}

}  // namespace

std::vector<float> sample_pose(const RobotSpec& robot, int image_h, int image_w,
                               SampleLabel label, Rng& rng) {
    robot.validate();
    const Grid g(image_h, image_w);
    const int J = robot.joints_per_arm;
    const int total = robot.total_joints();
    const int64_t min_pixels = static_cast<int64_t>(
        std::ceil(kMinSelfCoverage * static_cast<double>(image_h) *
                  static_cast<double>(image_w)));
    std::vector<float> angles(static_cast<size_t>(total));

    for (int attempt = 0; attempt < 1000; ++attempt) {
        if (label == SampleLabel::Self) {
            for (int q = 0; q < total; ++q) {
                const auto& lim = robot.joint_limits[static_cast<size_t>(q % J)];
                angles[static_cast<size_t>(q)] = rng.uniform_float(lim[0], lim[1]);
            }
            const auto chains = forward_kinematics(robot, angles);
            bool gripper_in = false;
            for (const auto& chain : chains) {
                if (point_in_frame(chain.back(), g)) gripper_in = true;
            }
            if (!gripper_in) continue;
            const auto mask = rasterize_arm_mask(robot, angles, image_h, image_w);
            if (count_mask(mask) < min_pixels) continue;
            return angles;
        }

        // Parked: first joint points away from the frame, the rest fold with
        // limited articulation noise; accept only a fully out-of-frame render.
        for (int a = 0; a < robot.arms; ++a) {
            const float outward =
                robot.base_positions[static_cast<size_t>(a)].x < 0.5f ? kPi : 0.0f;
            for (int k = 0; k < J; ++k) {
                const auto& lim = robot.joint_limits[static_cast<size_t>(k)];
                float v = static_cast<float>(rng.normal(0.0, robot.park_pose_sigma));
                if (k == 0) v = wrap_angle(outward + v);
                angles[static_cast<size_t>(a * J + k)] = clampf(v, lim[0], lim[1]);
            }
        }
        const auto mask = rasterize_arm_mask(robot, angles, image_h, image_w);
        if (count_mask(mask) == 0) return angles;
    }
    throw ValidationError(
        "sample_pose: rejection sampling failed after 1000 attempts; robot and frame "
        "geometry are inconsistent");
}

RenderResult render_scene(const SceneSpec& scene, const RobotSpec& robot,
                          std::span<const float> angles, Rng& rng) {
    const Grid g(scene.image_h, scene.image_w);
    const size_t plane = static_cast<size_t>(scene.image_h) *
                         static_cast<size_t>(scene.image_w);
    RenderResult r;
    r.image.resize(3 * plane);
    r.arm_mask.assign(plane, 0);
    r.gripper_mask.assign(plane, 0);

    const auto& bg = scene.background_palette[static_cast<size_t>(
        rng.uniform_int(0, static_cast<int64_t>(scene.background_palette.size()) - 1))];
    std::fill(r.image.begin(), r.image.begin() + static_cast<long>(plane), bg[0]);
    std::fill(r.image.begin() + static_cast<long>(plane),
              r.image.begin() + static_cast<long>(2 * plane), bg[1]);
    std::fill(r.image.begin() + static_cast<long>(2 * plane), r.image.end(), bg[2]);

    r.distractor_count =
        static_cast<int>(rng.uniform_int(scene.distractor_min, scene.distractor_max));
    for (int di = 0; di < r.distractor_count; ++di) {
        const bool bright = rng.bernoulli(scene.bright_distractor_probability);
        const bool armlike = bright && rng.bernoulli(scene.arm_colored_probability);
        std::array<float, 3> color;
        if (armlike) {
            color = jitter_color(robot.arm_color, rng, 0.03f);
        } else if (bright) {
            color = jitter_color(
                scene.bright_palette[static_cast<size_t>(rng.uniform_int(
                    0, static_cast<int64_t>(scene.bright_palette.size()) - 1))],
                rng, 0.02f);
        } else {
            color = jitter_color(
                scene.distractor_palette[static_cast<size_t>(rng.uniform_int(
                    0, static_cast<int64_t>(scene.distractor_palette.size()) - 1))],
                rng, 0.02f);
        }
        Vec2 c{rng.uniform_float(0.0f, 1.0f), rng.uniform_float(0.0f, g.aspect())};
        const bool use_rect =
            scene.rectangles && (!scene.discs || rng.bernoulli(0.5));
        auto put = [&](int i, int j) { paint(r.image, g, i, j, color); };
        if (use_rect) {
            // Arm-colored rectangles are elongated so they resemble limbs.
            const float hl = armlike ? rng.uniform_float(0.10f, 0.22f)
                                     : rng.uniform_float(0.03f, 0.12f);
            const float hs = armlike ? rng.uniform_float(0.012f, 0.028f)
                                     : rng.uniform_float(0.02f, 0.10f);
            rasterize_rect(g, c, hl, hs, rng.uniform_float(0.0f, kPi), put);
        } else {
            const float rad = armlike ? rng.uniform_float(0.030f, 0.060f)
                                      : rng.uniform_float(0.03f, 0.10f);
            rasterize_disc(g, c, rad, put);
        }
    }

    // Arms go last: mask pixels are exactly arm_color in the noise-free image.
    const auto chains = forward_kinematics(robot, angles);
    auto hit_arm = [&](int i, int j) {
        r.arm_mask[static_cast<size_t>(i) * static_cast<size_t>(scene.image_w) +
                   static_cast<size_t>(j)] = 1;
        paint(r.image, g, i, j, robot.arm_color);
    };
    auto hit_gripper = [&](int i, int j) {
        r.gripper_mask[static_cast<size_t>(i) * static_cast<size_t>(scene.image_w) +
                       static_cast<size_t>(j)] = 1;
        hit_arm(i, j);
    };
    for (const auto& chain : chains) {
        for (size_t k = 0; k + 1 < chain.size(); ++k) {
            rasterize_capsule(g, chain[k], chain[k + 1], robot.arm_width, hit_arm);
        }
        rasterize_disc(g, chain.back(), robot.gripper_radius, hit_gripper);
    }
    return r;
}

std::vector<float> synthesize_proprio(std::span<const float> angles_t,
                                      std::span<const float> angles_prev,
                                      const RobotSpec& robot, Rng& rng) {
    const int J = robot.joints_per_arm;
    const int total = robot.total_joints();
    if (static_cast<int>(angles_t.size()) != total ||
        static_cast<int>(angles_prev.size()) != total) {
        throw DimensionError("synthesize_proprio: angle count mismatch");
    }
    std::vector<float> out(static_cast<size_t>(robot.proprio_dim()));
    for (int q = 0; q < total; ++q) {
        out[static_cast<size_t>(q)] = angles_t[static_cast<size_t>(q)];
        out[static_cast<size_t>(total + q)] =
            (angles_t[static_cast<size_t>(q)] - angles_prev[static_cast<size_t>(q)]) /
            robot.dt;
    }
    for (int a = 0; a < robot.arms; ++a) {
        // Absolute link angles, then suffix load sums.
        std::vector<double> cum(static_cast<size_t>(J));
        double theta = 0.0;
        for (int k = 0; k < J; ++k) {
            theta += angles_t[static_cast<size_t>(a * J + k)];
            cum[static_cast<size_t>(k)] = theta;
        }
        double load = 0.0;
        std::vector<double> torque(static_cast<size_t>(J));
        for (int k = J - 1; k >= 0; --k) {
            load += robot.link_lengths[static_cast<size_t>(k)] *
                    std::cos(cum[static_cast<size_t>(k)]);
            torque[static_cast<size_t>(k)] = robot.gravity_scale * load;
        }
        for (int k = 0; k < J; ++k) {
            out[static_cast<size_t>(2 * total + a * J + k)] = static_cast<float>(
                torque[static_cast<size_t>(k)] +
                robot.torque_noise * rng.normal());
        }
    }
    return out;
}

void add_pixel_noise(std::span<float> image, float sigma, Rng& rng) {
    for (float& v : image) {
        v = clampf(v + static_cast<float>(sigma * rng.normal()), 0.0f, 1.0f);
    }
}

}  // namespace selfsense
