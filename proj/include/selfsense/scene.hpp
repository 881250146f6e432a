#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "selfsense/errors.hpp"
#include "selfsense/rng.hpp"

namespace selfsense {

struct Vec2 {
    float x = 0.0f;
    float y = 0.0f;
};

// Planar dual-arm robot. Geometry lives in normalized units of image width;
// base anchors sit just outside the frame edge so a parked (folded-outward)
// arm renders zero pixels while a reaching arm enters from the side.
struct RobotSpec {
    int arms = 2;
    int joints_per_arm = 3;
    std::vector<float> link_lengths = {0.34f, 0.27f, 0.21f};
    std::array<Vec2, 2> base_positions = {Vec2{-0.07f, 0.5f}, Vec2{1.07f, 0.5f}};
    std::array<float, 3> arm_color = {0.80f, 0.10f, 0.12f};
    float gripper_radius = 0.045f;
    float arm_width = 0.020f;  // stroke radius of a link capsule
    std::vector<std::array<float, 2>> joint_limits = {
        {-3.14159265f, 3.14159265f}, {-2.4f, 2.4f}, {-2.4f, 2.4f}};

    // Proprioception synthesis.
    float dt = 0.1f;               // seconds between consecutive poses
    float gravity_scale = 2.5f;    // g0 in the torque proxy
    float torque_noise = 0.08f;
    float move_sigma = 0.5f;       // per-joint step of a waving arm (rad)
    float pause_probability = 0.12f;  // waving arm momentarily still
    float park_pose_sigma = 0.30f;    // articulation noise of a parked arm
    float park_vel_sigma = 0.02f;     // residual joint drift of a parked arm (rad per dt)

    int total_joints() const { return arms * joints_per_arm; }
    int proprio_dim() const { return 3 * total_joints(); }
    void validate() const;
};

enum class SceneKind { PlainA = 0, PlainB = 1, ClutterA = 2, ClutterB = 3 };

inline constexpr std::array<SceneKind, 4> kAllSceneKinds = {
    SceneKind::PlainA, SceneKind::PlainB, SceneKind::ClutterA, SceneKind::ClutterB};

const char* scene_kind_name(SceneKind kind);
SceneKind scene_kind_from_string(const std::string& name);

// One of the four scene archetypes: background palette, distractor counts
// and how often distractors are bright or robot-colored (the clutter kinds
// deliberately contain arm-colored shapes).
struct SceneSpec {
    SceneKind kind = SceneKind::PlainA;
    std::vector<std::array<float, 3>> background_palette;
    std::vector<std::array<float, 3>> distractor_palette;
    std::vector<std::array<float, 3>> bright_palette;
    int distractor_min = 0;
    int distractor_max = 2;
    bool rectangles = true;
    bool discs = true;
    float bright_distractor_probability = 0.2f;
    float arm_colored_probability = 0.0f;  // among bright distractors
    int image_h = 64;
    int image_w = 64;
    float pixel_noise = 0.02f;
    uint64_t seed = 0;

    void validate() const;
};

SceneSpec default_scene(SceneKind kind);

enum class SampleLabel { Environment = 0, Self = 1 };

// Chain positions of one arm: base followed by each link endpoint, the last
// point being the gripper. Absolute link angles accumulate along the chain.
std::vector<Vec2> forward_kinematics_arm(Vec2 base, std::span<const float> angles,
                                         std::span<const float> links);

// All arms; angles are arm-major, 2*J entries.
std::vector<std::vector<Vec2>> forward_kinematics(const RobotSpec& robot,
                                                  std::span<const float> angles);

// Rasterized arm pixels (links as capsules plus gripper discs).
std::vector<uint8_t> rasterize_arm_mask(const RobotSpec& robot,
                                        std::span<const float> angles, int image_h,
                                        int image_w);

// Self: uniform joint draws accepted once at least one gripper is in frame
// and the rendered arm coverage reaches the minimum fraction. Environment:
// folded-outward parked draws accepted once no arm pixel is in frame.
// Throws after 1000 rejected attempts.
std::vector<float> sample_pose(const RobotSpec& robot, int image_h, int image_w,
                               SampleLabel label, Rng& rng);

// Minimum arm coverage of a self image, as a fraction of all pixels.
inline constexpr double kMinSelfCoverage = 0.005;

struct RenderResult {
    std::vector<float> image;         // 3 x H x W, noise-free
    std::vector<uint8_t> arm_mask;    // H x W
    std::vector<uint8_t> gripper_mask;  // H x W, gripper discs only
    int distractor_count = 0;
};

RenderResult render_scene(const SceneSpec& scene, const RobotSpec& robot,
                          std::span<const float> angles, Rng& rng);

// position = angles_t, velocity = (angles_t - angles_prev) / dt, torque is a
// gravity-load proxy per joint: tau_k = g0 * sum_{j>=k} L_j cos(theta_j)
// plus zero-mean noise. Layout: positions, then velocities, then torques,
// arm-major within each group.
std::vector<float> synthesize_proprio(std::span<const float> angles_t,
                                      std::span<const float> angles_prev,
                                      const RobotSpec& robot, Rng& rng);

void add_pixel_noise(std::span<float> image, float sigma, Rng& rng);

}  // namespace selfsense
