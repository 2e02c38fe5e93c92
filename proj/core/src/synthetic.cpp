#include "somoformer/synthetic.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace somoformer {

namespace {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;
};

Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
Vec3 operator*(double s, Vec3 v) { return {s * v.x, s * v.y, s * v.z}; }

}  // namespace

Scene make_walker_scene(Rng& rng, const SyntheticConfig& config) {
  if (config.frames < 2) throw std::invalid_argument("make_walker_scene: need at least 2 frames");
  if (!(config.fps > 0.0)) throw std::invalid_argument("make_walker_scene: fps must be positive");

  // Scene-level draws, in a fixed order so a seed pins the whole clip.
  const double scale = rng.uniform(0.9, 1.1);        // body size multiplier
  const double speed = rng.uniform(0.8, 1.5);        // m/s along the path
  const double gait_hz = rng.uniform(1.4, 2.0);      // stride cycles per second
  const double leg_amp = rng.uniform(0.4, 0.7);      // hip swing, radians
  const double arm_amp = rng.uniform(0.3, 0.6);      // shoulder swing, radians
  const double knee_amp = rng.uniform(0.5, 0.9);     // knee flexion, radians
  const double turn_rate = rng.uniform(-0.3, 0.3);   // heading drift, rad/s
  const double heading0 = rng.angle();
  const double phase0 = rng.angle();
  const double bob_amp = rng.uniform(0.02, 0.04);    // vertical bounce, meters
  const double x0 = rng.uniform(-1.0, 1.0);
  const double z0 = rng.uniform(-1.0, 1.0);

  // Segment lengths (meters at scale 1).
  const double hip_height = 0.92 * scale;
  const double hip_half = 0.11 * scale;
  const double torso = 0.55 * scale;
  const double shoulder_half = 0.19 * scale;
  const double shoulder_drop = 0.05 * scale;
  const double thigh = 0.42 * scale;
  const double shin = 0.40 * scale;
  const double upper_arm = 0.28 * scale;
  const double forearm = 0.25 * scale;
  const double lean = 0.03 * scale;
  const double elbow_flex = 0.35;

  Scene scene;
  scene.fps = config.fps;
  scene.units = "m";
  scene.skeleton = SkeletonDef::default13();
  PersonTrack person;
  person.id = "walker";
  const int J = scene.skeleton.joint_count();
  person.joints.resize(static_cast<std::size_t>(config.frames) * static_cast<std::size_t>(J) * 3);

  const double dt = 1.0 / config.fps;
  double px = x0, pz = z0, heading = heading0;

  for (int f = 0; f < config.frames; ++f) {
    const double tau = static_cast<double>(f) * dt;
    const double theta = phase0 + 2.0 * std::numbers::pi * gait_hz * tau;

    const Vec3 fwd{std::sin(heading), 0.0, std::cos(heading)};
    const Vec3 lat{std::cos(heading), 0.0, -std::sin(heading)};
    const Vec3 up{0.0, 1.0, 0.0};

    const double bob = bob_amp * std::cos(2.0 * theta);
    const Vec3 hip_center{px, hip_height + bob, pz};
    const Vec3 neck = hip_center + torso * up + lean * fwd;

    // A leg hangs from its hip pivot; swing rotates it in the sagittal plane
    // and the knee folds the shin back by a smooth, always-positive amount.
    const auto leg = [&](double side, double phase_shift, Vec3* hip, Vec3* knee, Vec3* ankle) {
      *hip = hip_center + side * hip_half * lat;
      const double swing = leg_amp * std::sin(theta + phase_shift);
      const double fold = knee_amp * 0.5 * (1.0 + std::cos(theta + phase_shift));
      *knee = *hip + (thigh * std::sin(swing)) * fwd + (-thigh * std::cos(swing)) * up;
      const double shin_angle = swing - fold;
      *ankle = *knee + (shin * std::sin(shin_angle)) * fwd + (-shin * std::cos(shin_angle)) * up;
    };
    const auto arm = [&](double side, double phase_shift, Vec3* shoulder, Vec3* elbow, Vec3* wrist) {
      *shoulder = neck + side * shoulder_half * lat + (-shoulder_drop) * up;
      const double swing = arm_amp * std::sin(theta + phase_shift);
      *elbow = *shoulder + (upper_arm * std::sin(swing)) * fwd + (-upper_arm * std::cos(swing)) * up;
      const double fore_angle = swing + elbow_flex;
      *wrist = *elbow + (forearm * std::sin(fore_angle)) * fwd + (-forearm * std::cos(fore_angle)) * up;
    };

    Vec3 lhip, lknee, lankle, rhip, rknee, rankle;
    leg(+1.0, 0.0, &lhip, &lknee, &lankle);
    leg(-1.0, std::numbers::pi, &rhip, &rknee, &rankle);
    // Arms swing opposite their own-side leg.
    Vec3 lshoulder, lelbow, lwrist, rshoulder, relbow, rwrist;
    arm(+1.0, std::numbers::pi, &lshoulder, &lelbow, &lwrist);
    arm(-1.0, 0.0, &rshoulder, &relbow, &rwrist);

    const Vec3 joints[13] = {neck,   lshoulder, rshoulder, lelbow, relbow, lwrist, rwrist,
                             lhip,   rhip,      lknee,     rknee,  lankle, rankle};
    for (int j = 0; j < J; ++j) {
      const std::size_t base = scene.coord_index(f, j, 0);
      person.joints[base] = joints[j].x;
      person.joints[base + 1] = joints[j].y;
      person.joints[base + 2] = joints[j].z;
    }

    px += speed * dt * std::sin(heading);
    pz += speed * dt * std::cos(heading);
    heading += turn_rate * dt;
  }

  scene.persons.push_back(std::move(person));
  return scene;
}

std::vector<Scene> make_walker_scenes(int count, Rng& rng, const SyntheticConfig& config) {
  std::vector<Scene> scenes;
  scenes.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) scenes.push_back(make_walker_scene(rng, config));
  return scenes;
}

}  // namespace somoformer
