#pragma once

#include <vector>

#include "somoformer/rng.hpp"
#include "somoformer/scene.hpp"

namespace somoformer {

/// Knobs for the procedural single-person walker. Defaults give 8 s clips at
/// 15 fps, matching the 15-history / 45-future evaluation protocol.
struct SyntheticConfig {
  int frames = 120;
  double fps = 15.0;
};

/// One single-person walking Scene on the default 13-joint skeleton: a
/// smooth, quasi-periodic gait advancing along a gently curving path, with
/// body scale, speed, stride, arm swing, heading, and start position all
/// drawn from rng. Bone lengths are constant within a scene.
Scene make_walker_scene(Rng& rng, const SyntheticConfig& config = {});

/// count independent walker scenes from one rng stream.
std::vector<Scene> make_walker_scenes(int count, Rng& rng, const SyntheticConfig& config = {});

}  // namespace somoformer
