#pragma once

#include <vector>

#include "somoformer/rng.hpp"
#include "somoformer/scene.hpp"

namespace somoformer {

/// Training-time augmentation switches. Applied per window in the fixed
/// order reverse -> rotate -> permute.
struct AugmentConfig {
  bool rotate = true;
  double reverse_prob = 0.5;
  bool permute = true;
};

/// Rotates flat [..., 3] coordinates about the vertical (y) axis:
/// x' = x cos(theta) + z sin(theta), y' = y, z' = -x sin(theta) + z cos(theta).
void rotate_about_y(std::vector<double>& coords, double theta);

/// Same rotation applied to every coordinate of a global (translation-intact)
/// window, history and future alike.
void rotate_window(TrajectoryWindow& window, double theta);

/// Reverses the frame order of the full (t+T)-frame sequence per person and
/// re-takes the history/future split on the reversed sequence. Involution.
void reverse_window(TrajectoryWindow& window);

/// Moves slot i's person data, padding mask entry, and root offset to slot
/// perm[i], all in lockstep. perm must be a bijection on slot indices.
void permute_persons(TrajectoryWindow& window, const std::vector<int>& perm);

/// reverse (with probability reverse_prob) -> rotate (uniform [0, 2*pi)) ->
/// permute (uniform random permutation), each drawing from rng only when its
/// switch is enabled.
void apply_augmentations(TrajectoryWindow& window, const AugmentConfig& config, Rng& rng);

}  // namespace somoformer
