#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "somoformer/rng.hpp"

namespace somoformer {

/// Joint layout shared by every person in a scene. root_joint names the
/// joint whose position anchors translation removal and grid assignment.
struct SkeletonDef {
  std::vector<std::string> joint_names;
  int root_joint = 0;

  int joint_count() const { return static_cast<int>(joint_names.size()); }
  void validate() const;
  bool compatible(const SkeletonDef& other) const;

  /// 13-joint neck-rooted skeleton used by the synthetic generator and demos.
  static SkeletonDef default13();
};

/// One person's motion: frame-major flat coordinates [F][J][3], meters,
/// global frame, y up.
struct PersonTrack {
  std::string id;
  std::vector<double> joints;
};

/// A multi-person motion clip in global coordinates. Immutable after load
/// by convention; samplers only read.
struct Scene {
  double fps = 0.0;
  std::string units = "m";
  SkeletonDef skeleton;
  std::vector<PersonTrack> persons;

  int joint_count() const { return skeleton.joint_count(); }
  int frame_count() const;
  std::size_t coord_index(int frame, int joint, int axis) const;
  double coord(int person, int frame, int joint, int axis) const;

  /// Throws with the offending person/frame/joint in the message.
  void validate() const;
};

Scene parse_scene(const std::string& json_text, const std::string& origin = "<string>");
Scene load_scene(const std::string& path);
std::string serialize_scene(const Scene& scene);
void save_scene(const Scene& scene, const std::string& path);

/// One training/evaluation sample: per-slot joint trajectories with the time
/// axis last. history is [slots][J][3][t]; future_gt is [slots][J][3][T] and
/// empty at inference; padding_mask is true for real persons; root_offsets
/// ([slots][3]) hold the translation removed per person.
struct TrajectoryWindow {
  int t = 0;
  int T = 0;
  int J = 0;
  int slots = 0;
  int root_joint = 0;
  std::vector<double> history;
  std::vector<double> future_gt;
  std::vector<bool> padding_mask;
  std::vector<double> root_offsets;
  bool translation_removed = false;
  // Originals preserved by remove_translation so that restore_translation is
  // a bit-exact inverse (a - b + b does not round-trip in floating point).
  std::vector<double> saved_history;
  std::vector<double> saved_future;

  bool has_future() const { return !future_gt.empty(); }
  int real_count() const;
  std::size_t hist_index(int slot, int joint, int axis, int frame) const;
  std::size_t future_index(int slot, int joint, int axis, int frame) const;
  double& hist(int slot, int joint, int axis, int frame);
  double hist(int slot, int joint, int axis, int frame) const;
  double& future(int slot, int joint, int axis, int frame);
  double future(int slot, int joint, int axis, int frame) const;
};

/// Slices t history + T future frames for every person starting at `start`.
/// Translation is left in place.
TrajectoryWindow slice_window(const Scene& scene, int start, int t, int T);

/// Uniform random start over [0, F-(t+T)]; slices t history + T future frames
/// for every person. Translation is left in place.
TrajectoryWindow sample_window(const Scene& scene, int t, int T, Rng& rng);

/// Hold-last padding along a trailing time axis: every row of length t
/// becomes length t+T with frames t..t+T-1 equal to frame t-1.
std::vector<double> pad_future(const std::vector<double>& history, int t, int T);

/// Subtracts each real person's root-joint position at the last history frame
/// from all of that person's coordinates (history and future), recording the
/// offsets for restoration.
void remove_translation(TrajectoryWindow& window, const SkeletonDef& skeleton);

/// Same, rooting at the window's own root_joint index.
void remove_translation(TrajectoryWindow& window);

/// Exact inverse of remove_translation.
void restore_translation(TrajectoryWindow& window);

struct MixOptions {
  double placement_extent = 4.0;  // side of the ground-plane placement square, meters
  bool rotate = false;            // random vertical-axis rotation per person
};

/// Builds one synthetic multi-person scene of length t+T by sampling
/// single-person windows from n_persons distinct sources and placing each
/// rigidly (recenter, optional rotation, uniform ground-plane translation).
Scene mix_scenes(const std::vector<Scene>& sources, int n_persons, int t, int T, Rng& rng,
                 const MixOptions& options = {});

/// Re-packs a window's real persons into exactly n_slots slots; added slots
/// are zero-filled and masked out.
TrajectoryWindow pad_to_slots(const TrajectoryWindow& window, int n_slots);

/// pad_to_slots over a batch; all windows must share t, T, J.
std::vector<TrajectoryWindow> assemble_batch(const std::vector<TrajectoryWindow>& windows,
                                             int n_slots);

}  // namespace somoformer
