#include "somoformer/scene.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "somoformer/augment.hpp"

namespace somoformer {

using nlohmann::json;

// ---------------------------------------------------------------------------
// SkeletonDef

void SkeletonDef::validate() const {
  if (joint_names.empty()) throw std::invalid_argument("skeleton: no joint names");
  std::set<std::string> seen;
  for (const auto& name : joint_names) {
    if (!seen.insert(name).second) {
      throw std::invalid_argument("skeleton: duplicate joint name '" + name + "'");
    }
  }
  if (root_joint < 0 || root_joint >= joint_count()) {
    throw std::invalid_argument("skeleton: root joint index " + std::to_string(root_joint) +
                                " out of range for " + std::to_string(joint_count()) + " joints");
  }
}

bool SkeletonDef::compatible(const SkeletonDef& other) const {
  return joint_names == other.joint_names && root_joint == other.root_joint;
}

SkeletonDef SkeletonDef::default13() {
  SkeletonDef s;
  s.joint_names = {"neck",       "left_shoulder", "right_shoulder", "left_elbow",
                   "right_elbow", "left_wrist",    "right_wrist",    "left_hip",
                   "right_hip",   "left_knee",     "right_knee",     "left_ankle",
                   "right_ankle"};
  s.root_joint = 0;  // neck
  return s;
}

// ---------------------------------------------------------------------------
// Scene

int Scene::frame_count() const {
  if (persons.empty()) return 0;
  const auto stride = static_cast<std::size_t>(joint_count()) * 3;
  return static_cast<int>(persons[0].joints.size() / stride);
}

std::size_t Scene::coord_index(int frame, int joint, int axis) const {
  return (static_cast<std::size_t>(frame) * static_cast<std::size_t>(joint_count()) +
          static_cast<std::size_t>(joint)) *
             3 +
         static_cast<std::size_t>(axis);
}

double Scene::coord(int person, int frame, int joint, int axis) const {
  return persons[static_cast<std::size_t>(person)].joints[coord_index(frame, joint, axis)];
}

void Scene::validate() const {
  skeleton.validate();
  if (!(fps > 0.0) || !std::isfinite(fps)) {
    throw std::invalid_argument("scene: fps must be positive and finite");
  }
  if (persons.empty()) throw std::invalid_argument("scene: no persons");
  const auto J = static_cast<std::size_t>(joint_count());
  const std::size_t per_frame = J * 3;
  const std::size_t frames = persons[0].joints.size() / per_frame;
  for (const auto& person : persons) {
    if (person.joints.size() % per_frame != 0) {
      throw std::invalid_argument("scene: person '" + person.id +
                                  "' has a ragged joint array (size " +
                                  std::to_string(person.joints.size()) + " is not a multiple of " +
                                  std::to_string(per_frame) + ")");
    }
    const std::size_t f = person.joints.size() / per_frame;
    if (f != frames) {
      throw std::invalid_argument("scene: person '" + person.id + "' has " + std::to_string(f) +
                                  " frames but person '" + persons[0].id + "' has " +
                                  std::to_string(frames));
    }
    if (f == 0) {
      throw std::invalid_argument("scene: person '" + person.id + "' has no frames");
    }
    for (std::size_t i = 0; i < person.joints.size(); ++i) {
      if (!std::isfinite(person.joints[i])) {
        const std::size_t frame = i / per_frame;
        const std::size_t joint = (i % per_frame) / 3;
        throw std::invalid_argument("scene: person '" + person.id + "' frame " +
                                    std::to_string(frame) + " joint '" +
                                    skeleton.joint_names[joint] + "': non-finite coordinate");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// JSON I/O

namespace {

[[noreturn]] void parse_fail(const std::string& origin, const std::string& text,
                             const json::parse_error& err) {
  // err.byte is 1-based position of the failure in the input.
  std::size_t line = 1, column = 1;
  const std::size_t stop = err.byte == 0 ? 0 : err.byte - 1;
  for (std::size_t i = 0; i < stop && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  throw std::runtime_error(origin + ": JSON parse error at line " + std::to_string(line) +
                           ", column " + std::to_string(column) + ": " + err.what());
}

double number_at(const json& j, const std::string& context) {
  if (!j.is_number()) {
    throw std::invalid_argument(context + ": expected a number, found " +
                                std::string(j.type_name()));
  }
  return j.get<double>();
}

}  // namespace

Scene parse_scene(const std::string& json_text, const std::string& origin) {
  json root;
  try {
    root = json::parse(json_text);
  } catch (const json::parse_error& err) {
    parse_fail(origin, json_text, err);
  }

  try {
    if (!root.is_object()) throw std::invalid_argument("top level is not an object");
    for (const char* key : {"fps", "units", "skeleton", "persons"}) {
      if (!root.contains(key)) {
        throw std::invalid_argument(std::string("missing required key '") + key + "'");
      }
    }

    Scene scene;
    scene.fps = number_at(root["fps"], "fps");
    scene.units = root["units"].get<std::string>();

    const json& sk = root["skeleton"];
    if (!sk.is_object() || !sk.contains("names") || !sk.contains("root")) {
      throw std::invalid_argument("skeleton must be an object with 'names' and 'root'");
    }
    for (const auto& name : sk["names"]) {
      scene.skeleton.joint_names.push_back(name.get<std::string>());
    }
    const std::string root_name = sk["root"].get<std::string>();
    scene.skeleton.root_joint = -1;
    for (std::size_t i = 0; i < scene.skeleton.joint_names.size(); ++i) {
      if (scene.skeleton.joint_names[i] == root_name) {
        scene.skeleton.root_joint = static_cast<int>(i);
        break;
      }
    }
    if (scene.skeleton.root_joint < 0) {
      throw std::invalid_argument("skeleton root '" + root_name + "' is not a listed joint name");
    }

    const auto J = static_cast<std::size_t>(scene.skeleton.joint_count());
    for (const json& jp : root["persons"]) {
      PersonTrack person;
      person.id = jp.contains("id") ? jp["id"].get<std::string>()
                                    : "p" + std::to_string(scene.persons.size());
      const json& frames = jp["joints"];
      if (!frames.is_array()) {
        throw std::invalid_argument("person '" + person.id + "': joints must be an array");
      }
      person.joints.reserve(frames.size() * J * 3);
      for (std::size_t f = 0; f < frames.size(); ++f) {
        const json& frame = frames[f];
        if (!frame.is_array() || frame.size() != J) {
          throw std::invalid_argument("person '" + person.id + "' frame " + std::to_string(f) +
                                      ": expected " + std::to_string(J) + " joints, found " +
                                      std::to_string(frame.is_array() ? frame.size() : 0));
        }
        for (std::size_t j = 0; j < J; ++j) {
          const json& triple = frame[j];
          if (!triple.is_array() || triple.size() != 3) {
            throw std::invalid_argument("person '" + person.id + "' frame " + std::to_string(f) +
                                        " joint '" + scene.skeleton.joint_names[j] +
                                        "': expected 3 coordinates");
          }
          for (int axis = 0; axis < 3; ++axis) {
            person.joints.push_back(
                number_at(triple[static_cast<std::size_t>(axis)],
                          "person '" + person.id + "' frame " + std::to_string(f) + " joint '" +
                              scene.skeleton.joint_names[j] + "'"));
          }
        }
      }
      scene.persons.push_back(std::move(person));
    }

    scene.validate();
    return scene;
  } catch (const std::invalid_argument& err) {
    throw std::invalid_argument(origin + ": " + err.what());
  }
}

Scene load_scene(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("load_scene: cannot open '" + path + "'");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_scene(buffer.str(), path);
}

std::string serialize_scene(const Scene& scene) {
  scene.validate();
  json root;
  root["fps"] = scene.fps;
  root["units"] = scene.units;
  root["skeleton"]["names"] = scene.skeleton.joint_names;
  root["skeleton"]["root"] =
      scene.skeleton.joint_names[static_cast<std::size_t>(scene.skeleton.root_joint)];
  json persons = json::array();
  const int F = scene.frame_count();
  const int J = scene.joint_count();
  for (const auto& person : scene.persons) {
    json jp;
    jp["id"] = person.id;
    json frames = json::array();
    std::size_t i = 0;
    for (int f = 0; f < F; ++f) {
      json frame = json::array();
      for (int j = 0; j < J; ++j) {
        frame.push_back(json::array(
            {person.joints[i], person.joints[i + 1], person.joints[i + 2]}));
        i += 3;
      }
      frames.push_back(std::move(frame));
    }
    jp["joints"] = std::move(frames);
    persons.push_back(std::move(jp));
  }
  root["persons"] = std::move(persons);
  return root.dump(2) + "\n";
}

void save_scene(const Scene& scene, const std::string& path) {
  const std::string text = serialize_scene(scene);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("save_scene: cannot open '" + path + "' for writing");
  out << text;
  if (!out) throw std::runtime_error("save_scene: write to '" + path + "' failed");
}

// ---------------------------------------------------------------------------
// TrajectoryWindow

int TrajectoryWindow::real_count() const {
  int n = 0;
  for (bool real : padding_mask) n += real ? 1 : 0;
  return n;
}

std::size_t TrajectoryWindow::hist_index(int slot, int joint, int axis, int frame) const {
  return ((static_cast<std::size_t>(slot) * static_cast<std::size_t>(J) +
           static_cast<std::size_t>(joint)) *
              3 +
          static_cast<std::size_t>(axis)) *
             static_cast<std::size_t>(t) +
         static_cast<std::size_t>(frame);
}

std::size_t TrajectoryWindow::future_index(int slot, int joint, int axis, int frame) const {
  return ((static_cast<std::size_t>(slot) * static_cast<std::size_t>(J) +
           static_cast<std::size_t>(joint)) *
              3 +
          static_cast<std::size_t>(axis)) *
             static_cast<std::size_t>(T) +
         static_cast<std::size_t>(frame);
}

double& TrajectoryWindow::hist(int slot, int joint, int axis, int frame) {
  return history[hist_index(slot, joint, axis, frame)];
}
double TrajectoryWindow::hist(int slot, int joint, int axis, int frame) const {
  return history[hist_index(slot, joint, axis, frame)];
}
double& TrajectoryWindow::future(int slot, int joint, int axis, int frame) {
  return future_gt[future_index(slot, joint, axis, frame)];
}
double TrajectoryWindow::future(int slot, int joint, int axis, int frame) const {
  return future_gt[future_index(slot, joint, axis, frame)];
}

// ---------------------------------------------------------------------------
// Sampling and padding

TrajectoryWindow slice_window(const Scene& scene, int start, int t, int T) {
  if (t < 1 || T < 1) throw std::invalid_argument("slice_window: t and T must be >= 1");
  const int F = scene.frame_count();
  if (F < t + T) {
    throw std::invalid_argument("slice_window: scene has " + std::to_string(F) +
                                " frames, needs at least " + std::to_string(t + T));
  }
  if (start < 0 || start + t + T > F) {
    throw std::invalid_argument("slice_window: start " + std::to_string(start) +
                                " out of range for " + std::to_string(F) + " frames");
  }

  TrajectoryWindow w;
  w.t = t;
  w.T = T;
  w.J = scene.joint_count();
  w.slots = static_cast<int>(scene.persons.size());
  w.root_joint = scene.skeleton.root_joint;
  w.history.assign(static_cast<std::size_t>(w.slots * w.J * 3 * t), 0.0);
  w.future_gt.assign(static_cast<std::size_t>(w.slots * w.J * 3 * T), 0.0);
  w.padding_mask.assign(static_cast<std::size_t>(w.slots), true);
  w.root_offsets.assign(static_cast<std::size_t>(w.slots) * 3, 0.0);

  for (int p = 0; p < w.slots; ++p) {
    for (int j = 0; j < w.J; ++j) {
      for (int axis = 0; axis < 3; ++axis) {
        for (int f = 0; f < t; ++f) {
          w.hist(p, j, axis, f) = scene.coord(p, start + f, j, axis);
        }
        for (int f = 0; f < T; ++f) {
          w.future(p, j, axis, f) = scene.coord(p, start + t + f, j, axis);
        }
      }
    }
  }
  return w;
}

TrajectoryWindow sample_window(const Scene& scene, int t, int T, Rng& rng) {
  if (t < 1 || T < 1) throw std::invalid_argument("sample_window: t and T must be >= 1");
  const int F = scene.frame_count();
  if (F < t + T) {
    throw std::invalid_argument("sample_window: scene has " + std::to_string(F) +
                                " frames, needs at least " + std::to_string(t + T));
  }
  const int start = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(F - (t + T) + 1)));
  return slice_window(scene, start, t, T);
}

std::vector<double> pad_future(const std::vector<double>& history, int t, int T) {
  if (t < 1 || T < 0) throw std::invalid_argument("pad_future: need t >= 1 and T >= 0");
  if (history.size() % static_cast<std::size_t>(t) != 0) {
    throw std::invalid_argument("pad_future: array size " + std::to_string(history.size()) +
                                " is not a multiple of t = " + std::to_string(t));
  }
  const std::size_t rows = history.size() / static_cast<std::size_t>(t);
  std::vector<double> out(rows * static_cast<std::size_t>(t + T));
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = history.data() + r * static_cast<std::size_t>(t);
    double* dst = out.data() + r * static_cast<std::size_t>(t + T);
    for (int f = 0; f < t; ++f) dst[f] = src[f];
    const double hold = src[t - 1];
    for (int f = t; f < t + T; ++f) dst[f] = hold;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Translation removal / restoration

namespace {

void remove_translation_at_root(TrajectoryWindow& window, int root) {
  if (window.translation_removed) {
    throw std::logic_error("remove_translation: translation already removed");
  }
  if (root < 0 || root >= window.J) {
    throw std::invalid_argument("remove_translation: root joint " + std::to_string(root) +
                                " out of range for " + std::to_string(window.J) + " joints");
  }
  window.saved_history = window.history;
  window.saved_future = window.future_gt;
  window.root_offsets.assign(static_cast<std::size_t>(window.slots) * 3, 0.0);
  for (int p = 0; p < window.slots; ++p) {
    if (!window.padding_mask[static_cast<std::size_t>(p)]) continue;
    for (int axis = 0; axis < 3; ++axis) {
      const double offset = window.hist(p, root, axis, window.t - 1);
      window.root_offsets[static_cast<std::size_t>(p) * 3 + static_cast<std::size_t>(axis)] =
          offset;
      for (int j = 0; j < window.J; ++j) {
        for (int f = 0; f < window.t; ++f) window.hist(p, j, axis, f) -= offset;
        for (int f = 0; f < window.T; ++f) {
          if (window.has_future()) window.future(p, j, axis, f) -= offset;
        }
      }
    }
  }
  window.translation_removed = true;
}

}  // namespace

void remove_translation(TrajectoryWindow& window, const SkeletonDef& skeleton) {
  if (skeleton.joint_count() != window.J) {
    throw std::invalid_argument("remove_translation: skeleton has " +
                                std::to_string(skeleton.joint_count()) + " joints, window has " +
                                std::to_string(window.J));
  }
  remove_translation_at_root(window, skeleton.root_joint);
}

void remove_translation(TrajectoryWindow& window) {
  remove_translation_at_root(window, window.root_joint);
}

void restore_translation(TrajectoryWindow& window) {
  if (!window.translation_removed) {
    throw std::runtime_error("restore_translation: window has no removed translation to restore");
  }
  window.history = std::move(window.saved_history);
  window.future_gt = std::move(window.saved_future);
  window.saved_history.clear();
  window.saved_future.clear();
  window.root_offsets.assign(static_cast<std::size_t>(window.slots) * 3, 0.0);
  window.translation_removed = false;
}

// ---------------------------------------------------------------------------
// Scene mixing

Scene mix_scenes(const std::vector<Scene>& sources, int n_persons, int t, int T, Rng& rng,
                 const MixOptions& options) {
  if (n_persons < 1) throw std::invalid_argument("mix_scenes: n_persons must be >= 1");
  if (static_cast<std::size_t>(n_persons) > sources.size()) {
    throw std::invalid_argument("mix_scenes: need " + std::to_string(n_persons) +
                                " distinct sources, have " + std::to_string(sources.size()));
  }

  const std::vector<int> order = rng.permutation(static_cast<int>(sources.size()));

  Scene mixed;
  mixed.units = "m";
  const int total = t + T;

  for (int i = 0; i < n_persons; ++i) {
    const Scene& src = sources[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
    if (i == 0) {
      mixed.fps = src.fps;
      mixed.skeleton = src.skeleton;
    } else {
      if (src.fps != mixed.fps) {
        throw std::invalid_argument("mix_scenes: source fps " + std::to_string(src.fps) +
                                    " differs from " + std::to_string(mixed.fps));
      }
      if (!src.skeleton.compatible(mixed.skeleton)) {
        throw std::invalid_argument("mix_scenes: source skeletons are incompatible");
      }
    }
    const int F = src.frame_count();
    if (F < total) {
      throw std::invalid_argument("mix_scenes: source with " + std::to_string(F) +
                                  " frames cannot supply " + std::to_string(total));
    }

    const auto person_idx =
        static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(src.persons.size())));
    const int start = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(F - total + 1)));
    const double theta = options.rotate ? rng.angle() : 0.0;
    const double half = options.placement_extent / 2.0;
    const double dx = rng.uniform(-half, half);
    const double dz = rng.uniform(-half, half);

    const int J = src.joint_count();
    PersonTrack track;
    track.id = "p" + std::to_string(i) + "_" + src.persons[static_cast<std::size_t>(person_idx)].id;
    track.joints.resize(static_cast<std::size_t>(total) * static_cast<std::size_t>(J) * 3);
    for (int f = 0; f < total; ++f) {
      for (int j = 0; j < J; ++j) {
        for (int axis = 0; axis < 3; ++axis) {
          track.joints[src.coord_index(f, j, axis)] =
              src.coord(person_idx, start + f, j, axis);
        }
      }
    }

    // Rigid placement: recenter the ground-plane root position at the first
    // frame to the origin, spin about the vertical axis, then slide to a
    // uniform spot in the placement square.
    const int root = src.skeleton.root_joint;
    const double cx = track.joints[src.coord_index(0, root, 0)];
    const double cz = track.joints[src.coord_index(0, root, 2)];
    for (std::size_t k = 0; k < track.joints.size(); k += 3) {
      track.joints[k] -= cx;
      track.joints[k + 2] -= cz;
    }
    if (options.rotate) rotate_about_y(track.joints, theta);
    for (std::size_t k = 0; k < track.joints.size(); k += 3) {
      track.joints[k] += dx;
      track.joints[k + 2] += dz;
    }

    mixed.persons.push_back(std::move(track));
  }
  return mixed;
}

// ---------------------------------------------------------------------------
// Batch assembly

TrajectoryWindow pad_to_slots(const TrajectoryWindow& window, int n_slots) {
  const int real = window.real_count();
  if (real > n_slots) {
    throw std::invalid_argument("pad_to_slots: window has " + std::to_string(real) +
                                " real persons, more than " + std::to_string(n_slots) + " slots");
  }
  TrajectoryWindow out;
  out.t = window.t;
  out.T = window.T;
  out.J = window.J;
  out.slots = n_slots;
  out.root_joint = window.root_joint;
  out.translation_removed = window.translation_removed;
  const std::size_t hist_per_slot = static_cast<std::size_t>(window.J) * 3 *
                                    static_cast<std::size_t>(window.t);
  const std::size_t fut_per_slot = static_cast<std::size_t>(window.J) * 3 *
                                   static_cast<std::size_t>(window.T);
  out.history.assign(static_cast<std::size_t>(n_slots) * hist_per_slot, 0.0);
  if (window.has_future()) {
    out.future_gt.assign(static_cast<std::size_t>(n_slots) * fut_per_slot, 0.0);
  }
  out.padding_mask.assign(static_cast<std::size_t>(n_slots), false);
  out.root_offsets.assign(static_cast<std::size_t>(n_slots) * 3, 0.0);
  if (window.translation_removed) {
    out.saved_history.assign(out.history.size(), 0.0);
    if (window.has_future()) out.saved_future.assign(out.future_gt.size(), 0.0);
  }

  int dst = 0;
  for (int src = 0; src < window.slots; ++src) {
    if (!window.padding_mask[static_cast<std::size_t>(src)]) continue;
    const auto s = static_cast<std::size_t>(src);
    const auto d = static_cast<std::size_t>(dst);
    std::copy_n(window.history.begin() + static_cast<std::ptrdiff_t>(s * hist_per_slot),
                hist_per_slot, out.history.begin() + static_cast<std::ptrdiff_t>(d * hist_per_slot));
    if (window.has_future()) {
      std::copy_n(window.future_gt.begin() + static_cast<std::ptrdiff_t>(s * fut_per_slot),
                  fut_per_slot,
                  out.future_gt.begin() + static_cast<std::ptrdiff_t>(d * fut_per_slot));
    }
    if (window.translation_removed) {
      std::copy_n(window.saved_history.begin() + static_cast<std::ptrdiff_t>(s * hist_per_slot),
                  hist_per_slot,
                  out.saved_history.begin() + static_cast<std::ptrdiff_t>(d * hist_per_slot));
      if (window.has_future()) {
        std::copy_n(window.saved_future.begin() + static_cast<std::ptrdiff_t>(s * fut_per_slot),
                    fut_per_slot,
                    out.saved_future.begin() + static_cast<std::ptrdiff_t>(d * fut_per_slot));
      }
    }
    for (int axis = 0; axis < 3; ++axis) {
      out.root_offsets[d * 3 + static_cast<std::size_t>(axis)] =
          window.root_offsets[s * 3 + static_cast<std::size_t>(axis)];
    }
    out.padding_mask[d] = true;
    ++dst;
  }
  return out;
}

std::vector<TrajectoryWindow> assemble_batch(const std::vector<TrajectoryWindow>& windows,
                                             int n_slots) {
  std::vector<TrajectoryWindow> batch;
  batch.reserve(windows.size());
  for (std::size_t i = 0; i < windows.size(); ++i) {
    if (i > 0 && (windows[i].t != windows[0].t || windows[i].T != windows[0].T ||
                  windows[i].J != windows[0].J)) {
      throw std::invalid_argument("assemble_batch: window " + std::to_string(i) +
                                  " does not share t/T/J with the first window");
    }
    batch.push_back(pad_to_slots(windows[i], n_slots));
  }
  return batch;
}

}  // namespace somoformer
