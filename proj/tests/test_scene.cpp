#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "somoformer/rng.hpp"
#include "somoformer/scene.hpp"
#include "somoformer/synthetic.hpp"
#include "support/test_util.hpp"

using namespace somoformer;

namespace {

const char* kMinimalScene = R"({
  "fps": 10,
  "units": "m",
  "skeleton": {"names": ["neck", "hip"], "root": "neck"},
  "persons": [
    {"id": "a", "joints": [
      [[0.25, 1.5, -0.75], [0.25, 0.9, -0.75]],
      [[0.35, 1.5, -0.70], [0.35, 0.9, -0.70]]
    ]}
  ]
})";

Scene two_person_scene(int frames) {
  Scene s;
  s.fps = 10.0;
  s.skeleton.joint_names = {"neck", "hip"};
  s.skeleton.root_joint = 0;
  for (int p = 0; p < 2; ++p) {
    PersonTrack person;
    person.id = "p" + std::to_string(p);
    for (int f = 0; f < frames; ++f) {
      for (int j = 0; j < 2; ++j) {
        person.joints.push_back(0.1 * f + p);          // x encodes frame and person
        person.joints.push_back(1.5 - 0.6 * j);        // y encodes joint
        person.joints.push_back(0.01 * f * j - 2.0 * p);
      }
    }
    s.persons.push_back(std::move(person));
  }
  return s;
}

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

double dist3(const double* a, const double* b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

}  // namespace

TEST_CASE("minimal scene parses with the right dimensions") {
  Scene s = parse_scene(kMinimalScene);
  CHECK(s.frame_count() == 2);
  CHECK(s.joint_count() == 2);
  CHECK(s.fps == 10.0);
  CHECK(s.skeleton.root_joint == 0);
  CHECK(s.persons[0].id == "a");
  CHECK(s.coord(0, 1, 0, 0) == 0.35);
  CHECK(s.coord(0, 0, 1, 1) == 0.9);
}

TEST_CASE("parse errors carry line context") {
  const std::string broken = "{\n  \"fps\": 10,\n  \"units\": }";
  try {
    parse_scene(broken, "broken.json");
    FAIL("expected parse error");
  } catch (const std::runtime_error& err) {
    const std::string msg = err.what();
    CHECK(msg.find("broken.json") != std::string::npos);
    CHECK(msg.find("line 3") != std::string::npos);
  }
}

TEST_CASE("validation errors name the offending person, frame and joint") {
  Scene s = two_person_scene(3);
  s.persons[1].joints[s.coord_index(2, 1, 1)] = std::nan("");
  try {
    s.validate();
    FAIL("expected validation error");
  } catch (const std::invalid_argument& err) {
    const std::string msg = err.what();
    CHECK(msg.find("p1") != std::string::npos);
    CHECK(msg.find("frame 2") != std::string::npos);
    CHECK(msg.find("hip") != std::string::npos);
  }

  // Non-numeric coordinate inside JSON is rejected with the same context.
  const std::string with_null = R"({
    "fps": 10, "units": "m",
    "skeleton": {"names": ["neck"], "root": "neck"},
    "persons": [{"id": "a", "joints": [[[0, null, 0]]]}]
  })";
  CHECK_THROWS_WITH_AS(parse_scene(with_null),
                       doctest::Contains("joint 'neck'"), std::invalid_argument);
}

TEST_CASE("ragged and structurally broken scenes are rejected") {
  CHECK_THROWS_AS(parse_scene(R"({"fps": 10, "units": "m",
    "skeleton": {"names": ["a", "a"], "root": "a"},
    "persons": [{"id": "x", "joints": [[[0,0,0],[0,0,0]]]}]})"),
                  std::invalid_argument);  // duplicate joint names
  CHECK_THROWS_AS(parse_scene(R"({"fps": 10, "units": "m",
    "skeleton": {"names": ["a"], "root": "b"},
    "persons": [{"id": "x", "joints": [[[0,0,0]]]}]})"),
                  std::invalid_argument);  // unknown root
  CHECK_THROWS_WITH_AS(parse_scene(R"({"fps": 10, "units": "m",
    "skeleton": {"names": ["a", "b"], "root": "a"},
    "persons": [{"id": "x", "joints": [[[0,0,0],[0,0,0]], [[1,1,1]]]}]})"),
                       doctest::Contains("frame 1"), std::invalid_argument);  // ragged frame
  CHECK_THROWS_AS(parse_scene(R"({"fps": 10, "units": "m",
    "skeleton": {"names": ["a"], "root": "a"}, "persons": []})"),
                  std::invalid_argument);  // no persons
  CHECK_THROWS_AS(parse_scene(R"({"fps": 0, "units": "m",
    "skeleton": {"names": ["a"], "root": "a"},
    "persons": [{"id": "x", "joints": [[[0,0,0]]]}]})"),
                  std::invalid_argument);  // bad fps
}

TEST_CASE("save/load roundtrip preserves coordinates bit-for-bit") {
  Rng rng(31);
  Scene s = two_person_scene(5);
  // Perturb with awkward doubles to stress shortest-roundtrip printing.
  for (auto& person : s.persons)
    for (auto& v : person.joints) v += rng.uniform(-1e-3, 1e-3);

  const std::string path = temp_path("somoformer_scene_roundtrip.json");
  save_scene(s, path);
  Scene loaded = load_scene(path);
  REQUIRE(loaded.persons.size() == s.persons.size());
  for (std::size_t p = 0; p < s.persons.size(); ++p) {
    CHECK(loaded.persons[p].id == s.persons[p].id);
    CHECK(loaded.persons[p].joints == s.persons[p].joints);  // bitwise
  }
  CHECK(loaded.fps == s.fps);
  CHECK(loaded.skeleton.joint_names == s.skeleton.joint_names);

  // Serialization is canonical: a second pass is byte-identical.
  CHECK(serialize_scene(loaded) == serialize_scene(s));
  std::remove(path.c_str());

  CHECK_THROWS_AS(load_scene("/nonexistent/nowhere.json"), std::runtime_error);
}

TEST_CASE("sample_window slices contiguous frames for every person") {
  Scene s = two_person_scene(12);
  Rng rng(11);
  TrajectoryWindow w = sample_window(s, 3, 2, rng);
  CHECK(w.t == 3);
  CHECK(w.T == 2);
  CHECK(w.J == 2);
  CHECK(w.slots == 2);
  CHECK(w.real_count() == 2);
  CHECK_FALSE(w.translation_removed);

  // x encodes 0.1*frame + person, so consecutive history frames step by 0.1.
  for (int p = 0; p < 2; ++p) {
    for (int f = 1; f < 3; ++f) {
      CHECK(w.hist(p, 0, 0, f) - w.hist(p, 0, 0, f - 1) == doctest::Approx(0.1));
    }
    CHECK(w.future(p, 0, 0, 0) - w.hist(p, 0, 0, 2) == doctest::Approx(0.1));
  }
}

TEST_CASE("sample_window start frame is forced at F == t+T and uniform otherwise") {
  Scene s = two_person_scene(5);
  Rng rng(13);
  TrajectoryWindow w = sample_window(s, 3, 2, rng);
  CHECK(w.hist(0, 0, 0, 0) == s.coord(0, 0, 0, 0));  // start 0 forced

  CHECK_THROWS_AS(sample_window(s, 4, 2, rng), std::invalid_argument);

  // F = t+T+1: two possible starts, empirically near-uniform.
  Scene s6 = two_person_scene(6);
  int zero_starts = 0;
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    TrajectoryWindow v = sample_window(s6, 3, 2, rng);
    if (v.hist(0, 0, 0, 0) == s6.coord(0, 0, 0, 0)) ++zero_starts;
  }
  const double expected = draws / 2.0;
  const double chi2 = 2.0 * (zero_starts - expected) * (zero_starts - expected) / expected;
  CHECK(chi2 < 11.0);  // 99.9% quantile of chi-square with 1 dof

  // Seeded determinism.
  Rng r1(99), r2(99);
  TrajectoryWindow a = sample_window(s6, 3, 2, r1);
  TrajectoryWindow b = sample_window(s6, 3, 2, r2);
  CHECK(a.history == b.history);
  CHECK(a.future_gt == b.future_gt);
}

TEST_CASE("pad_future holds the last history frame") {
  CHECK(pad_future({1, 2, 3}, 3, 2) == std::vector<double>{1, 2, 3, 3, 3});
  CHECK(pad_future({5, 5}, 2, 3) == std::vector<double>{5, 5, 5, 5, 5});
  // Two rows, trailing time axis.
  CHECK(pad_future({1, 2, 7, 8}, 2, 2) == std::vector<double>{1, 2, 2, 2, 7, 8, 8, 8});
  CHECK_THROWS_AS(pad_future({1, 2, 3}, 2, 2), std::invalid_argument);
}

TEST_CASE("remove_translation zeroes the root at the last history frame") {
  Scene s = two_person_scene(8);
  Rng rng(17);
  TrajectoryWindow w = sample_window(s, 4, 3, rng);
  const TrajectoryWindow original = w;

  remove_translation(w, s.skeleton);
  CHECK(w.translation_removed);
  for (int p = 0; p < w.slots; ++p) {
    for (int axis = 0; axis < 3; ++axis) {
      CHECK(w.hist(p, s.skeleton.root_joint, axis, w.t - 1) == 0.0);  // exactly
      CHECK(w.root_offsets[static_cast<std::size_t>(p) * 3 + static_cast<std::size_t>(axis)] ==
            original.hist(p, s.skeleton.root_joint, axis, w.t - 1));
    }
  }
  CHECK_THROWS_AS(remove_translation(w, s.skeleton), std::logic_error);

  restore_translation(w);
  CHECK_FALSE(w.translation_removed);
  CHECK(w.history == original.history);      // bitwise
  CHECK(w.future_gt == original.future_gt);  // bitwise
  CHECK_THROWS_AS(restore_translation(w), std::runtime_error);
}

TEST_CASE("globally shifted windows become near-identical local windows") {
  Scene s = two_person_scene(8);
  Scene shifted = s;
  for (auto& person : shifted.persons) {
    for (std::size_t i = 0; i < person.joints.size(); i += 3) {
      person.joints[i] += 13.25;
      person.joints[i + 1] += -2.5;
      person.joints[i + 2] += 101.0;
    }
  }
  Rng r1(21), r2(21);
  TrajectoryWindow a = sample_window(s, 4, 3, r1);
  TrajectoryWindow b = sample_window(shifted, 4, 3, r2);
  remove_translation(a, s.skeleton);
  remove_translation(b, s.skeleton);
  CHECK(somoformer::testing::max_abs_diff(a.history, b.history) < 1e-9);
  CHECK(somoformer::testing::max_abs_diff(a.future_gt, b.future_gt) < 1e-9);
}

TEST_CASE("mix_scenes builds placements that preserve each source's geometry") {
  Rng gen(41);
  std::vector<Scene> sources = make_walker_scenes(4, gen);

  Rng rng(42);
  Scene mixed = mix_scenes(sources, 3, 5, 4, rng);
  CHECK(mixed.persons.size() == 3);
  CHECK(mixed.frame_count() == 9);
  CHECK(mixed.fps == sources[0].fps);
  mixed.validate();

  // Rigid placement: every intra-person pairwise joint distance per frame
  // matches some window of the source clip. Compare against the source by
  // matching on bone-length signatures frame by frame.
  const int J = mixed.joint_count();
  for (const auto& person : mixed.persons) {
    // Locate the source scene this person came from via its id suffix.
    const std::string src_id = person.id.substr(person.id.find('_') + 1);
    (void)src_id;  // all sources share the walker id; verify rigidity instead
    bool matched_any_source = false;
    for (const auto& src : sources) {
      // Try every admissible start frame for a full-window rigid match.
      const int F = src.frame_count();
      for (int start = 0; start + 9 <= F && !matched_any_source; ++start) {
        double worst = 0.0;
        for (int f = 0; f < 9; ++f) {
          for (int a = 0; a < J; ++a) {
            for (int b = a + 1; b < J; ++b) {
              const double dm = dist3(&person.joints[mixed.coord_index(f, a, 0)],
                                      &person.joints[mixed.coord_index(f, b, 0)]);
              const double ds = dist3(&src.persons[0].joints[src.coord_index(start + f, a, 0)],
                                      &src.persons[0].joints[src.coord_index(start + f, b, 0)]);
              worst = std::max(worst, std::abs(dm - ds));
            }
          }
        }
        if (worst < 1e-9) matched_any_source = true;
      }
      if (matched_any_source) break;
    }
    CHECK(matched_any_source);
  }

  // Determinism: same seed, byte-identical result.
  Rng rng2(42);
  CHECK(serialize_scene(mix_scenes(sources, 3, 5, 4, rng2)) == serialize_scene(mixed));

  // Degenerate single-person mix without rotation is a pure ground-plane
  // shift: y is bit-equal to some source window and per-axis x/z offsets are
  // constant across frames and joints.
  Rng rng3(43);
  Scene one = mix_scenes(sources, 1, 5, 4, rng3, MixOptions{.placement_extent = 4.0, .rotate = false});
  CHECK(one.persons.size() == 1);
  {
    const auto& person = one.persons[0];
    bool matched = false;
    for (const auto& src : sources) {
      for (int start = 0; start + 9 <= src.frame_count() && !matched; ++start) {
        bool y_equal = true;
        for (int f = 0; f < 9 && y_equal; ++f)
          for (int j = 0; j < J && y_equal; ++j)
            y_equal = person.joints[one.coord_index(f, j, 1)] ==
                      src.persons[0].joints[src.coord_index(start + f, j, 1)];
        if (!y_equal) continue;
        const double off_x = person.joints[one.coord_index(0, 0, 0)] -
                             src.persons[0].joints[src.coord_index(start, 0, 0)];
        const double off_z = person.joints[one.coord_index(0, 0, 2)] -
                             src.persons[0].joints[src.coord_index(start, 0, 2)];
        double worst = 0.0;
        for (int f = 0; f < 9; ++f) {
          for (int j = 0; j < J; ++j) {
            worst = std::max(worst, std::abs(person.joints[one.coord_index(f, j, 0)] -
                                             src.persons[0].joints[src.coord_index(start + f, j, 0)] -
                                             off_x));
            worst = std::max(worst, std::abs(person.joints[one.coord_index(f, j, 2)] -
                                             src.persons[0].joints[src.coord_index(start + f, j, 2)] -
                                             off_z));
          }
        }
        if (worst < 1e-9) matched = true;
      }
      if (matched) break;
    }
    CHECK(matched);
  }

  CHECK_THROWS_AS(mix_scenes(sources, 5, 5, 4, rng), std::invalid_argument);
  CHECK_THROWS_AS(mix_scenes(sources, 2, 100, 100, rng), std::invalid_argument);
}

TEST_CASE("mix_scenes with rotation still preserves pairwise distances") {
  Rng gen(44);
  std::vector<Scene> sources = make_walker_scenes(3, gen);
  Rng rng(45);
  Scene mixed = mix_scenes(sources, 2, 6, 6, rng, MixOptions{.placement_extent = 2.0, .rotate = true});
  const int J = mixed.joint_count();
  // Distances inside one person at one frame must survive the rigid motion;
  // spot-check frame 0 and the last frame against rigidity transported from
  // frame-to-frame consistency of the synthetic walker (bone lengths).
  for (const auto& person : mixed.persons) {
    const double bone0 = dist3(&person.joints[mixed.coord_index(0, 0, 0)],
                               &person.joints[mixed.coord_index(0, 1, 0)]);
    for (int f = 1; f < mixed.frame_count(); ++f) {
      const double bone = dist3(&person.joints[mixed.coord_index(f, 0, 0)],
                                &person.joints[mixed.coord_index(f, 1, 0)]);
      CHECK(std::abs(bone - bone0) < 1e-9);
    }
  }
}

TEST_CASE("pad_to_slots packs real persons and masks the rest") {
  Scene s = two_person_scene(8);
  Rng rng(51);
  TrajectoryWindow w = sample_window(s, 4, 3, rng);

  TrajectoryWindow padded = pad_to_slots(w, 4);
  CHECK(padded.slots == 4);
  CHECK(padded.padding_mask == std::vector<bool>{true, true, false, false});
  for (int j = 0; j < w.J; ++j)
    for (int axis = 0; axis < 3; ++axis)
      for (int f = 0; f < w.t; ++f) {
        CHECK(padded.hist(0, j, axis, f) == w.hist(0, j, axis, f));
        CHECK(padded.hist(1, j, axis, f) == w.hist(1, j, axis, f));
        CHECK(padded.hist(2, j, axis, f) == 0.0);
        CHECK(padded.hist(3, j, axis, f) == 0.0);
      }

  CHECK_THROWS_AS(pad_to_slots(w, 1), std::invalid_argument);

  // Single real person into 3 slots.
  Scene solo = two_person_scene(8);
  solo.persons.resize(1);
  TrajectoryWindow sw = sample_window(solo, 4, 3, rng);
  TrajectoryWindow sp = pad_to_slots(sw, 3);
  CHECK(sp.padding_mask == std::vector<bool>{true, false, false});

  // Packing then unpacking by mask recovers the original persons exactly.
  const std::size_t per_slot = static_cast<std::size_t>(w.J) * 3 * static_cast<std::size_t>(w.t);
  for (int slot = 0; slot < padded.slots; ++slot) {
    if (!padded.padding_mask[static_cast<std::size_t>(slot)]) continue;
    for (std::size_t i = 0; i < per_slot; ++i) {
      CHECK(padded.history[static_cast<std::size_t>(slot) * per_slot + i] ==
            w.history[static_cast<std::size_t>(slot) * per_slot + i]);
    }
  }

  auto batch = assemble_batch({w, w, sw}, 4);
  CHECK(batch.size() == 3);
  CHECK(batch[0].history == batch[1].history);

  TrajectoryWindow other = sample_window(s, 3, 4, rng);
  CHECK_THROWS_AS(assemble_batch({w, other}, 4), std::invalid_argument);
}

TEST_CASE("synthetic walkers have constant bone lengths and finite motion") {
  Rng rng(61);
  Scene s = make_walker_scene(rng);
  s.validate();
  CHECK(s.frame_count() == 120);
  CHECK(s.joint_count() == 13);
  CHECK(s.fps == 15.0);

  // Bones: fixed segment pairs of the walker's kinematic tree.
  const std::vector<std::pair<int, int>> bones = {
      {0, 1}, {0, 2}, {1, 3}, {2, 4}, {3, 5}, {4, 6},
      {7, 9}, {8, 10}, {9, 11}, {10, 12}};
  for (const auto& [a, b] : bones) {
    const double ref = dist3(&s.persons[0].joints[s.coord_index(0, a, 0)],
                             &s.persons[0].joints[s.coord_index(0, b, 0)]);
    CHECK(ref > 0.05);
    for (int f = 1; f < s.frame_count(); ++f) {
      const double d = dist3(&s.persons[0].joints[s.coord_index(f, a, 0)],
                             &s.persons[0].joints[s.coord_index(f, b, 0)]);
      CHECK(std::abs(d - ref) < 1e-9);
    }
  }

  // The walker advances: root ground-plane displacement over the clip is
  // a sizable fraction of expected speed * duration.
  const double dx = s.coord(0, s.frame_count() - 1, 0, 0) - s.coord(0, 0, 0, 0);
  const double dz = s.coord(0, s.frame_count() - 1, 0, 2) - s.coord(0, 0, 0, 2);
  CHECK(std::sqrt(dx * dx + dz * dz) > 1.0);

  // Seeded determinism and seed sensitivity.
  Rng r1(62), r2(62), r3(63);
  CHECK(serialize_scene(make_walker_scene(r1)) == serialize_scene(make_walker_scene(r2)));
  CHECK(serialize_scene(make_walker_scene(r1)) != serialize_scene(make_walker_scene(r3)));
}
