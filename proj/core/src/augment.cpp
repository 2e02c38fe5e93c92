#include "somoformer/augment.hpp"

#include <cmath>
#include <stdexcept>

namespace somoformer {

void rotate_about_y(std::vector<double>& coords, double theta) {
  if (!std::isfinite(theta)) throw std::invalid_argument("rotate_about_y: theta must be finite");
  if (coords.size() % 3 != 0) {
    throw std::invalid_argument("rotate_about_y: coordinate array size is not a multiple of 3");
  }
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  for (std::size_t i = 0; i < coords.size(); i += 3) {
    const double x = coords[i];
    const double z = coords[i + 2];
    coords[i] = x * c + z * s;
    coords[i + 2] = -x * s + z * c;
  }
}

void rotate_window(TrajectoryWindow& window, double theta) {
  if (!std::isfinite(theta)) throw std::invalid_argument("rotate_window: theta must be finite");
  if (window.translation_removed) {
    throw std::logic_error("rotate_window: window must be in global coordinates");
  }
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  for (int p = 0; p < window.slots; ++p) {
    for (int j = 0; j < window.J; ++j) {
      for (int f = 0; f < window.t; ++f) {
        const double x = window.hist(p, j, 0, f);
        const double z = window.hist(p, j, 2, f);
        window.hist(p, j, 0, f) = x * c + z * s;
        window.hist(p, j, 2, f) = -x * s + z * c;
      }
      for (int f = 0; f < window.T && window.has_future(); ++f) {
        const double x = window.future(p, j, 0, f);
        const double z = window.future(p, j, 2, f);
        window.future(p, j, 0, f) = x * c + z * s;
        window.future(p, j, 2, f) = -x * s + z * c;
      }
    }
  }
}

void reverse_window(TrajectoryWindow& window) {
  if (window.translation_removed) {
    throw std::logic_error("reverse_window: window must be in global coordinates");
  }
  if (!window.has_future()) {
    throw std::invalid_argument("reverse_window: window has no future frames to reverse into");
  }
  const int total = window.t + window.T;
  std::vector<double> seq(static_cast<std::size_t>(total));
  for (int p = 0; p < window.slots; ++p) {
    for (int j = 0; j < window.J; ++j) {
      for (int axis = 0; axis < 3; ++axis) {
        for (int f = 0; f < window.t; ++f) seq[static_cast<std::size_t>(f)] = window.hist(p, j, axis, f);
        for (int f = 0; f < window.T; ++f)
          seq[static_cast<std::size_t>(window.t + f)] = window.future(p, j, axis, f);
        for (int f = 0; f < window.t; ++f)
          window.hist(p, j, axis, f) = seq[static_cast<std::size_t>(total - 1 - f)];
        for (int f = 0; f < window.T; ++f)
          window.future(p, j, axis, f) = seq[static_cast<std::size_t>(window.T - 1 - f)];
      }
    }
  }
}

void permute_persons(TrajectoryWindow& window, const std::vector<int>& perm) {
  const auto n = static_cast<std::size_t>(window.slots);
  if (perm.size() != n) {
    throw std::invalid_argument("permute_persons: permutation size " +
                                std::to_string(perm.size()) + " does not match " +
                                std::to_string(window.slots) + " slots");
  }
  std::vector<bool> hit(n, false);
  for (int v : perm) {
    if (v < 0 || static_cast<std::size_t>(v) >= n || hit[static_cast<std::size_t>(v)]) {
      throw std::invalid_argument("permute_persons: permutation is not a bijection on slots");
    }
    hit[static_cast<std::size_t>(v)] = true;
  }

  const std::size_t hist_per_slot = window.history.size() / n;
  const std::size_t fut_per_slot = window.has_future() ? window.future_gt.size() / n : 0;

  TrajectoryWindow out = window;  // same shapes; slot blocks rewritten below
  for (std::size_t src = 0; src < n; ++src) {
    const auto dst = static_cast<std::size_t>(perm[src]);
    std::copy_n(window.history.begin() + static_cast<std::ptrdiff_t>(src * hist_per_slot),
                hist_per_slot,
                out.history.begin() + static_cast<std::ptrdiff_t>(dst * hist_per_slot));
    if (window.has_future()) {
      std::copy_n(window.future_gt.begin() + static_cast<std::ptrdiff_t>(src * fut_per_slot),
                  fut_per_slot,
                  out.future_gt.begin() + static_cast<std::ptrdiff_t>(dst * fut_per_slot));
    }
    if (!window.saved_history.empty()) {
      std::copy_n(window.saved_history.begin() + static_cast<std::ptrdiff_t>(src * hist_per_slot),
                  hist_per_slot,
                  out.saved_history.begin() + static_cast<std::ptrdiff_t>(dst * hist_per_slot));
    }
    if (!window.saved_future.empty()) {
      std::copy_n(window.saved_future.begin() + static_cast<std::ptrdiff_t>(src * fut_per_slot),
                  fut_per_slot,
                  out.saved_future.begin() + static_cast<std::ptrdiff_t>(dst * fut_per_slot));
    }
    out.padding_mask[dst] = window.padding_mask[src];
    for (int axis = 0; axis < 3; ++axis) {
      out.root_offsets[dst * 3 + static_cast<std::size_t>(axis)] =
          window.root_offsets[src * 3 + static_cast<std::size_t>(axis)];
    }
  }
  window = std::move(out);
}

void apply_augmentations(TrajectoryWindow& window, const AugmentConfig& config, Rng& rng) {
  if (config.reverse_prob < 0.0 || config.reverse_prob > 1.0) {
    throw std::invalid_argument("apply_augmentations: reverse_prob must lie in [0, 1]");
  }
  if (config.reverse_prob > 0.0 && rng.bernoulli(config.reverse_prob)) {
    reverse_window(window);
  }
  if (config.rotate) {
    rotate_window(window, rng.angle());
  }
  if (config.permute) {
    permute_persons(window, rng.permutation(window.slots));
  }
}

}  // namespace somoformer
