#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "somoformer/adam.hpp"
#include "somoformer/augment.hpp"
#include "somoformer/dct.hpp"
#include "somoformer/model.hpp"
#include "somoformer/scene.hpp"
#include "somoformer/tensor.hpp"

namespace somoformer {

/// Everything a training run needs besides the data itself. Serialized as
/// JSON; every field except `model` has a default.
struct TrainConfig {
  ModelConfig model;
  int epochs = 200;
  int batch_size = 32;
  double lr = 0.001;
  double lr_decay_factor = 0.1;
  double lr_decay_at = 0.9;  // fraction of total steps after which lr decays
  AugmentConfig augment;
  std::uint64_t seed = 0;
  int checkpoint_every_epochs = 0;  // 0: final checkpoint only
  std::string data_dir;             // optional; tooling may override

  void validate() const;
};

std::string train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const std::string& text);

/// Base lr until the decay point (floor(lr_decay_at * total_steps)), then
/// base * lr_decay_factor.
double lr_schedule(std::int64_t step, std::int64_t total_steps, const TrainConfig& config);

/// Weighted multi-layer squared error in coordinate space:
/// sum_l weights[l] * |pred_l - gt|^2 over real persons' future frames,
/// divided by the number of real persons. Differentiable; padded slots
/// contribute nothing. Throws on a non-finite layer sum, identifying the
/// layer and magnitude.
Tensor compute_loss(const std::vector<Tensor>& per_layer_preds, const Tensor& gt_future,
                    const std::vector<bool>& padding_mask, const std::vector<double>& weights);

/// Forward + loss + backward + Adam over one batch; gradients are zeroed
/// afterwards. Returns the batch loss. Uses the optimizer's current lr.
double train_step(const std::vector<TrajectoryWindow>& batch, Parameters& params,
                  AdamOptimizer& adam, const TrainConfig& config, const DctBasis& basis);

struct TrainOutcome {
  std::int64_t steps = 0;
  double first_loss = 0.0;
  double final_loss = 0.0;
  std::string checkpoint_path;
};

/// Full training loop: per-epoch shuffling and augmentation, lr schedule,
/// JSON-lines logging ({"config": ...} header, then one
/// {"epoch", "step", "loss", "lr"} line per step), periodic train
/// checkpoints at `<checkpoint_path>.epoch-<n>`, and a final train
/// checkpoint at `checkpoint_path`. Fully deterministic for a fixed seed.
/// A non-empty `resume_path` restores parameters, optimizer and rng state
/// and continues from the saved epoch, reproducing the uninterrupted run
/// bit-exactly on identical data.
TrainOutcome train(const TrainConfig& config, const std::vector<TrajectoryWindow>& dataset,
                   const std::string& checkpoint_path, const std::string& log_path,
                   const std::string& resume_path = "");

}  // namespace somoformer
