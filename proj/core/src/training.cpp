#include "somoformer/training.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <utility>

#include <nlohmann/json.hpp>

#include "somoformer/checkpoint.hpp"
#include "somoformer/ops.hpp"

namespace somoformer {

void TrainConfig::validate() const {
  model.validate();
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (!(lr > 0.0)) throw std::invalid_argument("TrainConfig: lr must be positive");
  if (!(lr_decay_factor > 0.0)) {
    throw std::invalid_argument("TrainConfig: lr_decay_factor must be positive");
  }
  if (!(lr_decay_at >= 0.0 && lr_decay_at <= 1.0)) {
    throw std::invalid_argument("TrainConfig: lr_decay_at must lie in [0, 1]");
  }
  if (!(augment.reverse_prob >= 0.0 && augment.reverse_prob <= 1.0)) {
    throw std::invalid_argument("TrainConfig: reverse_prob must lie in [0, 1]");
  }
  if (checkpoint_every_epochs < 0) {
    throw std::invalid_argument("TrainConfig: checkpoint_every_epochs must be >= 0");
  }
  for (double w : model.layer_loss_weights) {
    if (!(w >= 0.0)) throw std::invalid_argument("TrainConfig: layer loss weights must be >= 0");
  }
}

std::string train_config_to_json(const TrainConfig& config) {
  nlohmann::json j;
  j["model"] = nlohmann::json::parse(model_config_to_json(config.model));
  j["epochs"] = config.epochs;
  j["batch_size"] = config.batch_size;
  j["lr"] = config.lr;
  j["lr_decay_factor"] = config.lr_decay_factor;
  j["lr_decay_at"] = config.lr_decay_at;
  j["augment"] = {{"rotate", config.augment.rotate},
                  {"reverse_prob", config.augment.reverse_prob},
                  {"permute", config.augment.permute}};
  j["seed"] = config.seed;
  j["checkpoint_every_epochs"] = config.checkpoint_every_epochs;
  j["data"] = config.data_dir;
  return j.dump();
}

TrainConfig train_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& err) {
    throw std::invalid_argument("TrainConfig: invalid JSON: " + std::string(err.what()));
  }
  TrainConfig config;
  try {
    config.model = model_config_from_json(j.at("model").dump());
    config.epochs = j.value("epochs", config.epochs);
    config.batch_size = j.value("batch_size", config.batch_size);
    config.lr = j.value("lr", config.lr);
    config.lr_decay_factor = j.value("lr_decay_factor", config.lr_decay_factor);
    config.lr_decay_at = j.value("lr_decay_at", config.lr_decay_at);
    if (j.contains("augment")) {
      const nlohmann::json& a = j.at("augment");
      config.augment.rotate = a.value("rotate", config.augment.rotate);
      config.augment.reverse_prob = a.value("reverse_prob", config.augment.reverse_prob);
      config.augment.permute = a.value("permute", config.augment.permute);
    }
    config.seed = j.value("seed", config.seed);
    config.checkpoint_every_epochs =
        j.value("checkpoint_every_epochs", config.checkpoint_every_epochs);
    config.data_dir = j.value("data", config.data_dir);
  } catch (const nlohmann::json::exception& err) {
    throw std::invalid_argument("TrainConfig: " + std::string(err.what()));
  }
  config.validate();
  return config;
}

double lr_schedule(std::int64_t step, std::int64_t total_steps, const TrainConfig& config) {
  if (step < 0) throw std::invalid_argument("lr_schedule: step must be >= 0");
  if (total_steps < 1) throw std::invalid_argument("lr_schedule: total_steps must be >= 1");
  const auto decay_start = static_cast<std::int64_t>(
      std::floor(config.lr_decay_at * static_cast<double>(total_steps)));
  return step >= decay_start ? config.lr * config.lr_decay_factor : config.lr;
}

Tensor compute_loss(const std::vector<Tensor>& per_layer_preds, const Tensor& gt_future,
                    const std::vector<bool>& padding_mask, const std::vector<double>& weights) {
  if (per_layer_preds.empty()) {
    throw std::invalid_argument("compute_loss: need at least one layer prediction");
  }
  if (per_layer_preds.size() != weights.size()) {
    throw std::invalid_argument("compute_loss: " + std::to_string(per_layer_preds.size()) +
                                " layer predictions but " + std::to_string(weights.size()) +
                                " weights");
  }
  const Shape& shape = gt_future.shape();
  if (shape.size() != 4) {
    throw std::invalid_argument("compute_loss: ground truth must be [N x J x 3 x T]");
  }
  const int slots = shape[0];
  if (static_cast<int>(padding_mask.size()) != slots) {
    throw std::invalid_argument("compute_loss: mask covers " +
                                std::to_string(padding_mask.size()) + " slots, data has " +
                                std::to_string(slots));
  }
  int real = 0;
  for (bool r : padding_mask) real += r ? 1 : 0;
  if (real == 0) throw std::invalid_argument("compute_loss: every slot is padded");

  Tensor mask(shape);
  const std::size_t per_slot = mask.data().size() / static_cast<std::size_t>(slots);
  for (int p = 0; p < slots; ++p) {
    if (!padding_mask[static_cast<std::size_t>(p)]) continue;
    std::fill_n(mask.data().begin() + static_cast<std::ptrdiff_t>(p * per_slot), per_slot, 1.0);
  }

  Tensor total;
  for (std::size_t layer = 0; layer < per_layer_preds.size(); ++layer) {
    if (per_layer_preds[layer].shape() != shape) {
      throw std::invalid_argument("compute_loss: layer " + std::to_string(layer) +
                                  " prediction shape does not match ground truth");
    }
    Tensor diff = mul(sub(per_layer_preds[layer], gt_future), mask);
    Tensor layer_sum = sum(mul(diff, diff));
    const double magnitude = layer_sum.data()[0];
    if (!std::isfinite(magnitude)) {
      throw std::runtime_error("compute_loss: non-finite loss at layer " + std::to_string(layer) +
                               " (sum = " + std::to_string(magnitude) + ")");
    }
    Tensor weighted = scale(layer_sum, weights[layer] / real);
    total = layer == 0 ? weighted : add(total, weighted);
  }
  return total;
}

namespace {

Tensor gt_tensor(const TrajectoryWindow& window, const ModelConfig& config) {
  if (!window.has_future()) {
    throw std::invalid_argument("train: window has no ground-truth future");
  }
  TrajectoryWindow padded = pad_to_slots(window, config.N_slots);
  return Tensor({config.N_slots, config.J, 3, config.T}, std::move(padded.future_gt));
}

}  // namespace

double train_step(const std::vector<TrajectoryWindow>& batch, Parameters& params,
                  AdamOptimizer& adam, const TrainConfig& config, const DctBasis& basis) {
  if (batch.empty()) throw std::invalid_argument("train_step: empty batch");

  Tape tape;
  Tensor total;
  {
    Tape::Scope scope(tape);
    for (std::size_t i = 0; i < batch.size(); ++i) {
      ForwardResult result = forward(batch[i], params, config.model, basis);
      Tensor loss = compute_loss(result.layer_predictions, gt_tensor(batch[i], config.model),
                                 result.padding_mask, config.model.layer_loss_weights);
      total = i == 0 ? loss : add(total, loss);
    }
    total = scale(total, 1.0 / static_cast<double>(batch.size()));
  }
  backward(total, tape);

  auto named = params.named();
  adam.step(named);
  for (auto& [name, tensor] : named) {
    (void)name;
    tensor.zero_grad();
  }
  return total.data()[0];
}

TrainOutcome train(const TrainConfig& config, const std::vector<TrajectoryWindow>& dataset,
                   const std::string& checkpoint_path, const std::string& log_path,
                   const std::string& resume_path) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("train: dataset is empty");
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    const TrajectoryWindow& w = dataset[i];
    if (w.t != config.model.t || w.T != config.model.T || w.J != config.model.J) {
      throw std::invalid_argument(
          "train: window " + std::to_string(i) + " (t=" + std::to_string(w.t) +
          ", T=" + std::to_string(w.T) + ", J=" + std::to_string(w.J) +
          ") does not match the model (t=" + std::to_string(config.model.t) +
          ", T=" + std::to_string(config.model.T) + ", J=" + std::to_string(config.model.J) + ")");
    }
    if (!w.has_future()) {
      throw std::invalid_argument("train: window " + std::to_string(i) + " has no future frames");
    }
    if (w.real_count() > config.model.N_slots) {
      throw std::invalid_argument("train: window " + std::to_string(i) + " has " +
                                  std::to_string(w.real_count()) + " persons, model fits " +
                                  std::to_string(config.model.N_slots));
    }
  }

  const auto n = static_cast<std::int64_t>(dataset.size());
  const std::int64_t steps_per_epoch = (n + config.batch_size - 1) / config.batch_size;
  const std::int64_t total_steps = steps_per_epoch * config.epochs;

  Rng rng(config.seed);
  Parameters params;
  AdamOptimizer adam(AdamConfig{.lr = config.lr, .beta1 = 0.9, .beta2 = 0.999, .epsilon = 1e-8});
  std::int64_t global_step = 0;
  int first_epoch = 0;

  if (resume_path.empty()) {
    params = init_parameters(config.model, rng);
  } else {
    TrainCheckpoint resumed = load_train_checkpoint(resume_path);
    if (!(resumed.config == config.model)) {
      throw std::invalid_argument("train: resume checkpoint model config differs from the "
                                  "requested configuration");
    }
    params = std::move(resumed.params);
    adam.config() = resumed.state.adam;
    adam.states() = std::move(resumed.state.adam_states);
    rng.restore(resumed.state.rng_state);
    global_step = resumed.state.step;
    first_epoch = resumed.state.epochs_done;
  }

  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw std::runtime_error("train: cannot open log '" + log_path + "'");
  {
    nlohmann::json header;
    header["config"] = nlohmann::json::parse(train_config_to_json(config));
    if (!resume_path.empty()) header["resumed_from"] = resume_path;
    log << header.dump() << "\n";
  }

  const DctBasis basis(config.model.t + config.model.T);
  const auto save_state = [&](const std::string& path, int epochs_done) {
    TrainState state;
    state.step = global_step;
    state.epochs_done = epochs_done;
    state.rng_state = rng.state();
    state.adam = adam.config();
    state.adam_states = adam.states();
    save_train_checkpoint(params, config.model, state, path);
  };

  TrainOutcome outcome;
  bool first_logged = false;
  for (int epoch = first_epoch; epoch < config.epochs; ++epoch) {
    const std::vector<std::uint64_t> order = rng.permutation(static_cast<std::uint64_t>(n));
    for (std::int64_t begin = 0; begin < n; begin += config.batch_size) {
      const std::int64_t end = std::min(n, begin + config.batch_size);
      std::vector<TrajectoryWindow> batch;
      batch.reserve(static_cast<std::size_t>(end - begin));
      for (std::int64_t i = begin; i < end; ++i) {
        TrajectoryWindow window = dataset[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
        apply_augmentations(window, config.augment, rng);
        batch.push_back(std::move(window));
      }
      const double lr = lr_schedule(global_step, total_steps, config);
      adam.set_lr(lr);
      const double loss = train_step(batch, params, adam, config, basis);
      ++global_step;

      nlohmann::json line;
      line["epoch"] = epoch;
      line["step"] = global_step;
      line["loss"] = loss;
      line["lr"] = lr;
      log << line.dump() << "\n";

      if (!first_logged) {
        outcome.first_loss = loss;
        first_logged = true;
      }
      outcome.final_loss = loss;
    }
    if (config.checkpoint_every_epochs > 0 && (epoch + 1) % config.checkpoint_every_epochs == 0) {
      save_state(checkpoint_path + ".epoch-" + std::to_string(epoch + 1), epoch + 1);
    }
  }

  save_state(checkpoint_path, config.epochs);
  log.flush();
  if (!log) throw std::runtime_error("train: failed writing log '" + log_path + "'");
  outcome.steps = global_step;
  outcome.checkpoint_path = checkpoint_path;
  return outcome;
}

}  // namespace somoformer
