#include "somoformer/model.hpp"

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "somoformer/ops.hpp"

namespace somoformer {

namespace {

constexpr double kLayerNormEps = 1e-5;
constexpr double kGridMargin = 1.05;

void require_positive(int value, const char* name) {
  if (value <= 0) {
    throw std::invalid_argument("ModelConfig: " + std::string(name) + " must be positive, got " +
                                std::to_string(value));
  }
}

int clamp_cell(double scaled, int G) {
  const double f = std::floor(scaled);
  if (!(f >= 0.0)) return 0;  // also catches NaN
  if (f >= G) return G - 1;
  return static_cast<int>(f);
}

}  // namespace

void ModelConfig::validate() const {
  require_positive(L, "L");
  require_positive(H, "H");
  require_positive(d_token, "d_token");
  require_positive(e_grid, "e_grid");
  require_positive(d_ff, "d_ff");
  require_positive(G, "G");
  require_positive(t, "t");
  require_positive(T, "T");
  require_positive(J, "J");
  require_positive(N_slots, "N_slots");
  if (d_model() % H != 0) {
    throw std::invalid_argument("ModelConfig: d_model " + std::to_string(d_model()) +
                                " is not divisible by H " + std::to_string(H));
  }
  if (static_cast<int>(layer_loss_weights.size()) != L) {
    throw std::invalid_argument("ModelConfig: expected " + std::to_string(L) +
                                " layer loss weights, got " +
                                std::to_string(layer_loss_weights.size()));
  }
}

bool operator==(const ModelConfig& a, const ModelConfig& b) {
  return a.L == b.L && a.H == b.H && a.d_token == b.d_token && a.e_grid == b.e_grid &&
         a.d_ff == b.d_ff && a.G == b.G && a.t == b.t && a.T == b.T && a.J == b.J &&
         a.N_slots == b.N_slots && a.layer_loss_weights == b.layer_loss_weights;
}

std::string model_config_to_json(const ModelConfig& config) {
  nlohmann::json j;
  j["L"] = config.L;
  j["H"] = config.H;
  j["d_token"] = config.d_token;
  j["e_grid"] = config.e_grid;
  j["d_ff"] = config.d_ff;
  j["G"] = config.G;
  j["t"] = config.t;
  j["T"] = config.T;
  j["J"] = config.J;
  j["N_slots"] = config.N_slots;
  j["layer_loss_weights"] = config.layer_loss_weights;
  return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& err) {
    throw std::invalid_argument("ModelConfig: invalid JSON: " + std::string(err.what()));
  }
  ModelConfig config;
  try {
    config.L = j.at("L").get<int>();
    config.H = j.at("H").get<int>();
    config.d_token = j.at("d_token").get<int>();
    config.e_grid = j.at("e_grid").get<int>();
    config.d_ff = j.at("d_ff").get<int>();
    config.G = j.at("G").get<int>();
    config.t = j.at("t").get<int>();
    config.T = j.at("T").get<int>();
    config.J = j.at("J").get<int>();
    config.N_slots = j.at("N_slots").get<int>();
    config.layer_loss_weights = j.at("layer_loss_weights").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& err) {
    throw std::invalid_argument("ModelConfig: " + std::string(err.what()));
  }
  config.validate();
  return config;
}

namespace {

std::vector<double> default_weights(int L) {
  std::vector<double> w(static_cast<std::size_t>(L), 0.2);
  w.back() = 1.0;
  return w;
}

}  // namespace

ModelConfig tiny_config() {
  ModelConfig c;
  c.L = 2;
  c.H = 2;
  c.d_token = 24;
  c.e_grid = 8;
  c.d_ff = 64;
  c.G = 3;
  c.t = 4;
  c.T = 4;
  c.J = 3;
  c.N_slots = 2;
  c.layer_loss_weights = default_weights(c.L);
  return c;
}

ModelConfig small_config() {
  ModelConfig c;
  c.L = 3;
  c.H = 4;
  c.d_token = 56;
  c.e_grid = 8;
  c.d_ff = 128;
  c.G = 4;
  c.t = 15;
  c.T = 45;
  c.J = 13;
  c.N_slots = 3;
  c.layer_loss_weights = default_weights(c.L);
  return c;
}

ModelConfig desk_config() {
  ModelConfig c;
  c.L = 6;
  c.H = 8;
  c.d_token = 112;
  c.e_grid = 16;
  c.d_ff = 256;
  c.G = 5;
  c.t = 16;
  c.T = 14;
  c.J = 13;
  c.N_slots = 3;
  c.layer_loss_weights = default_weights(c.L);
  return c;
}

ModelConfig paper_config() {
  ModelConfig c;
  c.L = 6;
  c.H = 8;
  c.d_token = 1008;
  c.e_grid = 16;
  c.d_ff = 2048;
  c.G = 5;
  c.t = 16;
  c.T = 14;
  c.J = 13;
  c.N_slots = 3;
  c.layer_loss_weights = default_weights(c.L);
  return c;
}

std::vector<std::pair<std::string, Tensor>> Parameters::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("input_proj", input_proj);
  out.emplace_back("joint_axis_embedding", joint_axis_embedding);
  out.emplace_back("identity_embedding", identity_embedding);
  out.emplace_back("grid_embedding", grid_embedding);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string p = "layers." + std::to_string(i) + ".";
    const LayerParams& l = layers[i];
    out.emplace_back(p + "ln1.gain", l.ln1_gain);
    out.emplace_back(p + "ln1.bias", l.ln1_bias);
    out.emplace_back(p + "attn.wq.weight", l.wq);
    out.emplace_back(p + "attn.wq.bias", l.bq);
    out.emplace_back(p + "attn.wk.weight", l.wk);
    out.emplace_back(p + "attn.wk.bias", l.bk);
    out.emplace_back(p + "attn.wv.weight", l.wv);
    out.emplace_back(p + "attn.wv.bias", l.bv);
    out.emplace_back(p + "attn.wo.weight", l.wo);
    out.emplace_back(p + "attn.wo.bias", l.bo);
    out.emplace_back(p + "ln2.gain", l.ln2_gain);
    out.emplace_back(p + "ln2.bias", l.ln2_bias);
    out.emplace_back(p + "ff.w1.weight", l.w1);
    out.emplace_back(p + "ff.w1.bias", l.b1);
    out.emplace_back(p + "ff.w2.weight", l.w2);
    out.emplace_back(p + "ff.w2.bias", l.b2);
  }
  out.emplace_back("final_norm.gain", final_norm_gain);
  out.emplace_back("final_norm.bias", final_norm_bias);
  out.emplace_back("head.weight", head_weight);
  out.emplace_back("head.bias", head_bias);
  return out;
}

Parameters allocate_parameters(const ModelConfig& config) {
  config.validate();
  const int d = config.d_model();
  const int width = config.t + config.T;

  Parameters params;
  params.input_proj = Tensor({width, config.d_token});
  params.joint_axis_embedding = Tensor({config.J * 3, config.d_token});
  params.identity_embedding = Tensor({config.N_slots, config.d_token});
  params.grid_embedding = Tensor({config.G * config.G, config.e_grid});

  params.layers.resize(static_cast<std::size_t>(config.L));
  for (LayerParams& l : params.layers) {
    l.ln1_gain = Tensor({d}, 1.0);
    l.ln1_bias = Tensor({d});
    l.wq = Tensor({d, d});
    l.bq = Tensor({d});
    l.wk = Tensor({d, d});
    l.bk = Tensor({d});
    l.wv = Tensor({d, d});
    l.bv = Tensor({d});
    l.wo = Tensor({d, d});
    l.bo = Tensor({d});
    l.ln2_gain = Tensor({d}, 1.0);
    l.ln2_bias = Tensor({d});
    l.w1 = Tensor({d, config.d_ff});
    l.b1 = Tensor({config.d_ff});
    l.w2 = Tensor({config.d_ff, d});
    l.b2 = Tensor({d});
  }

  params.final_norm_gain = Tensor({d}, 1.0);
  params.final_norm_bias = Tensor({d});
  params.head_weight = Tensor({d, width});  // exact zeros: untrained == zero velocity
  params.head_bias = Tensor({width});

  for (auto& [name, tensor] : params.named()) {
    (void)name;
    tensor.set_requires_grad(true);
  }
  return params;
}

Parameters init_parameters(const ModelConfig& config, Rng& rng) {
  Parameters params = allocate_parameters(config);
  const auto fill_xavier = [&rng](Tensor& w) {
    const Shape& s = w.shape();
    const double limit = std::sqrt(6.0 / (s[0] + s[1]));
    for (auto& v : w.data()) v = rng.uniform(-limit, limit);
  };
  const auto fill_normal = [&rng](Tensor& w) {
    for (auto& v : w.data()) v = 0.02 * rng.normal();
  };

  fill_xavier(params.input_proj);
  fill_normal(params.joint_axis_embedding);
  fill_normal(params.identity_embedding);
  fill_normal(params.grid_embedding);
  for (LayerParams& l : params.layers) {
    fill_xavier(l.wq);
    fill_xavier(l.wk);
    fill_xavier(l.wv);
    fill_xavier(l.wo);
    fill_xavier(l.w1);
    fill_xavier(l.w2);
  }
  // Output head stays zero.
  return params;
}

std::vector<QueryDesc> query_layout(const ModelConfig& config) {
  std::vector<QueryDesc> out;
  out.reserve(static_cast<std::size_t>(config.query_count()));
  for (int slot = 0; slot < config.N_slots; ++slot)
    for (int joint = 0; joint < config.J; ++joint)
      for (int axis = 0; axis < 3; ++axis) out.push_back({slot, joint, axis});
  return out;
}

const std::vector<double>& AttentionRecords::at(int layer, int head) const {
  if (layer < 0 || layer >= layers || head < 0 || head >= heads) {
    throw std::out_of_range("AttentionRecords: layer " + std::to_string(layer) + ", head " +
                            std::to_string(head) + " out of range");
  }
  return probs[static_cast<std::size_t>(layer) * static_cast<std::size_t>(heads) +
               static_cast<std::size_t>(head)];
}

Tensor tokenize(const TrajectoryWindow& window, const DctBasis& basis) {
  if (!window.translation_removed) {
    throw std::logic_error("tokenize: window must be translation-removed");
  }
  const int width = window.t + window.T;
  if (basis.length() != width) {
    throw std::invalid_argument("tokenize: basis length " + std::to_string(basis.length()) +
                                " does not match t+T = " + std::to_string(width));
  }
  const int Q = window.slots * window.J * 3;
  Tensor tokens({Q, width});
  std::vector<double> row(static_cast<std::size_t>(window.t));
  int q = 0;
  for (int slot = 0; slot < window.slots; ++slot) {
    const bool real = window.padding_mask[static_cast<std::size_t>(slot)];
    for (int joint = 0; joint < window.J; ++joint) {
      for (int axis = 0; axis < 3; ++axis, ++q) {
        if (!real) continue;  // padded slots stay all-zero
        const std::size_t base = window.hist_index(slot, joint, axis, 0);
        std::copy_n(window.history.begin() + static_cast<std::ptrdiff_t>(base), window.t,
                    row.begin());
        const std::vector<double> coeffs = basis.forward(pad_future(row, window.t, window.T));
        std::copy(coeffs.begin(), coeffs.end(),
                  tokens.data().begin() + static_cast<std::ptrdiff_t>(q) * width);
      }
    }
  }
  return tokens;
}

std::vector<int> assign_grid_cells(const TrajectoryWindow& window, int G) {
  if (G <= 0) throw std::invalid_argument("assign_grid_cells: G must be positive");
  if (window.translation_removed) {
    throw std::logic_error("assign_grid_cells: window must be in global coordinates");
  }
  if (window.real_count() == 0) {
    throw std::invalid_argument("assign_grid_cells: no real persons in window");
  }
  const int root = window.root_joint;
  const int last = window.t - 1;

  double min_x = 0.0, max_x = 0.0, min_z = 0.0, max_z = 0.0;
  bool first = true;
  for (int slot = 0; slot < window.slots; ++slot) {
    if (!window.padding_mask[static_cast<std::size_t>(slot)]) continue;
    const double x = window.hist(slot, root, 0, last);
    const double z = window.hist(slot, root, 2, last);
    if (first) {
      min_x = max_x = x;
      min_z = max_z = z;
      first = false;
    } else {
      min_x = std::min(min_x, x);
      max_x = std::max(max_x, x);
      min_z = std::min(min_z, z);
      max_z = std::max(max_z, z);
    }
  }

  const double side = std::max(max_x - min_x, max_z - min_z) * kGridMargin;
  std::vector<int> cells(static_cast<std::size_t>(window.slots));
  const int center = (G / 2) * G + (G / 2);
  if (!(side > 0.0) || !std::isfinite(side)) {
    std::fill(cells.begin(), cells.end(), center);
    return cells;
  }

  const double lo_x = (min_x + max_x) / 2.0 - side / 2.0;
  const double lo_z = (min_z + max_z) / 2.0 - side / 2.0;
  const double cell_width = side / G;
  for (int slot = 0; slot < window.slots; ++slot) {
    const double x = window.hist(slot, root, 0, last);
    const double z = window.hist(slot, root, 2, last);
    const int ix = clamp_cell((x - lo_x) / cell_width, G);
    const int iz = clamp_cell((z - lo_z) / cell_width, G);
    cells[static_cast<std::size_t>(slot)] = ix * G + iz;
  }
  return cells;
}

Tensor embed_tokens(const Tensor& tokens, const std::vector<int>& cells, const Parameters& params,
                    const ModelConfig& config) {
  const int Q = config.query_count();
  const int width = config.t + config.T;
  if (tokens.shape() != Shape{Q, width}) {
    throw std::invalid_argument("embed_tokens: expected tokens of shape [" + std::to_string(Q) +
                                ", " + std::to_string(width) + "]");
  }
  if (static_cast<int>(cells.size()) != config.N_slots) {
    throw std::invalid_argument("embed_tokens: expected " + std::to_string(config.N_slots) +
                                " grid cells, got " + std::to_string(cells.size()));
  }
  const int n_cells = config.G * config.G;
  for (int cell : cells) {
    if (cell < 0 || cell >= n_cells) {
      throw std::out_of_range("embed_tokens: grid cell " + std::to_string(cell) +
                              " out of range [0, " + std::to_string(n_cells) + ")");
    }
  }

  const std::vector<QueryDesc> layout = query_layout(config);
  std::vector<int> joint_axis_rows(layout.size()), slot_rows(layout.size()),
      cell_rows(layout.size());
  for (std::size_t i = 0; i < layout.size(); ++i) {
    joint_axis_rows[i] = layout[i].joint * 3 + layout[i].axis;
    slot_rows[i] = layout[i].slot;
    cell_rows[i] = cells[static_cast<std::size_t>(layout[i].slot)];
  }

  Tensor projected = matmul(tokens, params.input_proj);
  Tensor with_type = add(projected, gather_rows(params.joint_axis_embedding, joint_axis_rows));
  Tensor with_id = add(with_type, gather_rows(params.identity_embedding, slot_rows));
  Tensor grid = gather_rows(params.grid_embedding, cell_rows);
  return concat_last(with_id, grid);
}

EncoderOutput encoder_forward(const Tensor& embedded, const std::vector<bool>& padding_mask,
                              const Parameters& params, const ModelConfig& config,
                              bool record_attention) {
  const int Q = config.query_count();
  const int d = config.d_model();
  if (embedded.shape() != Shape{Q, d}) {
    throw std::invalid_argument("encoder_forward: expected input of shape [" + std::to_string(Q) +
                                ", " + std::to_string(d) + "]");
  }
  if (static_cast<int>(padding_mask.size()) != config.N_slots) {
    throw std::invalid_argument("encoder_forward: mask covers " +
                                std::to_string(padding_mask.size()) + " slots, expected " +
                                std::to_string(config.N_slots));
  }
  if (static_cast<int>(params.layers.size()) != config.L) {
    throw std::invalid_argument("encoder_forward: parameters hold " +
                                std::to_string(params.layers.size()) + " layers, config wants " +
                                std::to_string(config.L));
  }
  bool any_real = false;
  for (bool real : padding_mask) any_real = any_real || real;
  if (!any_real) throw std::invalid_argument("encoder_forward: every slot is masked");

  // Padded slots are masked as keys only; their queries still flow but
  // nothing downstream reads them.
  std::vector<bool> key_keep(static_cast<std::size_t>(Q));
  const std::vector<QueryDesc> layout = query_layout(config);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    key_keep[i] = padding_mask[static_cast<std::size_t>(layout[i].slot)];
  }

  const int d_head = d / config.H;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(d_head));

  EncoderOutput out;
  out.residuals.reserve(static_cast<std::size_t>(config.L));
  if (record_attention) {
    out.attention.layers = config.L;
    out.attention.heads = config.H;
    out.attention.Q = Q;
    out.attention.queries = layout;
    out.attention.probs.resize(static_cast<std::size_t>(config.L) *
                               static_cast<std::size_t>(config.H));
  }

  Tensor x = embedded;
  for (int layer = 0; layer < config.L; ++layer) {
    const LayerParams& l = params.layers[static_cast<std::size_t>(layer)];

    Tensor h = layer_norm(x, l.ln1_gain, l.ln1_bias, kLayerNormEps);
    Tensor q = add_bias(matmul(h, l.wq), l.bq);
    Tensor k = add_bias(matmul(h, l.wk), l.bk);
    Tensor v = add_bias(matmul(h, l.wv), l.bv);

    Tensor attn;
    for (int head = 0; head < config.H; ++head) {
      Tensor qh = slice_last(q, head * d_head, d_head);
      Tensor kh = slice_last(k, head * d_head, d_head);
      Tensor vh = slice_last(v, head * d_head, d_head);
      Tensor scores = scale(matmul(qh, transpose(kh, 0, 1)), inv_sqrt);
      Tensor probs = masked_softmax(scores, key_keep);
      if (record_attention) {
        out.attention.probs[static_cast<std::size_t>(layer) * config.H + head] = probs.data();
      }
      Tensor oh = matmul(probs, vh);
      attn = head == 0 ? oh : concat_last(attn, oh);
    }
    x = add(x, add_bias(matmul(attn, l.wo), l.bo));

    Tensor h2 = layer_norm(x, l.ln2_gain, l.ln2_bias, kLayerNormEps);
    Tensor inner = relu(add_bias(matmul(h2, l.w1), l.b1));
    x = add(x, add_bias(matmul(inner, l.w2), l.b2));

    Tensor readout = layer_norm(x, params.final_norm_gain, params.final_norm_bias, kLayerNormEps);
    out.residuals.push_back(add_bias(matmul(readout, params.head_weight), params.head_bias));
  }
  return out;
}

Tensor decode_prediction(const Tensor& tokens, const Tensor& residual, const DctBasis& basis,
                         const std::vector<double>& root_offsets, const ModelConfig& config) {
  const int Q = config.query_count();
  const int width = config.t + config.T;
  if (tokens.shape() != Shape{Q, width} || residual.shape() != Shape{Q, width}) {
    throw std::invalid_argument("decode_prediction: tokens and residual must both be [" +
                                std::to_string(Q) + ", " + std::to_string(width) + "]");
  }
  if (basis.length() != width) {
    throw std::invalid_argument("decode_prediction: basis length " +
                                std::to_string(basis.length()) + " does not match t+T = " +
                                std::to_string(width));
  }
  if (static_cast<int>(root_offsets.size()) != config.N_slots * 3) {
    throw std::invalid_argument("decode_prediction: expected " +
                                std::to_string(config.N_slots * 3) + " root offsets, got " +
                                std::to_string(root_offsets.size()));
  }

  Tensor coeffs = add(tokens, residual);
  Tensor trajectories = basis.inverse(coeffs);
  Tensor future = slice_last(trajectories, config.t, config.T);

  Tensor offsets({Q, config.T});
  const std::vector<QueryDesc> layout = query_layout(config);
  for (int q = 0; q < Q; ++q) {
    const double v =
        root_offsets[static_cast<std::size_t>(layout[static_cast<std::size_t>(q)].slot) * 3 +
                     static_cast<std::size_t>(layout[static_cast<std::size_t>(q)].axis)];
    for (int f = 0; f < config.T; ++f) {
      offsets.data()[static_cast<std::size_t>(q) * config.T + static_cast<std::size_t>(f)] = v;
    }
  }
  return reshape(add(future, offsets), {config.N_slots, config.J, 3, config.T});
}

ForwardResult forward(const TrajectoryWindow& window, const Parameters& params,
                      const ModelConfig& config, const DctBasis& basis, bool record_attention) {
  config.validate();
  if (window.t != config.t || window.T != config.T || window.J != config.J) {
    throw std::invalid_argument(
        "forward: window (t=" + std::to_string(window.t) + ", T=" + std::to_string(window.T) +
        ", J=" + std::to_string(window.J) + ") does not match config (t=" +
        std::to_string(config.t) + ", T=" + std::to_string(config.T) +
        ", J=" + std::to_string(config.J) + ")");
  }
  if (window.translation_removed) {
    throw std::logic_error("forward: window must be in global coordinates");
  }

  TrajectoryWindow padded = pad_to_slots(window, config.N_slots);

  ForwardResult result;
  result.grid_cells = assign_grid_cells(padded, config.G);
  remove_translation(padded);
  result.root_offsets = padded.root_offsets;
  result.padding_mask = padded.padding_mask;
  result.tokens = tokenize(padded, basis);

  Tensor embedded = embed_tokens(result.tokens, result.grid_cells, params, config);
  EncoderOutput encoded =
      encoder_forward(embedded, padded.padding_mask, params, config, record_attention);

  result.layer_predictions.reserve(encoded.residuals.size());
  for (const Tensor& residual : encoded.residuals) {
    result.layer_predictions.push_back(
        decode_prediction(result.tokens, residual, basis, padded.root_offsets, config));
  }
  result.prediction = result.layer_predictions.back();
  result.attention = std::move(encoded.attention);
  return result;
}

ForwardResult forward(const TrajectoryWindow& window, const Parameters& params,
                      const ModelConfig& config, bool record_attention) {
  DctBasis basis(config.t + config.T);
  return forward(window, params, config, basis, record_attention);
}

}  // namespace somoformer
