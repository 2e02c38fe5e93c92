#pragma once

#include <string>
#include <utility>
#include <vector>

#include "somoformer/dct.hpp"
#include "somoformer/rng.hpp"
#include "somoformer/scene.hpp"
#include "somoformer/tensor.hpp"

namespace somoformer {

/// Architecture hyper-parameters. Tokens are whole joint-coordinate
/// trajectories of length t+T, Q = N_slots*J*3 of them per scene; the
/// encoder width is d_model = d_token + e_grid (grid embedding concatenated).
struct ModelConfig {
  int L = 6;        // encoder layers
  int H = 8;        // attention heads
  int d_token = 112;
  int e_grid = 16;
  int d_ff = 256;
  int G = 5;        // grid cells per ground-plane axis
  int t = 16;       // history frames
  int T = 14;       // future frames
  int J = 13;       // joints
  int N_slots = 3;  // person slots
  std::vector<double> layer_loss_weights;  // size L

  int d_model() const { return d_token + e_grid; }
  int query_count() const { return N_slots * J * 3; }
  void validate() const;
};

bool operator==(const ModelConfig& a, const ModelConfig& b);

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

/// Presets: tiny exercises every code path at gradient-check scale, small
/// trains on a laptop in minutes, desk is the full architecture at reduced
/// width, paper matches the published width.
ModelConfig tiny_config();
ModelConfig small_config();
ModelConfig desk_config();
ModelConfig paper_config();

struct LayerParams {
  Tensor ln1_gain, ln1_bias;
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
  Tensor ln2_gain, ln2_bias;
  Tensor w1, b1, w2, b2;
};

/// All learnable tensors. named() exposes them in a fixed order as
/// (name, handle) pairs sharing storage with the struct fields, which is
/// what the optimizer and checkpoint code operate on.
struct Parameters {
  Tensor input_proj;            // [(t+T) x d_token], bias-free by design
  Tensor joint_axis_embedding;  // [J*3 x d_token]
  Tensor identity_embedding;    // [N_slots x d_token]
  Tensor grid_embedding;        // [G*G x e_grid]
  std::vector<LayerParams> layers;
  Tensor final_norm_gain, final_norm_bias;
  Tensor head_weight, head_bias;  // [d_model x (t+T)], zero-initialized

  std::vector<std::pair<std::string, Tensor>> named() const;
};

/// Correctly shaped parameters with deterministic contents: zero weights,
/// unit layer-norm gains. Checkpoint loading fills these in place.
Parameters allocate_parameters(const ModelConfig& config);

/// Fresh parameters: Xavier-uniform projections, N(0, 0.02) embeddings,
/// identity layer norms, and an exactly-zero output head so the untrained
/// model reproduces the zero-velocity baseline. Draw order is fixed
/// (the named() order), so a seed pins every value.
Parameters init_parameters(const ModelConfig& config, Rng& rng);

/// Which (slot, joint, axis) a query row stands for; rows are ordered
/// slot-major, then joint, then axis.
struct QueryDesc {
  int slot = 0;
  int joint = 0;
  int axis = 0;
};

std::vector<QueryDesc> query_layout(const ModelConfig& config);

/// Post-softmax attention probabilities for every layer and head, with the
/// query metadata needed to interpret rows. Rows of real queries sum to 1;
/// masked key columns are exactly zero.
struct AttentionRecords {
  int layers = 0;
  int heads = 0;
  int Q = 0;
  std::vector<QueryDesc> queries;
  std::vector<std::vector<double>> probs;  // [layers*heads] matrices of Q*Q

  bool empty() const { return probs.empty(); }
  const std::vector<double>& at(int layer, int head) const;
};

/// DCT tokens of the hold-last-padded local history, one row per
/// (slot, joint, axis). Padded slots produce all-zero rows. The window must
/// be translation-removed and the basis length must equal t+T.
Tensor tokenize(const TrajectoryWindow& window, const DctBasis& basis);

/// Grid cell per slot from root-joint ground-plane positions at the last
/// history frame: bounding square over real persons, 5% margin, floor
/// indexing clamped to [0, G). A degenerate (single-point) bound puts
/// everyone in the center cell. The window must still be in global
/// coordinates. Cell index = x_cell * G + z_cell.
std::vector<int> assign_grid_cells(const TrajectoryWindow& window, int G);

/// Encoder input: project each token to d_token, add joint-axis and identity
/// embeddings, then concatenate the slot's grid embedding -> [Q x d_model].
Tensor embed_tokens(const Tensor& tokens, const std::vector<int>& cells,
                    const Parameters& params, const ModelConfig& config);

struct EncoderOutput {
  std::vector<Tensor> residuals;  // L tensors [Q x (t+T)]
  AttentionRecords attention;     // filled only when requested
};

/// Pre-norm transformer stack. Padded slots are masked out as attention keys
/// only; the shared output head reads each layer's state (through the shared
/// final norm) into a DCT-coefficient residual.
EncoderOutput encoder_forward(const Tensor& embedded, const std::vector<bool>& padding_mask,
                              const Parameters& params, const ModelConfig& config,
                              bool record_attention = false);

/// coefficients = tokens + residual; inverse DCT; keep the last T frames;
/// add each slot's root offset back -> [N_slots x J x 3 x T] global
/// coordinates.
Tensor decode_prediction(const Tensor& tokens, const Tensor& residual, const DctBasis& basis,
                         const std::vector<double>& root_offsets, const ModelConfig& config);

struct ForwardResult {
  Tensor prediction;                      // [N_slots x J x 3 x T], == layer_predictions.back()
  std::vector<Tensor> layer_predictions;  // one per layer
  Tensor tokens;                          // [Q x (t+T)] input coefficients
  std::vector<int> grid_cells;            // per slot
  std::vector<double> root_offsets;       // per slot x axis
  std::vector<bool> padding_mask;         // per slot
  AttentionRecords attention;
};

/// Full pipeline on a global-coordinate window: pad to N_slots, assign grid
/// cells (global), remove translation, tokenize, embed, encode, and decode
/// every layer's prediction. The caller's window is not modified.
ForwardResult forward(const TrajectoryWindow& window, const Parameters& params,
                      const ModelConfig& config, const DctBasis& basis,
                      bool record_attention = false);

/// Convenience overload constructing the DCT basis on the fly.
ForwardResult forward(const TrajectoryWindow& window, const Parameters& params,
                      const ModelConfig& config, bool record_attention = false);

}  // namespace somoformer
