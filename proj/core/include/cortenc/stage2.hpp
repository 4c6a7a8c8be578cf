#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cortenc/autodiff.hpp"
#include "cortenc/dataset.hpp"
#include "cortenc/nn.hpp"
#include "cortenc/stage1.hpp"

namespace cortenc {

enum class MapperMode { two_layer, class_token_slice };
enum class MapperOrder { tokens_first, features_first };

MapperMode mapper_mode_from_name(const std::string& name);
const char* mapper_mode_name(MapperMode m);
MapperOrder mapper_order_from_name(const std::string& name);
const char* mapper_order_name(MapperOrder o);

struct Stage2Config {
  int64_t codebook_size = 512;  // K, must match stage 1
  int64_t grid_tokens = 32;     // h*w; sequence length is grid_tokens + 1
  int64_t encoder_width = 128;  // C0
  int64_t encoder_depth = 4;
  int64_t encoder_heads = 4;
  int64_t decoder_width = 64;  // equals compressed_dim: condition and mask
                               // tokens share the dimension, no projection
  int64_t decoder_depth = 4;
  int64_t decoder_heads = 4;
  int64_t compressed_tokens = 9;  // L1
  int64_t compressed_dim = 64;    // C1
  MapperMode mapper_mode = MapperMode::two_layer;
  MapperOrder mapper_order = MapperOrder::tokens_first;

  int64_t l0() const { return grid_tokens + 1; }
  void validate() const;
};

// Token-space compressor over stage-1 index grids. All per-sample
// methods take one sample's indices in raster order; batching is a
// loop at the call site.
class Stage2Model {
 public:
  Stage2Model(const Stage2Config& cfg, uint64_t seed);

  const Stage2Config& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }

  // [L0, C0]: class token first, then index embeddings, all with
  // positional terms added.
  ag::Var embed(ag::Tape& t, nn::Binding& bind, const std::vector<int64_t>& grid_indices) const;
  ag::Var encode(ag::Tape& t, nn::Binding& bind, ag::Var tokens) const;
  ag::Var compress(ag::Tape& t, nn::Binding& bind, ag::Var f) const;
  // Condition tokens prepended to the replicated mask token sequence;
  // condition rows are discarded after the blocks. Output [grid, K].
  ag::Var decode_logits(ag::Tape& t, nn::Binding& bind, ag::Var compressed) const;
  ag::Var forward_logits(ag::Tape& t, nn::Binding& bind,
                         const std::vector<int64_t>& grid_indices) const;

  // Gradient-free conveniences.
  Tensor compressed_feature(const std::vector<int64_t>& grid_indices) const;  // [L1, C1]
  std::vector<int64_t> predict_indices(const std::vector<int64_t>& grid_indices) const;

 private:
  Stage2Config cfg_;
  nn::ParamStore params_;
  nn::Parameter* index_emb_ = nullptr;  // [K, C0]
  nn::Parameter* cls_emb_ = nullptr;    // [1, C0]
  nn::Parameter* pos_emb_ = nullptr;    // [L0, C0]
  std::vector<nn::TransformerBlock> enc_blocks_;
  nn::LinearLayer map_tokens_;    // [L0 -> L1] over the token axis
  nn::LinearLayer map_features_;  // [C0 -> C1]
  nn::Parameter* mask_token_ = nullptr;  // [1, C1]
  nn::Parameter* dec_pos_ = nullptr;     // [grid_tokens, C1]
  std::vector<nn::TransformerBlock> dec_blocks_;
  nn::LinearLayer head_;  // [C1 -> K]
};

// Mean token-wise cross-entropy of logits [grid, K] against the true
// indices.
ag::Var stage2_loss(ag::Tape& t, ag::Var logits, const std::vector<int64_t>& target_indices);

struct Stage2TrainConfig {
  int64_t iterations = 2000;
  int64_t batch_size = 4;
  double lr = 1e-3;  // peak of the warmup/decay ramp
  double warmup_fraction = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double adam_eps = 1e-8;
  double weight_decay = 0.01;
  double grad_clip = 1.0;
  int64_t log_interval = 50;
  int64_t checkpoint_interval = 0;
  uint64_t seed = 2;
  // Stop once full-dataset index accuracy reaches this value at a log
  // boundary; <0 disables.
  double stop_at_accuracy = -1.0;
  // Optional curriculum: restrict to the first ceil(fraction*N) samples
  // for the first phase1_iters iterations, then open the full set.
  double phase1_fraction = 1.0;
  int64_t phase1_iters = 0;
  void validate() const;
};

struct Stage2LogRow {
  int64_t iteration;
  double lr, loss, accuracy;
};

struct Stage2TrainResult {
  std::vector<Stage2LogRow> log;
  std::filesystem::path final_checkpoint;
  double final_accuracy = 0.0;  // full-dataset, measured after training
};

// Stage-1 weights are read-only throughout; the trainer verifies their
// bytes are unchanged before returning.
Stage2TrainResult train_stage2(Stage2Model& model, const Stage1Model& stage1,
                               const FlatmapDataset& data, const Stage2TrainConfig& tc,
                               const std::filesystem::path& out_dir,
                               const nlohmann::json& manifest_extra = nlohmann::json::object());

void write_stage2_log_csv(const std::filesystem::path& path, const std::vector<Stage2LogRow>& log);

// Per-sample index grids from the frozen stage-1 model, raster order.
std::vector<std::vector<int64_t>> index_dataset(const Stage1Model& stage1, const Tensor& frames);

// decode1(lookup(argmax(decode2(...)))): the full two-stage round trip.
Tensor reconstruct_two_stage(const Stage1Model& stage1, const Stage2Model& stage2,
                             const Tensor& frames);

struct CompressedFeature {
  Tensor tokens;  // [L1, C1]
  std::string provenance;
};

CompressedFeature extract_feature(const Stage1Model& stage1, const Stage2Model& stage2,
                                  const Tensor& frame, const std::string& frame_id);

// Row per frame, flattened [L1*C1] features.
Tensor extract_features_matrix(const Stage1Model& stage1, const Stage2Model& stage2,
                               const Tensor& frames);

}  // namespace cortenc
