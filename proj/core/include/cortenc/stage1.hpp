#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "cortenc/autodiff.hpp"
#include "cortenc/dataset.hpp"
#include "cortenc/nn.hpp"
#include "cortenc/rng.hpp"

namespace cortenc {

struct Stage1Config {
  int64_t in_channels = 1;
  int64_t base_channels = 8;
  // Per block: width multiplier, residual layer count, stride (1 or 2).
  std::vector<int64_t> channel_mult = {1, 1, 2, 2, 4};
  std::vector<int64_t> residual_layers = {1, 1, 2, 2, 4};
  std::vector<int64_t> strides = {2, 2, 2, 2, 1};
  int64_t codebook_size = 512;
  int64_t codebook_dim = 64;
  double lambda_rec = 1.0;
  double lambda_perc = 0.1;
  double lambda_adv = 0.1;
  double beta_commit = 0.25;
  bool adversarial_enabled = false;

  int64_t n_blocks() const { return static_cast<int64_t>(residual_layers.size()); }
  int64_t downsample_factor() const;
  void validate() const;
};

namespace detail {

struct ResBlock {
  nn::GroupNormLayer gn1, gn2;
  nn::Conv2dLayer conv1, conv2, skip;
  bool has_skip = false;
  ResBlock() = default;
  ResBlock(nn::ParamStore& ps, const std::string& name, int64_t cin, int64_t cout, Rng& rng);
  ag::Var forward(ag::Tape& t, nn::Binding& bind, ag::Var x) const;
};

}  // namespace detail

// Convolutional encoder/decoder pair around a learned codebook. Grids
// are channel-first [N, d, h, w]; index order is raster scan per
// sample, which is also the stage-2 token order.
class Stage1Model {
 public:
  Stage1Model(const Stage1Config& cfg, uint64_t seed);

  const Stage1Config& config() const { return cfg_; }
  nn::ParamStore& params() { return params_; }
  const nn::ParamStore& params() const { return params_; }
  nn::Parameter& codebook() { return *codebook_; }
  const nn::Parameter& codebook() const { return *codebook_; }

  int64_t latent_height(int64_t input_h) const;
  int64_t latent_width(int64_t input_w) const;

  // Tape builders, usable for training and inference alike.
  ag::Var encode(ag::Tape& t, nn::Binding& bind, ag::Var x) const;
  ag::VqResult quantize_grid(ag::Tape& t, nn::Binding& bind, ag::Var latent) const;
  ag::Var decode(ag::Tape& t, nn::Binding& bind, ag::Var grid) const;

  // Gradient-free conveniences; large batches run in fixed-size chunks.
  Tensor encode_latent(const Tensor& frames) const;
  std::vector<int64_t> assign_indices(const Tensor& latent_grid) const;
  Tensor grid_from_indices(const std::vector<int64_t>& indices, int64_t n, int64_t h,
                           int64_t w) const;
  Tensor decode_grid(const Tensor& grid) const;
  Tensor reconstruct(const Tensor& frames) const;

 private:
  Stage1Config cfg_;
  nn::ParamStore params_;
  nn::Parameter* codebook_ = nullptr;

  nn::Conv2dLayer enc_stem_;
  std::vector<std::vector<detail::ResBlock>> enc_res_;
  std::vector<nn::Conv2dLayer> enc_down_;  // one per stride-2 block, indexed by block
  nn::GroupNormLayer enc_norm_out_;
  nn::Conv2dLayer enc_to_code_;

  nn::Conv2dLayer dec_from_code_;
  std::vector<std::vector<detail::ResBlock>> dec_res_;  // indexed by block, used in reverse
  std::vector<nn::Conv2dLayer> dec_up_;
  nn::GroupNormLayer dec_norm_out_;
  nn::Conv2dLayer dec_out_;
};

// Fixed random convolutional feature stack: three stride-2 stages,
// seeded once, never trained. Stands in for a learned perceptual
// metric without external weights.
class PerceptualNet {
 public:
  explicit PerceptualNet(int64_t in_channels, uint64_t seed = 0x70657263657074ULL);
  nn::ParamStore& params() { return params_; }
  // Sum over stages of feature-map MSE between a and b.
  ag::Var distance(ag::Tape& t, nn::Binding& bind, ag::Var a, ag::Var b) const;

 private:
  nn::ParamStore params_;
  std::vector<nn::Conv2dLayer> convs_;
};

// Small patch discriminator for the optional hinge adversarial term.
class PatchDiscriminator {
 public:
  PatchDiscriminator(int64_t in_channels, int64_t base_channels, uint64_t seed);
  nn::ParamStore& params() { return params_; }
  ag::Var logits(ag::Tape& t, nn::Binding& bind, ag::Var x) const;

 private:
  nn::ParamStore params_;
  std::vector<nn::Conv2dLayer> convs_;
  nn::Conv2dLayer head_;
};

ag::Var hinge_d_loss(ag::Tape& t, ag::Var real_logits, ag::Var fake_logits);
ag::Var hinge_g_loss(ag::Tape& t, ag::Var fake_logits);

struct Stage1LossParts {
  ag::Var total;
  ag::Var rec, perc, adv, commit;  // adv is a zero scalar when disabled
};

// total = lambda_rec * masked L1 + lambda_perc * perceptual
//       + lambda_adv * generator hinge + beta_commit * commit.
// Every term sees valid pixels only; x and mask are constants.
// disc_fake_logits may be invalid when the adversarial term is off.
Stage1LossParts stage1_loss(ag::Tape& t, ag::Var x_hat, const Tensor& x, const Tensor& mask,
                            ag::Var commit_loss, ag::Var disc_fake_logits,
                            const PerceptualNet* perc, nn::Binding* perc_bind,
                            const Stage1Config& cfg);

struct Stage1TrainConfig {
  int64_t iterations = 2000;
  int64_t batch_size = 4;
  double lr = 1e-3;
  int64_t lr_drop_iter = -1;  // <0: 80% of iterations
  double beta1 = 0.5;
  double beta2 = 0.9;
  double adam_eps = 1e-8;
  double grad_clip = 0.0;  // 0 = off
  double disc_lr = -1.0;   // <0: same as lr
  int64_t disc_start = 0;
  int64_t log_interval = 50;
  int64_t checkpoint_interval = 0;  // 0 = final only
  uint64_t seed = 1;
  void validate() const;
};

struct Stage1LogRow {
  int64_t iteration;
  double lr, total, rec, perc, adv, commit, codebook;
};

struct Stage1TrainResult {
  std::vector<Stage1LogRow> log;
  std::filesystem::path final_checkpoint;  // empty when out_dir is empty
};

// Deterministic given the seed. out_dir empty = train in memory only.
// manifest_extra is stored in every checkpoint manifest.
Stage1TrainResult train_stage1(Stage1Model& model, const FlatmapDataset& data,
                               const Stage1TrainConfig& tc, const std::filesystem::path& out_dir,
                               const nlohmann::json& manifest_extra = nlohmann::json::object());

void write_stage1_log_csv(const std::filesystem::path& path, const std::vector<Stage1LogRow>& log);

}  // namespace cortenc
