#include "cortenc/stage1.hpp"

#include <cmath>
#include <fstream>

#include "cortenc/checkpoint.hpp"
#include "cortenc/errors.hpp"
#include "cortenc/schedule.hpp"

namespace cortenc {

namespace {

int64_t norm_groups(int64_t channels) {
  int64_t g = std::min<int64_t>(4, channels);
  while (channels % g != 0) --g;
  return g;
}

ag::Var feature_mse(ag::Tape& t, ag::Var a, ag::Var b) {
  ag::Var d = ag::sub(t, a, b);
  return ag::mean(t, ag::mul(t, d, d));
}

}  // namespace

int64_t Stage1Config::downsample_factor() const {
  int64_t f = 1;
  for (int64_t s : strides) f *= s;
  return f;
}

void Stage1Config::validate() const {
  const size_t n = residual_layers.size();
  if (n == 0) throw ConfigError("stage 1: at least one block required");
  if (channel_mult.size() != n || strides.size() != n)
    throw ConfigError("stage 1: channel_mult, residual_layers and strides must have equal length");
  for (int64_t s : strides)
    if (s != 1 && s != 2) throw ConfigError("stage 1: strides must be 1 or 2");
  for (int64_t r : residual_layers)
    if (r < 1) throw ConfigError("stage 1: residual layer counts must be positive");
  for (int64_t m : channel_mult)
    if (m < 1) throw ConfigError("stage 1: channel multipliers must be positive");
  if (in_channels < 1 || base_channels < 1) throw ConfigError("stage 1: channels must be positive");
  if (codebook_size < 2) throw ConfigError("stage 1: codebook needs at least two entries");
  if (codebook_dim < 1) throw ConfigError("stage 1: codebook dim must be positive");
  if (lambda_rec < 0 || lambda_perc < 0 || lambda_adv < 0 || beta_commit < 0)
    throw ConfigError("stage 1: loss weights must be non-negative");
}

namespace detail {

ResBlock::ResBlock(nn::ParamStore& ps, const std::string& name, int64_t cin, int64_t cout,
                   Rng& rng) {
  gn1 = nn::GroupNormLayer(ps, name + ".gn1", cin, norm_groups(cin));
  conv1 = nn::Conv2dLayer(ps, name + ".conv1", cin, cout, 3, 1, 1, rng);
  gn2 = nn::GroupNormLayer(ps, name + ".gn2", cout, norm_groups(cout));
  conv2 = nn::Conv2dLayer(ps, name + ".conv2", cout, cout, 3, 1, 1, rng);
  has_skip = cin != cout;
  if (has_skip) skip = nn::Conv2dLayer(ps, name + ".skip", cin, cout, 1, 1, 0, rng);
}

ag::Var ResBlock::forward(ag::Tape& t, nn::Binding& bind, ag::Var x) const {
  ag::Var h = conv1.forward(t, bind, ag::swish(t, gn1.forward(t, bind, x)));
  h = conv2.forward(t, bind, ag::swish(t, gn2.forward(t, bind, h)));
  ag::Var s = has_skip ? skip.forward(t, bind, x) : x;
  return ag::add(t, s, h);
}

}  // namespace detail

Stage1Model::Stage1Model(const Stage1Config& cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  Rng rng(seed);
  const int64_t nb = cfg_.n_blocks();
  std::vector<int64_t> ch(static_cast<size_t>(nb));
  for (int64_t i = 0; i < nb; ++i)
    ch[static_cast<size_t>(i)] = cfg_.base_channels * cfg_.channel_mult[static_cast<size_t>(i)];

  enc_stem_ = nn::Conv2dLayer(params_, "enc.stem", cfg_.in_channels, ch[0], 3, 1, 1, rng);
  enc_res_.resize(static_cast<size_t>(nb));
  enc_down_.resize(static_cast<size_t>(nb));
  int64_t prev = ch[0];
  for (int64_t b = 0; b < nb; ++b) {
    const std::string base = "enc.b" + std::to_string(b);
    for (int64_t r = 0; r < cfg_.residual_layers[static_cast<size_t>(b)]; ++r) {
      enc_res_[static_cast<size_t>(b)].emplace_back(
          params_, base + ".r" + std::to_string(r), prev, ch[static_cast<size_t>(b)], rng);
      prev = ch[static_cast<size_t>(b)];
    }
    if (cfg_.strides[static_cast<size_t>(b)] == 2)
      enc_down_[static_cast<size_t>(b)] =
          nn::Conv2dLayer(params_, base + ".down", prev, prev, 4, 2, 1, rng);
  }
  enc_norm_out_ = nn::GroupNormLayer(params_, "enc.norm_out", prev, norm_groups(prev));
  enc_to_code_ = nn::Conv2dLayer(params_, "enc.to_code", prev, cfg_.codebook_dim, 3, 1, 1, rng);

  {
    Tensor cb({cfg_.codebook_size, cfg_.codebook_dim});
    const double lim = 1.0 / static_cast<double>(cfg_.codebook_size);
    rng.fill_uniform(cb, -lim, lim);
    codebook_ = &params_.add("codebook", std::move(cb));
  }

  const int64_t top = ch[static_cast<size_t>(nb - 1)];
  dec_from_code_ = nn::Conv2dLayer(params_, "dec.from_code", cfg_.codebook_dim, top, 3, 1, 1, rng);
  dec_res_.resize(static_cast<size_t>(nb));
  dec_up_.resize(static_cast<size_t>(nb));
  prev = top;
  for (int64_t b = nb - 1; b >= 0; --b) {
    const std::string base = "dec.b" + std::to_string(b);
    for (int64_t r = 0; r < cfg_.residual_layers[static_cast<size_t>(b)]; ++r) {
      dec_res_[static_cast<size_t>(b)].emplace_back(
          params_, base + ".r" + std::to_string(r), prev, ch[static_cast<size_t>(b)], rng);
      prev = ch[static_cast<size_t>(b)];
    }
    if (cfg_.strides[static_cast<size_t>(b)] == 2)
      dec_up_[static_cast<size_t>(b)] =
          nn::Conv2dLayer(params_, base + ".up", prev, prev, 3, 1, 1, rng);
  }
  dec_norm_out_ = nn::GroupNormLayer(params_, "dec.norm_out", prev, norm_groups(prev));
  dec_out_ = nn::Conv2dLayer(params_, "dec.out", prev, cfg_.in_channels, 3, 1, 1, rng);
}

int64_t Stage1Model::latent_height(int64_t input_h) const {
  const int64_t f = cfg_.downsample_factor();
  if (input_h % f != 0)
    throw ConfigError("stage 1: input height " + std::to_string(input_h) +
                      " not divisible by downsample factor " + std::to_string(f));
  return input_h / f;
}

int64_t Stage1Model::latent_width(int64_t input_w) const {
  const int64_t f = cfg_.downsample_factor();
  if (input_w % f != 0)
    throw ConfigError("stage 1: input width " + std::to_string(input_w) +
                      " not divisible by downsample factor " + std::to_string(f));
  return input_w / f;
}

ag::Var Stage1Model::encode(ag::Tape& t, nn::Binding& bind, ag::Var x) const {
  const Tensor& vx = t.val(x);
  if (vx.rank() != 4 || vx.dim(1) != cfg_.in_channels)
    throw ShapeError("stage 1 encode: expected [N," + std::to_string(cfg_.in_channels) +
                     ",H,W], got " + vx.shape_str());
  latent_height(vx.dim(2));
  latent_width(vx.dim(3));
  ag::Var h = enc_stem_.forward(t, bind, x);
  for (int64_t b = 0; b < cfg_.n_blocks(); ++b) {
    for (const auto& rb : enc_res_[static_cast<size_t>(b)]) h = rb.forward(t, bind, h);
    if (cfg_.strides[static_cast<size_t>(b)] == 2)
      h = enc_down_[static_cast<size_t>(b)].forward(t, bind, h);
  }
  h = ag::swish(t, enc_norm_out_.forward(t, bind, h));
  return enc_to_code_.forward(t, bind, h);
}

ag::VqResult Stage1Model::quantize_grid(ag::Tape& t, nn::Binding& bind, ag::Var latent) const {
  const Tensor& vl = t.val(latent);
  if (vl.rank() != 4 || vl.dim(1) != cfg_.codebook_dim)
    throw ShapeError("stage 1 quantize: expected [N," + std::to_string(cfg_.codebook_dim) +
                     ",h,w], got " + vl.shape_str());
  const int64_t n = vl.dim(0), h = vl.dim(2), w = vl.dim(3);
  ag::Var rows = ag::nchw_to_rows(t, latent);
  ag::VqResult vq = ag::vector_quantize(t, rows, bind(*codebook_));
  vq.quantized = ag::rows_to_nchw(t, vq.quantized, n, cfg_.codebook_dim, h, w);
  return vq;
}

ag::Var Stage1Model::decode(ag::Tape& t, nn::Binding& bind, ag::Var grid) const {
  const Tensor& vg = t.val(grid);
  if (vg.rank() != 4 || vg.dim(1) != cfg_.codebook_dim)
    throw ShapeError("stage 1 decode: expected [N," + std::to_string(cfg_.codebook_dim) +
                     ",h,w], got " + vg.shape_str());
  ag::Var h = dec_from_code_.forward(t, bind, grid);
  for (int64_t b = cfg_.n_blocks() - 1; b >= 0; --b) {
    for (const auto& rb : dec_res_[static_cast<size_t>(b)]) h = rb.forward(t, bind, h);
    if (cfg_.strides[static_cast<size_t>(b)] == 2)
      h = dec_up_[static_cast<size_t>(b)].forward(t, bind, ag::upsample2x(t, h));
  }
  h = ag::swish(t, dec_norm_out_.forward(t, bind, h));
  return dec_out_.forward(t, bind, h);
}

namespace {
constexpr int64_t kInferenceChunk = 8;
}

Tensor Stage1Model::encode_latent(const Tensor& frames) const {
  if (frames.rank() != 4) throw ShapeError("encode_latent: expected [N,C,H,W]");
  const int64_t n = frames.dim(0);
  const int64_t h = latent_height(frames.dim(2)), w = latent_width(frames.dim(3));
  Tensor out({n, cfg_.codebook_dim, h, w});
  const int64_t in_block = frames.size() / std::max<int64_t>(n, 1);
  const int64_t out_block = cfg_.codebook_dim * h * w;
  for (int64_t at = 0; at < n; at += kInferenceChunk) {
    const int64_t cnt = std::min<int64_t>(kInferenceChunk, n - at);
    Tensor chunk({cnt, frames.dim(1), frames.dim(2), frames.dim(3)});
    for (int64_t i = 0; i < cnt * in_block; ++i) chunk[i] = frames[at * in_block + i];
    ag::Tape tape;
    nn::Binding bind(tape, false);
    ag::Var z = encode(tape, bind, tape.leaf(chunk));
    const Tensor& vz = tape.val(z);
    for (int64_t i = 0; i < cnt * out_block; ++i) out[at * out_block + i] = vz[i];
  }
  return out;
}

std::vector<int64_t> Stage1Model::assign_indices(const Tensor& latent_grid) const {
  if (latent_grid.rank() != 4 || latent_grid.dim(1) != cfg_.codebook_dim)
    throw ShapeError("assign_indices: expected [N,d,h,w] latent grid");
  const int64_t n = latent_grid.dim(0), h = latent_grid.dim(2), w = latent_grid.dim(3);
  // Row layout conversion without a tape: positions in raster order.
  const int64_t hw = h * w, d = cfg_.codebook_dim;
  Tensor rows({n * hw, d});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t c = 0; c < d; ++c)
      for (int64_t p = 0; p < hw; ++p)
        rows[(i * hw + p) * d + c] = latent_grid[(i * d + c) * hw + p];
  return ag::vq_nearest_indices(rows.data(), n * hw, codebook_->value.data(), cfg_.codebook_size,
                                d);
}

Tensor Stage1Model::grid_from_indices(const std::vector<int64_t>& indices, int64_t n, int64_t h,
                                      int64_t w) const {
  if (static_cast<int64_t>(indices.size()) != n * h * w)
    throw ShapeError("grid_from_indices: index count does not match grid shape");
  const int64_t d = cfg_.codebook_dim, hw = h * w;
  Tensor grid({n, d, h, w});
  const Tensor& cb = codebook_->value;
  for (int64_t i = 0; i < n; ++i)
    for (int64_t p = 0; p < hw; ++p) {
      const int64_t e = indices[static_cast<size_t>(i * hw + p)];
      if (e < 0 || e >= cfg_.codebook_size)
        throw ShapeError("grid_from_indices: index out of codebook range");
      for (int64_t c = 0; c < d; ++c) grid[(i * d + c) * hw + p] = cb[e * d + c];
    }
  return grid;
}

Tensor Stage1Model::decode_grid(const Tensor& grid) const {
  if (grid.rank() != 4) throw ShapeError("decode_grid: expected [N,d,h,w]");
  const int64_t n = grid.dim(0);
  const int64_t f = cfg_.downsample_factor();
  const int64_t H = grid.dim(2) * f, W = grid.dim(3) * f;
  Tensor out({n, cfg_.in_channels, H, W});
  const int64_t in_block = grid.size() / std::max<int64_t>(n, 1);
  const int64_t out_block = cfg_.in_channels * H * W;
  for (int64_t at = 0; at < n; at += kInferenceChunk) {
    const int64_t cnt = std::min<int64_t>(kInferenceChunk, n - at);
    Tensor chunk({cnt, grid.dim(1), grid.dim(2), grid.dim(3)});
    for (int64_t i = 0; i < cnt * in_block; ++i) chunk[i] = grid[at * in_block + i];
    ag::Tape tape;
    nn::Binding bind(tape, false);
    ag::Var y = decode(tape, bind, tape.leaf(chunk));
    const Tensor& vy = tape.val(y);
    for (int64_t i = 0; i < cnt * out_block; ++i) out[at * out_block + i] = vy[i];
  }
  return out;
}

Tensor Stage1Model::reconstruct(const Tensor& frames) const {
  Tensor latent = encode_latent(frames);
  std::vector<int64_t> idx = assign_indices(latent);
  Tensor grid = grid_from_indices(idx, latent.dim(0), latent.dim(2), latent.dim(3));
  return decode_grid(grid);
}

PerceptualNet::PerceptualNet(int64_t in_channels, uint64_t seed) {
  Rng rng(seed);
  const int64_t widths[3] = {8, 16, 32};
  int64_t prev = in_channels;
  for (int i = 0; i < 3; ++i) {
    convs_.push_back(
        nn::Conv2dLayer(params_, "perc.c" + std::to_string(i), prev, widths[i], 4, 2, 1, rng));
    prev = widths[i];
  }
}

ag::Var PerceptualNet::distance(ag::Tape& t, nn::Binding& bind, ag::Var a, ag::Var b) const {
  ag::Var acc;
  ag::Var ha = a, hb = b;
  for (size_t i = 0; i < convs_.size(); ++i) {
    ha = convs_[i].forward(t, bind, ha);
    hb = convs_[i].forward(t, bind, hb);
    ag::Var d = feature_mse(t, ha, hb);
    acc = acc.valid() ? ag::add(t, acc, d) : d;
    if (i + 1 < convs_.size()) {
      ha = ag::swish(t, ha);
      hb = ag::swish(t, hb);
    }
  }
  return ag::scale(t, acc, 1.0 / static_cast<double>(convs_.size()));
}

PatchDiscriminator::PatchDiscriminator(int64_t in_channels, int64_t base_channels, uint64_t seed) {
  Rng rng(seed);
  int64_t prev = in_channels;
  int64_t width = base_channels;
  for (int i = 0; i < 2; ++i) {
    convs_.push_back(
        nn::Conv2dLayer(params_, "disc.c" + std::to_string(i), prev, width, 4, 2, 1, rng));
    prev = width;
    width *= 2;
  }
  head_ = nn::Conv2dLayer(params_, "disc.head", prev, 1, 3, 1, 1, rng);
}

ag::Var PatchDiscriminator::logits(ag::Tape& t, nn::Binding& bind, ag::Var x) const {
  ag::Var h = x;
  for (const auto& c : convs_) h = ag::swish(t, c.forward(t, bind, h));
  return head_.forward(t, bind, h);
}

ag::Var hinge_d_loss(ag::Tape& t, ag::Var real_logits, ag::Var fake_logits) {
  ag::Var real_term = ag::mean(t, ag::relu(t, ag::add_const(t, ag::scale(t, real_logits, -1.0), 1.0)));
  ag::Var fake_term = ag::mean(t, ag::relu(t, ag::add_const(t, fake_logits, 1.0)));
  return ag::add(t, real_term, fake_term);
}

ag::Var hinge_g_loss(ag::Tape& t, ag::Var fake_logits) {
  return ag::scale(t, ag::mean(t, fake_logits), -1.0);
}

Stage1LossParts stage1_loss(ag::Tape& t, ag::Var x_hat, const Tensor& x, const Tensor& mask,
                            ag::Var commit_loss, ag::Var disc_fake_logits,
                            const PerceptualNet* perc, nn::Binding* perc_bind,
                            const Stage1Config& cfg) {
  cfg.validate();
  if (!t.val(x_hat).same_shape(x))
    throw ShapeError("stage1_loss: prediction " + t.val(x_hat).shape_str() +
                     " vs target " + x.shape_str());
  Stage1LossParts parts;
  parts.rec = ag::masked_l1(t, x_hat, x, mask);
  if (cfg.lambda_perc > 0.0) {
    if (perc == nullptr || perc_bind == nullptr)
      throw ConfigError("stage1_loss: perceptual term enabled but no feature stack given");
    ag::Var xm = t.leaf(x);
    parts.perc = perc->distance(t, *perc_bind, ag::mask_mul(t, x_hat, mask),
                                ag::mask_mul(t, xm, mask));
  } else {
    parts.perc = t.leaf(Tensor::scalar(0.0));
  }
  if (cfg.adversarial_enabled && disc_fake_logits.valid())
    parts.adv = hinge_g_loss(t, disc_fake_logits);
  else
    parts.adv = t.leaf(Tensor::scalar(0.0));
  parts.commit = commit_loss;

  ag::Var total = ag::scale(t, parts.rec, cfg.lambda_rec);
  total = ag::add(t, total, ag::scale(t, parts.perc, cfg.lambda_perc));
  total = ag::add(t, total, ag::scale(t, parts.adv, cfg.lambda_adv));
  total = ag::add(t, total, ag::scale(t, parts.commit, cfg.beta_commit));
  parts.total = total;
  return parts;
}

void Stage1TrainConfig::validate() const {
  if (iterations < 1) throw ConfigError("stage 1 training: iterations must be positive");
  if (batch_size < 1) throw ConfigError("stage 1 training: batch size must be positive");
  if (lr <= 0) throw ConfigError("stage 1 training: learning rate must be positive");
  if (log_interval < 1) throw ConfigError("stage 1 training: log interval must be positive");
}

namespace {

class BatchSampler {
 public:
  BatchSampler(int64_t n, int64_t batch, uint64_t seed) : n_(n), batch_(std::min(batch, n)), rng_(seed) {}

  std::vector<int64_t> next() {
    std::vector<int64_t> rows;
    rows.reserve(static_cast<size_t>(batch_));
    for (int64_t i = 0; i < batch_; ++i) {
      if (cursor_ >= static_cast<int64_t>(order_.size())) {
        order_ = rng_.permutation(n_);
        cursor_ = 0;
      }
      rows.push_back(order_[static_cast<size_t>(cursor_++)]);
    }
    return rows;
  }

 private:
  int64_t n_, batch_;
  Rng rng_;
  std::vector<int64_t> order_;
  int64_t cursor_ = 0;
};

Tensor gather_batch(const Tensor& frames, const std::vector<int64_t>& rows) {
  const int64_t block = frames.size() / frames.dim(0);
  Tensor out({static_cast<int64_t>(rows.size()), frames.dim(1), frames.dim(2), frames.dim(3)});
  for (size_t r = 0; r < rows.size(); ++r)
    for (int64_t i = 0; i < block; ++i)
      out[static_cast<int64_t>(r) * block + i] = frames[rows[r] * block + i];
  return out;
}

}  // namespace

Stage1TrainResult train_stage1(Stage1Model& model, const FlatmapDataset& data,
                               const Stage1TrainConfig& tc, const std::filesystem::path& out_dir,
                               const nlohmann::json& manifest_extra) {
  tc.validate();
  data.validate();
  if (data.size() == 0) throw DataError("stage 1 training: empty dataset");
  const Stage1Config& cfg = model.config();
  const int64_t drop = tc.lr_drop_iter >= 0 ? tc.lr_drop_iter : (tc.iterations * 4) / 5;

  PerceptualNet perc(cfg.in_channels);
  PatchDiscriminator disc(cfg.in_channels, cfg.base_channels, tc.seed ^ 0x646973635f31ULL);
  const bool adv = cfg.adversarial_enabled && cfg.lambda_adv > 0.0;

  BatchSampler sampler(data.size(), tc.batch_size, tc.seed);
  Stage1TrainResult result;
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

  for (int64_t iter = 1; iter <= tc.iterations; ++iter) {
    const double lr = step_halving_lr(tc.lr, iter, drop);
    Tensor xb = gather_batch(data.frames, sampler.next());

    ag::Tape tape;
    nn::Binding bind(tape, true);
    nn::Binding fixed(tape, false);
    ag::Var x = tape.leaf(xb);
    ag::Var latent = model.encode(tape, bind, x);
    ag::VqResult vq = model.quantize_grid(tape, bind, latent);
    ag::Var x_hat = model.decode(tape, bind, vq.quantized);

    ag::Var fake_logits;
    const bool adv_now = adv && iter >= tc.disc_start;
    if (adv_now) fake_logits = disc.logits(tape, fixed, x_hat);

    Stage1LossParts parts =
        stage1_loss(tape, x_hat, xb, data.mask, vq.commit_loss, fake_logits, &perc, &fixed, cfg);
    // The dictionary term updates codebook entries toward their
    // assigned latents; it rides along with unit weight.
    ag::Var opt_total = ag::add(tape, parts.total, vq.codebook_loss);

    const double total_v = tape.val(parts.total)[0];
    if (!std::isfinite(total_v))
      throw NumericError("stage 1 training diverged at iteration " + std::to_string(iter) +
                         " (loss " + std::to_string(total_v) + ")");

    tape.backward(opt_total);
    bind.harvest();
    if (tc.grad_clip > 0.0) nn::clip_grad_norm(model.params(), tc.grad_clip);
    nn::AdamConfig ac{lr, tc.beta1, tc.beta2, tc.adam_eps, 0.0};
    nn::adam_step(model.params(), ac, iter);

    if (adv_now) {
      ag::Tape dtape;
      nn::Binding dbind(dtape, true);
      ag::Var real = disc.logits(dtape, dbind, dtape.leaf(xb));
      ag::Var fake = disc.logits(dtape, dbind, dtape.leaf(tape.val(x_hat)));
      ag::Var d_loss = hinge_d_loss(dtape, real, fake);
      dtape.backward(d_loss);
      dbind.harvest();
      nn::AdamConfig dc{tc.disc_lr > 0 ? tc.disc_lr : lr, tc.beta1, tc.beta2, tc.adam_eps, 0.0};
      nn::adam_step(disc.params(), dc, iter);
    }

    if (iter == 1 || iter == tc.iterations || iter % tc.log_interval == 0) {
      result.log.push_back({iter, lr, total_v, tape.val(parts.rec)[0], tape.val(parts.perc)[0],
                            tape.val(parts.adv)[0], tape.val(parts.commit)[0],
                            tape.val(vq.codebook_loss)[0]});
    }

    const bool at_interval =
        tc.checkpoint_interval > 0 && iter % tc.checkpoint_interval == 0 && iter != tc.iterations;
    if (!out_dir.empty() && at_interval) {
      nlohmann::json extra = manifest_extra;
      extra["stage"] = "stage1";
      extra["iteration"] = iter;
      extra["seed"] = tc.seed;
      save_checkpoint(out_dir / ("checkpoint-" + std::to_string(iter)), model.params(), extra);
    }
  }

  if (!out_dir.empty()) {
    nlohmann::json extra = manifest_extra;
    extra["stage"] = "stage1";
    extra["iteration"] = tc.iterations;
    extra["seed"] = tc.seed;
    result.final_checkpoint = out_dir / "checkpoint-final";
    save_checkpoint(result.final_checkpoint, model.params(), extra);
    write_stage1_log_csv(out_dir / "train_log.csv", result.log);
  }
  return result;
}

void write_stage1_log_csv(const std::filesystem::path& path,
                          const std::vector<Stage1LogRow>& log) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write training log to " + path.string());
  out << "iteration,lr,total,rec,perc,adv,commit,codebook\n";
  for (const auto& r : log)
    out << r.iteration << "," << r.lr << "," << r.total << "," << r.rec << "," << r.perc << ","
        << r.adv << "," << r.commit << "," << r.codebook << "\n";
}

}  // namespace cortenc
