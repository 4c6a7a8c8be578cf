#include "cortenc/nn.hpp"

#include <cmath>

#include "cortenc/errors.hpp"

namespace cortenc::nn {

Parameter& ParamStore::add(const std::string& name, Tensor init, bool decay) {
  if (index_.count(name)) throw ConfigError("ParamStore: duplicate parameter '" + name + "'");
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = std::move(init);
  p->decay = decay;
  params_.push_back(std::move(p));
  index_[name] = params_.size() - 1;
  return *params_.back();
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("ParamStore: unknown parameter '" + name + "'");
  return *params_[it->second];
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("ParamStore: unknown parameter '" + name + "'");
  return *params_[it->second];
}

int64_t ParamStore::total_size() const {
  int64_t n = 0;
  for (const auto& p : params_) n += p->value.size();
  return n;
}

ag::Var Binding::operator()(Parameter& p) {
  auto it = index_.find(&p);
  if (it != index_.end()) return bound_[it->second].second;
  ag::Var v = tape_->leaf(p.value, train_);
  index_[&p] = bound_.size();
  bound_.emplace_back(&p, v);
  return v;
}

void Binding::harvest() {
  for (auto& [p, v] : bound_) {
    if (tape_->has_grad(v))
      p->grad = tape_->grad(v).clone();
    else
      p->grad = Tensor::zeros(p->value.shape());
  }
}

Tensor he_normal(Rng& rng, std::vector<int64_t> shape, int64_t fan_in) {
  Tensor t(std::move(shape));
  rng.fill_normal(t, 0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  return t;
}

Tensor normal_init(Rng& rng, std::vector<int64_t> shape, double stddev) {
  Tensor t(std::move(shape));
  rng.fill_normal(t, 0.0, stddev);
  return t;
}

Conv2dLayer::Conv2dLayer(ParamStore& ps, const std::string& name, int64_t cin, int64_t cout,
                         int64_t k, int64_t stride, int64_t pad, Rng& rng)
    : stride(stride), pad(pad) {
  w = &ps.add(name + ".w", he_normal(rng, {cout, cin, k, k}, cin * k * k));
  b = &ps.add(name + ".b", Tensor::zeros({cout}), false);
}

ag::Var Conv2dLayer::forward(ag::Tape& t, Binding& bind, ag::Var x) const {
  return ag::conv2d(t, x, bind(*w), bind(*b), stride, pad);
}

LinearLayer::LinearLayer(ParamStore& ps, const std::string& name, int64_t din, int64_t dout,
                         Rng& rng, double init_std) {
  Tensor wt = init_std > 0.0 ? normal_init(rng, {din, dout}, init_std)
                             : he_normal(rng, {din, dout}, din);
  w = &ps.add(name + ".w", std::move(wt));
  b = &ps.add(name + ".b", Tensor::zeros({dout}), false);
}

ag::Var LinearLayer::forward(ag::Tape& t, Binding& bind, ag::Var x) const {
  return ag::linear(t, x, bind(*w), bind(*b));
}

GroupNormLayer::GroupNormLayer(ParamStore& ps, const std::string& name, int64_t channels,
                               int64_t groups)
    : groups(groups) {
  gamma = &ps.add(name + ".gamma", Tensor::full({channels}, 1.0), false);
  beta = &ps.add(name + ".beta", Tensor::zeros({channels}), false);
}

ag::Var GroupNormLayer::forward(ag::Tape& t, Binding& bind, ag::Var x) const {
  return ag::groupnorm(t, x, bind(*gamma), bind(*beta), groups);
}

LayerNormLayer::LayerNormLayer(ParamStore& ps, const std::string& name, int64_t dim) {
  gamma = &ps.add(name + ".gamma", Tensor::full({dim}, 1.0), false);
  beta = &ps.add(name + ".beta", Tensor::zeros({dim}), false);
}

ag::Var LayerNormLayer::forward(ag::Tape& t, Binding& bind, ag::Var x) const {
  return ag::layernorm(t, x, bind(*gamma), bind(*beta));
}

AttentionLayer::AttentionLayer(ParamStore& ps, const std::string& name, int64_t dim, int64_t heads,
                               Rng& rng)
    : heads(heads), dim(dim) {
  if (dim % heads != 0) throw ConfigError("AttentionLayer: heads must divide width");
  qkv = LinearLayer(ps, name + ".qkv", dim, 3 * dim, rng, 0.02);
  proj = LinearLayer(ps, name + ".proj", dim, dim, rng, 0.02);
}

ag::Var AttentionLayer::forward(ag::Tape& t, Binding& bind, ag::Var x) const {
  const int64_t dh = dim / heads;
  ag::Var fused = qkv.forward(t, bind, x);  // [T, 3D]
  ag::Var q = ag::slice_cols(t, fused, 0, dim);
  ag::Var k = ag::slice_cols(t, fused, dim, 2 * dim);
  ag::Var v = ag::slice_cols(t, fused, 2 * dim, 3 * dim);
  std::vector<ag::Var> outs;
  outs.reserve(static_cast<size_t>(heads));
  for (int64_t h = 0; h < heads; ++h) {
    ag::Var qh = ag::slice_cols(t, q, h * dh, (h + 1) * dh);
    ag::Var kh = ag::slice_cols(t, k, h * dh, (h + 1) * dh);
    ag::Var vh = ag::slice_cols(t, v, h * dh, (h + 1) * dh);
    ag::Var att = ag::matmul(t, qh, ag::transpose2d(t, kh));
    att = ag::scale(t, att, 1.0 / std::sqrt(static_cast<double>(dh)));
    att = ag::softmax_rows(t, att);
    outs.push_back(ag::matmul(t, att, vh));
  }
  return proj.forward(t, bind, ag::concat_cols(t, outs));
}

TransformerBlock::TransformerBlock(ParamStore& ps, const std::string& name, int64_t dim,
                                   int64_t heads, Rng& rng) {
  ln1 = LayerNormLayer(ps, name + ".ln1", dim);
  attn = AttentionLayer(ps, name + ".attn", dim, heads, rng);
  ln2 = LayerNormLayer(ps, name + ".ln2", dim);
  fc1 = LinearLayer(ps, name + ".fc1", dim, 4 * dim, rng, 0.02);
  fc2 = LinearLayer(ps, name + ".fc2", 4 * dim, dim, rng, 0.02);
}

ag::Var TransformerBlock::forward(ag::Tape& t, Binding& bind, ag::Var x) const {
  x = ag::add(t, x, attn.forward(t, bind, ln1.forward(t, bind, x)));
  ag::Var h = fc2.forward(t, bind, ag::gelu(t, fc1.forward(t, bind, ln2.forward(t, bind, x))));
  return ag::add(t, x, h);
}

void adam_step(ParamStore& ps, const AdamConfig& cfg, int64_t step) {
  if (step < 1) throw ConfigError("adam_step: step is 1-based");
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  for (const auto& up : ps.all()) {
    Parameter& p = *up;
    if (!p.m.defined()) {
      p.m = Tensor::zeros(p.value.shape());
      p.v = Tensor::zeros(p.value.shape());
    }
    const bool has_g = p.grad.defined();
    for (int64_t i = 0; i < p.value.size(); ++i) {
      const double g = has_g ? p.grad[i] : 0.0;
      p.m[i] = cfg.beta1 * p.m[i] + (1.0 - cfg.beta1) * g;
      p.v[i] = cfg.beta2 * p.v[i] + (1.0 - cfg.beta2) * g * g;
      const double mhat = p.m[i] / bc1;
      const double vhat = p.v[i] / bc2;
      double upd = mhat / (std::sqrt(vhat) + cfg.eps);
      if (p.decay && cfg.weight_decay > 0.0) upd += cfg.weight_decay * p.value[i];
      p.value[i] -= cfg.lr * upd;
    }
  }
}

double clip_grad_norm(ParamStore& ps, double max_norm) {
  double sq = 0.0;
  for (const auto& up : ps.all()) {
    if (!up->grad.defined()) continue;
    for (int64_t i = 0; i < up->grad.size(); ++i) sq += up->grad[i] * up->grad[i];
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (const auto& up : ps.all()) {
      if (!up->grad.defined()) continue;
      for (int64_t i = 0; i < up->grad.size(); ++i) up->grad[i] *= s;
    }
  }
  return norm;
}

}  // namespace cortenc::nn
