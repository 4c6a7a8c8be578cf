#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "cortenc/autodiff.hpp"
#include "cortenc/rng.hpp"
#include "cortenc/tensor.hpp"

namespace cortenc::nn {

// A named trainable tensor plus its optimizer state. Addresses are
// stable for the life of the owning ParamStore.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;  // written by Binding::harvest after backward
  Tensor m, v;  // Adam moments, allocated on first step
  bool decay = true;
};

class ParamStore {
 public:
  Parameter& add(const std::string& name, Tensor init, bool decay = true);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return index_.count(name) != 0; }
  // Insertion order, which is also checkpoint order.
  const std::vector<std::unique_ptr<Parameter>>& all() const { return params_; }
  int64_t total_size() const;

 private:
  std::vector<std::unique_ptr<Parameter>> params_;
  std::unordered_map<std::string, size_t> index_;
};

// Binds parameters to tape leaves, one leaf per parameter per tape.
// With train=false the leaves carry no gradient and backward skips the
// whole model.
class Binding {
 public:
  Binding(ag::Tape& tape, bool train) : tape_(&tape), train_(train) {}

  ag::Var operator()(Parameter& p);

  // Copies d(loss)/d(param) out of the tape into Parameter::grad;
  // parameters the loss never touched get zeros.
  void harvest();

 private:
  ag::Tape* tape_;
  bool train_;
  std::vector<std::pair<Parameter*, ag::Var>> bound_;
  std::unordered_map<Parameter*, size_t> index_;
};

// ---- initializers ----
Tensor he_normal(Rng& rng, std::vector<int64_t> shape, int64_t fan_in);
Tensor normal_init(Rng& rng, std::vector<int64_t> shape, double stddev);

// ---- layers ----

struct Conv2dLayer {
  Parameter* w = nullptr;
  Parameter* b = nullptr;
  int64_t stride = 1, pad = 0;
  Conv2dLayer() = default;
  Conv2dLayer(ParamStore& ps, const std::string& name, int64_t cin, int64_t cout, int64_t k,
              int64_t stride, int64_t pad, Rng& rng);
  ag::Var forward(ag::Tape& t, Binding& bind, ag::Var x) const;
};

struct LinearLayer {
  Parameter* w = nullptr;
  Parameter* b = nullptr;
  LinearLayer() = default;
  LinearLayer(ParamStore& ps, const std::string& name, int64_t din, int64_t dout, Rng& rng,
              double init_std = -1.0);  // default: He
  ag::Var forward(ag::Tape& t, Binding& bind, ag::Var x) const;
};

struct GroupNormLayer {
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;
  int64_t groups = 1;
  GroupNormLayer() = default;
  GroupNormLayer(ParamStore& ps, const std::string& name, int64_t channels, int64_t groups);
  ag::Var forward(ag::Tape& t, Binding& bind, ag::Var x) const;
};

struct LayerNormLayer {
  Parameter* gamma = nullptr;
  Parameter* beta = nullptr;
  LayerNormLayer() = default;
  LayerNormLayer(ParamStore& ps, const std::string& name, int64_t dim);
  ag::Var forward(ag::Tape& t, Binding& bind, ag::Var x) const;
};

// Standard multi-head self-attention over one [T, D] sequence.
struct AttentionLayer {
  LinearLayer qkv, proj;
  int64_t heads = 1, dim = 0;
  AttentionLayer() = default;
  AttentionLayer(ParamStore& ps, const std::string& name, int64_t dim, int64_t heads, Rng& rng);
  ag::Var forward(ag::Tape& t, Binding& bind, ag::Var x) const;
};

// Pre-norm block: x + attn(ln1(x)), then x + mlp(ln2(x)); GELU MLP
// with a 4x hidden width.
struct TransformerBlock {
  LayerNormLayer ln1, ln2;
  AttentionLayer attn;
  LinearLayer fc1, fc2;
  TransformerBlock() = default;
  TransformerBlock(ParamStore& ps, const std::string& name, int64_t dim, int64_t heads, Rng& rng);
  ag::Var forward(ag::Tape& t, Binding& bind, ag::Var x) const;
};

// ---- optimizers ----

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled; skips Parameter::decay == false
};

// One update over every parameter in the store; step is 1-based and
// drives bias correction. Parameters with no harvested grad still
// advance their moments (with zero gradient).
void adam_step(ParamStore& ps, const AdamConfig& cfg, int64_t step);

// Global-norm clip over harvested grads; returns the pre-clip norm.
double clip_grad_norm(ParamStore& ps, double max_norm);

}  // namespace cortenc::nn
