#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "cortenc/tensor.hpp"

namespace cortenc::ag {

// Define-by-run reverse-mode tape. Creation order is a topological
// order, so backward() is a single reverse sweep. One tape per forward
// pass; values are shallow Tensor handles, so leaves can alias model
// parameters without copying.
struct Var {
  int32_t id = -1;
  bool valid() const { return id >= 0; }
};

class Tape {
 public:
  Var leaf(Tensor value, bool requires_grad = false);

  // Internal node constructor used by the op library.
  Var make(Tensor value, bool requires_grad, std::function<void(Tape&)> back = nullptr);

  // Attaches the backward closure after the node exists, so the
  // closure can capture its own Var by value.
  void set_back(Var v, std::function<void(Tape&)> back);

  const Tensor& val(Var v) const { return nodes_[static_cast<size_t>(v.id)].value; }
  bool needs_grad(Var v) const { return nodes_[static_cast<size_t>(v.id)].requires_grad; }

  // Lazily allocated; zero-filled on first access.
  Tensor& grad(Var v);
  bool has_grad(Var v) const { return nodes_[static_cast<size_t>(v.id)].grad.defined(); }

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape in reverse. loss must
  // be a scalar (single element).
  void backward(Var loss);

  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::function<void(Tape&)> back;
  };
  std::vector<Node> nodes_;
};

// ---- elementwise ----
Var add(Tape& t, Var a, Var b);
Var sub(Tape& t, Var a, Var b);
Var mul(Tape& t, Var a, Var b);
Var scale(Tape& t, Var a, double s);
Var add_const(Tape& t, Var a, double c);
Var relu(Tape& t, Var a);
Var swish(Tape& t, Var a);   // x * sigmoid(x)
Var gelu(Tape& t, Var a);    // exact erf form
Var detach(Tape& t, Var a);  // stop-gradient
// Multiply by a constant mask that broadcasts over leading dims (same
// trailing-dims rule as masked_l1).
Var mask_mul(Tape& t, Var a, const Tensor& mask);

// ---- reductions ----
Var sum(Tape& t, Var a);
Var mean(Tape& t, Var a);
// Mean absolute difference over mask==1 pixels; mask broadcasts over
// leading dims of pred when pred is [N,1,H,W] and mask is [H,W].
Var masked_l1(Tape& t, Var pred, const Tensor& target, const Tensor& mask);
Var mse_const(Tape& t, Var pred, const Tensor& target);

// ---- shape ----
Var reshape(Tape& t, Var a, std::vector<int64_t> shape);
Var slice_rows(Tape& t, Var a, int64_t r0, int64_t r1);
Var slice_cols(Tape& t, Var a, int64_t c0, int64_t c1);
Var concat_rows(Tape& t, const std::vector<Var>& parts);
Var concat_cols(Tape& t, const std::vector<Var>& parts);
Var transpose2d(Tape& t, Var a);
Var gather_rows(Tape& t, Var table, const std::vector<int64_t>& idx);
Var repeat_row(Tape& t, Var row, int64_t n);
// Channel-first grid to position-major rows: [N,C,H,W] -> [N*H*W, C],
// positions in raster order per sample. rows_to_nchw is the inverse.
Var nchw_to_rows(Tape& t, Var x);
Var rows_to_nchw(Tape& t, Var x, int64_t n, int64_t c, int64_t h, int64_t w);

// ---- linear algebra ----
Var matmul(Tape& t, Var a, Var b);
Var linear(Tape& t, Var x, Var w, Var b);  // x[M,K] * w[K,N] + b[N]

// ---- normalization / activation blocks ----
Var softmax_rows(Tape& t, Var a);
Var layernorm(Tape& t, Var x, Var gamma, Var beta, double eps = 1e-5);
// x is [N,C,H,W]; statistics per (sample, group).
Var groupnorm(Tape& t, Var x, Var gamma, Var beta, int64_t groups, double eps = 1e-6);

// ---- conv stack ----
Var conv2d(Tape& t, Var x, Var w, Var b, int64_t stride, int64_t pad);
Var upsample2x(Tape& t, Var x);  // nearest neighbor

// ---- losses ----
Var cross_entropy_logits(Tape& t, Var logits, const std::vector<int64_t>& targets);

// ---- vector quantization ----
// Shared nearest-entry rule: exact argmin of squared distance, ties to
// the lowest index.
std::vector<int64_t> vq_nearest_indices(const double* latents, int64_t m,
                                        const double* codebook, int64_t k, int64_t d);

struct VqResult {
  Var quantized;              // codebook rows at the assigned indices;
                              // backward copies the gradient to the
                              // latent unchanged (straight-through)
  Var commit_loss;            // mean_p ||latent_p - sg(quantized_p)||^2, grads -> latent
  Var codebook_loss;          // mean_p ||sg(latent_p) - quantized_p||^2, grads -> codebook
  std::vector<int64_t> indices;
};

VqResult vector_quantize(Tape& t, Var latent, Var codebook);

}  // namespace cortenc::ag
