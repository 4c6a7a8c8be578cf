#include "cortenc/autodiff.hpp"

#include <cmath>
#include <limits>
#include <string>

#include <Eigen/Dense>

#include "cortenc/errors.hpp"

namespace cortenc::ag {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

Var Tape::leaf(Tensor value, bool requires_grad) {
  if (!value.defined()) throw ShapeError("Tape::leaf: undefined tensor");
  nodes_.push_back(Node{std::move(value), Tensor(), requires_grad, nullptr});
  return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

Var Tape::make(Tensor value, bool requires_grad, std::function<void(Tape&)> back) {
  nodes_.push_back(Node{std::move(value), Tensor(), requires_grad, std::move(back)});
  return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

void Tape::set_back(Var v, std::function<void(Tape&)> back) {
  nodes_[static_cast<size_t>(v.id)].back = std::move(back);
}

Tensor& Tape::grad(Var v) {
  Node& n = nodes_[static_cast<size_t>(v.id)];
  if (!n.grad.defined()) n.grad = Tensor::zeros(n.value.shape());
  return n.grad;
}

void Tape::backward(Var loss) {
  if (!loss.valid()) throw ShapeError("backward: invalid var");
  if (val(loss).size() != 1) throw ShapeError("backward: loss must be scalar");
  grad(loss)[0] = 1.0;
  for (int32_t i = loss.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<size_t>(i)];
    if (n.requires_grad && n.grad.defined() && n.back) n.back(*this);
  }
}

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b))
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

void check_2d(const Tensor& a, const char* op) {
  if (a.rank() != 2) throw ShapeError(std::string(op) + ": expected rank 2, got " + a.shape_str());
}

void axpy(Tensor& dst, const Tensor& src) {
  const int64_t n = dst.size();
  for (int64_t i = 0; i < n; ++i) dst[i] += src[i];
}

ECMap cmap(const Tensor& t) { return ECMap(t.data(), t.dim(0), t.dim(1)); }
EMap mmap(Tensor& t) { return EMap(t.data(), t.dim(0), t.dim(1)); }

}  // namespace

// ---- elementwise ----

Var add(Tape& t, Var a, Var b) {
  const Tensor &va = t.val(a), &vb = t.val(b);
  check_same_shape(va, vb, "add");
  Tensor out(va.shape());
  for (int64_t i = 0; i < va.size(); ++i) out[i] = va[i] + vb[i];
  const bool rg = t.needs_grad(a) || t.needs_grad(b);
  Var o = t.make(std::move(out), rg);
  if (rg)
    t.set_back(o, [a, b, o](Tape& tp) {
      const Tensor& g = tp.grad(o);
      if (tp.needs_grad(a)) axpy(tp.grad(a), g);
      if (tp.needs_grad(b)) axpy(tp.grad(b), g);
    });
  return o;
}

Var sub(Tape& t, Var a, Var b) {
  const Tensor &va = t.val(a), &vb = t.val(b);
  check_same_shape(va, vb, "sub");
  Tensor out(va.shape());
  for (int64_t i = 0; i < va.size(); ++i) out[i] = va[i] - vb[i];
  const bool rg = t.needs_grad(a) || t.needs_grad(b);
  Var o = t.make(std::move(out), rg);
  if (rg)
    t.set_back(o, [a, b, o](Tape& tp) {
      const Tensor& g = tp.grad(o);
      if (tp.needs_grad(a)) axpy(tp.grad(a), g);
      if (tp.needs_grad(b)) {
        Tensor& pg = tp.grad(b);
        for (int64_t i = 0; i < g.size(); ++i) pg[i] -= g[i];
      }
    });
  return o;
}

Var mul(Tape& t, Var a, Var b) {
  const Tensor &va = t.val(a), &vb = t.val(b);
  check_same_shape(va, vb, "mul");
  Tensor out(va.shape());
  for (int64_t i = 0; i < va.size(); ++i) out[i] = va[i] * vb[i];
  const bool rg = t.needs_grad(a) || t.needs_grad(b);
  Var o = t.make(std::move(out), rg);
  if (rg)
    t.set_back(o, [a, b, o, va, vb](Tape& tp) {
      const Tensor& g = tp.grad(o);
      if (tp.needs_grad(a)) {
        Tensor& pg = tp.grad(a);
        for (int64_t i = 0; i < g.size(); ++i) pg[i] += vb[i] * g[i];
      }
      if (tp.needs_grad(b)) {
        Tensor& pg = tp.grad(b);
        for (int64_t i = 0; i < g.size(); ++i) pg[i] += va[i] * g[i];
      }
    });
  return o;
}

Var scale(Tape& t, Var a, double s) {
  const Tensor& va = t.val(a);
  Tensor out(va.shape());
  for (int64_t i = 0; i < va.size(); ++i) out[i] = va[i] * s;
  const bool rg = t.needs_grad(a);
  Var o = t.make(std::move(out), rg);
  if (rg)
    t.set_back(o, [a, o, s](Tape& tp) {
      const Tensor& g = tp.grad(o);
      Tensor& pg = tp.grad(a);
      for (int64_t i = 0; i < g.size(); ++i) pg[i] += s * g[i];
    });
  return o;
}

Var add_const(Tape& t, Var a, double c) {
  const Tensor& va = t.val(a);
  Tensor out(va.shape());
  for (int64_t i = 0; i < va.size(); ++i) out[i] = va[i] + c;
  const bool rg = t.needs_grad(a);
  Var o = t.make(std::move(out), rg);
  if (rg)
    t.set_back(o, [a, o](Tape& tp) { axpy(tp.grad(a), tp.grad(o)); });
  return o;
}

Var relu(Tape& t, Var a) {
  const Tensor& va = t.val(a);
  Tensor out(va.shape());
  for (int64_t i = 0; i < va.size(); ++i) out[i] = va[i] > 0.0 ? va[i] : 0.0;
  const bool rg = t.needs_grad(a);
  Var o = t.make(std::move(out), rg);
  if (rg)
    t.set_back(o, [a, o, va](Tape& tp) {
      const Tensor& g = tp.grad(o);
      Tensor& pg = tp.grad(a);
      for (int64_t i = 0; i < g.size(); ++i)
        if (va[i] > 0.0) pg[i] += g[i];
    });
  return o;
}

Var swish(Tape& t, Var a) {
  const Tensor& va = t.val(a);
  Tensor out(va.shape());
  for (int64_t i = 0; i < va.size(); ++i) {
    const double s = 1.0 / (1.0 + std::exp(-va[i]));
    out[i] = va[i] * s;
  }
  const bool rg = t.needs_grad(a);
  Var o = t.make(std::move(out), rg);
  if (rg)
    t.set_back(o, [a, o, va](Tape& tp) {
      const Tensor& g = tp.grad(o);
      Tensor& pg = tp.grad(a);
      for (int64_t i = 0; i < g.size(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-va[i]));
        pg[i] += s * (1.0 + va[i] * (1.0 - s)) * g[i];
      }
    });
  return o;
}

Var gelu(Tape& t, Var a) {
  constexpr double kInvSqrt2 = 0.7071067811865475244;
  constexpr double kInvSqrt2Pi = 0.3989422804014326779;
  const Tensor& va = t.val(a);
  Tensor out(va.shape());
  for (int64_t i = 0; i < va.size(); ++i)
    out[i] = 0.5 * va[i] * (1.0 + std::erf(va[i] * kInvSqrt2));
  const bool rg = t.needs_grad(a);
  Var o = t.make(std::move(out), rg);
  if (rg)
    t.set_back(o, [a, o, va](Tape& tp) {
      const Tensor& g = tp.grad(o);
      Tensor& pg = tp.grad(a);
      for (int64_t i = 0; i < g.size(); ++i) {
        const double x = va[i];
        const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
        pg[i] += (cdf + x * pdf) * g[i];
      }
    });
  return o;
}

Var detach(Tape& t, Var a) { return t.make(t.val(a), false); }

namespace {

int64_t broadcast_lead(const Tensor& big, const Tensor& small, const char* op) {
  if (small.size() == 0 || big.size() % small.size() != 0)
    throw ShapeError(std::string(op) + ": mask size does not tile " + big.shape_str());
  const int rb = big.rank(), rs = small.rank();
  if (rs > rb) throw ShapeError(std::string(op) + ": mask rank exceeds input rank");
  for (int i = 0; i < rs; ++i)
    if (small.dim(rs - 1 - i) != big.dim(rb - 1 - i))
      throw ShapeError(std::string(op) + ": trailing dims of " + big.shape_str() +
                       " do not match mask " + small.shape_str());
  return big.size() / small.size();
}

}  // namespace

Var mask_mul(Tape& t, Var a, const Tensor& mask) {
  const Tensor& va = t.val(a);
  const int64_t lead = broadcast_lead(va, mask, "mask_mul");
  const int64_t msz = mask.size();
  Tensor out(va.shape());
  for (int64_t b = 0; b < lead; ++b)
    for (int64_t i = 0; i < msz; ++i) out[b * msz + i] = va[b * msz + i] * mask[i];
  const bool rg = t.needs_grad(a);
  Var o = t.make(std::move(out), rg);
  if (rg)
    t.set_back(o, [a, o, mask, lead, msz](Tape& tp) {
      const Tensor& g = tp.grad(o);
      Tensor& pg = tp.grad(a);
      for (int64_t b = 0; b < lead; ++b)
        for (int64_t i = 0; i < msz; ++i) pg[b * msz + i] += g[b * msz + i] * mask[i];
    });
  return o;
}

// ---- reductions ----

Var sum(Tape& t, Var a) {
  const Tensor& va = t.val(a);
  double acc = 0.0;
  for (int64_t i = 0; i < va.size(); ++i) acc += va[i];
  const bool rg = t.needs_grad(a);
  Var o = t.make(Tensor::scalar(acc), rg);
  if (rg)
    t.set_back(o, [a, o](Tape& tp) {
      const double g = tp.grad(o)[0];
      Tensor& pg = tp.grad(a);
      for (int64_t i = 0; i < pg.size(); ++i) pg[i] += g;
    });
  return o;
}

Var mean(Tape& t, Var a) {
  const Tensor& va = t.val(a);
  if (va.size() == 0) throw ShapeError("mean: empty tensor");
  double acc = 0.0;
  for (int64_t i = 0; i < va.size(); ++i) acc += va[i];
  const double inv = 1.0 / static_cast<double>(va.size());
  const bool rg = t.needs_grad(a);
  Var o = t.make(Tensor::scalar(acc * inv), rg);
  if (rg)
    t.set_back(o, [a, o, inv](Tape& tp) {
      const double g = tp.grad(o)[0] * inv;
      Tensor& pg = tp.grad(a);
      for (int64_t i = 0; i < pg.size(); ++i) pg[i] += g;
    });
  return o;
}

Var masked_l1(Tape& t, Var pred, const Tensor& target, const Tensor& mask) {
  const Tensor& vp = t.val(pred);
  check_same_shape(vp, target, "masked_l1");
  const int64_t msz = mask.size();
  if (msz == 0 || vp.size() % msz != 0)
    throw ShapeError("masked_l1: mask size does not tile prediction " + vp.shape_str());
  const int rp = vp.rank(), rm = mask.rank();
  if (rm > rp) throw ShapeError("masked_l1: mask rank exceeds prediction rank");
  for (int i = 0; i < rm; ++i)
    if (mask.dim(rm - 1 - i) != vp.dim(rp - 1 - i))
      throw ShapeError("masked_l1: trailing dims of prediction " + vp.shape_str() +
                       " do not match mask " + mask.shape_str());
  const int64_t lead = vp.size() / msz;
  int64_t valid = 0;
  for (int64_t i = 0; i < msz; ++i)
    if (mask[i] != 0.0) ++valid;
  if (valid == 0) throw DataError("masked_l1: mask has no valid pixels");
  const double denom = static_cast<double>(lead * valid);
  double acc = 0.0;
  for (int64_t b = 0; b < lead; ++b) {
    const int64_t off = b * msz;
    for (int64_t i = 0; i < msz; ++i)
      if (mask[i] != 0.0) acc += std::abs(vp[off + i] - target[off + i]);
  }
  const bool rg = t.needs_grad(pred);
  Var o = t.make(Tensor::scalar(acc / denom), rg);
  if (rg)
    t.set_back(o, [pred, o, vp, target, mask, lead, msz, denom](Tape& tp) {
      const double g = tp.grad(o)[0] / denom;
      Tensor& pg = tp.grad(pred);
      for (int64_t b = 0; b < lead; ++b) {
        const int64_t off = b * msz;
        for (int64_t i = 0; i < msz; ++i) {
          if (mask[i] == 0.0) continue;
          const double d = vp[off + i] - target[off + i];
          if (d > 0.0)
            pg[off + i] += g;
          else if (d < 0.0)
            pg[off + i] -= g;
        }
      }
    });
  return o;
}

Var mse_const(Tape& t, Var pred, const Tensor& target) {
  const Tensor& vp = t.val(pred);
  check_same_shape(vp, target, "mse_const");
  if (vp.size() == 0) throw ShapeError("mse_const: empty tensor");
  double acc = 0.0;
  for (int64_t i = 0; i < vp.size(); ++i) {
    const double d = vp[i] - target[i];
    acc += d * d;
  }
  const double inv = 1.0 / static_cast<double>(vp.size());
  const bool rg = t.needs_grad(pred);
  Var o = t.make(Tensor::scalar(acc * inv), rg);
  if (rg)
    t.set_back(o, [pred, o, vp, target, inv](Tape& tp) {
      const double g = 2.0 * inv * tp.grad(o)[0];
      Tensor& pg = tp.grad(pred);
      for (int64_t i = 0; i < pg.size(); ++i) pg[i] += g * (vp[i] - target[i]);
    });
  return o;
}

// ---- shape ----

Var reshape(Tape& t, Var a, std::vector<int64_t> shape) {
  const Tensor& va = t.val(a);
  Tensor out = va.reshaped(std::move(shape));
  const bool rg = t.needs_grad(a);
  Var o = t.make(std::move(out), rg);
  if (rg)
    t.set_back(o, [a, o](Tape& tp) {
      const Tensor& g = tp.grad(o);
      Tensor& pg = tp.grad(a);
      for (int64_t i = 0; i < g.size(); ++i) pg[i] += g[i];
    });
  return o;
}

Var slice_rows(Tape& t, Var a, int64_t r0, int64_t r1) {
  const Tensor& va = t.val(a);
  check_2d(va, "slice_rows");
  const int64_t R = va.dim(0), C = va.dim(1);
  if (r0 < 0 || r1 > R || r0 >= r1)
    throw ShapeError("slice_rows: bad range [" + std::to_string(r0) + "," + std::to_string(r1) +
                     ") for " + va.shape_str());
  Tensor out({r1 - r0, C});
  for (int64_t i = 0; i < (r1 - r0) * C; ++i) out[i] = va[r0 * C + i];
  const bool rg = t.needs_grad(a);
  Var o = t.make(std::move(out), rg);
  if (rg)
    t.set_back(o, [a, o, r0, C](Tape& tp) {
      const Tensor& g = tp.grad(o);
      Tensor& pg = tp.grad(a);
      for (int64_t i = 0; i < g.size(); ++i) pg[r0 * C + i] += g[i];
    });
  return o;
}

Var slice_cols(Tape& t, Var a, int64_t c0, int64_t c1) {
  const Tensor& va = t.val(a);
  check_2d(va, "slice_cols");
  const int64_t R = va.dim(0), C = va.dim(1);
  if (c0 < 0 || c1 > C || c0 >= c1)
    throw ShapeError("slice_cols: bad range [" + std::to_string(c0) + "," + std::to_string(c1) +
                     ") for " + va.shape_str());
  const int64_t W = c1 - c0;
  Tensor out({R, W});
  for (int64_t r = 0; r < R; ++r)
    for (int64_t c = 0; c < W; ++c) out[r * W + c] = va[r * C + c0 + c];
  const bool rg = t.needs_grad(a);
  Var o = t.make(std::move(out), rg);
  if (rg)
    t.set_back(o, [a, o, c0, C, W](Tape& tp) {
      const Tensor& g = tp.grad(o);
      Tensor& pg = tp.grad(a);
      const int64_t R = g.dim(0);
      for (int64_t r = 0; r < R; ++r)
        for (int64_t c = 0; c < W; ++c) pg[r * C + c0 + c] += g[r * W + c];
    });
  return o;
}

Var concat_rows(Tape& t, const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no parts");
  const int64_t C = t.val(parts[0]).dim(1);
  int64_t R = 0;
  bool rg = false;
  for (Var p : parts) {
    const Tensor& v = t.val(p);
    check_2d(v, "concat_rows");
    if (v.dim(1) != C) throw ShapeError("concat_rows: column mismatch");
    R += v.dim(0);
    rg = rg || t.needs_grad(p);
  }
  Tensor out({R, C});
  int64_t off = 0;
  for (Var p : parts) {
    const Tensor& v = t.val(p);
    for (int64_t i = 0; i < v.size(); ++i) out[off + i] = v[i];
    off += v.size();
  }
  Var o = t.make(std::move(out), rg);
  if (rg)
    t.set_back(o, [parts, o](Tape& tp) {
      const Tensor& g = tp.grad(o);
      int64_t off = 0;
      for (Var p : parts) {
        const int64_t n = tp.val(p).size();
        if (tp.needs_grad(p)) {
          Tensor& pg = tp.grad(p);
          for (int64_t i = 0; i < n; ++i) pg[i] += g[off + i];
        }
        off += n;
      }
    });
  return o;
}

Var concat_cols(Tape& t, const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no parts");
  const int64_t R = t.val(parts[0]).dim(0);
  int64_t C = 0;
  bool rg = false;
  for (Var p : parts) {
    const Tensor& v = t.val(p);
    check_2d(v, "concat_cols");
    if (v.dim(0) != R) throw ShapeError("concat_cols: row mismatch");
    C += v.dim(1);
    rg = rg || t.needs_grad(p);
  }
  Tensor out({R, C});
  int64_t coff = 0;
  for (Var p : parts) {
    const Tensor& v = t.val(p);
    const int64_t w = v.dim(1);
    for (int64_t r = 0; r < R; ++r)
      for (int64_t c = 0; c < w; ++c) out[r * C + coff + c] = v[r * w + c];
    coff += w;
  }
  Var o = t.make(std::move(out), rg);
  if (rg)
    t.set_back(o, [parts, o, R, C](Tape& tp) {
      const Tensor& g = tp.grad(o);
      int64_t coff = 0;
      for (Var p : parts) {
        const int64_t w = tp.val(p).dim(1);
        if (tp.needs_grad(p)) {
          Tensor& pg = tp.grad(p);
          for (int64_t r = 0; r < R; ++r)
            for (int64_t c = 0; c < w; ++c) pg[r * w + c] += g[r * C + coff + c];
        }
        coff += w;
      }
    });
  return o;
}

Var transpose2d(Tape& t, Var a) {
  const Tensor& va = t.val(a);
  check_2d(va, "transpose2d");
  const int64_t R = va.dim(0), C = va.dim(1);
  Tensor out({C, R});
  for (int64_t r = 0; r < R; ++r)
    for (int64_t c = 0; c < C; ++c) out[c * R + r] = va[r * C + c];
  const bool rg = t.needs_grad(a);
  Var o = t.make(std::move(out), rg);
  if (rg)
    t.set_back(o, [a, o, R, C](Tape& tp) {
      const Tensor& g = tp.grad(o);
      Tensor& pg = tp.grad(a);
      for (int64_t r = 0; r < R; ++r)
        for (int64_t c = 0; c < C; ++c) pg[r * C + c] += g[c * R + r];
    });
  return o;
}

Var gather_rows(Tape& t, Var table, const std::vector<int64_t>& idx) {
  const Tensor& vt = t.val(table);
  check_2d(vt, "gather_rows");
  const int64_t K = vt.dim(0), D = vt.dim(1);
  for (int64_t i : idx)
    if (i < 0 || i >= K)
      throw ShapeError("gather_rows: index " + std::to_string(i) + " out of range [0," +
                       std::to_string(K) + ")");
  const int64_t R = static_cast<int64_t>(idx.size());
  Tensor out({R, D});
  for (int64_t r = 0; r < R; ++r)
    for (int64_t d = 0; d < D; ++d) out[r * D + d] = vt[idx[static_cast<size_t>(r)] * D + d];
  const bool rg = t.needs_grad(table);
  Var o = t.make(std::move(out), rg);
  if (rg)
    t.set_back(o, [table, o, idx, D](Tape& tp) {
      const Tensor& g = tp.grad(o);
      Tensor& pg = tp.grad(table);
      const int64_t R = g.dim(0);
      for (int64_t r = 0; r < R; ++r)
        for (int64_t d = 0; d < D; ++d) pg[idx[static_cast<size_t>(r)] * D + d] += g[r * D + d];
    });
  return o;
}

Var repeat_row(Tape& t, Var row, int64_t n) {
  const Tensor& vr = t.val(row);
  if (n < 1) throw ShapeError("repeat_row: n must be positive");
  if (!(vr.rank() == 1 || (vr.rank() == 2 && vr.dim(0) == 1)))
    throw ShapeError("repeat_row: expected [D] or [1,D], got " + vr.shape_str());
  const int64_t D = vr.size();
  Tensor out({n, D});
  for (int64_t r = 0; r < n; ++r)
    for (int64_t d = 0; d < D; ++d) out[r * D + d] = vr[d];
  const bool rg = t.needs_grad(row);
  Var o = t.make(std::move(out), rg);
  if (rg)
    t.set_back(o, [row, o, n, D](Tape& tp) {
      const Tensor& g = tp.grad(o);
      Tensor& pg = tp.grad(row);
      for (int64_t r = 0; r < n; ++r)
        for (int64_t d = 0; d < D; ++d) pg[d] += g[r * D + d];
    });
  return o;
}

Var nchw_to_rows(Tape& t, Var x) {
  const Tensor& vx = t.val(x);
  if (vx.rank() != 4)
    throw ShapeError("nchw_to_rows: input must be [N,C,H,W], got " + vx.shape_str());
  const int64_t N = vx.dim(0), C = vx.dim(1), HW = vx.dim(2) * vx.dim(3);
  Tensor out({N * HW, C});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t p = 0; p < HW; ++p)
        out[(n * HW + p) * C + c] = vx[(n * C + c) * HW + p];
  const bool rg = t.needs_grad(x);
  Var o = t.make(std::move(out), rg);
  if (rg)
    t.set_back(o, [x, o, N, C, HW](Tape& tp) {
      const Tensor& g = tp.grad(o);
      Tensor& pg = tp.grad(x);
      for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c)
          for (int64_t p = 0; p < HW; ++p)
            pg[(n * C + c) * HW + p] += g[(n * HW + p) * C + c];
    });
  return o;
}

Var rows_to_nchw(Tape& t, Var x, int64_t n, int64_t c, int64_t h, int64_t w) {
  const Tensor& vx = t.val(x);
  check_2d(vx, "rows_to_nchw");
  if (vx.dim(0) != n * h * w || vx.dim(1) != c)
    throw ShapeError("rows_to_nchw: " + vx.shape_str() + " does not match [" + std::to_string(n) +
                     "," + std::to_string(c) + "," + std::to_string(h) + "," + std::to_string(w) +
                     "]");
  const int64_t HW = h * w;
  Tensor out({n, c, h, w});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t ch = 0; ch < c; ++ch)
      for (int64_t p = 0; p < HW; ++p)
        out[(i * c + ch) * HW + p] = vx[(i * HW + p) * c + ch];
  const bool rg = t.needs_grad(x);
  Var o = t.make(std::move(out), rg);
  if (rg)
    t.set_back(o, [x, o, n, c, HW](Tape& tp) {
      const Tensor& g = tp.grad(o);
      Tensor& pg = tp.grad(x);
      for (int64_t i = 0; i < n; ++i)
        for (int64_t ch = 0; ch < c; ++ch)
          for (int64_t p = 0; p < HW; ++p)
            pg[(i * HW + p) * c + ch] += g[(i * c + ch) * HW + p];
    });
  return o;
}

// ---- linear algebra ----

Var matmul(Tape& t, Var a, Var b) {
  const Tensor &va = t.val(a), &vb = t.val(b);
  check_2d(va, "matmul");
  check_2d(vb, "matmul");
  if (va.dim(1) != vb.dim(0))
    throw ShapeError("matmul: inner dim mismatch " + va.shape_str() + " x " + vb.shape_str());
  Tensor out({va.dim(0), vb.dim(1)});
  mmap(out).noalias() = cmap(va) * cmap(vb);
  const bool rg = t.needs_grad(a) || t.needs_grad(b);
  Var o = t.make(std::move(out), rg);
  if (rg)
    t.set_back(o, [a, b, o, va, vb](Tape& tp) {
      Tensor g = tp.grad(o);
      if (tp.needs_grad(a)) mmap(tp.grad(a)).noalias() += cmap(g) * cmap(vb).transpose();
      if (tp.needs_grad(b)) mmap(tp.grad(b)).noalias() += cmap(va).transpose() * cmap(g);
    });
  return o;
}

Var linear(Tape& t, Var x, Var w, Var b) {
  const Tensor &vx = t.val(x), &vw = t.val(w), &vb = t.val(b);
  check_2d(vx, "linear");
  check_2d(vw, "linear");
  if (vx.dim(1) != vw.dim(0))
    throw ShapeError("linear: inner dim mismatch " + vx.shape_str() + " x " + vw.shape_str());
  const int64_t M = vx.dim(0), N = vw.dim(1);
  if (vb.size() != N) throw ShapeError("linear: bias size " + vb.shape_str());
  Tensor out({M, N});
  mmap(out).noalias() = cmap(vx) * cmap(vw);
  for (int64_t m = 0; m < M; ++m)
    for (int64_t n = 0; n < N; ++n) out[m * N + n] += vb[n];
  const bool rg = t.needs_grad(x) || t.needs_grad(w) || t.needs_grad(b);
  Var o = t.make(std::move(out), rg);
  if (rg)
    t.set_back(o, [x, w, b, o, vx, vw, M, N](Tape& tp) {
      Tensor g = tp.grad(o);
      if (tp.needs_grad(x)) mmap(tp.grad(x)).noalias() += cmap(g) * cmap(vw).transpose();
      if (tp.needs_grad(w)) mmap(tp.grad(w)).noalias() += cmap(vx).transpose() * cmap(g);
      if (tp.needs_grad(b)) {
        Tensor& pg = tp.grad(b);
        for (int64_t m = 0; m < M; ++m)
          for (int64_t n = 0; n < N; ++n) pg[n] += g[m * N + n];
      }
    });
  return o;
}

// ---- normalization blocks ----

Var softmax_rows(Tape& t, Var a) {
  const Tensor& va = t.val(a);
  check_2d(va, "softmax_rows");
  const int64_t R = va.dim(0), C = va.dim(1);
  Tensor out({R, C});
  for (int64_t r = 0; r < R; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t c = 0; c < C; ++c) mx = std::max(mx, va[r * C + c]);
    double z = 0.0;
    for (int64_t c = 0; c < C; ++c) {
      out[r * C + c] = std::exp(va[r * C + c] - mx);
      z += out[r * C + c];
    }
    for (int64_t c = 0; c < C; ++c) out[r * C + c] /= z;
  }
  const bool rg = t.needs_grad(a);
  Var o = t.make(out, rg);
  if (rg)
    t.set_back(o, [a, o, out, R, C](Tape& tp) {
      const Tensor& g = tp.grad(o);
      Tensor& pg = tp.grad(a);
      for (int64_t r = 0; r < R; ++r) {
        double dot = 0.0;
        for (int64_t c = 0; c < C; ++c) dot += g[r * C + c] * out[r * C + c];
        for (int64_t c = 0; c < C; ++c)
          pg[r * C + c] += out[r * C + c] * (g[r * C + c] - dot);
      }
    });
  return o;
}

Var layernorm(Tape& t, Var x, Var gamma, Var beta, double eps) {
  const Tensor &vx = t.val(x), &vg = t.val(gamma), &vbt = t.val(beta);
  check_2d(vx, "layernorm");
  const int64_t R = vx.dim(0), D = vx.dim(1);
  if (vg.size() != D || vbt.size() != D)
    throw ShapeError("layernorm: gamma/beta must have size " + std::to_string(D));
  Tensor out({R, D});
  Tensor mu({R}), inv({R});
  for (int64_t r = 0; r < R; ++r) {
    double m = 0.0;
    for (int64_t d = 0; d < D; ++d) m += vx[r * D + d];
    m /= static_cast<double>(D);
    double v = 0.0;
    for (int64_t d = 0; d < D; ++d) {
      const double c = vx[r * D + d] - m;
      v += c * c;
    }
    v /= static_cast<double>(D);
    const double is = 1.0 / std::sqrt(v + eps);
    mu[r] = m;
    inv[r] = is;
    for (int64_t d = 0; d < D; ++d)
      out[r * D + d] = vg[d] * ((vx[r * D + d] - m) * is) + vbt[d];
  }
  const bool rg = t.needs_grad(x) || t.needs_grad(gamma) || t.needs_grad(beta);
  Var o = t.make(std::move(out), rg);
  if (rg)
    t.set_back(o, [x, gamma, beta, o, vx, vg, mu, inv, R, D](Tape& tp) {
      const Tensor& g = tp.grad(o);
      const double invD = 1.0 / static_cast<double>(D);
      for (int64_t r = 0; r < R; ++r) {
        const double m = mu[r], is = inv[r];
        if (tp.needs_grad(gamma)) {
          Tensor& pg = tp.grad(gamma);
          for (int64_t d = 0; d < D; ++d)
            pg[d] += g[r * D + d] * ((vx[r * D + d] - m) * is);
        }
        if (tp.needs_grad(beta)) {
          Tensor& pb = tp.grad(beta);
          for (int64_t d = 0; d < D; ++d) pb[d] += g[r * D + d];
        }
        if (tp.needs_grad(x)) {
          double s1 = 0.0, s2 = 0.0;
          for (int64_t d = 0; d < D; ++d) {
            const double xh = (vx[r * D + d] - m) * is;
            const double dxh = g[r * D + d] * vg[d];
            s1 += dxh;
            s2 += dxh * xh;
          }
          Tensor& px = tp.grad(x);
          for (int64_t d = 0; d < D; ++d) {
            const double xh = (vx[r * D + d] - m) * is;
            const double dxh = g[r * D + d] * vg[d];
            px[r * D + d] += is * (dxh - invD * s1 - xh * invD * s2);
          }
        }
      }
    });
  return o;
}

// ---- losses ----

Var cross_entropy_logits(Tape& t, Var logits, const std::vector<int64_t>& targets) {
  const Tensor& vl = t.val(logits);
  check_2d(vl, "cross_entropy_logits");
  const int64_t R = vl.dim(0), K = vl.dim(1);
  if (static_cast<int64_t>(targets.size()) != R)
    throw ShapeError("cross_entropy_logits: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(R) + " rows");
  for (int64_t y : targets)
    if (y < 0 || y >= K)
      throw ShapeError("cross_entropy_logits: target " + std::to_string(y) + " out of range");
  double acc = 0.0;
  for (int64_t r = 0; r < R; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int64_t c = 0; c < K; ++c) mx = std::max(mx, vl[r * K + c]);
    double z = 0.0;
    for (int64_t c = 0; c < K; ++c) z += std::exp(vl[r * K + c] - mx);
    acc += mx + std::log(z) - vl[r * K + targets[static_cast<size_t>(r)]];
  }
  const double invR = 1.0 / static_cast<double>(R);
  const bool rg = t.needs_grad(logits);
  Var o = t.make(Tensor::scalar(acc * invR), rg);
  if (rg)
    t.set_back(o, [logits, o, vl, targets, R, K, invR](Tape& tp) {
      const double g = tp.grad(o)[0] * invR;
      Tensor& pg = tp.grad(logits);
      for (int64_t r = 0; r < R; ++r) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int64_t c = 0; c < K; ++c) mx = std::max(mx, vl[r * K + c]);
        double z = 0.0;
        for (int64_t c = 0; c < K; ++c) z += std::exp(vl[r * K + c] - mx);
        for (int64_t c = 0; c < K; ++c) {
          double p = std::exp(vl[r * K + c] - mx) / z;
          if (c == targets[static_cast<size_t>(r)]) p -= 1.0;
          pg[r * K + c] += g * p;
        }
      }
    });
  return o;
}

// ---- vector quantization ----

std::vector<int64_t> vq_nearest_indices(const double* latents, int64_t m,
                                        const double* codebook, int64_t k, int64_t d) {
  std::vector<int64_t> idx(static_cast<size_t>(m));
  for (int64_t p = 0; p < m; ++p) {
    const double* lp = latents + p * d;
    int64_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (int64_t e = 0; e < k; ++e) {
      const double* ce = codebook + e * d;
      double dist = 0.0;
      for (int64_t j = 0; j < d; ++j) {
        const double diff = lp[j] - ce[j];
        dist += diff * diff;
      }
      if (dist < best_dist) {
        best_dist = dist;
        best = e;
      }
    }
    idx[static_cast<size_t>(p)] = best;
  }
  return idx;
}

VqResult vector_quantize(Tape& t, Var latent, Var codebook) {
  const Tensor &vl = t.val(latent), &vc = t.val(codebook);
  check_2d(vl, "vector_quantize");
  check_2d(vc, "vector_quantize");
  const int64_t M = vl.dim(0), D = vl.dim(1), K = vc.dim(0);
  if (vc.dim(1) != D)
    throw ShapeError("vector_quantize: latent dim " + std::to_string(D) +
                     " vs codebook dim " + std::to_string(vc.dim(1)));
  if (M == 0 || K == 0) throw ShapeError("vector_quantize: empty input");

  VqResult res;
  res.indices = vq_nearest_indices(vl.data(), M, vc.data(), K, D);

  Tensor q({M, D});
  for (int64_t p = 0; p < M; ++p) {
    const int64_t e = res.indices[static_cast<size_t>(p)];
    for (int64_t j = 0; j < D; ++j) q[p * D + j] = vc[e * D + j];
  }

  double dist = 0.0;
  for (int64_t i = 0; i < M * D; ++i) {
    const double diff = vl[i] - q[i];
    dist += diff * diff;
  }
  const double loss_val = dist / static_cast<double>(M);

  // Straight-through: the gradient of the quantized grid is copied to
  // the latent unchanged; nothing flows into the codebook on this path.
  const bool rg_lat = t.needs_grad(latent);
  res.quantized = t.make(q, rg_lat);
  if (rg_lat) {
    Var qo = res.quantized;
    t.set_back(qo, [latent, qo](Tape& tp) { axpy(tp.grad(latent), tp.grad(qo)); });
  }

  res.commit_loss = t.make(Tensor::scalar(loss_val), rg_lat);
  if (rg_lat) {
    Var cl = res.commit_loss;
    Tensor qv = q;
    t.set_back(cl, [latent, cl, vl, qv, M, D](Tape& tp) {
      const double g = 2.0 / static_cast<double>(M) * tp.grad(cl)[0];
      Tensor& pg = tp.grad(latent);
      for (int64_t i = 0; i < M * D; ++i) pg[i] += g * (vl[i] - qv[i]);
    });
  }

  const bool rg_cb = t.needs_grad(codebook);
  res.codebook_loss = t.make(Tensor::scalar(loss_val), rg_cb);
  if (rg_cb) {
    Var dl = res.codebook_loss;
    Tensor qv = q;
    std::vector<int64_t> idx = res.indices;
    t.set_back(dl, [codebook, dl, vl, qv, idx, M, D](Tape& tp) {
      const double g = 2.0 / static_cast<double>(M) * tp.grad(dl)[0];
      Tensor& pg = tp.grad(codebook);
      for (int64_t p = 0; p < M; ++p) {
        const int64_t e = idx[static_cast<size_t>(p)];
        for (int64_t j = 0; j < D; ++j)
          pg[e * D + j] += g * (qv[p * D + j] - vl[p * D + j]);
      }
    });
  }
  return res;
}

}  // namespace cortenc::ag
