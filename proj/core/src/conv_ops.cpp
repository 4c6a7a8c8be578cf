#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "cortenc/autodiff.hpp"
#include "cortenc/errors.hpp"

namespace cortenc::ag {

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using EMap = Eigen::Map<EMat>;
using ECMap = Eigen::Map<const EMat>;

struct ConvDims {
  int64_t n, cin, h, w;
  int64_t cout, kh, kw;
  int64_t stride, pad;
  int64_t ho, wo;
  int64_t ckk() const { return cin * kh * kw; }
};

ConvDims conv_dims(const Tensor& x, const Tensor& w, int64_t stride, int64_t pad) {
  if (x.rank() != 4) throw ShapeError("conv2d: input must be [N,C,H,W], got " + x.shape_str());
  if (w.rank() != 4) throw ShapeError("conv2d: weight must be [Co,Ci,kh,kw], got " + w.shape_str());
  if (stride < 1) throw ShapeError("conv2d: stride must be positive");
  if (pad < 0) throw ShapeError("conv2d: negative padding");
  ConvDims d;
  d.n = x.dim(0);
  d.cin = x.dim(1);
  d.h = x.dim(2);
  d.w = x.dim(3);
  d.cout = w.dim(0);
  d.kh = w.dim(2);
  d.kw = w.dim(3);
  d.stride = stride;
  d.pad = pad;
  if (w.dim(1) != d.cin)
    throw ShapeError("conv2d: weight expects " + std::to_string(w.dim(1)) + " input channels, got " +
                     std::to_string(d.cin));
  const int64_t eh = d.h + 2 * pad - d.kh;
  const int64_t ew = d.w + 2 * pad - d.kw;
  if (eh < 0 || ew < 0 || eh % stride != 0 || ew % stride != 0)
    throw ShapeError("conv2d: geometry " + x.shape_str() + " with kernel " + w.shape_str() +
                     " stride " + std::to_string(stride) + " pad " + std::to_string(pad) +
                     " does not tile evenly");
  d.ho = eh / stride + 1;
  d.wo = ew / stride + 1;
  return d;
}

// col is [Cin*kh*kw, Ho*Wo] for one sample.
void im2col(const double* x, const ConvDims& d, double* col) {
  for (int64_t ci = 0; ci < d.cin; ++ci) {
    const double* xc = x + ci * d.h * d.w;
    for (int64_t ki = 0; ki < d.kh; ++ki) {
      for (int64_t kj = 0; kj < d.kw; ++kj) {
        double* row = col + ((ci * d.kh + ki) * d.kw + kj) * d.ho * d.wo;
        for (int64_t oh = 0; oh < d.ho; ++oh) {
          const int64_t ih = oh * d.stride - d.pad + ki;
          for (int64_t ow = 0; ow < d.wo; ++ow) {
            const int64_t iw = ow * d.stride - d.pad + kj;
            const bool in = ih >= 0 && ih < d.h && iw >= 0 && iw < d.w;
            row[oh * d.wo + ow] = in ? xc[ih * d.w + iw] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvDims& d, double* dx) {
  for (int64_t ci = 0; ci < d.cin; ++ci) {
    double* xc = dx + ci * d.h * d.w;
    for (int64_t ki = 0; ki < d.kh; ++ki) {
      for (int64_t kj = 0; kj < d.kw; ++kj) {
        const double* row = col + ((ci * d.kh + ki) * d.kw + kj) * d.ho * d.wo;
        for (int64_t oh = 0; oh < d.ho; ++oh) {
          const int64_t ih = oh * d.stride - d.pad + ki;
          if (ih < 0 || ih >= d.h) continue;
          for (int64_t ow = 0; ow < d.wo; ++ow) {
            const int64_t iw = ow * d.stride - d.pad + kj;
            if (iw < 0 || iw >= d.w) continue;
            xc[ih * d.w + iw] += row[oh * d.wo + ow];
          }
        }
      }
    }
  }
}

}  // namespace

Var conv2d(Tape& t, Var x, Var w, Var b, int64_t stride, int64_t pad) {
  const Tensor &vx = t.val(x), &vw = t.val(w), &vb = t.val(b);
  const ConvDims d = conv_dims(vx, vw, stride, pad);
  if (vb.size() != d.cout)
    throw ShapeError("conv2d: bias size " + std::to_string(vb.size()) + " for " +
                     std::to_string(d.cout) + " output channels");
  const int64_t map = d.ho * d.wo;
  Tensor out({d.n, d.cout, d.ho, d.wo});
  Tensor col({d.ckk(), map});
  ECMap wmat(vw.data(), d.cout, d.ckk());
  for (int64_t n = 0; n < d.n; ++n) {
    im2col(vx.data() + n * d.cin * d.h * d.w, d, col.data());
    EMap omat(out.data() + n * d.cout * map, d.cout, map);
    omat.noalias() = wmat * ECMap(col.data(), d.ckk(), map);
    for (int64_t co = 0; co < d.cout; ++co) omat.row(co).array() += vb[co];
  }
  const bool rg = t.needs_grad(x) || t.needs_grad(w) || t.needs_grad(b);
  Var o = t.make(std::move(out), rg);
  if (rg)
    t.set_back(o, [x, w, b, o, vx, vw, d](Tape& tp) {
      const int64_t map = d.ho * d.wo;
      const Tensor& g = tp.grad(o);
      const bool gx = tp.needs_grad(x), gw = tp.needs_grad(w), gb = tp.needs_grad(b);
      Tensor col({d.ckk(), map});
      Tensor dcol = gx ? Tensor({d.ckk(), map}) : Tensor();
      ECMap wmat(vw.data(), d.cout, d.ckk());
      for (int64_t n = 0; n < d.n; ++n) {
        ECMap gmat(g.data() + n * d.cout * map, d.cout, map);
        if (gb) {
          Tensor& pb = tp.grad(b);
          for (int64_t co = 0; co < d.cout; ++co) pb[co] += gmat.row(co).sum();
        }
        if (gw) {
          im2col(vx.data() + n * d.cin * d.h * d.w, d, col.data());
          EMap pw(tp.grad(w).data(), d.cout, d.ckk());
          pw.noalias() += gmat * ECMap(col.data(), d.ckk(), map).transpose();
        }
        if (gx) {
          EMap(dcol.data(), d.ckk(), map).noalias() = wmat.transpose() * gmat;
          col2im_add(dcol.data(), d, tp.grad(x).data() + n * d.cin * d.h * d.w);
        }
      }
    });
  return o;
}

Var upsample2x(Tape& t, Var x) {
  const Tensor& vx = t.val(x);
  if (vx.rank() != 4) throw ShapeError("upsample2x: input must be [N,C,H,W], got " + vx.shape_str());
  const int64_t N = vx.dim(0), C = vx.dim(1), H = vx.dim(2), W = vx.dim(3);
  Tensor out({N, C, 2 * H, 2 * W});
  for (int64_t nc = 0; nc < N * C; ++nc) {
    const double* src = vx.data() + nc * H * W;
    double* dst = out.data() + nc * 4 * H * W;
    for (int64_t i = 0; i < H; ++i)
      for (int64_t j = 0; j < W; ++j) {
        const double v = src[i * W + j];
        double* p = dst + (2 * i) * (2 * W) + 2 * j;
        p[0] = v;
        p[1] = v;
        p[2 * W] = v;
        p[2 * W + 1] = v;
      }
  }
  const bool rg = t.needs_grad(x);
  Var o = t.make(std::move(out), rg);
  if (rg)
    t.set_back(o, [x, o, N, C, H, W](Tape& tp) {
      const Tensor& g = tp.grad(o);
      Tensor& pg = tp.grad(x);
      for (int64_t nc = 0; nc < N * C; ++nc) {
        const double* gs = g.data() + nc * 4 * H * W;
        double* pd = pg.data() + nc * H * W;
        for (int64_t i = 0; i < H; ++i)
          for (int64_t j = 0; j < W; ++j) {
            const double* p = gs + (2 * i) * (2 * W) + 2 * j;
            pd[i * W + j] += p[0] + p[1] + p[2 * W] + p[2 * W + 1];
          }
      }
    });
  return o;
}

Var groupnorm(Tape& t, Var x, Var gamma, Var beta, int64_t groups, double eps) {
  const Tensor &vx = t.val(x), &vg = t.val(gamma), &vbt = t.val(beta);
  if (vx.rank() != 4) throw ShapeError("groupnorm: input must be [N,C,H,W], got " + vx.shape_str());
  const int64_t N = vx.dim(0), C = vx.dim(1), H = vx.dim(2), W = vx.dim(3);
  if (groups < 1 || C % groups != 0)
    throw ShapeError("groupnorm: " + std::to_string(groups) + " groups do not divide " +
                     std::to_string(C) + " channels");
  if (vg.size() != C || vbt.size() != C)
    throw ShapeError("groupnorm: gamma/beta must have size " + std::to_string(C));
  const int64_t cs = C / groups;
  const int64_t m = cs * H * W;
  Tensor out({N, C, H, W});
  Tensor mu({N, groups}), inv({N, groups});
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t gi = 0; gi < groups; ++gi) {
      const double* base = vx.data() + (n * C + gi * cs) * H * W;
      double s = 0.0;
      for (int64_t i = 0; i < m; ++i) s += base[i];
      const double mean = s / static_cast<double>(m);
      double v = 0.0;
      for (int64_t i = 0; i < m; ++i) {
        const double c = base[i] - mean;
        v += c * c;
      }
      const double is = 1.0 / std::sqrt(v / static_cast<double>(m) + eps);
      mu.at(n, gi) = mean;
      inv.at(n, gi) = is;
      double* dst = out.data() + (n * C + gi * cs) * H * W;
      for (int64_t cc = 0; cc < cs; ++cc) {
        const double ga = vg[gi * cs + cc], be = vbt[gi * cs + cc];
        const double* sp = base + cc * H * W;
        double* dp = dst + cc * H * W;
        for (int64_t i = 0; i < H * W; ++i) dp[i] = ga * ((sp[i] - mean) * is) + be;
      }
    }
  }
  const bool rg = t.needs_grad(x) || t.needs_grad(gamma) || t.needs_grad(beta);
  Var o = t.make(std::move(out), rg);
  if (rg)
    t.set_back(o, [x, gamma, beta, o, vx, vg, mu, inv, N, C, H, W, groups, cs, m](Tape& tp) {
      const Tensor& g = tp.grad(o);
      const bool gx = tp.needs_grad(x), gg = tp.needs_grad(gamma), gb = tp.needs_grad(beta);
      const double invm = 1.0 / static_cast<double>(m);
      for (int64_t n = 0; n < N; ++n) {
        for (int64_t gi = 0; gi < groups; ++gi) {
          const int64_t off = (n * C + gi * cs) * H * W;
          const double mean = mu.at(n, gi), is = inv.at(n, gi);
          if (gg || gb) {
            for (int64_t cc = 0; cc < cs; ++cc) {
              double sg = 0.0, sgx = 0.0;
              const double* sp = vx.data() + off + cc * H * W;
              const double* gp = g.data() + off + cc * H * W;
              for (int64_t i = 0; i < H * W; ++i) {
                sg += gp[i];
                sgx += gp[i] * ((sp[i] - mean) * is);
              }
              if (gg) tp.grad(gamma)[gi * cs + cc] += sgx;
              if (gb) tp.grad(beta)[gi * cs + cc] += sg;
            }
          }
          if (gx) {
            double s1 = 0.0, s2 = 0.0;
            for (int64_t cc = 0; cc < cs; ++cc) {
              const double ga = vg[gi * cs + cc];
              const double* sp = vx.data() + off + cc * H * W;
              const double* gp = g.data() + off + cc * H * W;
              for (int64_t i = 0; i < H * W; ++i) {
                const double xh = (sp[i] - mean) * is;
                const double dxh = gp[i] * ga;
                s1 += dxh;
                s2 += dxh * xh;
              }
            }
            Tensor& px = tp.grad(x);
            for (int64_t cc = 0; cc < cs; ++cc) {
              const double ga = vg[gi * cs + cc];
              const double* sp = vx.data() + off + cc * H * W;
              const double* gp = g.data() + off + cc * H * W;
              double* pp = px.data() + off + cc * H * W;
              for (int64_t i = 0; i < H * W; ++i) {
                const double xh = (sp[i] - mean) * is;
                const double dxh = gp[i] * ga;
                pp[i] += is * (dxh - invm * s1 - xh * invm * s2);
              }
            }
          }
        }
      }
    });
  return o;
}

}  // namespace cortenc::ag
