#include "ovp/autodiff.hpp"

#include <algorithm>
#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace ovp::nn {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  check_data(a.shape == b.shape, std::string(op) + ": shape mismatch " +
                                     a.shape_str() + " vs " + b.shape_str());
}

int nthreads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

// col layout [Cin*kh*kw, OH*OW]
void im2col(const double* x, int C, int H, int W, int kh, int kw, int stride,
            int pad, int OH, int OW, double* col) {
  for (int c = 0; c < C; ++c) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        double* dst = col + (std::size_t)((c * kh + ki) * kw + kj) * OH * OW;
        for (int oh = 0; oh < OH; ++oh) {
          int ih = oh * stride - pad + ki;
          if (ih < 0 || ih >= H) {
            std::fill(dst + (std::size_t)oh * OW, dst + (std::size_t)(oh + 1) * OW, 0.0);
            continue;
          }
          const double* src = x + ((std::size_t)c * H + ih) * W;
          for (int ow = 0; ow < OW; ++ow) {
            int iw = ow * stride - pad + kj;
            dst[(std::size_t)oh * OW + ow] = (iw >= 0 && iw < W) ? src[iw] : 0.0;
          }
        }
      }
    }
  }
}

void col2im_accum(const double* col, int C, int H, int W, int kh, int kw,
                  int stride, int pad, int OH, int OW, double* x) {
  for (int c = 0; c < C; ++c) {
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const double* src = col + (std::size_t)((c * kh + ki) * kw + kj) * OH * OW;
        for (int oh = 0; oh < OH; ++oh) {
          int ih = oh * stride - pad + ki;
          if (ih < 0 || ih >= H) continue;
          double* dst = x + ((std::size_t)c * H + ih) * W;
          for (int ow = 0; ow < OW; ++ow) {
            int iw = ow * stride - pad + kj;
            if (iw >= 0 && iw < W) dst[iw] += src[(std::size_t)oh * OW + ow];
          }
        }
      }
    }
  }
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

const Tensor& Var::val() const { return tape->value(id); }
const Tensor& Var::grad() const { return tape->grad(id); }
const std::vector<int>& Var::shape() const { return tape->value(id).shape; }

int Tape::push(Tensor value, bool requires_grad,
               std::function<void(Tape&)> bw) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.backward = std::move(bw);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor& Tape::grad_buf(int id) {
  Node& n = nodes_[id];
  if (!n.grad_alloc) {
    n.grad = Tensor(n.value.shape);
    n.grad_alloc = true;
  }
  return n.grad;
}

const Tensor& Tape::grad(int id) const {
  const Node& n = nodes_[id];
  check_data(n.grad_alloc, "autodiff: gradient was not computed for node");
  return n.grad;
}

void Tape::accum(int id, const Tensor& g) {
  Tensor& dst = grad_buf(id);
  const std::size_t n = dst.data.size();
  for (std::size_t i = 0; i < n; ++i) dst.data[i] += g.data[i];
}

Var Tape::leaf(Tensor value, bool requires_grad) {
  for (double v : value.data)
    if (!std::isfinite(v))
      throw NumericError("autodiff: non-finite value in leaf tensor");
  return {this, push(std::move(value), requires_grad, nullptr)};
}

void Tape::backward(Var root) {
  check_data(root.tape == this, "backward: var from another tape");
  check_data(value(root.id).size() == 1, "backward: root must be scalar");
  grad_buf(root.id).data[0] = 1.0;
  for (int i = root.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.grad_alloc || !n.backward) continue;
    n.backward(*this);
  }
}

// ---------- elementwise ----------

Var Tape::add(Var a, Var b) {
  check_same_shape(a.val(), b.val(), "add");
  Tensor out = a.val();
  const Tensor& bv = b.val();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += bv.data[i];
  int ia = a.id, ib = b.id;
  bool rg = requires_grad(ia) || requires_grad(ib);
  int id = push(std::move(out), rg, nullptr);
  nodes_[id].backward = [ia, ib, id](Tape& t) {
    const Tensor& g = t.nodes_[id].grad;
    if (t.requires_grad(ia)) t.accum(ia, g);
    if (t.requires_grad(ib)) t.accum(ib, g);
  };
  return {this, id};
}

Var Tape::sub(Var a, Var b) {
  check_same_shape(a.val(), b.val(), "sub");
  Tensor out = a.val();
  const Tensor& bv = b.val();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= bv.data[i];
  int ia = a.id, ib = b.id;
  bool rg = requires_grad(ia) || requires_grad(ib);
  int id = push(std::move(out), rg, nullptr);
  nodes_[id].backward = [ia, ib, id](Tape& t) {
    const Tensor& g = t.nodes_[id].grad;
    if (t.requires_grad(ia)) t.accum(ia, g);
    if (t.requires_grad(ib)) {
      Tensor& dst = t.grad_buf(ib);
      for (std::size_t i = 0; i < g.data.size(); ++i) dst.data[i] -= g.data[i];
    }
  };
  return {this, id};
}

Var Tape::mul(Var a, Var b) {
  check_same_shape(a.val(), b.val(), "mul");
  Tensor out = a.val();
  const Tensor& bv = b.val();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= bv.data[i];
  int ia = a.id, ib = b.id;
  bool rg = requires_grad(ia) || requires_grad(ib);
  int id = push(std::move(out), rg, nullptr);
  nodes_[id].backward = [ia, ib, id](Tape& t) {
    const Tensor& g = t.nodes_[id].grad;
    const Tensor& av = t.value(ia);
    const Tensor& bv2 = t.value(ib);
    if (t.requires_grad(ia)) {
      Tensor& dst = t.grad_buf(ia);
      for (std::size_t i = 0; i < g.data.size(); ++i)
        dst.data[i] += g.data[i] * bv2.data[i];
    }
    if (t.requires_grad(ib)) {
      Tensor& dst = t.grad_buf(ib);
      for (std::size_t i = 0; i < g.data.size(); ++i)
        dst.data[i] += g.data[i] * av.data[i];
    }
  };
  return {this, id};
}

Var Tape::scale(Var a, double k) {
  Tensor out = a.val();
  for (double& v : out.data) v *= k;
  int ia = a.id;
  int id = push(std::move(out), requires_grad(ia), nullptr);
  nodes_[id].backward = [ia, k, id](Tape& t) {
    const Tensor& g = t.nodes_[id].grad;
    Tensor& dst = t.grad_buf(ia);
    for (std::size_t i = 0; i < g.data.size(); ++i)
      dst.data[i] += k * g.data[i];
  };
  return {this, id};
}

Var Tape::silu(Var a) {
  Tensor out = a.val();
  for (double& v : out.data) v = v * sigmoid(v);
  int ia = a.id;
  int id = push(std::move(out), requires_grad(ia), nullptr);
  nodes_[id].backward = [ia, id](Tape& t) {
    const Tensor& g = t.nodes_[id].grad;
    const Tensor& x = t.value(ia);
    Tensor& dst = t.grad_buf(ia);
    for (std::size_t i = 0; i < g.data.size(); ++i) {
      double s = sigmoid(x.data[i]);
      dst.data[i] += g.data[i] * s * (1.0 + x.data[i] * (1.0 - s));
    }
  };
  return {this, id};
}

Var Tape::tanh_act(Var a) {
  Tensor out = a.val();
  for (double& v : out.data) v = std::tanh(v);
  int ia = a.id;
  int id = push(std::move(out), requires_grad(ia), nullptr);
  nodes_[id].backward = [ia, id](Tape& t) {
    const Tensor& g = t.nodes_[id].grad;
    const Tensor& y = t.value(id);
    Tensor& dst = t.grad_buf(ia);
    for (std::size_t i = 0; i < g.data.size(); ++i)
      dst.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
  };
  return {this, id};
}

Var Tape::sigmoid_act(Var a) {
  Tensor out = a.val();
  for (double& v : out.data) v = sigmoid(v);
  int ia = a.id;
  int id = push(std::move(out), requires_grad(ia), nullptr);
  nodes_[id].backward = [ia, id](Tape& t) {
    const Tensor& g = t.nodes_[id].grad;
    const Tensor& y = t.value(id);
    Tensor& dst = t.grad_buf(ia);
    for (std::size_t i = 0; i < g.data.size(); ++i)
      dst.data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
  };
  return {this, id};
}

Var Tape::square(Var a) {
  Tensor out = a.val();
  for (double& v : out.data) v = v * v;
  int ia = a.id;
  int id = push(std::move(out), requires_grad(ia), nullptr);
  nodes_[id].backward = [ia, id](Tape& t) {
    const Tensor& g = t.nodes_[id].grad;
    const Tensor& x = t.value(ia);
    Tensor& dst = t.grad_buf(ia);
    for (std::size_t i = 0; i < g.data.size(); ++i)
      dst.data[i] += 2.0 * x.data[i] * g.data[i];
  };
  return {this, id};
}

// ---------- shape ----------

Var Tape::reshape(Var a, std::vector<int> shape) {
  Tensor out = a.val().reshaped(shape);
  int ia = a.id;
  int id = push(std::move(out), requires_grad(ia), nullptr);
  nodes_[id].backward = [ia, id](Tape& t) {
    const Tensor& g = t.nodes_[id].grad;
    Tensor& dst = t.grad_buf(ia);
    for (std::size_t i = 0; i < g.data.size(); ++i) dst.data[i] += g.data[i];
  };
  return {this, id};
}

Var Tape::concat_cols(const std::vector<Var>& xs) {
  check_data(!xs.empty(), "concat_cols: empty input list");
  int rows = xs[0].val().dim(0);
  int total = 0;
  bool rg = false;
  for (const Var& x : xs) {
    check_data(x.val().ndim() == 2 && x.val().dim(0) == rows,
               "concat_cols: inputs must be 2-D with equal row counts");
    total += x.val().dim(1);
    rg = rg || requires_grad(x.id);
  }
  Tensor out({rows, total});
  int off = 0;
  for (const Var& x : xs) {
    const Tensor& v = x.val();
    int d = v.dim(1);
    for (int r = 0; r < rows; ++r)
      std::copy(&v.data[(std::size_t)r * d], &v.data[(std::size_t)r * d + d],
                &out.data[(std::size_t)r * total + off]);
    off += d;
  }
  std::vector<int> ids;
  std::vector<int> widths;
  for (const Var& x : xs) {
    ids.push_back(x.id);
    widths.push_back(x.val().dim(1));
  }
  int id = push(std::move(out), rg, nullptr);
  nodes_[id].backward = [ids, widths, rows, total, id](Tape& t) {
    const Tensor& g = t.nodes_[id].grad;
    int off2 = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      int d = widths[k];
      if (t.requires_grad(ids[k])) {
        Tensor& dst = t.grad_buf(ids[k]);
        for (int r = 0; r < rows; ++r)
          for (int c = 0; c < d; ++c)
            dst.data[(std::size_t)r * d + c] +=
                g.data[(std::size_t)r * total + off2 + c];
      }
      off2 += d;
    }
  };
  return {this, id};
}

Var Tape::slice_cols(Var a, int c0, int c1) {
  const Tensor& v = a.val();
  check_data(v.ndim() == 2 && c0 >= 0 && c1 <= v.dim(1) && c0 < c1,
             "slice_cols: bad column range");
  int rows = v.dim(0), cols = v.dim(1), d = c1 - c0;
  Tensor out({rows, d});
  for (int r = 0; r < rows; ++r)
    std::copy(&v.data[(std::size_t)r * cols + c0],
              &v.data[(std::size_t)r * cols + c1],
              &out.data[(std::size_t)r * d]);
  int ia = a.id;
  int id = push(std::move(out), requires_grad(ia), nullptr);
  nodes_[id].backward = [ia, c0, rows, cols, d, id](Tape& t) {
    const Tensor& g = t.nodes_[id].grad;
    Tensor& dst = t.grad_buf(ia);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < d; ++c)
        dst.data[(std::size_t)r * cols + c0 + c] +=
            g.data[(std::size_t)r * d + c];
  };
  return {this, id};
}

Var Tape::concat_channels(const std::vector<Var>& xs) {
  check_data(!xs.empty(), "concat_channels: empty input list");
  const Tensor& f = xs[0].val();
  check_data(f.ndim() == 4, "concat_channels: expects 4-D NCHW");
  int B = f.dim(0), H = f.dim(2), W = f.dim(3);
  int total = 0;
  bool rg = false;
  for (const Var& x : xs) {
    const Tensor& v = x.val();
    check_data(v.ndim() == 4 && v.dim(0) == B && v.dim(2) == H && v.dim(3) == W,
               "concat_channels: incompatible shapes");
    total += v.dim(1);
    rg = rg || requires_grad(x.id);
  }
  Tensor out({B, total, H, W});
  std::size_t plane = (std::size_t)H * W;
  int off = 0;
  for (const Var& x : xs) {
    const Tensor& v = x.val();
    int c = v.dim(1);
    for (int b = 0; b < B; ++b)
      std::copy(&v.data[(std::size_t)b * c * plane],
                &v.data[(std::size_t)(b + 1) * c * plane],
                &out.data[((std::size_t)b * total + off) * plane]);
    off += c;
  }
  std::vector<int> ids, chans;
  for (const Var& x : xs) {
    ids.push_back(x.id);
    chans.push_back(x.val().dim(1));
  }
  int id = push(std::move(out), rg, nullptr);
  nodes_[id].backward = [ids, chans, B, total, plane, id](Tape& t) {
    const Tensor& g = t.nodes_[id].grad;
    int off2 = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      int c = chans[k];
      if (t.requires_grad(ids[k])) {
        Tensor& dst = t.grad_buf(ids[k]);
        for (int b = 0; b < B; ++b) {
          const double* src = &g.data[((std::size_t)b * total + off2) * plane];
          double* d2 = &dst.data[(std::size_t)b * c * plane];
          for (std::size_t i = 0; i < (std::size_t)c * plane; ++i)
            d2[i] += src[i];
        }
      }
      off2 += c;
    }
  };
  return {this, id};
}

Var Tape::slice_channels(Var a, int c0, int c1) {
  const Tensor& v = a.val();
  check_data(v.ndim() == 4 && c0 >= 0 && c1 <= v.dim(1) && c0 < c1,
             "slice_channels: bad channel range");
  int B = v.dim(0), C = v.dim(1), H = v.dim(2), W = v.dim(3);
  int d = c1 - c0;
  std::size_t plane = (std::size_t)H * W;
  Tensor out({B, d, H, W});
  for (int b = 0; b < B; ++b)
    std::copy(&v.data[((std::size_t)b * C + c0) * plane],
              &v.data[((std::size_t)b * C + c1) * plane],
              &out.data[(std::size_t)b * d * plane]);
  int ia = a.id;
  int id = push(std::move(out), requires_grad(ia), nullptr);
  nodes_[id].backward = [ia, B, C, c0, d, plane, id](Tape& t) {
    const Tensor& g = t.nodes_[id].grad;
    Tensor& dst = t.grad_buf(ia);
    for (int b = 0; b < B; ++b) {
      const double* src = &g.data[(std::size_t)b * d * plane];
      double* d2 = &dst.data[((std::size_t)b * C + c0) * plane];
      for (std::size_t i = 0; i < (std::size_t)d * plane; ++i) d2[i] += src[i];
    }
  };
  return {this, id};
}

// ---------- linear algebra ----------

Var Tape::matmul(Var a, Var b) {
  const Tensor& av = a.val();
  const Tensor& bv = b.val();
  check_data(av.ndim() == 2 && bv.ndim() == 2 && av.dim(1) == bv.dim(0),
             "matmul: incompatible shapes");
  int m = av.dim(0), k = av.dim(1), n = bv.dim(1);
  Tensor out({m, n});
  matmul_nn(av.data.data(), bv.data.data(), out.data.data(), m, k, n);
  int ia = a.id, ib = b.id;
  bool rg = requires_grad(ia) || requires_grad(ib);
  int id = push(std::move(out), rg, nullptr);
  nodes_[id].backward = [ia, ib, m, k, n, id](Tape& t) {
    const Tensor& g = t.nodes_[id].grad;
    if (t.requires_grad(ia)) {
      Tensor& dst = t.grad_buf(ia);
      matmul_nt(g.data.data(), t.value(ib).data.data(), dst.data.data(), m, n,
                k, true);
    }
    if (t.requires_grad(ib)) {
      Tensor& dst = t.grad_buf(ib);
      matmul_tn(t.value(ia).data.data(), g.data.data(), dst.data.data(), k, m,
                n, true);
    }
  };
  return {this, id};
}

Var Tape::matmul_const(Var a, const Tensor& b) {
  Var bb = constant(b);
  return matmul(a, bb);
}

Var Tape::linear(Var x, Var w, Var b) {
  const Tensor& xv = x.val();
  const Tensor& wv = w.val();
  const Tensor& bv = b.val();
  check_data(xv.ndim() == 2 && wv.ndim() == 2 && xv.dim(1) == wv.dim(1),
             "linear: incompatible shapes");
  check_data(bv.size() == wv.dim(0), "linear: bias size mismatch");
  int rows = xv.dim(0), in = xv.dim(1), out_dim = wv.dim(0);
  Tensor out({rows, out_dim});
  matmul_nt(xv.data.data(), wv.data.data(), out.data.data(), rows, in,
            out_dim);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < out_dim; ++c)
      out.data[(std::size_t)r * out_dim + c] += bv.data[c];
  int ix = x.id, iw = w.id, ib = b.id;
  bool rg = requires_grad(ix) || requires_grad(iw) || requires_grad(ib);
  int id = push(std::move(out), rg, nullptr);
  nodes_[id].backward = [ix, iw, ib, rows, in, out_dim, id](Tape& t) {
    const Tensor& g = t.nodes_[id].grad;
    if (t.requires_grad(ix)) {
      Tensor& dst = t.grad_buf(ix);
      matmul_nn(g.data.data(), t.value(iw).data.data(), dst.data.data(), rows,
                out_dim, in, true);
    }
    if (t.requires_grad(iw)) {
      Tensor& dst = t.grad_buf(iw);
      matmul_tn(g.data.data(), t.value(ix).data.data(), dst.data.data(),
                out_dim, rows, in, true);
    }
    if (t.requires_grad(ib)) {
      Tensor& dst = t.grad_buf(ib);
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < out_dim; ++c)
          dst.data[c] += g.data[(std::size_t)r * out_dim + c];
    }
  };
  return {this, id};
}

// ---------- convolution ----------

Var Tape::conv2d(Var x, Var w, Var b, int stride, int pad) {
  const Tensor& xv = x.val();
  const Tensor& wv = w.val();
  const Tensor& bv = b.val();
  check_data(xv.ndim() == 4 && wv.ndim() == 4, "conv2d: expects 4-D tensors");
  check_data(xv.dim(1) == wv.dim(1), "conv2d: channel mismatch");
  check_data(bv.size() == wv.dim(0), "conv2d: bias size mismatch");
  int B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  int O = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
  int OH = (H + 2 * pad - kh) / stride + 1;
  int OW = (W + 2 * pad - kw) / stride + 1;
  check_data(OH > 0 && OW > 0, "conv2d: output would be empty");
  int colrows = C * kh * kw, ohw = OH * OW;

  Tensor out({B, O, OH, OW});
  {
    int nt = nthreads();
    std::vector<std::vector<double>> scratch(nt);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int bi = 0; bi < B; ++bi) {
#ifdef _OPENMP
      std::vector<double>& col = scratch[omp_get_thread_num()];
#else
      std::vector<double>& col = scratch[0];
#endif
      col.resize((std::size_t)colrows * ohw);
      im2col(&xv.data[(std::size_t)bi * C * H * W], C, H, W, kh, kw, stride,
             pad, OH, OW, col.data());
      double* o = &out.data[(std::size_t)bi * O * ohw];
      fast_gemm_nn(wv.data.data(), col.data(), o, O, colrows, ohw);
      for (int oc = 0; oc < O; ++oc) {
        double bias = bv.data[oc];
        double* p = o + (std::size_t)oc * ohw;
        for (int i = 0; i < ohw; ++i) p[i] += bias;
      }
    }
  }

  int ix = x.id, iw = w.id, ib = b.id;
  bool rg = requires_grad(ix) || requires_grad(iw) || requires_grad(ib);
  int id = push(std::move(out), rg, nullptr);
  nodes_[id].backward = [ix, iw, ib, B, C, H, W, O, kh, kw, stride, pad, OH,
                         OW, colrows, ohw, id](Tape& t) {
    const Tensor& g = t.nodes_[id].grad;
    const Tensor& xv2 = t.value(ix);
    const Tensor& wv2 = t.value(iw);
    bool need_x = t.requires_grad(ix);
    bool need_w = t.requires_grad(iw);
    bool need_b = t.requires_grad(ib);
    // Per-image weight-gradient partials, reduced in batch order afterwards
    // so the result does not depend on thread scheduling.
    std::vector<double> wpart;
    if (need_w) wpart.assign((std::size_t)B * O * colrows, 0.0);
    Tensor* dx = need_x ? &t.grad_buf(ix) : nullptr;
    int nt = nthreads();
    std::vector<std::vector<double>> scratch(nt), scratch2(nt);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (int bi = 0; bi < B; ++bi) {
#ifdef _OPENMP
      int tid = omp_get_thread_num();
#else
      int tid = 0;
#endif
      std::vector<double>& col = scratch[tid];
      col.resize((std::size_t)colrows * ohw);
      im2col(&xv2.data[(std::size_t)bi * C * H * W], C, H, W, kh, kw, stride,
             pad, OH, OW, col.data());
      const double* go = &g.data[(std::size_t)bi * O * ohw];
      if (need_w) {
        // dW_bi = g_bi [O,ohw] * col^T [ohw, colrows]
        fast_gemm_nt(go, col.data(), &wpart[(std::size_t)bi * O * colrows], O,
                     ohw, colrows);
      }
      if (need_x) {
        std::vector<double>& dcol = scratch2[tid];
        dcol.resize((std::size_t)colrows * ohw);
        fast_gemm_tn(wv2.data.data(), go, dcol.data(), colrows, O, ohw);
        col2im_accum(dcol.data(), C, H, W, kh, kw, stride, pad, OH, OW,
                     &dx->data[(std::size_t)bi * C * H * W]);
      }
    }
    if (need_w) {
      Tensor& dw = t.grad_buf(iw);
      for (int bi = 0; bi < B; ++bi) {
        const double* p = &wpart[(std::size_t)bi * O * colrows];
        for (std::size_t i = 0; i < (std::size_t)O * colrows; ++i)
          dw.data[i] += p[i];
      }
    }
    if (need_b) {
      Tensor& db = t.grad_buf(ib);
      for (int bi = 0; bi < B; ++bi)
        for (int oc = 0; oc < O; ++oc) {
          const double* p = &g.data[((std::size_t)bi * O + oc) * ohw];
          double s = 0.0;
          for (int i = 0; i < ohw; ++i) s += p[i];
          db.data[oc] += s;
        }
    }
  };
  return {this, id};
}

Var Tape::bank_conv_same(Var x, const Tensor& bank) {
  const Tensor& xv = x.val();
  check_data(xv.ndim() == 4, "bank_conv_same: expects [B,N,H,W]");
  check_data(bank.ndim() == 3, "bank_conv_same: bank must be [C,kh,kw]");
  int B = xv.dim(0), N = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  int C = bank.dim(0), kh = bank.dim(1), kw = bank.dim(2);
  check_config(kh % 2 == 1 && kw % 2 == 1,
               "bank_conv_same: kernels must have odd spatial size");
  int ph = kh / 2, pw = kw / 2;
  Tensor out({B, N * C, H, W});
  auto corr = [&](const double* src, const double* ker, double* dst) {
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        double acc = 0.0;
        for (int ki = 0; ki < kh; ++ki) {
          int ii = i + ki - ph;
          if (ii < 0 || ii >= H) continue;
          for (int kj = 0; kj < kw; ++kj) {
            int jj = j + kj - pw;
            if (jj < 0 || jj >= W) continue;
            acc += ker[ki * kw + kj] * src[(std::size_t)ii * W + jj];
          }
        }
        dst[(std::size_t)i * W + j] = acc;
      }
  };
  for (int b = 0; b < B; ++b)
    for (int n = 0; n < N; ++n) {
      const double* src = &xv.data[((std::size_t)b * N + n) * H * W];
      for (int c = 0; c < C; ++c)
        corr(src, &bank.data[(std::size_t)c * kh * kw],
             &out.data[(((std::size_t)b * N + n) * C + c) * H * W]);
    }
  int ix = x.id;
  Tensor bank_copy = bank;
  int id = push(std::move(out), requires_grad(ix), nullptr);
  nodes_[id].backward = [ix, bank_copy, B, N, H, W, C, kh, kw, ph, pw,
                         id](Tape& t) {
    const Tensor& g = t.nodes_[id].grad;
    Tensor& dst = t.grad_buf(ix);
    // d x(ii,jj) += sum_c ker(ki,kj) * g(i,j) with ii = i+ki-ph.
    for (int b = 0; b < B; ++b)
      for (int n = 0; n < N; ++n) {
        double* dxp = &dst.data[((std::size_t)b * N + n) * H * W];
        for (int c = 0; c < C; ++c) {
          const double* gp = &g.data[(((std::size_t)b * N + n) * C + c) * H * W];
          const double* ker = &bank_copy.data[(std::size_t)c * kh * kw];
          for (int i = 0; i < H; ++i)
            for (int j = 0; j < W; ++j) {
              double gv = gp[(std::size_t)i * W + j];
              if (gv == 0.0) continue;
              for (int ki = 0; ki < kh; ++ki) {
                int ii = i + ki - ph;
                if (ii < 0 || ii >= H) continue;
                for (int kj = 0; kj < kw; ++kj) {
                  int jj = j + kj - pw;
                  if (jj < 0 || jj >= W) continue;
                  dxp[(std::size_t)ii * W + jj] += ker[ki * kw + kj] * gv;
                }
              }
            }
        }
      }
  };
  return {this, id};
}

Var Tape::kernel_conv_valid(Var x, const Tensor& kernel) {
  const Tensor& xv = x.val();
  check_data(xv.ndim() == 4, "kernel_conv_valid: expects [B,C,H,W]");
  check_data(kernel.ndim() == 2, "kernel_conv_valid: kernel must be 2-D");
  int B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  int kh = kernel.dim(0), kw = kernel.dim(1);
  check_data(H >= kh && W >= kw, "kernel_conv_valid: image smaller than kernel");
  int OH = H - kh + 1, OW = W - kw + 1;
  Tensor out({B, C, OH, OW});
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const double* src = &xv.data[((std::size_t)b * C + c) * H * W];
      double* dst = &out.data[((std::size_t)b * C + c) * OH * OW];
      for (int i = 0; i < OH; ++i)
        for (int j = 0; j < OW; ++j) {
          double acc = 0.0;
          for (int ki = 0; ki < kh; ++ki)
            for (int kj = 0; kj < kw; ++kj)
              acc += kernel.data[(std::size_t)ki * kw + kj] *
                     src[(std::size_t)(i + ki) * W + (j + kj)];
          dst[(std::size_t)i * OW + j] = acc;
        }
    }
  int ix = x.id;
  Tensor kc = kernel;
  int id = push(std::move(out), requires_grad(ix), nullptr);
  nodes_[id].backward = [ix, kc, B, C, H, W, kh, kw, OH, OW, id](Tape& t) {
    const Tensor& g = t.nodes_[id].grad;
    Tensor& dst = t.grad_buf(ix);
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c) {
        const double* gp = &g.data[((std::size_t)b * C + c) * OH * OW];
        double* dxp = &dst.data[((std::size_t)b * C + c) * H * W];
        for (int i = 0; i < OH; ++i)
          for (int j = 0; j < OW; ++j) {
            double gv = gp[(std::size_t)i * OW + j];
            if (gv == 0.0) continue;
            for (int ki = 0; ki < kh; ++ki)
              for (int kj = 0; kj < kw; ++kj)
                dxp[(std::size_t)(i + ki) * W + (j + kj)] +=
                    kc.data[(std::size_t)ki * kw + kj] * gv;
          }
      }
  };
  return {this, id};
}

Var Tape::bilinear_up2(Var x) {
  const Tensor& xv = x.val();
  check_data(xv.ndim() == 4, "bilinear_up2: expects [B,C,H,W]");
  int B = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
  int OH = 2 * H, OW = 2 * W;
  // align_corners=false sampling with clamped borders
  std::vector<int> i0(OH), i1(OH);
  std::vector<double> wi(OH);
  for (int i = 0; i < OH; ++i) {
    double sy = (i + 0.5) / 2.0 - 0.5;
    double fl = std::floor(sy);
    int a = std::clamp(static_cast<int>(fl), 0, H - 1);
    int b = std::clamp(static_cast<int>(fl) + 1, 0, H - 1);
    i0[i] = a;
    i1[i] = b;
    wi[i] = std::clamp(sy - fl, 0.0, 1.0);
  }
  std::vector<int> j0(OW), j1(OW);
  std::vector<double> wj(OW);
  for (int j = 0; j < OW; ++j) {
    double sx = (j + 0.5) / 2.0 - 0.5;
    double fl = std::floor(sx);
    int a = std::clamp(static_cast<int>(fl), 0, W - 1);
    int b = std::clamp(static_cast<int>(fl) + 1, 0, W - 1);
    j0[j] = a;
    j1[j] = b;
    wj[j] = std::clamp(sx - fl, 0.0, 1.0);
  }
  Tensor out({B, C, OH, OW});
  for (int bc = 0; bc < B * C; ++bc) {
    const double* src = &xv.data[(std::size_t)bc * H * W];
    double* dst = &out.data[(std::size_t)bc * OH * OW];
    for (int i = 0; i < OH; ++i)
      for (int j = 0; j < OW; ++j) {
        double v00 = src[(std::size_t)i0[i] * W + j0[j]];
        double v01 = src[(std::size_t)i0[i] * W + j1[j]];
        double v10 = src[(std::size_t)i1[i] * W + j0[j]];
        double v11 = src[(std::size_t)i1[i] * W + j1[j]];
        double a = v00 * (1 - wj[j]) + v01 * wj[j];
        double b = v10 * (1 - wj[j]) + v11 * wj[j];
        dst[(std::size_t)i * OW + j] = a * (1 - wi[i]) + b * wi[i];
      }
  }
  int ix = x.id;
  int id = push(std::move(out), requires_grad(ix), nullptr);
  nodes_[id].backward = [ix, B, C, H, W, OH, OW, i0, i1, wi, j0, j1, wj,
                         id](Tape& t) {
    const Tensor& g = t.nodes_[id].grad;
    Tensor& dst = t.grad_buf(ix);
    for (int bc = 0; bc < B * C; ++bc) {
      const double* gp = &g.data[(std::size_t)bc * OH * OW];
      double* dxp = &dst.data[(std::size_t)bc * H * W];
      for (int i = 0; i < OH; ++i)
        for (int j = 0; j < OW; ++j) {
          double gv = gp[(std::size_t)i * OW + j];
          dxp[(std::size_t)i0[i] * W + j0[j]] += gv * (1 - wi[i]) * (1 - wj[j]);
          dxp[(std::size_t)i0[i] * W + j1[j]] += gv * (1 - wi[i]) * wj[j];
          dxp[(std::size_t)i1[i] * W + j0[j]] += gv * wi[i] * (1 - wj[j]);
          dxp[(std::size_t)i1[i] * W + j1[j]] += gv * wi[i] * wj[j];
        }
    }
  };
  return {this, id};
}

// ---------- reductions ----------

Var Tape::sum_all(Var a) {
  const Tensor& v = a.val();
  double s = 0.0;
  for (double x : v.data) s += x;
  int ia = a.id;
  int id = push(Tensor::scalar(s), requires_grad(ia), nullptr);
  nodes_[id].backward = [ia, id](Tape& t) {
    double g = t.nodes_[id].grad.data[0];
    Tensor& dst = t.grad_buf(ia);
    for (double& x : dst.data) x += g;
  };
  return {this, id};
}

Var Tape::mean_all(Var a) {
  const Tensor& v = a.val();
  double s = 0.0;
  for (double x : v.data) s += x;
  double n = static_cast<double>(v.size());
  int ia = a.id;
  int id = push(Tensor::scalar(s / n), requires_grad(ia), nullptr);
  nodes_[id].backward = [ia, n, id](Tape& t) {
    double g = t.nodes_[id].grad.data[0] / n;
    Tensor& dst = t.grad_buf(ia);
    for (double& x : dst.data) x += g;
  };
  return {this, id};
}

Var Tape::spatial_mean(Var a) {
  const Tensor& v = a.val();
  check_data(v.ndim() == 4, "spatial_mean: expects [B,C,H,W]");
  int B = v.dim(0), C = v.dim(1);
  std::size_t plane = (std::size_t)v.dim(2) * v.dim(3);
  Tensor out({B, C});
  for (int b = 0; b < B; ++b)
    for (int c = 0; c < C; ++c) {
      const double* p = &v.data[((std::size_t)b * C + c) * plane];
      double s = 0.0;
      for (std::size_t i = 0; i < plane; ++i) s += p[i];
      out(b, c) = s / static_cast<double>(plane);
    }
  int ia = a.id;
  int id = push(std::move(out), requires_grad(ia), nullptr);
  nodes_[id].backward = [ia, B, C, plane, id](Tape& t) {
    const Tensor& g = t.nodes_[id].grad;
    Tensor& dst = t.grad_buf(ia);
    for (int b = 0; b < B; ++b)
      for (int c = 0; c < C; ++c) {
        double gv = g(b, c) / static_cast<double>(plane);
        double* p = &dst.data[((std::size_t)b * C + c) * plane];
        for (std::size_t i = 0; i < plane; ++i) p[i] += gv;
      }
  };
  return {this, id};
}

// ---------- keypoint ops ----------

Var Tape::softmax_hw(Var x) {
  const Tensor& v = x.val();
  check_data(v.ndim() == 4, "softmax_hw: expects [B,N,H,W]");
  for (double d : v.data)
    if (!std::isfinite(d))
      throw NumericError("softmax_hw: non-finite heatmap score");
  int BN = v.dim(0) * v.dim(1);
  std::size_t hw = (std::size_t)v.dim(2) * v.dim(3);
  Tensor out = v;
  for (int r = 0; r < BN; ++r) {
    double* p = &out.data[(std::size_t)r * hw];
    double m = p[0];
    for (std::size_t i = 1; i < hw; ++i) m = std::max(m, p[i]);
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) {
      p[i] = std::exp(p[i] - m);
      s += p[i];
    }
    for (std::size_t i = 0; i < hw; ++i) p[i] /= s;
  }
  int ix = x.id;
  int id = push(std::move(out), requires_grad(ix), nullptr);
  nodes_[id].backward = [ix, BN, hw, id](Tape& t) {
    const Tensor& g = t.nodes_[id].grad;
    const Tensor& y = t.value(id);
    Tensor& dst = t.grad_buf(ix);
    for (int r = 0; r < BN; ++r) {
      const double* gp = &g.data[(std::size_t)r * hw];
      const double* yp = &y.data[(std::size_t)r * hw];
      double dot = 0.0;
      for (std::size_t i = 0; i < hw; ++i) dot += gp[i] * yp[i];
      double* dp = &dst.data[(std::size_t)r * hw];
      for (std::size_t i = 0; i < hw; ++i) dp[i] += yp[i] * (gp[i] - dot);
    }
  };
  return {this, id};
}

Var Tape::gaussian_maps(Var p, Var s, const std::vector<double>& gx,
                        const std::vector<double>& gy, double sigma) {
  check_config(sigma > 0.0, "gaussian_maps: sigma must be positive");
  const Tensor& pv = p.val();
  const Tensor& sv = s.val();
  check_data(pv.ndim() == 3 && pv.dim(2) == 2, "gaussian_maps: p must be [B,N,2]");
  check_data(sv.ndim() == 2 && sv.dim(0) == pv.dim(0) && sv.dim(1) == pv.dim(1),
             "gaussian_maps: s must be [B,N]");
  int B = pv.dim(0), N = pv.dim(1);
  int H = static_cast<int>(gy.size()), W = static_cast<int>(gx.size());
  double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  Tensor out({B, N, H, W});
  for (int b = 0; b < B; ++b)
    for (int n = 0; n < N; ++n) {
      double px = pv(b, n, 0), py = pv(b, n, 1), sc = sv(b, n);
      double* dst = &out.data[((std::size_t)b * N + n) * H * W];
      for (int i = 0; i < H; ++i) {
        double dy = gy[i] - py;
        for (int j = 0; j < W; ++j) {
          double dx = gx[j] - px;
          dst[(std::size_t)i * W + j] =
              sc * std::exp(-(dx * dx + dy * dy) * inv2s2);
        }
      }
    }
  int ip = p.id, is = s.id;
  bool rg = requires_grad(ip) || requires_grad(is);
  double sig2 = sigma * sigma;
  int id = push(std::move(out), rg, nullptr);
  nodes_[id].backward = [ip, is, B, N, H, W, gx, gy, sig2, id](Tape& t) {
    const Tensor& g = t.nodes_[id].grad;
    const Tensor& y = t.value(id);
    const Tensor& pv2 = t.value(ip);
    const Tensor& sv2 = t.value(is);
    bool need_p = t.requires_grad(ip);
    bool need_s = t.requires_grad(is);
    Tensor* dp = need_p ? &t.grad_buf(ip) : nullptr;
    Tensor* ds = need_s ? &t.grad_buf(is) : nullptr;
    for (int b = 0; b < B; ++b)
      for (int n = 0; n < N; ++n) {
        double px = pv2(b, n, 0), py = pv2(b, n, 1), sc = sv2(b, n);
        const double* gp = &g.data[((std::size_t)b * N + n) * H * W];
        const double* yp = &y.data[((std::size_t)b * N + n) * H * W];
        double acc_px = 0.0, acc_py = 0.0, acc_s = 0.0;
        for (int i = 0; i < H; ++i)
          for (int j = 0; j < W; ++j) {
            double gv = gp[(std::size_t)i * W + j];
            if (gv == 0.0) continue;
            double val = yp[(std::size_t)i * W + j];
            acc_px += gv * val * (gx[j] - px) / sig2;
            acc_py += gv * val * (gy[i] - py) / sig2;
            if (sc != 0.0) acc_s += gv * val / sc;
          }
        if (need_p) {
          (*dp)(b, n, 0) += acc_px;
          (*dp)(b, n, 1) += acc_py;
        }
        if (need_s) {
          // At sc == 0 the map is identically zero; recompute d/ds directly.
          if (sc == 0.0) {
            double inv2s2b = 1.0 / (2.0 * sig2);
            for (int i = 0; i < H; ++i)
              for (int j = 0; j < W; ++j) {
                double dx = gx[j] - px, dy = gy[i] - py;
                acc_s += gp[(std::size_t)i * W + j] *
                         std::exp(-(dx * dx + dy * dy) * inv2s2b);
              }
          }
          (*ds)(b, n) += acc_s;
        }
      }
  };
  return {this, id};
}

Var Tape::scale_channels(Var maps, Var coef) {
  const Tensor& mv = maps.val();
  const Tensor& cv = coef.val();
  check_data(mv.ndim() == 4 && cv.ndim() == 2 && mv.dim(0) == cv.dim(0) &&
                 mv.dim(1) == cv.dim(1),
             "scale_channels: shapes incompatible");
  int BM = mv.dim(0) * mv.dim(1);
  std::size_t plane = (std::size_t)mv.dim(2) * mv.dim(3);
  Tensor out = mv;
  for (int r = 0; r < BM; ++r) {
    double k = cv.data[r];
    double* p = &out.data[(std::size_t)r * plane];
    for (std::size_t i = 0; i < plane; ++i) p[i] *= k;
  }
  int im = maps.id, ic = coef.id;
  bool rg = requires_grad(im) || requires_grad(ic);
  int id = push(std::move(out), rg, nullptr);
  nodes_[id].backward = [im, ic, BM, plane, id](Tape& t) {
    const Tensor& g = t.nodes_[id].grad;
    const Tensor& mv2 = t.value(im);
    const Tensor& cv2 = t.value(ic);
    if (t.requires_grad(im)) {
      Tensor& dst = t.grad_buf(im);
      for (int r = 0; r < BM; ++r) {
        double k = cv2.data[r];
        const double* gp = &g.data[(std::size_t)r * plane];
        double* dp = &dst.data[(std::size_t)r * plane];
        for (std::size_t i = 0; i < plane; ++i) dp[i] += k * gp[i];
      }
    }
    if (t.requires_grad(ic)) {
      Tensor& dst = t.grad_buf(ic);
      for (int r = 0; r < BM; ++r) {
        const double* gp = &g.data[(std::size_t)r * plane];
        const double* mp = &mv2.data[(std::size_t)r * plane];
        double s = 0.0;
        for (std::size_t i = 0; i < plane; ++i) s += gp[i] * mp[i];
        dst.data[r] += s;
      }
    }
  };
  return {this, id};
}

Var Tape::attend(Var g, Var f, Reduce reduction) {
  const Tensor& gv = g.val();
  const Tensor& fv = f.val();
  check_data(gv.ndim() == 4 && fv.ndim() == 4 && gv.dim(0) == fv.dim(0) &&
                 gv.dim(2) == fv.dim(2) && gv.dim(3) == fv.dim(3),
             "attend: feature map and attention maps must share spatial shape");
  int B = gv.dim(0), N = gv.dim(1), C = fv.dim(1);
  int H = gv.dim(2), W = gv.dim(3);
  std::size_t plane = (std::size_t)H * W;
  Tensor out({B, N, C});
  std::vector<int> argmax;
  if (reduction == Reduce::kMax) argmax.assign((std::size_t)B * N * C, 0);
  for (int b = 0; b < B; ++b)
    for (int n = 0; n < N; ++n) {
      const double* gp = &gv.data[((std::size_t)b * N + n) * plane];
      for (int c = 0; c < C; ++c) {
        const double* fp = &fv.data[((std::size_t)b * C + c) * plane];
        if (reduction == Reduce::kMax) {
          double best = gp[0] * fp[0];
          int besti = 0;
          for (std::size_t i = 1; i < plane; ++i) {
            double v = gp[i] * fp[i];
            if (v > best) {
              best = v;
              besti = static_cast<int>(i);
            }
          }
          out(b, n, c) = best;
          argmax[((std::size_t)b * N + n) * C + c] = besti;
        } else {
          double s = 0.0;
          for (std::size_t i = 0; i < plane; ++i) s += gp[i] * fp[i];
          out(b, n, c) =
              (reduction == Reduce::kAvg) ? s / static_cast<double>(plane) : s;
        }
      }
    }
  int ig = g.id, iff = f.id;
  bool rg = requires_grad(ig) || requires_grad(iff);
  int id = push(std::move(out), rg, nullptr);
  nodes_[id].backward = [ig, iff, B, N, C, plane, reduction, argmax,
                         id](Tape& t) {
    const Tensor& go = t.nodes_[id].grad;
    const Tensor& gv2 = t.value(ig);
    const Tensor& fv2 = t.value(iff);
    bool need_g = t.requires_grad(ig);
    bool need_f = t.requires_grad(iff);
    double norm = (reduction == Reduce::kAvg) ? 1.0 / static_cast<double>(plane)
                                              : 1.0;
    Tensor* dg = need_g ? &t.grad_buf(ig) : nullptr;
    Tensor* df = need_f ? &t.grad_buf(iff) : nullptr;
    for (int b = 0; b < B; ++b)
      for (int n = 0; n < N; ++n)
        for (int c = 0; c < C; ++c) {
          double gval = go(b, n, c);
          if (gval == 0.0) continue;
          const double* gp = &gv2.data[((std::size_t)b * N + n) * plane];
          const double* fp = &fv2.data[((std::size_t)b * C + c) * plane];
          if (reduction == Reduce::kMax) {
            std::size_t i = argmax[((std::size_t)b * N + n) * C + c];
            if (need_g)
              dg->data[((std::size_t)b * N + n) * plane + i] += gval * fp[i];
            if (need_f)
              df->data[((std::size_t)b * C + c) * plane + i] += gval * gp[i];
          } else {
            if (need_g) {
              double* dp = &dg->data[((std::size_t)b * N + n) * plane];
              for (std::size_t i = 0; i < plane; ++i)
                dp[i] += gval * norm * fp[i];
            }
            if (need_f) {
              double* dp = &df->data[((std::size_t)b * C + c) * plane];
              for (std::size_t i = 0; i < plane; ++i)
                dp[i] += gval * norm * gp[i];
            }
          }
        }
  };
  return {this, id};
}

// ---------- graph ops ----------

Var Tape::rows_gather(Var x, std::vector<int> idx) {
  const Tensor& v = x.val();
  check_data(v.ndim() == 2, "rows_gather: expects 2-D");
  int rows = v.dim(0), d = v.dim(1);
  Tensor out({static_cast<int>(idx.size()), d});
  for (std::size_t r = 0; r < idx.size(); ++r) {
    check_data(idx[r] >= 0 && idx[r] < rows, "rows_gather: index out of range");
    std::copy(&v.data[(std::size_t)idx[r] * d],
              &v.data[(std::size_t)idx[r] * d + d], &out.data[r * d]);
  }
  int ix = x.id;
  int id = push(std::move(out), requires_grad(ix), nullptr);
  nodes_[id].backward = [ix, idx, d, id](Tape& t) {
    const Tensor& g = t.nodes_[id].grad;
    Tensor& dst = t.grad_buf(ix);
    for (std::size_t r = 0; r < idx.size(); ++r)
      for (int c = 0; c < d; ++c)
        dst.data[(std::size_t)idx[r] * d + c] += g.data[r * d + c];
  };
  return {this, id};
}

Var Tape::rows_scatter_sorted_sum(Var x, std::vector<int> recv, int out_rows) {
  const Tensor& v = x.val();
  check_data(v.ndim() == 2, "rows_scatter_sorted_sum: expects 2-D");
  check_data(static_cast<int>(recv.size()) == v.dim(0),
             "rows_scatter_sorted_sum: index count mismatch");
  int d = v.dim(1);
  Tensor out({out_rows, d});
  std::vector<std::vector<int>> buckets(out_rows);
  for (std::size_t e = 0; e < recv.size(); ++e) {
    check_data(recv[e] >= 0 && recv[e] < out_rows,
               "rows_scatter_sorted_sum: receiver out of range");
    buckets[recv[e]].push_back(static_cast<int>(e));
  }
  for (int r = 0; r < out_rows; ++r) {
    std::vector<int>& es = buckets[r];
    std::sort(es.begin(), es.end(), [&](int a, int b) {
      const double* pa = &v.data[(std::size_t)a * d];
      const double* pb = &v.data[(std::size_t)b * d];
      return std::lexicographical_compare(pa, pa + d, pb, pb + d);
    });
    double* dst = &out.data[(std::size_t)r * d];
    for (int e : es) {
      const double* p = &v.data[(std::size_t)e * d];
      for (int c = 0; c < d; ++c) dst[c] += p[c];
    }
  }
  int ix = x.id;
  int id = push(std::move(out), requires_grad(ix), nullptr);
  nodes_[id].backward = [ix, recv, d, id](Tape& t) {
    const Tensor& g = t.nodes_[id].grad;
    Tensor& dst = t.grad_buf(ix);
    for (std::size_t e = 0; e < recv.size(); ++e)
      for (int c = 0; c < d; ++c)
        dst.data[e * d + c] += g.data[(std::size_t)recv[e] * d + c];
  };
  return {this, id};
}

// ---------- finite differences ----------

double finite_diff_max_rel_err(const std::function<double(const Tensor&)>& f,
                               const Tensor& x, const Tensor& analytic_grad,
                               double h, int max_entries) {
  check_data(x.shape == analytic_grad.shape,
             "finite_diff: gradient shape mismatch");
  Tensor pert = x;
  double worst = 0.0;
  std::int64_t n = x.size();
  std::int64_t limit = (max_entries > 0 && max_entries < n) ? max_entries : n;
  // When limited, probe a deterministic stride over the entries.
  std::int64_t stride = (limit == n) ? 1 : std::max<std::int64_t>(1, n / limit);
  for (std::int64_t i = 0; i < n; i += stride) {
    double orig = pert.data[i];
    double step = h * std::max(1.0, std::abs(orig));
    pert.data[i] = orig + step;
    double fp = f(pert);
    pert.data[i] = orig - step;
    double fm = f(pert);
    pert.data[i] = orig;
    double num = (fp - fm) / (2.0 * step);
    double ana = analytic_grad.data[i];
    double rel = std::abs(num - ana) / std::max({1e-6, std::abs(num), std::abs(ana)});
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace ovp::nn
