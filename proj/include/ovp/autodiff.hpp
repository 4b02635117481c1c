#pragma once

#include <deque>
#include <functional>
#include <vector>

#include "ovp/tensor.hpp"

namespace ovp::nn {

class Tape;

// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  const Tensor& val() const;
  const Tensor& grad() const;
  const std::vector<int>& shape() const;
};

enum class Reduce { kSum, kAvg, kMax };

// Reverse-mode tape. One tape per forward/backward pass; nodes are created in
// topological order, backward() replays them in reverse.
class Tape {
 public:
  Var leaf(Tensor value, bool requires_grad);
  Var constant(Tensor value) { return leaf(std::move(value), false); }

  void backward(Var root);

  const Tensor& value(int id) const { return nodes_[id].value; }
  const Tensor& grad(int id) const;
  bool has_grad(int id) const { return nodes_[id].grad_alloc; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  std::size_t node_count() const { return nodes_.size(); }

  // --- elementwise ---
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double k);
  Var silu(Var a);
  Var tanh_act(Var a);
  Var sigmoid_act(Var a);
  Var square(Var a);

  // --- shape ---
  Var reshape(Var a, std::vector<int> shape);
  Var concat_cols(const std::vector<Var>& xs);       // 2-D [rows, d_i]
  Var slice_cols(Var a, int c0, int c1);             // 2-D
  Var concat_channels(const std::vector<Var>& xs);   // 4-D NCHW
  Var slice_channels(Var a, int c0, int c1);         // 4-D NCHW

  // --- linear algebra ---
  Var matmul(Var a, Var b);                 // [m,k]x[k,n]
  Var matmul_const(Var a, const Tensor& b); // [m,k]x[k,n], b fixed
  Var linear(Var x, Var w, Var b);          // x[r,in], w[out,in], b[out]

  // --- convolution / image ---
  // x [B,Cin,H,W], w [Cout,Cin,kh,kw], b [Cout]; zero padding.
  Var conv2d(Var x, Var w, Var b, int stride, int pad);
  // Fixed depthwise bank: x [B,N,H,W] -> [B,N*C,H,W], zero-pad same size.
  Var bank_conv_same(Var x, const Tensor& bank);
  // One fixed kernel per channel, valid output: x [B,C,H,W] -> [B,C,H-kh+1,W-kw+1].
  Var kernel_conv_valid(Var x, const Tensor& kernel);
  Var bilinear_up2(Var x);  // [B,C,H,W] -> [B,C,2H,2W]

  // --- reductions ---
  Var sum_all(Var a);   // -> [1]
  Var mean_all(Var a);  // -> [1]
  Var spatial_mean(Var a);  // [B,C,H,W] -> [B,C]

  // --- keypoint ops ---
  Var softmax_hw(Var x);  // [B,N,H,W], softmax over H*W per (b,n)
  // p [B,N,2] (x,y), s [B,N]; gx[W'], gy[H'] grid centers.
  Var gaussian_maps(Var p, Var s, const std::vector<double>& gx,
                    const std::vector<double>& gy, double sigma);
  // maps [B,M,H,W] * coef [B,M] broadcast over spatial dims.
  Var scale_channels(Var maps, Var coef);
  // Gaussian-attention pooling: g [B,N,H,W], f [B,C',H,W] -> [B,N,C'].
  Var attend(Var g, Var f, Reduce reduction);

  // --- graph ops (rows of 2-D matrices) ---
  Var rows_gather(Var x, std::vector<int> idx);
  // Accumulates row e into bucket recv[e]; within a bucket rows are summed in
  // content-sorted order so relabeling cannot change the floating-point sum.
  Var rows_scatter_sorted_sum(Var x, std::vector<int> recv, int out_rows);

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool grad_alloc = false;
    std::function<void(Tape&)> backward;
  };

  int push(Tensor value, bool requires_grad, std::function<void(Tape&)> bw);
  Tensor& grad_buf(int id);
  void accum(int id, const Tensor& g);

  // deque: node references stay valid while new nodes are pushed.
  std::deque<Node> nodes_;
  friend struct Var;
};

// Central-difference gradient check helper: returns max relative error between
// analytic gradient and (f(x+h)-f(x-h))/2h over the tensor's entries.
double finite_diff_max_rel_err(const std::function<double(const Tensor&)>& f,
                               const Tensor& x, const Tensor& analytic_grad,
                               double h = 1e-5, int max_entries = -1);

}  // namespace ovp::nn
